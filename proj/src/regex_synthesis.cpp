#include "ctiforge/regex_synthesis.hpp"

#include "ctiforge/error.hpp"
#include "ctiforge/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace ctiforge::regex {

using json = nlohmann::json;
using extraction::Evidence;
using extraction::IocRecord;

std::string_view to_string(SpanContext context) {
    switch (context) {
        case SpanContext::CommandToken: return "command_token";
        case SpanContext::BackslashPath: return "backslash_path";
        case SpanContext::SlashPath: return "slash_path";
        case SpanContext::SingleQuoted: return "single_quoted";
        case SpanContext::DoubleQuoted: return "double_quoted";
    }
    return "command_token";
}

std::string_view to_string(SpanRole role) {
    return role == SpanRole::Capture ? "capture" : "non_capture";
}

std::string_view to_string(Origin origin) {
    switch (origin) {
        case Origin::Model: return "model";
        case Origin::Fallback: return "fallback";
        case Origin::Literal: return "literal";
    }
    return "fallback";
}

// ============================================================================
// Dialect
// ============================================================================

namespace {

constexpr std::string_view kCaseInsensitiveFlag = "(?i)";

bool is_quantifier(char c) { return c == '*' || c == '+' || c == '?' || c == '}'; }

}  // namespace

std::optional<std::string> dialect_violation(std::string_view pattern) {
    std::string_view body = pattern;
    if (body.substr(0, kCaseInsensitiveFlag.size()) == kCaseInsensitiveFlag) {
        body.remove_prefix(kCaseInsensitiveFlag.size());
    }
    bool in_class = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (c == '\\') {
            if (i + 1 >= body.size()) return "trailing backslash";
            const char e = body[i + 1];
            if (e >= '1' && e <= '9') return "backreference \\" + std::string(1, e);
            if (e == 'k') return "named backreference";
            if (std::isalpha(static_cast<unsigned char>(e)) != 0 &&
                std::string_view("dDwWsSbBtnrfvx").find(e) == std::string_view::npos) {
                return "unsupported escape \\" + std::string(1, e);
            }
            if (e == 'b' && in_class) return "\\b inside a character class";
            ++i;
            continue;
        }
        if (in_class) {
            if (c == ']') in_class = false;
            continue;
        }
        if (c == '[') {
            in_class = true;
            // a leading ']' or '^]' is literal
            if (i + 1 < body.size() && body[i + 1] == '^') ++i;
            if (i + 1 < body.size() && body[i + 1] == ']') ++i;
            continue;
        }
        if (c == '(' && i + 1 < body.size() && body[i + 1] == '?') {
            if (i + 2 < body.size() && body[i + 2] == ':') continue;
            const std::string_view rest = body.substr(i, 4);
            if (rest.rfind("(?<=", 0) == 0 || rest.rfind("(?<!", 0) == 0) return "lookbehind";
            if (rest.rfind("(?=", 0) == 0 || rest.rfind("(?!", 0) == 0) return "lookahead";
            if (rest.rfind("(?>", 0) == 0) return "atomic group";
            if (rest.rfind("(?<", 0) == 0 || rest.rfind("(?P", 0) == 0) return "named group";
            return "inline flag outside the leading (?i)";
        }
        if (c == '+' && i > 0 && is_quantifier(body[i - 1]) && (i < 2 || body[i - 2] != '\\')) {
            return "possessive quantifier";
        }
    }
    return std::nullopt;
}

std::regex compile(std::string_view pattern) {
    if (auto violation = dialect_violation(pattern)) {
        throw Error(ErrorCode::ParseError, "dialect violation: " + *violation);
    }
    auto flags = std::regex::ECMAScript;
    std::string_view body = pattern;
    if (body.substr(0, kCaseInsensitiveFlag.size()) == kCaseInsensitiveFlag) {
        body.remove_prefix(kCaseInsensitiveFlag.size());
        flags |= std::regex::icase;
    }
    return std::regex(std::string(body), flags);
}

bool full_match(const std::regex& re, std::string_view subject) {
    return std::regex_match(subject.begin(), subject.end(), re);
}

std::string escape(std::string_view literal) {
    static constexpr std::string_view kMeta = "\\^$.|?*+()[]{}";
    std::string out;
    out.reserve(literal.size() * 2);
    for (char c : literal) {
        if (kMeta.find(c) != std::string_view::npos) out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

std::string wildcard_for(SpanContext context) {
    switch (context) {
        case SpanContext::CommandToken: return R"(\S+)";
        case SpanContext::BackslashPath: return R"([^\\]+)";
        case SpanContext::SlashPath: return "[^/]+";
        case SpanContext::SingleQuoted: return "[^']+";
        case SpanContext::DoubleQuoted: return "[^\"]+";
    }
    return R"(\S+)";
}

// ============================================================================
// Splitting
// ============================================================================

namespace {

bool is_separator(char c) { return c == '\\' || c == '/'; }

SpanContext path_context(std::string_view text) {
    return text.find('\\') != std::string_view::npos || text.find('/') == std::string_view::npos
               ? SpanContext::BackslashPath
               : SpanContext::SlashPath;
}

void split_path(std::size_t offset, std::string_view part, SpanContext context,
                std::vector<Substring>& out) {
    std::size_t pos = 0;
    while (pos < part.size()) {
        while (pos < part.size() && is_separator(part[pos])) ++pos;
        std::size_t end = pos;
        while (end < part.size() && !is_separator(part[end])) ++end;
        if (end > pos) {
            out.push_back(Substring{std::string(part.substr(pos, end - pos)), offset + pos, offset + end, context, false});
        }
        pos = end;
    }
}

bool is_switch(std::string_view token) {
    if (token.size() < 2 || (token.front() != '/' && token.front() != '-')) return false;
    return token.substr(1).find_first_of("\\/") == std::string_view::npos;
}

void split_command(std::string_view surface, std::vector<Substring>& out) {
    std::size_t pos = 0;
    while (pos < surface.size()) {
        while (pos < surface.size() && std::isspace(static_cast<unsigned char>(surface[pos])) != 0) ++pos;
        if (pos >= surface.size()) break;
        std::size_t end = pos;
        char quote = 0;
        while (end < surface.size()) {
            const char c = surface[end];
            if (quote != 0) {
                if (c == quote) quote = 0;
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (std::isspace(static_cast<unsigned char>(c)) != 0) {
                break;
            }
            ++end;
        }

        std::size_t token_end = end;
        while (token_end - pos > 1 && (surface[token_end - 1] == ',' || surface[token_end - 1] == ';')) --token_end;
        const std::string_view token = surface.substr(pos, token_end - pos);

        const bool fully_quoted = token.size() >= 2 && (token.front() == '"' || token.front() == '\'') &&
                                  token.back() == token.front() &&
                                  token.find(token.front(), 1) == token.size() - 1;
        if (fully_quoted) {
            out.push_back(Substring{std::string(token), pos, token_end,
                                    token.front() == '\'' ? SpanContext::SingleQuoted : SpanContext::DoubleQuoted, true});
        } else if (!is_switch(token) && token.find_first_of("\\/") != std::string_view::npos) {
            split_path(pos, token, path_context(token), out);
        } else {
            out.push_back(Substring{std::string(token), pos, token_end, SpanContext::CommandToken, false});
        }
        pos = end;
    }
}

}  // namespace

std::vector<Substring> split_ioc(std::string_view surface, IocType type) {
    if (!is_structured(type)) {
        throw Error(ErrorCode::UnsupportedType,
                    std::string(to_string(type)) + " IOCs get literal patterns, not span splitting");
    }
    std::vector<Substring> out;
    if (type == IocType::CommandLine) {
        split_command(surface, out);
    } else {
        split_path(0, surface, path_context(surface), out);
    }
    return out;
}

std::vector<Substring> split_ioc(const IocRecord& record) {
    if (!record.kept()) {
        throw Error(ErrorCode::InvalidArgument, "cannot split a rejected IOC: " + record.canonical);
    }
    return split_ioc(record.surface, record.ioc_type);
}

// ============================================================================
// Classification
// ============================================================================

namespace {

class Classifier {
public:
    Classifier(const kb::VectorStore& store, gateway::Gateway& gw, const ClassifyOptions& options)
        : store_(store), gw_(gw), options_(options) {}

    void unit(std::string_view text, std::size_t start, SpanContext context, std::vector<TokenSpan>& out) {
        const std::size_t end = start + text.size();
        if (const auto hit = kb::exact_lookup(store_, text)) {
            out.push_back(capture(text, start, context, Evidence{"lexical", hit->text, hit->kind, std::nullopt}));
            return;
        }
        if (!store_.empty()) {
            const auto matches = kb::nearest(store_, gw_.embed(text), 1);
            if (!matches.empty() && matches.front().score >= options_.similarity_threshold) {
                const auto& m = matches.front();
                out.push_back(capture(text, start, context, Evidence{"vector", m.entry.text, m.entry.kind, m.score}));
                return;
            }
        }
        if (const auto ext = kb::extension_of(store_, text)) {
            const std::size_t stem_len = text.size() - ext->text.size();
            out.push_back(TokenSpan{std::string(text.substr(0, stem_len)), start, start + stem_len,
                                    SpanRole::NonCapture, context, std::nullopt});
            out.push_back(capture(text.substr(stem_len), start + stem_len, context,
                                  Evidence{"lexical", ext->text, ext->kind, std::nullopt}));
            return;
        }
        out.push_back(TokenSpan{std::string(text), start, end, SpanRole::NonCapture, context, std::nullopt});
    }

    void quoted(const Substring& s, std::vector<TokenSpan>& out) {
        const std::string_view whole = s.text;
        const std::string_view inner = whole.substr(1, whole.size() - 2);
        const std::size_t inner_start = s.start + 1;
        const SpanContext quote_ctx = whole.front() == '\'' ? SpanContext::SingleQuoted : SpanContext::DoubleQuoted;

        // key=value scaffolding, e.g. "ID='GUID'"
        std::size_t key_end = 0;
        while (key_end < inner.size() &&
               (std::isalnum(static_cast<unsigned char>(inner[key_end])) != 0 || inner[key_end] == '_' ||
                inner[key_end] == '.' || inner[key_end] == '-')) {
            ++key_end;
        }
        if (key_end > 0 && key_end < inner.size() && inner[key_end] == '=' &&
            std::isalpha(static_cast<unsigned char>(inner[0])) != 0) {
            const std::size_t scaffold_len = key_end + 1;
            out.push_back(capture(inner.substr(0, scaffold_len), inner_start,
                                  quote_ctx, Evidence{"structural", "argument_key", std::nullopt, std::nullopt}));
            std::string_view value = inner.substr(scaffold_len);
            std::size_t value_start = inner_start + scaffold_len;
            SpanContext value_ctx = quote_ctx;
            if (value.size() >= 2 && (value.front() == '\'' || value.front() == '"') && value.back() == value.front()) {
                value_ctx = value.front() == '\'' ? SpanContext::SingleQuoted : SpanContext::DoubleQuoted;
                value = value.substr(1, value.size() - 2);
                ++value_start;
            }
            if (!value.empty()) unit(value, value_start, value_ctx, out);
            return;
        }

        if (inner.find_first_of("\\/") != std::string_view::npos) {
            std::vector<Substring> parts;
            split_path(inner_start, inner, path_context(inner), parts);
            for (const auto& p : parts) unit(p.text, p.start, p.context, out);
            return;
        }
        if (!inner.empty()) unit(inner, inner_start, quote_ctx, out);
    }

private:
    static TokenSpan capture(std::string_view text, std::size_t start, SpanContext context, Evidence evidence) {
        return TokenSpan{std::string(text), start, start + text.size(), SpanRole::Capture, context, std::move(evidence)};
    }

    const kb::VectorStore& store_;
    gateway::Gateway& gw_;
    const ClassifyOptions& options_;
};

}  // namespace

std::vector<TokenSpan> classify_spans(const std::vector<Substring>& substrings, const kb::VectorStore& store,
                                      gateway::Gateway& gw, const ClassifyOptions& options) {
    if (substrings.empty()) throw Error(ErrorCode::InvalidArgument, "classify_spans needs at least one substring");
    Classifier classifier(store, gw, options);
    std::vector<TokenSpan> out;
    for (const auto& s : substrings) {
        if (s.quoted) classifier.quoted(s, out);
        else classifier.unit(s.text, s.start, s.context, out);
    }
    return out;
}

std::vector<std::string> signature_of(const std::vector<TokenSpan>& spans) {
    std::vector<std::string> sig;
    for (const auto& s : spans) {
        if (s.role == SpanRole::Capture) sig.push_back(text::to_lower(s.text));
    }
    return sig;
}

// ============================================================================
// Pattern construction
// ============================================================================

namespace {

std::string delimiter_pattern(std::string_view delim, bool command) {
    std::string out;
    std::size_t i = 0;
    while (i < delim.size()) {
        if (command && std::isspace(static_cast<unsigned char>(delim[i])) != 0) {
            while (i < delim.size() && std::isspace(static_cast<unsigned char>(delim[i])) != 0) ++i;
            out.append(R"(\s+)");
            continue;
        }
        out.append(escape(delim.substr(i, 1)));
        ++i;
    }
    return out;
}

}  // namespace

std::string fallback_pattern(std::string_view surface, IocType type, const std::vector<TokenSpan>& spans) {
    const bool command = type == IocType::CommandLine;
    std::string out(kCaseInsensitiveFlag);
    std::size_t pos = 0;
    for (const auto& span : spans) {
        out.append(delimiter_pattern(surface.substr(pos, span.start - pos), command));
        out.append(span.role == SpanRole::Capture ? escape(span.text) : wildcard_for(span.context));
        pos = span.end;
    }
    out.append(delimiter_pattern(surface.substr(pos), command));
    return out;
}

// ============================================================================
// Tester
// ============================================================================

namespace {

constexpr std::string_view kFuzzAlphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";

std::string random_token(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> len_dist(min_len, max_len);
    std::uniform_int_distribution<std::size_t> char_dist(0, kFuzzAlphabet.size() - 1);
    std::string out(len_dist(rng), ' ');
    for (auto& c : out) c = kFuzzAlphabet[char_dist(rng)];
    return out;
}

std::string replace_spans(std::string_view surface, const std::vector<TokenSpan>& spans,
                          const std::vector<std::pair<std::size_t, std::string>>& replacements) {
    std::string out;
    std::size_t pos = 0;
    for (const auto& [index, value] : replacements) {
        const TokenSpan& s = spans[index];
        out.append(surface.substr(pos, s.start - pos));
        out.append(value);
        pos = s.end;
    }
    out.append(surface.substr(pos));
    return out;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::vector<std::string> make_mutants(std::string_view surface, const std::vector<TokenSpan>& spans,
                                      int count, std::mt19937_64& rng) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].role == SpanRole::NonCapture) open.push_back(i);
    }
    std::vector<std::string> out;
    if (open.empty()) return out;
    for (int m = 0; m < count; ++m) {
        std::vector<std::pair<std::size_t, std::string>> replacements;
        for (std::size_t idx : open) {
            // alternate short and long replacements
            const std::size_t longer = spans[idx].text.size() + 8;
            replacements.emplace_back(idx, m % 2 == 0 ? random_token(rng, 1, 12) : random_token(rng, longer, longer + 24));
        }
        out.push_back(replace_spans(surface, spans, replacements));
    }
    return out;
}

std::vector<std::string> make_negatives(std::string_view surface, const std::vector<TokenSpan>& spans) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].role != SpanRole::Capture) continue;
        std::string corrupted = spans[i].text;
        for (auto& c : corrupted) c = std::tolower(static_cast<unsigned char>(c)) == 'q' ? 'z' : 'q';
        for (std::string candidate : {replace_spans(surface, spans, {{i, ""}}),
                                      replace_spans(surface, spans, {{i, corrupted}})}) {
            if (candidate != surface && std::find(out.begin(), out.end(), candidate) == out.end()) {
                out.push_back(std::move(candidate));
            }
        }
    }
    return out;
}

ValidationReport validate_regex(std::string_view pattern, std::string_view surface,
                                const std::vector<TokenSpan>& spans, const MutationOptions& options) {
    ValidationReport report;
    std::regex re;
    try {
        re = compile(pattern);
        report.compiled = true;
    } catch (const std::regex_error& e) {
        report.compile_error = e.what();
        return report;
    } catch (const Error& e) {
        report.compile_error = e.what();
        return report;
    }

    report.matches_original = full_match(re, surface);

    std::mt19937_64 rng(options.seed ^ fnv1a(surface));
    for (auto& m : make_mutants(surface, spans, std::max(2, options.mutants_per_span), rng)) {
        const bool ok = full_match(re, m);
        report.matches_mutants.emplace_back(std::move(m), ok);
    }
    for (auto& n : make_negatives(surface, spans)) {
        const bool rejected = !full_match(re, n);
        report.rejects_negatives.emplace_back(std::move(n), rejected);
    }

    const auto all_true = [](const auto& v) {
        return std::all_of(v.begin(), v.end(), [](const auto& p) { return p.second; });
    };
    report.verdict = report.compiled && report.matches_original && all_true(report.matches_mutants) &&
                     all_true(report.rejects_negatives);
    return report;
}

std::string ValidationReport::first_failure(std::string_view ioc) const {
    if (!compiled) return "The regex does not compile: " + compile_error;
    if (!matches_original) return "The regex does not fully match the original IOC: " + std::string(ioc);
    for (const auto& [m, ok] : matches_mutants) {
        if (!ok) return "The regex must also match this variant with attacker-controlled parts changed: " + m;
    }
    for (const auto& [n, ok] : rejects_negatives) {
        if (!ok) return "The regex must NOT match this string, where a capture group was removed or altered: " + n;
    }
    return {};
}

// ============================================================================
// Synthesis
// ============================================================================

std::string extract_pattern(std::string_view response) {
    const std::string_view trimmed = text::trim(response);
    if (!trimmed.empty() && trimmed.front() == '{') {
        try {
            const json j = json::parse(trimmed);
            for (const char* key : {"regex", "pattern"}) {
                if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
            }
        } catch (const json::exception&) {
        }
    }
    std::string_view body = trimmed;
    const std::size_t fence = body.find("```");
    if (fence != std::string_view::npos) {
        std::size_t start = body.find('\n', fence);
        const std::size_t close = start == std::string_view::npos ? start : body.find("```", start);
        if (start != std::string_view::npos && close != std::string_view::npos) {
            body = body.substr(start + 1, close - start - 1);
        }
    }
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t eol = body.find('\n', pos);
        if (eol == std::string_view::npos) eol = body.size();
        std::string_view line = text::trim(body.substr(pos, eol - pos));
        if (!line.empty()) {
            if (line.size() >= 2 && line.front() == '`' && line.back() == '`') line = line.substr(1, line.size() - 2);
            return std::string(line);
        }
        pos = eol + 1;
    }
    return {};
}

namespace {

std::string annotate(const std::vector<TokenSpan>& spans) {
    std::string out;
    for (const auto& s : spans) {
        out.append(s.role == SpanRole::Capture ? "- capture (keep literal): " : "- non-capture (generalize): ");
        out.append(s.text);
        out.push_back('\n');
    }
    return out;
}

RegexPattern base_pattern(const IocRecord& record, const std::vector<TokenSpan>& spans) {
    RegexPattern p;
    p.ioc_type = record.ioc_type;
    p.ioc_ref = record.ref();
    p.source = record.surface;
    p.signature = signature_of(spans);
    p.spans = spans;
    p.merged_ioc_refs = {record.ref()};
    return p;
}

}  // namespace

RegexPattern synthesize_regex(const IocRecord& record, const std::vector<TokenSpan>& spans,
                              gateway::Gateway& gw, const gateway::PromptLibrary& prompts,
                              const SynthesisOptions& options) {
    if (options.max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "max_attempts must be >= 1");
    RegexPattern result = base_pattern(record, spans);
    const std::map<std::string, std::string> base_values{
        {"ioc", record.surface},
        {"ioc_type", std::string(to_string(record.ioc_type))},
        {"annotations", annotate(spans)},
    };

    std::string previous;
    std::string feedback;
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        gateway::Prompt prompt;
        if (attempt == 1) {
            prompt = prompts.make(gateway::TaskTag::GenerateRegex, base_values, 0.0);
        } else {
            auto values = base_values;
            values["previous"] = previous;
            values["feedback"] = feedback;
            prompt = prompts.make(gateway::TaskTag::RefineRegex, values, 0.0, attempt - 1);
        }
        const gateway::Completion completion = gw.complete(prompt);
        previous = extract_pattern(completion.text);
        result.attempts = attempt;

        ValidationReport report = validate_regex(previous, record.surface, spans, options.mutation);
        if (report.verdict) {
            result.pattern = previous;
            result.validation = std::move(report);
            result.origin = Origin::Model;
            return result;
        }
        feedback = previous.empty() ? "The answer did not contain a regular expression." : report.first_failure(record.surface);
        spdlog::debug("regex attempt {} for '{}' failed: {}", attempt, record.surface, feedback);
    }

    result.pattern = fallback_pattern(record.surface, record.ioc_type, spans);
    result.validation = validate_regex(result.pattern, record.surface, spans, options.mutation);
    result.origin = Origin::Fallback;
    if (!result.validation.verdict) {
        spdlog::error("fallback pattern failed validation for '{}': {}", record.surface,
                      result.validation.first_failure(record.surface));
    }
    return result;
}

RegexPattern synthesize_literal(const IocRecord& record) {
    if (is_structured(record.ioc_type)) {
        throw Error(ErrorCode::UnsupportedType, "literal patterns are only for hash, ip_address and domain");
    }
    const std::string& literal = record.canonical;
    const std::vector<TokenSpan> spans{
        TokenSpan{literal, 0, literal.size(), SpanRole::Capture, SpanContext::CommandToken,
                  Evidence{"structural", "literal", std::nullopt, std::nullopt}}};
    RegexPattern p = base_pattern(record, spans);
    p.source = literal;
    p.signature = {literal};
    p.pattern = (record.ioc_type == IocType::IpAddress ? std::string() : std::string(kCaseInsensitiveFlag)) + escape(literal);
    p.validation = validate_regex(p.pattern, literal, spans);
    p.origin = Origin::Literal;
    return p;
}

std::vector<RegexPattern> dedup_patterns(const std::vector<RegexPattern>& patterns) {
    // Patterns without any capture text only merge when the pattern itself
    // is identical; otherwise every all-wildcard IOC of a type would collapse.
    using GroupKey = std::tuple<IocType, std::vector<std::string>, std::string>;
    std::map<GroupKey, RegexPattern> groups;
    for (const auto& p : patterns) {
        GroupKey key{p.ioc_type, p.signature, p.signature.empty() ? p.pattern : std::string()};
        auto it = groups.find(key);
        if (it == groups.end()) {
            groups.emplace(std::move(key), p);
            continue;
        }
        RegexPattern& rep = it->second;
        std::vector<IocRef> merged = rep.merged_ioc_refs;
        merged.insert(merged.end(), p.merged_ioc_refs.begin(), p.merged_ioc_refs.end());
        if (std::tie(p.pattern, p.ioc_ref) < std::tie(rep.pattern, rep.ioc_ref)) rep = p;
        std::sort(merged.begin(), merged.end());
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        rep.merged_ioc_refs = std::move(merged);
    }
    std::vector<RegexPattern> out;
    out.reserve(groups.size());
    for (auto& [key, rep] : groups) {
        std::sort(rep.merged_ioc_refs.begin(), rep.merged_ioc_refs.end());
        rep.merged_ioc_refs.erase(std::unique(rep.merged_ioc_refs.begin(), rep.merged_ioc_refs.end()),
                                  rep.merged_ioc_refs.end());
        out.push_back(std::move(rep));
    }
    return out;
}

}  // namespace ctiforge::regex
