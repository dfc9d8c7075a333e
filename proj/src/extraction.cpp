#include "ctiforge/extraction.hpp"

#include "ctiforge/error.hpp"
#include "ctiforge/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <arpa/inet.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace ctiforge::extraction {

using json = nlohmann::json;

std::string_view to_string(Status status) {
    switch (status) {
        case Status::Retained: return "retained";
        case Status::Adjusted: return "adjusted";
        case Status::Rejected: return "rejected";
    }
    return "rejected";
}

// ============================================================================
// Extraction
// ============================================================================

std::optional<std::vector<std::pair<std::string, IocType>>> parse_extraction_response(
    std::string_view response, std::vector<std::string>& item_errors) {
    const std::size_t open = response.find('[');
    const std::size_t close = response.rfind(']');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        return std::nullopt;
    }
    json items;
    try {
        items = json::parse(response.substr(open, close - open + 1));
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (!items.is_array()) return std::nullopt;

    std::vector<std::pair<std::string, IocType>> out;
    for (const auto& item : items) {
        if (!item.is_object() || !item.contains("surface") || !item["surface"].is_string()) {
            item_errors.push_back("item without a string surface: " + item.dump());
            continue;
        }
        const std::string surface(text::trim(item["surface"].get<std::string>()));
        if (surface.empty()) {
            item_errors.push_back("item with empty surface");
            continue;
        }
        const auto type = item.contains("type") && item["type"].is_string()
                              ? parse_ioc_type(text::to_lower(text::trim(item["type"].get<std::string>())))
                              : std::nullopt;
        if (!type) {
            item_errors.push_back("unlabeled or unknown type for '" + surface + "'");
            continue;
        }
        out.emplace_back(surface, *type);
    }
    return out;
}

std::vector<IocCandidate> extract_candidates(const ingest::Paragraph& paragraph, int runs,
                                             gateway::Gateway& gw,
                                             const gateway::PromptLibrary& prompts,
                                             Diagnostics& diagnostics, double temperature) {
    if (runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be >= 1");
    const ParagraphRef ref{paragraph.report_id, paragraph.index};
    const std::string subject = paragraph.report_id + "#" + std::to_string(paragraph.index);

    std::vector<IocCandidate> pooled;
    for (int run = 0; run < runs; ++run) {
        const gateway::Prompt prompt = prompts.make(gateway::TaskTag::ExtractIocs,
                                                    {{"paragraph", paragraph.text}}, temperature, run);
        const gateway::Completion completion = gw.complete(prompt);

        std::vector<std::string> item_errors;
        const auto parsed = parse_extraction_response(completion.text, item_errors);
        if (!parsed) {
            diagnostics.push_back({"extract_iocs", subject, "run " + std::to_string(run) + ": response is not a JSON array"});
            spdlog::debug("{} run {}: unparseable extraction response", subject, run);
            continue;
        }
        for (const auto& err : item_errors) {
            diagnostics.push_back({"extract_iocs", subject, "run " + std::to_string(run) + ": " + err});
        }
        for (const auto& [surface, type] : *parsed) {
            pooled.push_back(IocCandidate{surface, type, ref, run});
        }
    }
    return pooled;
}

// ============================================================================
// Normalization and voting
// ============================================================================

std::string refang(std::string_view s) {
    std::string out(s);
    const auto replace_all = [&out](std::string_view from, std::string_view to) {
        std::size_t pos = 0;
        while ((pos = out.find(from, pos)) != std::string::npos) {
            out.replace(pos, from.size(), to);
            pos += to.size();
        }
    };
    replace_all("[.]", ".");
    replace_all("(.)", ".");
    replace_all("{.}", ".");
    replace_all("[dot]", ".");
    replace_all("[:]", ":");
    if (text::istarts_with(out, "hxxp")) out.replace(0, 4, "http");
    return out;
}

namespace {

std::string collapse_backslashes(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '\\' && !out.empty() && out.back() == '\\') continue;
        out.push_back(c);
    }
    return out;
}

// Lowercases and collapses whitespace outside quotes; quoted segments are
// kept verbatim.
std::string normalize_command(std::string_view s) {
    std::string out;
    char quote = 0;
    bool pending_space = false;
    for (char c : text::trim(s)) {
        if (quote != 0) {
            out.push_back(c);
            if (c == quote) quote = 0;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        if (c == '"' || c == '\'') quote = c;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

}  // namespace

std::string normalize_candidate(std::string_view surface, IocType type) {
    switch (type) {
        case IocType::Hash: {
            std::string out;
            for (char c : surface) {
                if (std::isspace(static_cast<unsigned char>(c)) == 0) out.push_back(c);
            }
            return text::to_lower(out);
        }
        case IocType::IpAddress:
            return text::to_lower(text::collapse_whitespace(refang(text::trim(surface))));
        case IocType::Domain: {
            std::string out = text::to_lower(text::collapse_whitespace(refang(text::trim(surface))));
            while (!out.empty() && out.back() == '.') out.pop_back();
            return out;
        }
        case IocType::RegistryKey:
        case IocType::RegistryValue:
            return text::to_lower(collapse_backslashes(text::collapse_whitespace(surface)));
        case IocType::CommandLine:
            return normalize_command(surface);
        case IocType::Filename:
            return text::to_lower(text::collapse_whitespace(surface));
    }
    return std::string(surface);
}

std::vector<VoteTally> majority_vote(const std::vector<IocCandidate>& candidates, int runs, int threshold) {
    if (runs < 1 || threshold < 1 || threshold > runs) {
        throw Error(ErrorCode::InvalidArgument, "vote threshold must satisfy 1 <= threshold <= runs");
    }
    struct Group {
        std::set<int> runs;
        std::map<std::string, int> spellings;
        std::optional<ParagraphRef> ref;
    };
    std::map<IocRef, Group> groups;
    for (const auto& c : candidates) {
        Group& g = groups[IocRef{c.ioc_type, normalize_candidate(c)}];
        g.runs.insert(c.run_index);
        ++g.spellings[std::string(text::trim(c.surface))];
        if (!g.ref || c.paragraph_ref < *g.ref) g.ref = c.paragraph_ref;
    }

    std::vector<VoteTally> out;
    for (const auto& [key, g] : groups) {
        const int votes = static_cast<int>(g.runs.size());
        if (votes < threshold) continue;
        // most frequent spelling; std::map order makes ties pick the smallest
        const auto best = std::max_element(g.spellings.begin(), g.spellings.end(),
                                           [](const auto& a, const auto& b) { return a.second < b.second; });
        out.push_back(VoteTally{key, best->first, *g.ref, std::min(votes, runs), runs});
    }
    std::sort(out.begin(), out.end(), [](const VoteTally& a, const VoteTally& b) {
        if (a.votes != b.votes) return a.votes > b.votes;
        return a.key < b.key;
    });
    return out;
}

// ============================================================================
// Structural validators
// ============================================================================

bool is_valid_hash(std::string_view s) {
    if (s.size() != 32 && s.size() != 40 && s.size() != 64) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isxdigit(c) != 0; });
}

bool is_valid_ipv4(std::string_view s) {
    int octets = 0;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t end = s.find('.', pos);
        if (end == std::string_view::npos) end = s.size();
        const std::string_view part = s.substr(pos, end - pos);
        if (part.empty() || part.size() > 3) return false;
        if (!std::all_of(part.begin(), part.end(), [](unsigned char c) { return std::isdigit(c) != 0; })) return false;
        if (part.size() > 1 && part.front() == '0') return false;
        if (std::stoi(std::string(part)) > 255) return false;
        ++octets;
        if (end == s.size()) break;
        pos = end + 1;
    }
    return octets == 4;
}

bool is_valid_ip(std::string_view s) {
    if (s.find(':') == std::string_view::npos) return is_valid_ipv4(s);
    in6_addr addr{};
    return inet_pton(AF_INET6, std::string(s).c_str(), &addr) == 1;
}

bool is_valid_domain(std::string_view s) {
    if (s.empty() || s.size() > 253) return false;
    int labels = 0;
    std::size_t pos = 0;
    std::string_view last;
    while (true) {
        std::size_t end = s.find('.', pos);
        if (end == std::string_view::npos) end = s.size();
        const std::string_view label = s.substr(pos, end - pos);
        if (label.empty() || label.size() > 63) return false;
        if (label.front() == '-' || label.back() == '-') return false;
        if (!std::all_of(label.begin(), label.end(), [](unsigned char c) {
                return std::isalnum(c) != 0 || c == '-';
            })) {
            return false;
        }
        ++labels;
        last = label;
        if (end == s.size()) break;
        pos = end + 1;
    }
    if (labels < 2 || last.size() < 2) return false;
    return std::all_of(last.begin(), last.end(), [](unsigned char c) { return std::isalpha(c) != 0; });
}

std::string command_program(std::string_view command_line) {
    const std::string_view s = text::trim(command_line);
    if (s.empty()) return {};
    if (s.front() == '"' || s.front() == '\'') {
        const std::size_t close = s.find(s.front(), 1);
        return std::string(s.substr(1, close == std::string_view::npos ? std::string_view::npos : close - 1));
    }
    std::size_t end = 0;
    while (end < s.size() && std::isspace(static_cast<unsigned char>(s[end])) == 0) ++end;
    return std::string(s.substr(0, end));
}

// ============================================================================
// Knowledge filter
// ============================================================================

namespace {

/// Top-level domains that are also common file extensions; a name ending in
/// one of these is still read as a domain.
constexpr std::string_view kTldExtensions[] = {"com", "pl", "py", "rs", "sh", "so", "md", "ps", "cc"};

bool domain_is_filename(const kb::VectorStore& store, std::string_view domain) {
    const auto ext = kb::extension_of(store, domain);
    if (!ext) return false;
    const std::string tld = text::to_lower(domain.substr(domain.rfind('.') + 1));
    return std::find(std::begin(kTldExtensions), std::end(kTldExtensions), tld) == std::end(kTldExtensions);
}

std::string basename_of(std::string_view path) {
    const std::size_t slash = path.find_last_of("\\/");
    return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

// Normalizes registry separators and rewrites the matched root to the
// store's canonical spelling.
std::string canonicalize_registry(std::string_view surface, const std::optional<kb::KnowledgeEntry>& hit) {
    std::string out = collapse_backslashes(text::collapse_whitespace(surface));
    std::replace(out.begin(), out.end(), '/', '\\');
    if (hit && hit->kind == kb::EntryKind::RegistryRoot && text::istarts_with(out, hit->text)) {
        out.replace(0, hit->text.size(), hit->text);
    }
    return out;
}

IocRecord make_record(const VoteTally& tally) {
    IocRecord r;
    r.canonical = tally.key.canonical;
    r.surface = tally.surface;
    r.ioc_type = tally.key.type;
    r.paragraph_ref = tally.paragraph_ref;
    r.votes = tally.votes;
    r.runs_total = tally.runs_total;
    return r;
}

void keep(IocRecord& r, const VoteTally& tally, std::string surface, Evidence evidence) {
    r.status = surface == tally.surface ? Status::Retained : Status::Adjusted;
    r.surface = std::move(surface);
    r.evidence = std::move(evidence);
}

void reject(IocRecord& r, std::string reason) {
    r.status = Status::Rejected;
    r.reason = std::move(reason);
}

Evidence lexical_evidence(const kb::KnowledgeEntry& e) {
    return Evidence{"lexical", e.text, e.kind, std::nullopt};
}

std::optional<Evidence> vector_evidence(std::string_view text, const kb::VectorStore& store,
                                        gateway::Gateway& gw, double threshold,
                                        std::initializer_list<kb::EntryKind> kinds = {}) {
    if (store.empty() || text.empty()) return std::nullopt;
    const auto matches = kb::nearest(store, gw.embed(text), 1);
    if (matches.empty() || matches.front().score < threshold) return std::nullopt;
    const auto& m = matches.front();
    if (kinds.size() > 0 && std::find(kinds.begin(), kinds.end(), m.entry.kind) == kinds.end()) {
        return std::nullopt;
    }
    return Evidence{"vector", m.entry.text, m.entry.kind, m.score};
}

}  // namespace

IocRecord kb_filter(const VoteTally& tally, const kb::VectorStore& store, gateway::Gateway& gw,
                    const FilterOptions& options) {
    IocRecord r = make_record(tally);
    const std::string& canonical = tally.key.canonical;

    switch (tally.key.type) {
        case IocType::Hash:
            if (is_valid_hash(canonical)) {
                keep(r, tally, canonical, {"structural", "hex_length_" + std::to_string(canonical.size()), {}, {}});
            } else {
                reject(r, "hash_grammar");
            }
            break;

        case IocType::IpAddress:
            if (is_valid_ip(canonical)) {
                keep(r, tally, canonical, {"structural", canonical.find(':') == std::string::npos ? "ipv4" : "ipv6", {}, {}});
            } else {
                reject(r, "ip_grammar");
            }
            break;

        case IocType::Domain:
            if (!is_valid_domain(canonical)) {
                reject(r, "domain_grammar");
            } else if (domain_is_filename(store, canonical)) {
                reject(r, "domain_is_filename");
            } else {
                keep(r, tally, canonical, {"structural", "domain_labels", {}, {}});
            }
            break;

        case IocType::Filename:
        case IocType::RegistryKey:
        case IocType::RegistryValue: {
            const bool registry = tally.key.type != IocType::Filename;
            std::string surface = registry ? canonicalize_registry(tally.surface, std::nullopt)
                                           : text::collapse_whitespace(tally.surface);
            if (const auto hit = kb::lexical_probe(store, surface)) {
                if (registry) surface = canonicalize_registry(surface, hit);
                keep(r, tally, surface, lexical_evidence(*hit));
            } else if (auto ev = vector_evidence(surface, store, gw, options.similarity_threshold)) {
                keep(r, tally, surface, std::move(*ev));
            } else {
                reject(r, "no_kb_evidence");
            }
            break;
        }

        case IocType::CommandLine: {
            const std::string program = command_program(tally.surface);
            const std::string base = basename_of(program);
            const std::string surface = text::collapse_whitespace(tally.surface);
            const auto hit = kb::exact_lookup(store, base, {kb::EntryKind::Program, kb::EntryKind::Command});
            if (hit) {
                keep(r, tally, surface, lexical_evidence(*hit));
            } else if (auto ev = vector_evidence(base, store, gw, options.similarity_threshold,
                                                 {kb::EntryKind::Program, kb::EntryKind::Command})) {
                keep(r, tally, surface, std::move(*ev));
            } else {
                reject(r, "unknown_program");
            }
            break;
        }
    }
    return r;
}

}  // namespace ctiforge::extraction
