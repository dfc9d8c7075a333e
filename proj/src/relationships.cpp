#include "ctiforge/relationships.hpp"

#include "ctiforge/error.hpp"
#include "ctiforge/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

namespace ctiforge::relations {

using json = nlohmann::json;
using extraction::IocRecord;

namespace {

constexpr std::array<std::pair<Category, std::string_view>, 7> kCategoryNames{{
    {Category::Create, "create"},
    {Category::Write, "write"},
    {Category::Read, "read"},
    {Category::Execute, "execute"},
    {Category::Delete, "delete"},
    {Category::Connect, "connect"},
    {Category::Reference, "reference"},
}};

std::string verb_key(std::string_view verb) {
    std::string s = text::to_lower(text::collapse_whitespace(verb));
    const auto strip = [](char c) { return c == '"' || c == '\'' || c == '.' || c == ',' || c == ';' || c == ':'; };
    while (!s.empty() && strip(s.front())) s.erase(s.begin());
    while (!s.empty() && strip(s.back())) s.pop_back();
    return s;
}

std::vector<std::string> words_of(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

json parse_file(const std::string& path) {
    try {
        return json::parse(text::read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

}  // namespace

std::string_view to_string(Category category) {
    for (const auto& [c, name] : kCategoryNames) {
        if (c == category) return name;
    }
    return "reference";
}

std::optional<Category> parse_category(std::string_view text) {
    for (const auto& [c, name] : kCategoryNames) {
        if (name == text) return c;
    }
    return std::nullopt;
}

// ============================================================================
// Verb table
// ============================================================================

VerbTable VerbTable::from_json(std::string_view json_text) {
    const json j = json::parse(json_text);
    VerbTable t;
    for (const auto& [verb, cat] : j.at("verbs").items()) {
        const auto category = parse_category(cat.get<std::string>());
        if (!category) throw Error(ErrorCode::ParseError, "unknown category for verb '" + verb + "'");
        t.table_[verb_key(verb)] = *category;
    }
    return t;
}

VerbTable VerbTable::load(const std::string& path) {
    try {
        return from_json(text::read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

std::string VerbTable::to_json() const {
    json verbs = json::object();
    for (const auto& [verb, cat] : table_) verbs[verb] = std::string(relations::to_string(cat));
    return json{{"verbs", verbs}}.dump(2) + "\n";
}

std::optional<Category> VerbTable::find(std::string_view verb) const {
    const auto it = table_.find(verb_key(verb));
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> lemma_candidates(std::string_view verb) {
    const std::string w = text::to_lower(verb);
    std::vector<std::string> out{w};
    const auto add = [&out](std::string s) {
        if (s.size() >= 2 && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
    };
    const auto ends_with = [&w](std::string_view suffix) {
        return w.size() > suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    const auto undouble = [](const std::string& stem) {
        if (stem.size() >= 3 && stem[stem.size() - 1] == stem[stem.size() - 2]) return stem.substr(0, stem.size() - 1);
        return stem;
    };

    if (ends_with("ies")) add(w.substr(0, w.size() - 3) + "y");
    if (ends_with("es")) add(w.substr(0, w.size() - 2));
    if (ends_with("s") && !ends_with("ss")) add(w.substr(0, w.size() - 1));
    if (ends_with("ied")) add(w.substr(0, w.size() - 3) + "y");
    if (ends_with("ed")) {
        const std::string stem = w.substr(0, w.size() - 2);
        add(w.substr(0, w.size() - 1));
        add(stem);
        add(undouble(stem));
    }
    if (ends_with("ing")) {
        const std::string stem = w.substr(0, w.size() - 3);
        add(stem + "e");
        add(stem);
        add(undouble(stem));
    }
    return out;
}

std::optional<Category> map_verb(std::string_view raw_verb, const VerbTable& table) {
    const std::string key = verb_key(raw_verb);
    if (key.empty()) return std::nullopt;
    if (auto hit = table.find(key)) return hit;

    static constexpr std::array<std::string_view, 16> kAuxiliaries{
        "will", "would", "is", "was", "are", "were", "be", "been", "has", "have", "had",
        "can", "could", "then", "also", "to"};
    std::vector<std::string> words = words_of(key);
    while (words.size() > 1 &&
           std::find(kAuxiliaries.begin(), kAuxiliaries.end(), words.front()) != kAuxiliaries.end()) {
        words.erase(words.begin());
    }

    for (std::size_t n = words.size(); n >= 1; --n) {
        std::string rest;
        for (std::size_t i = 1; i < n; ++i) rest += " " + words[i];
        for (const auto& lemma : lemma_candidates(words.front())) {
            if (auto hit = table.find(lemma + rest)) return hit;
        }
    }
    return std::nullopt;
}

// ============================================================================
// Compatibility matrix and alias verbs
// ============================================================================

CompatibilityMatrix CompatibilityMatrix::from_json(std::string_view json_text) {
    const json j = json::parse(json_text);
    CompatibilityMatrix m;
    for (const auto& c : j.value("always_allowed", json::array())) {
        const auto category = parse_category(c.get<std::string>());
        if (!category) throw Error(ErrorCode::ParseError, "unknown category in always_allowed");
        m.always_allowed_.insert(*category);
    }
    for (const auto& triple : j.at("allowed")) {
        const auto src = parse_ioc_type(triple.at(0).get<std::string>());
        const auto cat = parse_category(triple.at(1).get<std::string>());
        const auto dst = parse_ioc_type(triple.at(2).get<std::string>());
        if (!src || !cat || !dst) throw Error(ErrorCode::ParseError, "bad compatibility triple: " + triple.dump());
        m.allowed_.emplace(*src, *cat, *dst);
    }
    return m;
}

CompatibilityMatrix CompatibilityMatrix::load(const std::string& path) {
    try {
        return from_json(text::read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

bool CompatibilityMatrix::allows(IocType src, Category category, IocType dst) const {
    return always_allowed_.count(category) > 0 || allowed_.count({src, category, dst}) > 0;
}

AliasVerbs AliasVerbs::from_list(std::vector<std::string> verbs) {
    AliasVerbs a;
    for (const auto& v : verbs) a.verbs_.insert(verb_key(v));
    return a;
}

AliasVerbs AliasVerbs::load(const std::string& path) {
    const json j = parse_file(path);
    return from_list(j.at("alias_verbs").get<std::vector<std::string>>());
}

bool AliasVerbs::contains(std::string_view verb) const {
    const std::string key = verb_key(verb);
    if (verbs_.count(key) > 0) return true;
    // "acted as" / "acting as" -> "act as"
    const std::vector<std::string> words = words_of(key);
    if (words.empty()) return false;
    std::string rest;
    for (std::size_t i = 1; i < words.size(); ++i) rest += " " + words[i];
    for (const auto& lemma : lemma_candidates(words.front())) {
        if (verbs_.count(lemma + rest) > 0) return true;
    }
    return false;
}

// ============================================================================
// IOC index
// ============================================================================

std::string IocIndex::loose_key(std::string_view noun) {
    std::string s(text::trim(noun));
    const auto strip = [](char c) { return c == '"' || c == '\'' || c == '`' || c == ',' || c == ';'; };
    while (!s.empty() && strip(s.front())) s.erase(s.begin());
    while (!s.empty() && (strip(s.back()) || s.back() == '.')) s.pop_back();
    s = text::to_lower(text::collapse_whitespace(extraction::refang(s)));
    std::string out;
    for (char c : s) {
        if (c == '\\' && !out.empty() && out.back() == '\\') continue;
        out.push_back(c);
    }
    return out;
}

IocIndex::IocIndex(const std::vector<IocRecord>& records) {
    for (const auto& r : records) {
        if (!r.kept()) continue;
        by_key_.emplace(loose_key(r.surface), r);
        by_key_.emplace(loose_key(r.canonical), r);
    }
}

const IocRecord* IocIndex::find(std::string_view noun) const {
    const auto it = by_key_.find(loose_key(noun));
    return it == by_key_.end() ? nullptr : &it->second;
}

// ============================================================================
// Pair extraction
// ============================================================================

std::optional<std::vector<NounPair>> parse_pairs_response(std::string_view response, const ParagraphRef& ref) {
    const std::size_t open = response.find('[');
    const std::size_t close = response.rfind(']');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
    json items;
    try {
        items = json::parse(response.substr(open, close - open + 1));
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (!items.is_array()) return std::nullopt;

    std::vector<NounPair> pairs;
    for (const auto& item : items) {
        if (!item.is_object()) continue;
        const auto field = [&item](const char* name) -> std::string {
            return item.contains(name) && item[name].is_string()
                       ? std::string(text::trim(item[name].get<std::string>()))
                       : std::string();
        };
        NounPair p{field("left"), field("verb"), field("right"), ref};
        if (p.left.empty() || p.right.empty() || p.verb.empty()) continue;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<NounPair> extract_pairs(const ingest::Paragraph& paragraph, gateway::Gateway& gw,
                                    const gateway::PromptLibrary& prompts, Diagnostics& diagnostics) {
    const ParagraphRef ref{paragraph.report_id, paragraph.index};
    const gateway::Prompt prompt = prompts.make(gateway::TaskTag::ExtractPairs, {{"paragraph", paragraph.text}}, 0.0);
    const gateway::Completion completion = gw.complete(prompt);
    auto pairs = parse_pairs_response(completion.text, ref);
    if (!pairs) {
        diagnostics.push_back({"extract_pairs", paragraph.report_id + "#" + std::to_string(paragraph.index),
                               "response is not a JSON array of {left, verb, right}"});
        return {};
    }
    return std::move(*pairs);
}

// ============================================================================
// Pronoun resolution and filtering
// ============================================================================

namespace {

// Alias nouns are free text ("a dropper", "the dropper"), so leading
// determiners are not part of their identity.
std::string alias_key(std::string_view noun) {
    static constexpr std::string_view kDeterminers[] = {"a ", "an ", "the ", "this ", "that ", "its "};
    std::string key = IocIndex::loose_key(noun);
    for (std::string_view d : kDeterminers) {
        if (key.size() > d.size() && key.compare(0, d.size(), d) == 0) return key.substr(d.size());
    }
    return key;
}

}  // namespace

std::vector<NounPair> resolve_pronouns(const std::vector<NounPair>& pairs, const IocIndex& iocs,
                                       const AliasVerbs& alias_verbs) {
    std::map<ParagraphRef, std::vector<const NounPair*>> by_paragraph;
    for (const auto& p : pairs) by_paragraph[p.paragraph_ref].push_back(&p);

    std::vector<NounPair> out;
    for (const auto& [ref, group] : by_paragraph) {
        std::map<std::string, std::string> alias;  // loose noun -> IOC surface
        const auto resolve = [&](const std::string& noun) -> std::optional<std::string> {
            if (const IocRecord* r = iocs.find(noun)) return r->surface;
            const auto it = alias.find(alias_key(noun));
            if (it != alias.end()) return it->second;
            return std::nullopt;
        };

        std::set<const NounPair*> alias_pairs;
        bool changed = true;
        while (changed) {
            changed = false;
            for (const NounPair* p : group) {
                if (!alias_verbs.contains(p->verb)) continue;
                const bool left_ioc = iocs.find(p->left) != nullptr;
                const bool right_ioc = iocs.find(p->right) != nullptr;
                if (left_ioc && right_ioc) continue;
                const auto l = resolve(p->left);
                const auto r = resolve(p->right);
                if (l && !r) {
                    alias[alias_key(p->right)] = *l;
                    changed = true;
                } else if (r && !l) {
                    alias[alias_key(p->left)] = *r;
                    changed = true;
                }
                if (l || r) alias_pairs.insert(p);
            }
        }

        for (const NounPair* p : group) {
            if (alias_pairs.count(p) > 0) continue;
            NounPair q = *p;
            if (iocs.find(q.left) == nullptr) {
                if (auto a = resolve(q.left)) q.left = *a;
            }
            if (iocs.find(q.right) == nullptr) {
                if (auto a = resolve(q.right)) q.right = *a;
            }
            out.push_back(std::move(q));
        }
    }
    return out;
}

std::vector<NounPair> filter_pairs(const std::vector<NounPair>& pairs, const IocIndex& iocs,
                                   Diagnostics* diagnostics) {
    std::vector<NounPair> kept;
    for (const auto& p : pairs) {
        const IocRecord* l = iocs.find(p.left);
        const IocRecord* r = iocs.find(p.right);
        std::string reason;
        if (l == nullptr && r == nullptr) reason = "neither side is an IOC";
        else if (l == nullptr) reason = "left side is not an IOC";
        else if (r == nullptr) reason = "right side is not an IOC";
        else if (l->ref() == r->ref()) reason = "both sides are the same IOC";

        if (reason.empty()) {
            kept.push_back(p);
        } else if (diagnostics != nullptr) {
            diagnostics->push_back({"filter_pairs",
                                    p.paragraph_ref.report_id + "#" + std::to_string(p.paragraph_ref.index),
                                    "dropped (" + p.left + " -" + p.verb + "-> " + p.right + "): " + reason});
        }
    }
    return kept;
}

std::vector<RelationEdge> map_edges(const std::vector<NounPair>& pairs, const IocIndex& iocs,
                                    const VerbTable& table, Diagnostics& diagnostics) {
    std::vector<RelationEdge> edges;
    for (const auto& p : pairs) {
        const IocRecord* l = iocs.find(p.left);
        const IocRecord* r = iocs.find(p.right);
        if (l == nullptr || r == nullptr) continue;
        RelationEdge e;
        e.src = l->ref();
        e.dst = r->ref();
        e.raw_verb = p.verb;
        e.paragraph_ref = p.paragraph_ref;
        if (auto cat = map_verb(p.verb, table)) {
            e.category = *cat;
        } else {
            e.category = Category::Reference;
            diagnostics.push_back({"map_verb", p.verb, "verb not in mapping table; edge kept as reference"});
        }
        edges.push_back(std::move(e));
    }
    return edges;
}

// ============================================================================
// Verification
// ============================================================================

std::string parse_verb_response(std::string_view response) {
    const std::string_view trimmed = text::trim(response);
    const std::size_t brace = trimmed.find('{');
    if (brace != std::string_view::npos) {
        const std::size_t close = trimmed.rfind('}');
        try {
            const json j = json::parse(trimmed.substr(brace, close - brace + 1));
            if (j.contains("verb") && j["verb"].is_string()) return std::string(text::trim(j["verb"].get<std::string>()));
        } catch (const json::exception&) {
        }
    }
    const std::size_t eol = trimmed.find('\n');
    return verb_key(trimmed.substr(0, eol));
}

RelationEdge verify_edge(RelationEdge edge, const CompatibilityMatrix& matrix, const VerbTable& table,
                         gateway::Gateway& gw, const gateway::PromptLibrary& prompts,
                         const VerifyContext& context, int max_reidentify, Diagnostics& diagnostics) {
    const std::string subject = context.src_surface + " -> " + context.dst_surface;
    while (true) {
        if (matrix.allows(edge.src.type, edge.category, edge.dst.type)) {
            edge.verified = true;
            return edge;
        }
        if (edge.reidentify_count >= max_reidentify) {
            diagnostics.push_back({"verify_edge", subject,
                                   "demoted to reference after " + std::to_string(edge.reidentify_count) +
                                       " re-identifications (last verb '" + edge.raw_verb + "')"});
            edge.category = Category::Reference;
            edge.verified = false;
            return edge;
        }

        ++edge.reidentify_count;
        const gateway::Prompt prompt = prompts.make(
            gateway::TaskTag::ReidentifyRelation,
            {{"paragraph", context.paragraph_text},
             {"source", context.src_surface},
             {"source_type", std::string(ctiforge::to_string(edge.src.type))},
             {"target", context.dst_surface},
             {"target_type", std::string(ctiforge::to_string(edge.dst.type))},
             {"previous_verb", edge.raw_verb},
             {"previous_category", std::string(to_string(edge.category))}},
            0.0, edge.reidentify_count);
        const std::string verb = parse_verb_response(gw.complete(prompt).text);
        diagnostics.push_back({"verify_edge", subject,
                               "(" + std::string(ctiforge::to_string(edge.src.type)) + ", " +
                                   std::string(to_string(edge.category)) + ", " +
                                   std::string(ctiforge::to_string(edge.dst.type)) +
                                   ") not allowed; re-identified as '" + verb + "'"});
        edge.raw_verb = verb;
        if (auto cat = map_verb(verb, table)) {
            edge.category = *cat;
        } else {
            edge.category = Category::Reference;
            diagnostics.push_back({"map_verb", verb, "verb not in mapping table; edge kept as reference"});
        }
    }
}

}  // namespace ctiforge::relations
