#pragma once

#include "ctiforge/diagnostics.hpp"
#include "ctiforge/extraction.hpp"
#include "ctiforge/ingest.hpp"
#include "ctiforge/model_gateway.hpp"
#include "ctiforge/types.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace ctiforge::relations {

struct NounPair {
    std::string left;
    std::string verb;
    std::string right;
    ParagraphRef paragraph_ref;

    auto operator<=>(const NounPair&) const = default;
};

enum class Category { Create, Write, Read, Execute, Delete, Connect, Reference };

std::string_view to_string(Category category);
std::optional<Category> parse_category(std::string_view text);

struct RelationEdge {
    IocRef src;
    IocRef dst;
    Category category = Category::Reference;
    std::string raw_verb;
    ParagraphRef paragraph_ref;
    bool verified = false;
    int reidentify_count = 0;
};

/// verb -> category table loaded from data/verb_map.json.
class VerbTable {
public:
    static VerbTable load(const std::string& path);
    static VerbTable from_json(std::string_view json_text);
    std::string to_json() const;

    /// Exact lookup on a case-folded, whitespace-collapsed key.
    std::optional<Category> find(std::string_view verb) const;
    std::size_t size() const { return table_.size(); }

    const std::map<std::string, Category>& entries() const { return table_; }

private:
    std::map<std::string, Category> table_;
};

/// Inflection-stripping candidates for a verb form, most specific first
/// ("dropped" -> "dropped", "droppe", "dropp", "drop", ...).
std::vector<std::string> lemma_candidates(std::string_view verb);

/// Case-folds, lemmatizes and drops trailing particles ("writes to" ->
/// "write"). nullopt means the table has a gap for this verb.
std::optional<Category> map_verb(std::string_view raw_verb, const VerbTable& table);

/// Allowed (src_type, category, dst_type) triples from data/compat_matrix.json.
class CompatibilityMatrix {
public:
    static CompatibilityMatrix load(const std::string& path);
    static CompatibilityMatrix from_json(std::string_view json_text);

    bool allows(IocType src, Category category, IocType dst) const;

private:
    std::set<std::tuple<IocType, Category, IocType>> allowed_;
    std::set<Category> always_allowed_;
};

/// Verbs that make one noun an alias of another ("acts as", "is known as").
class AliasVerbs {
public:
    static AliasVerbs load(const std::string& path);
    static AliasVerbs from_list(std::vector<std::string> verbs);

    bool contains(std::string_view verb) const;

private:
    std::set<std::string> verbs_;
};

/// Lookup from free-text nouns to retained IOCs. Matching uses a loose key
/// (case-folded, whitespace-collapsed, refanged, single backslashes).
class IocIndex {
public:
    explicit IocIndex(const std::vector<extraction::IocRecord>& records);

    const extraction::IocRecord* find(std::string_view noun) const;

    static std::string loose_key(std::string_view noun);

private:
    std::map<std::string, extraction::IocRecord> by_key_;
};

/// One completion per paragraph; a malformed answer yields no pairs and a
/// diagnostic.
std::vector<NounPair> extract_pairs(const ingest::Paragraph& paragraph, gateway::Gateway& gw,
                                    const gateway::PromptLibrary& prompts, Diagnostics& diagnostics);

std::optional<std::vector<NounPair>> parse_pairs_response(std::string_view response, const ParagraphRef& ref);

/// Turns non-IOC nouns linked to an IOC by an aliasing verb into aliases of
/// that IOC (transitively), substitutes them into the paragraph's other
/// pairs and removes the alias pairs themselves.
std::vector<NounPair> resolve_pronouns(const std::vector<NounPair>& pairs, const IocIndex& iocs,
                                       const AliasVerbs& alias_verbs);

/// Keeps pairs whose two sides are distinct retained IOCs.
std::vector<NounPair> filter_pairs(const std::vector<NounPair>& pairs, const IocIndex& iocs,
                                   Diagnostics* diagnostics = nullptr);

/// Maps filtered pairs onto edges; unmapped verbs become `reference` with a
/// diagnostic.
std::vector<RelationEdge> map_edges(const std::vector<NounPair>& pairs, const IocIndex& iocs,
                                    const VerbTable& table, Diagnostics& diagnostics);

struct VerifyContext {
    std::string paragraph_text;
    std::string src_surface;
    std::string dst_surface;
};

/// Checks the edge against the matrix and re-asks the model for the
/// relation on violations. After `max_reidentify` failed attempts the edge
/// is demoted to `reference` and left unverified.
RelationEdge verify_edge(RelationEdge edge, const CompatibilityMatrix& matrix, const VerbTable& table,
                         gateway::Gateway& gw, const gateway::PromptLibrary& prompts,
                         const VerifyContext& context, int max_reidentify, Diagnostics& diagnostics);

/// Pulls a verb out of a re-identification answer: {"verb": ...} or the
/// first non-empty line.
std::string parse_verb_response(std::string_view response);

}  // namespace ctiforge::relations
