#pragma once

#include "ctiforge/diagnostics.hpp"
#include "ctiforge/regex_synthesis.hpp"
#include "ctiforge/relationships.hpp"
#include "ctiforge/types.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctiforge::graph {

/// Where an edge was stated: report, paragraph and the verb the model used.
struct Provenance {
    std::string report_id;
    int paragraph = 0;
    std::string raw_verb;

    auto operator<=>(const Provenance&) const = default;
};

struct GraphNode {
    std::string node_id;
    IocType ioc_type = IocType::Filename;
    std::string pattern;
    std::vector<std::string> signature;
    std::vector<IocRef> merged_ioc_refs;

    bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
    std::string src_node;
    std::string dst_node;
    relations::Category category = relations::Category::Reference;
    bool verified = false;
    std::vector<Provenance> provenance;

    bool operator==(const GraphEdge&) const = default;
};

/// Nodes sorted by node_id, edges by (src, dst, category, verified).
struct RelationshipGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    const GraphNode* find_node(std::string_view node_id) const;
    bool operator==(const RelationshipGraph&) const = default;
};

/// "n_" + the first 12 hex digits of SHA-256(type ‖ 0x1f ‖ pattern).
std::string node_id_for(IocType type, std::string_view pattern);

/// One node per (deduplicated) pattern; edges are re-pointed from IOC refs to
/// the node that absorbed them. Edges whose endpoints have no node, or which
/// collapse into a self-loop, are dropped with a diagnostic. Parallel edges
/// with the same (src, dst, category, verified) are merged and their
/// provenance lists concatenated.
RelationshipGraph build_graph(const std::vector<regex::RegexPattern>& patterns,
                              const std::vector<relations::RelationEdge>& edges,
                              Diagnostics* diagnostics = nullptr);

enum class ExportFormat { Json, Dot };

/// Canonical, diffable serializations (sorted keys, two-space indent for
/// JSON; sorted statements for DOT).
std::string export_graph(const RelationshipGraph& g, ExportFormat format);

/// Inverse of the JSON export. Throws Error(ParseError) on malformed input.
RelationshipGraph graph_from_json(std::string_view json_text);

// ============================================================================
// SIEM rule drafts
// ============================================================================

struct RuleField {
    std::string field_name;
    std::string pattern;

    bool operator==(const RuleField&) const = default;
};

struct SiemRuleDraft {
    std::string rule_id;
    std::string template_name;
    std::string title;
    std::vector<RuleField> condition_fields;
    relations::Category relation = relations::Category::Reference;
    std::string src_node;
    std::string dst_node;
    std::vector<Provenance> provenance;

    bool operator==(const SiemRuleDraft&) const = default;
};

/// One endpoint slot of a rule template: which IOC types fit and which log
/// field each type maps to.
struct TemplateSlot {
    std::vector<std::pair<IocType, std::string>> fields;

    std::optional<std::string> field_for(IocType type) const;
};

struct RuleTemplate {
    std::string name;
    std::string title;
    std::vector<relations::Category> categories;
    TemplateSlot first;
    TemplateSlot second;
    bool directed = true;  ///< false: the edge may run second -> first too
};

/// Rule templates from data/rule_templates.json.
class RuleTemplates {
public:
    static RuleTemplates load(const std::string& path);
    static RuleTemplates from_json(std::string_view json_text);

    const std::vector<RuleTemplate>& templates() const { return templates_; }

private:
    std::vector<RuleTemplate> templates_;
};

/// One draft per verified edge per matching template, sorted by rule_id.
/// Unverified edges never produce rules.
std::vector<SiemRuleDraft> emit_rules(const RelationshipGraph& g, const RuleTemplates& templates);

std::string rules_to_json(const std::vector<SiemRuleDraft>& rules);

}  // namespace ctiforge::graph
