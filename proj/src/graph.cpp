#include "ctiforge/graph.hpp"

#include "ctiforge/error.hpp"
#include "ctiforge/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <sstream>
#include <tuple>

namespace ctiforge::graph {

using json = nlohmann::json;
using relations::Category;

namespace {

auto edge_key(const GraphEdge& e) {
    return std::tie(e.src_node, e.dst_node, e.category, e.verified);
}

json ref_to_json(const IocRef& r) {
    return json{{"ioc_type", std::string(to_string(r.type))}, {"canonical", r.canonical}};
}

IocRef ref_from_json(const json& j) {
    const auto type = parse_ioc_type(j.at("ioc_type").get<std::string>());
    if (!type) throw Error(ErrorCode::ParseError, "unknown ioc_type " + j.at("ioc_type").dump());
    return IocRef{*type, j.at("canonical").get<std::string>()};
}

json provenance_to_json(const std::vector<Provenance>& provenance) {
    json out = json::array();
    for (const auto& p : provenance) {
        out.push_back({{"report_id", p.report_id}, {"paragraph", p.paragraph}, {"raw_verb", p.raw_verb}});
    }
    return out;
}

std::vector<Provenance> provenance_from_json(const json& j) {
    std::vector<Provenance> out;
    for (const auto& p : j) {
        out.push_back({p.at("report_id").get<std::string>(), p.at("paragraph").get<int>(),
                       p.at("raw_verb").get<std::string>()});
    }
    return out;
}

Category category_from_json(const json& j) {
    const auto cat = relations::parse_category(j.get<std::string>());
    if (!cat) throw Error(ErrorCode::ParseError, "unknown category " + j.dump());
    return *cat;
}

/// Escapes a string for a double-quoted DOT ID. Backslashes are doubled so
/// that registry paths survive; "\n" is written by the caller.
std::string dot_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace

const GraphNode* RelationshipGraph::find_node(std::string_view node_id) const {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), node_id,
                                     [](const GraphNode& n, std::string_view id) { return n.node_id < id; });
    return it != nodes.end() && it->node_id == node_id ? &*it : nullptr;
}

std::string node_id_for(IocType type, std::string_view pattern) {
    std::string material(to_string(type));
    material.push_back('\x1f');
    material.append(pattern);
    return "n_" + text::sha256_hex(material).substr(0, 12);
}

// ============================================================================
// Construction
// ============================================================================

RelationshipGraph build_graph(const std::vector<regex::RegexPattern>& patterns,
                              const std::vector<relations::RelationEdge>& edges, Diagnostics* diagnostics) {
    std::map<std::string, GraphNode> nodes;
    std::map<IocRef, std::string> owner;
    for (const auto& p : patterns) {
        const std::string id = node_id_for(p.ioc_type, p.pattern);
        auto [it, inserted] = nodes.try_emplace(id);
        GraphNode& node = it->second;
        if (inserted) {
            node.node_id = id;
            node.ioc_type = p.ioc_type;
            node.pattern = p.pattern;
            node.signature = p.signature;
        }
        node.merged_ioc_refs.push_back(p.ioc_ref);
        node.merged_ioc_refs.insert(node.merged_ioc_refs.end(), p.merged_ioc_refs.begin(), p.merged_ioc_refs.end());
        std::sort(node.merged_ioc_refs.begin(), node.merged_ioc_refs.end());
        node.merged_ioc_refs.erase(std::unique(node.merged_ioc_refs.begin(), node.merged_ioc_refs.end()),
                                   node.merged_ioc_refs.end());
        for (const auto& r : node.merged_ioc_refs) owner.emplace(r, id);
    }

    const auto report = [diagnostics](const relations::RelationEdge& e, const std::string& why) {
        if (diagnostics == nullptr) return;
        diagnostics->push_back({"build_graph", e.src.canonical + " -> " + e.dst.canonical, why});
    };

    std::map<std::tuple<std::string, std::string, Category, bool>, GraphEdge> merged;
    for (const auto& e : edges) {
        const auto src = owner.find(e.src);
        const auto dst = owner.find(e.dst);
        if (src == owner.end() || dst == owner.end()) {
            report(e, "endpoint has no pattern node; edge dropped");
            continue;
        }
        if (src->second == dst->second) {
            report(e, "both endpoints merged into node " + src->second + "; self-loop dropped");
            continue;
        }
        GraphEdge& g = merged[{src->second, dst->second, e.category, e.verified}];
        g.src_node = src->second;
        g.dst_node = dst->second;
        g.category = e.category;
        g.verified = e.verified;
        g.provenance.push_back({e.paragraph_ref.report_id, e.paragraph_ref.index, e.raw_verb});
    }

    RelationshipGraph g;
    for (auto& [id, node] : nodes) g.nodes.push_back(std::move(node));
    for (auto& [key, edge] : merged) {
        std::sort(edge.provenance.begin(), edge.provenance.end());
        g.edges.push_back(std::move(edge));
    }
    return g;
}

// ============================================================================
// Export / import
// ============================================================================

std::string export_graph(const RelationshipGraph& g, ExportFormat format) {
    if (format == ExportFormat::Json) {
        json nodes = json::array();
        for (const auto& n : g.nodes) {
            json refs = json::array();
            for (const auto& r : n.merged_ioc_refs) refs.push_back(ref_to_json(r));
            nodes.push_back({{"node_id", n.node_id},
                             {"ioc_type", std::string(to_string(n.ioc_type))},
                             {"pattern", n.pattern},
                             {"signature", n.signature},
                             {"merged_ioc_refs", refs}});
        }
        json edges = json::array();
        for (const auto& e : g.edges) {
            edges.push_back({{"src_node", e.src_node},
                             {"dst_node", e.dst_node},
                             {"category", std::string(relations::to_string(e.category))},
                             {"verified", e.verified},
                             {"provenance", provenance_to_json(e.provenance)}});
        }
        return json{{"nodes", nodes}, {"edges", edges}}.dump(2) + "\n";
    }

    std::ostringstream out;
    out << "digraph cti {\n";
    for (const auto& n : g.nodes) {
        out << "  \"" << n.node_id << "\" [label=\"" << to_string(n.ioc_type) << "\\n"
            << dot_escape(n.pattern) << "\"];\n";
    }
    for (const auto& e : g.edges) {
        out << "  \"" << e.src_node << "\" -> \"" << e.dst_node << "\" [label=\""
            << relations::to_string(e.category) << "\"";
        if (!e.verified) out << ", style=dashed";
        out << "];\n";
    }
    out << "}\n";
    return out.str();
}

RelationshipGraph graph_from_json(std::string_view json_text) {
    try {
        const json j = json::parse(json_text);
        RelationshipGraph g;
        for (const auto& n : j.at("nodes")) {
            GraphNode node;
            node.node_id = n.at("node_id").get<std::string>();
            const auto type = parse_ioc_type(n.at("ioc_type").get<std::string>());
            if (!type) throw Error(ErrorCode::ParseError, "unknown ioc_type " + n.at("ioc_type").dump());
            node.ioc_type = *type;
            node.pattern = n.at("pattern").get<std::string>();
            node.signature = n.at("signature").get<std::vector<std::string>>();
            for (const auto& r : n.at("merged_ioc_refs")) node.merged_ioc_refs.push_back(ref_from_json(r));
            g.nodes.push_back(std::move(node));
        }
        for (const auto& e : j.at("edges")) {
            GraphEdge edge;
            edge.src_node = e.at("src_node").get<std::string>();
            edge.dst_node = e.at("dst_node").get<std::string>();
            edge.category = category_from_json(e.at("category"));
            edge.verified = e.at("verified").get<bool>();
            edge.provenance = provenance_from_json(e.at("provenance"));
            g.edges.push_back(std::move(edge));
        }
        std::sort(g.nodes.begin(), g.nodes.end(),
                  [](const GraphNode& a, const GraphNode& b) { return a.node_id < b.node_id; });
        std::sort(g.edges.begin(), g.edges.end(),
                  [](const GraphEdge& a, const GraphEdge& b) { return edge_key(a) < edge_key(b); });
        for (const auto& e : g.edges) {
            if (g.find_node(e.src_node) == nullptr || g.find_node(e.dst_node) == nullptr) {
                throw Error(ErrorCode::ParseError, "edge " + e.src_node + " -> " + e.dst_node + " has a dangling endpoint");
            }
        }
        return g;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("graph JSON: ") + e.what());
    }
}

// ============================================================================
// Rules
// ============================================================================

std::optional<std::string> TemplateSlot::field_for(IocType type) const {
    for (const auto& [t, field] : fields) {
        if (t == type) return field;
    }
    return std::nullopt;
}

RuleTemplates RuleTemplates::from_json(std::string_view json_text) {
    const auto slot_from = [](const json& j) {
        TemplateSlot slot;
        for (const auto& [type_name, field] : j.items()) {
            const auto type = parse_ioc_type(type_name);
            if (!type) throw Error(ErrorCode::ParseError, "unknown ioc_type '" + type_name + "' in rule template");
            slot.fields.emplace_back(*type, field.get<std::string>());
        }
        return slot;
    };
    try {
        const json j = json::parse(json_text);
        RuleTemplates out;
        for (const auto& t : j.at("templates")) {
            RuleTemplate rt;
            rt.name = t.at("name").get<std::string>();
            rt.title = t.at("title").get<std::string>();
            for (const auto& c : t.at("categories")) rt.categories.push_back(category_from_json(c));
            rt.first = slot_from(t.at("first"));
            rt.second = slot_from(t.at("second"));
            rt.directed = t.value("directed", true);
            out.templates_.push_back(std::move(rt));
        }
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("rule templates: ") + e.what());
    }
}

RuleTemplates RuleTemplates::load(const std::string& path) {
    return from_json(text::read_file(path));
}

std::vector<SiemRuleDraft> emit_rules(const RelationshipGraph& g, const RuleTemplates& templates) {
    std::vector<SiemRuleDraft> rules;
    for (const auto& e : g.edges) {
        if (!e.verified) continue;
        const GraphNode* src = g.find_node(e.src_node);
        const GraphNode* dst = g.find_node(e.dst_node);
        if (src == nullptr || dst == nullptr) continue;

        for (const auto& t : templates.templates()) {
            if (std::find(t.categories.begin(), t.categories.end(), e.category) == t.categories.end()) continue;

            // Orient the edge onto the template's slots.
            const GraphNode* first = nullptr;
            const GraphNode* second = nullptr;
            if (t.first.field_for(src->ioc_type) && t.second.field_for(dst->ioc_type)) {
                first = src;
                second = dst;
            } else if (!t.directed && t.first.field_for(dst->ioc_type) && t.second.field_for(src->ioc_type)) {
                first = dst;
                second = src;
            } else {
                continue;
            }

            SiemRuleDraft rule;
            rule.template_name = t.name;
            rule.title = t.title;
            rule.relation = e.category;
            rule.src_node = e.src_node;
            rule.dst_node = e.dst_node;
            rule.provenance = e.provenance;
            rule.condition_fields = {{*t.first.field_for(first->ioc_type), first->pattern},
                                     {*t.second.field_for(second->ioc_type), second->pattern}};
            rule.rule_id = "r_" + text::sha256_hex(t.name + '\x1f' + e.src_node + '\x1f' + e.dst_node + '\x1f' +
                                                   std::string(relations::to_string(e.category)))
                                      .substr(0, 12);
            rules.push_back(std::move(rule));
        }
    }
    std::sort(rules.begin(), rules.end(),
              [](const SiemRuleDraft& a, const SiemRuleDraft& b) { return a.rule_id < b.rule_id; });
    return rules;
}

std::string rules_to_json(const std::vector<SiemRuleDraft>& rules) {
    json out = json::array();
    for (const auto& r : rules) {
        json fields = json::array();
        for (const auto& f : r.condition_fields) fields.push_back({{"field_name", f.field_name}, {"pattern", f.pattern}});
        out.push_back({{"rule_id", r.rule_id},
                       {"template", r.template_name},
                       {"title", r.title},
                       {"relation", std::string(relations::to_string(r.relation))},
                       {"src_node", r.src_node},
                       {"dst_node", r.dst_node},
                       {"condition_fields", fields},
                       {"provenance", provenance_to_json(r.provenance)}});
    }
    return out.dump(2) + "\n";
}

}  // namespace ctiforge::graph
