#include "ctiforge/error.hpp"
#include "ctiforge/graph.hpp"
#include "ctiforge/text.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <regex>

using namespace ctiforge;
using namespace ctiforge::graph;
using relations::Category;
using relations::RelationEdge;
using ctiforge::testing::source_path;

namespace {

const std::string kRunKey = "HKCU\\Software\\Run\\auto_update";
const std::string kRundll = "rundll32.exe [backdoor_path], StartRoutine";

regex::RegexPattern pattern(IocType type, const std::string& canonical, const std::string& re,
                            std::vector<std::string> signature = {}) {
    regex::RegexPattern p;
    p.pattern = re;
    p.ioc_type = type;
    p.ioc_ref = IocRef{type, canonical};
    p.signature = signature.empty() ? std::vector<std::string>{canonical} : std::move(signature);
    p.merged_ioc_refs = {p.ioc_ref};
    return p;
}

RelationEdge edge(const IocRef& src, const IocRef& dst, Category cat, bool verified, const std::string& verb,
                  int paragraph = 0, const std::string& report = "r") {
    RelationEdge e;
    e.src = src;
    e.dst = dst;
    e.category = cat;
    e.verified = verified;
    e.raw_verb = verb;
    e.paragraph_ref = {report, paragraph};
    return e;
}

const RuleTemplates& templates() {
    static const RuleTemplates t = RuleTemplates::load(source_path("data/rule_templates.json"));
    return t;
}

// Run-key persistence: a Run key executing a rundll32 command.
struct RunKey {
    regex::RegexPattern key = pattern(IocType::RegistryKey, "hkcu\\software\\run\\auto_update",
                                      "(?i)HKCU\\\\Software\\\\Run\\\\[^\\\\]+", {"hkcu", "software", "run"});
    regex::RegexPattern cmd = pattern(IocType::CommandLine, "rundll32.exe [backdoor_path], startroutine",
                                      "(?i)rundll32\\.exe\\s+\\S+,\\s+StartRoutine", {"rundll32.exe", "startroutine"});
    RelationEdge link = edge(key.ioc_ref, cmd.ioc_ref, Category::Execute, true, "executes");
};

}  // namespace

TEST(NodeId, MatchesIndependentDigest) {
    // sha256("filename" 0x1f "(?i)a\.exe")[:12], computed with Python hashlib.
    EXPECT_EQ(node_id_for(IocType::Filename, "(?i)a\\.exe"), "n_f474e43bd0f7");
    EXPECT_EQ(node_id_for(IocType::IpAddress, "10\\.1\\.2\\.3"), "n_041dbe516cb4");
}

TEST(BuildGraph, RunKeyHasTwoNodesAndOneDirectedEdge) {
    const RunKey f;
    const auto g = build_graph({f.key, f.cmd}, {f.link});
    ASSERT_EQ(g.nodes.size(), 2u);
    ASSERT_EQ(g.edges.size(), 1u);
    EXPECT_EQ(g.edges[0].src_node, node_id_for(IocType::RegistryKey, f.key.pattern));
    EXPECT_EQ(g.edges[0].dst_node, node_id_for(IocType::CommandLine, f.cmd.pattern));
    EXPECT_EQ(g.edges[0].category, Category::Execute);
    EXPECT_TRUE(g.edges[0].verified);
}

TEST(BuildGraph, NoEdgesStillExportsNodes) {
    const RunKey f;
    const auto g = build_graph({f.key, f.cmd}, {});
    EXPECT_EQ(g.nodes.size(), 2u);
    EXPECT_TRUE(g.edges.empty());
    const std::string dot = export_graph(g, ExportFormat::Dot);
    EXPECT_EQ(dot.find("->"), std::string::npos);
}

TEST(BuildGraph, DuplicateEdgesMergeProvenance) {
    const RunKey f;
    auto second = f.link;
    second.paragraph_ref = {"other", 3};
    second.raw_verb = "launches";
    const auto g = build_graph({f.key, f.cmd}, {second, f.link});
    ASSERT_EQ(g.edges.size(), 1u);
    ASSERT_EQ(g.edges[0].provenance.size(), 2u);
    EXPECT_EQ(g.edges[0].provenance[0].report_id, "other");
    EXPECT_EQ(g.edges[0].provenance[1].report_id, "r");
}

TEST(BuildGraph, ContradictoryCategoriesStaySeparate) {
    const RunKey f;
    const auto g = build_graph({f.key, f.cmd}, {f.link, edge(f.key.ioc_ref, f.cmd.ioc_ref, Category::Reference,
                                                             true, "references")});
    EXPECT_EQ(g.edges.size(), 2u);
}

TEST(BuildGraph, DanglingAndSelfLoopEdgesDropped) {
    const RunKey f;
    auto merged = f.cmd;
    merged.merged_ioc_refs.push_back(IocRef{IocType::CommandLine, "rundll32.exe other, startroutine"});
    Diagnostics diags;
    const auto g = build_graph(
        {f.key, merged},
        {edge(f.key.ioc_ref, IocRef{IocType::Filename, "missing.exe"}, Category::Create, true, "drops"),
         edge(f.cmd.ioc_ref, IocRef{IocType::CommandLine, "rundll32.exe other, startroutine"}, Category::Execute, true,
              "runs")},
        &diags);
    EXPECT_TRUE(g.edges.empty());
    EXPECT_EQ(diags.size(), 2u);
}

TEST(BuildGraph, EmptyInputsGiveEmptyDot) {
    const auto g = build_graph({}, {});
    EXPECT_EQ(export_graph(g, ExportFormat::Dot), "digraph cti {\n}\n");
}

TEST(Export, JsonRoundTripIsByteIdentical) {
    const RunKey f;
    const auto g = build_graph({f.key, f.cmd}, {f.link, edge(f.cmd.ioc_ref, f.key.ioc_ref, Category::Write, false, "edits")});
    const std::string a = export_graph(g, ExportFormat::Json);
    const auto back = graph_from_json(a);
    EXPECT_EQ(back, g);
    EXPECT_EQ(export_graph(back, ExportFormat::Json), a);
}

TEST(Export, DanglingEdgeInJsonIsParseError) {
    EXPECT_THROW(graph_from_json(R"({"nodes": [], "edges": [{"src_node": "a", "dst_node": "b",
        "category": "execute", "verified": true, "provenance": []}]})"),
                 Error);
}

TEST(Export, DotMatchesGoldenFile) {
    const auto a = pattern(IocType::Filename, "a.exe", "(?i)a\\.exe");
    const auto ip = pattern(IocType::IpAddress, "10.1.2.3", "10\\.1\\.2\\.3");
    const auto g = build_graph({a, ip}, {edge(a.ioc_ref, ip.ioc_ref, Category::Connect, true, "connects to")});
    EXPECT_EQ(export_graph(g, ExportFormat::Dot), text::read_file(source_path("tests/golden/connect.dot")));
}

TEST(Export, UnverifiedEdgesAreDashed) {
    const RunKey f;
    auto e = f.link;
    e.verified = false;
    e.category = Category::Reference;
    const auto dot = export_graph(build_graph({f.key, f.cmd}, {e}), ExportFormat::Dot);
    EXPECT_NE(dot.find("style=dashed"), std::string::npos);
}

// ----------------------------------------------------------------------------
// Rules
// ----------------------------------------------------------------------------

TEST(Rules, RunKeyYieldsOneRegistryPersistenceRule) {
    const RunKey f;
    const auto g = build_graph({f.key, f.cmd}, {f.link});
    const auto rules = emit_rules(g, templates());
    ASSERT_EQ(rules.size(), 1u);
    const auto& r = rules[0];
    EXPECT_EQ(r.template_name, "registry_persistence");
    ASSERT_EQ(r.condition_fields.size(), 2u);
    EXPECT_EQ(r.condition_fields[0].field_name, "registry.key");
    EXPECT_EQ(r.condition_fields[1].field_name, "process.command_line");
    EXPECT_TRUE(regex::full_match(regex::compile(r.condition_fields[0].pattern), kRunKey));
    EXPECT_TRUE(regex::full_match(regex::compile(r.condition_fields[1].pattern), kRundll));
    EXPECT_EQ(r.rule_id.size(), 14u);
}

TEST(Rules, UndirectedTemplateAcceptsReverseOrientation) {
    const RunKey f;
    const auto g = build_graph({f.key, f.cmd}, {edge(f.cmd.ioc_ref, f.key.ioc_ref, Category::Write, true, "writes")});
    const auto rules = emit_rules(g, templates());
    ASSERT_EQ(rules.size(), 1u);
    EXPECT_EQ(rules[0].condition_fields[0].field_name, "registry.key");
}

TEST(Rules, UnverifiedEdgeProducesNoRule) {
    const RunKey f;
    auto e = f.link;
    e.verified = false;
    EXPECT_TRUE(emit_rules(build_graph({f.key, f.cmd}, {e}), templates()).empty());
}

TEST(Rules, ConnectEdgeProducesNetworkRule) {
    const auto cmd = pattern(IocType::CommandLine, "powershell -nop", "(?i)powershell\\s+-nop");
    const auto ip = pattern(IocType::IpAddress, "10.1.2.3", "10\\.1\\.2\\.3");
    const auto g = build_graph({cmd, ip}, {edge(cmd.ioc_ref, ip.ioc_ref, Category::Connect, true, "connects to")});
    const auto rules = emit_rules(g, templates());
    ASSERT_EQ(rules.size(), 1u);
    EXPECT_EQ(rules[0].template_name, "network");
    EXPECT_EQ(rules[0].condition_fields[1].field_name, "destination.ip");
}

TEST(Rules, JsonIsStable) {
    const RunKey f;
    const auto rules = emit_rules(build_graph({f.key, f.cmd}, {f.link}), templates());
    EXPECT_EQ(rules_to_json(rules), rules_to_json(emit_rules(build_graph({f.cmd, f.key}, {f.link}), templates())));
}
