#include "ctiforge/error.hpp"
#include "ctiforge/pipeline.hpp"
#include "ctiforge/text.hpp"

#include "mock_model_server.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>

using namespace ctiforge;
using namespace ctiforge::pipeline;
using ctiforge::testing::default_store;
using ctiforge::testing::FakeGateway;
using ctiforge::testing::read_tree;
using ctiforge::testing::source_path;
using ctiforge::testing::TempDir;
using json = nlohmann::json;

namespace fs = std::filesystem;

namespace {

const std::string kRunKey = "HKCU\\Software\\Run\\auto_update";
const std::string kRundll = "rundll32.exe [backdoor_path], StartRoutine";
const std::string kSpools = "C:\\Users\\Public\\spools.exe";

const std::string kPersistenceReport =
    "The implant sets HKCU\\Software\\Run\\auto_update so that Windows will start "
    "rundll32.exe [backdoor_path], StartRoutine at every logon. This gives the actor persistence. "
    "No other changes were observed.";

const std::string kDropperReport =
    "Press conference.exe acts as a dropper. The dropper drops C:\\Users\\Public\\spools.exe for later use. "
    "It then contacts 203.0.113.7 for tasking.";

ErrorCode config_error_of(const std::string& json_text, const std::string& base = "/tmp") {
    try {
        PipelineConfig::from_json(json_text, base).validate();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "accepted: " << json_text;
    return ErrorCode::IoError;
}

/// A consistent fake model for the two reports above.
std::string respond(const gateway::Prompt& p) {
    using gateway::TaskTag;
    const auto has = [&p](const char* s) { return p.user_text.find(s) != std::string::npos; };
    switch (p.task_tag) {
        case TaskTag::ExtractIocs: {
            json items = json::array();
            if (has("auto_update")) {
                items.push_back({{"surface", kRunKey}, {"type", "registry_key"}});
                items.push_back({{"surface", kRundll}, {"type", "command_line"}});
            }
            if (has("spools.exe")) {
                items.push_back({{"surface", "Press conference.exe"}, {"type", "filename"}});
                items.push_back({{"surface", kSpools}, {"type", "filename"}});
                items.push_back({{"surface", "203.0.113.7"}, {"type", "ip_address"}});
            }
            // Noise that only shows up on one run.
            if (p.run_index == 1) items.push_back({{"surface", "startup folder"}, {"type", "filename"}});
            return items.dump();
        }
        case TaskTag::ExtractPairs: {
            json pairs = json::array();
            if (has("auto_update")) pairs.push_back({{"left", kRunKey}, {"verb", "creates"}, {"right", kRundll}});
            if (has("spools.exe")) {
                pairs.push_back({{"left", "Press conference.exe"}, {"verb", "acts as"}, {"right", "a dropper"}});
                pairs.push_back({{"left", "The dropper"}, {"verb", "drops"}, {"right", kSpools}});
            }
            return pairs.dump();
        }
        case TaskTag::ReidentifyRelation:
            return R"({"verb": "executes"})";
        case TaskTag::GenerateRegex:
        case TaskTag::RefineRegex:
            return ctiforge::testing::regex_from_annotations(p.user_text);
    }
    return "[]";
}

struct Workspace {
    TempDir dir;
    std::vector<std::string> reports;
    PipelineConfig config;

    Workspace() {
        text::write_file(dir.str("persistence.txt"), kPersistenceReport);
        text::write_file(dir.str("dropper.txt"), kDropperReport);
        reports = {dir.str("persistence.txt"), dir.str("dropper.txt")};
        default_store().save(dir.str("store.bin"));
        fs::create_directories(dir.path() / "fixtures");
        config = PipelineConfig::from_json(
            json{{"paths",
                  {{"store", dir.str("store.bin")},
                   {"fixtures", dir.str("fixtures")},
                   {"prompts", source_path("prompts")},
                   {"data", source_path("data")},
                   {"output", dir.str("out")}}}}
                .dump(),
            dir.str());
    }
};

}  // namespace

// ----------------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------------

TEST(Config, DefaultsAndPathResolution) {
    const auto c = PipelineConfig::from_json("{}", "/base");
    EXPECT_EQ(c.runs, 5);
    EXPECT_EQ(c.vote_threshold, 3);
    EXPECT_DOUBLE_EQ(c.similarity_threshold, 0.82);
    EXPECT_EQ(c.mode, gateway::Mode::Replay);
    EXPECT_EQ(c.paths.prompts, "/base/prompts");
    EXPECT_EQ(c.paths.output, "/base/out");
    EXPECT_EQ(c.paths.store, "");
}

TEST(Config, RejectsOutOfRangeAndUnknownFields) {
    EXPECT_EQ(config_error_of(R"({"runs": 0, "mode": "live"})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"runs": 5, "vote_threshold": 6, "mode": "live"})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"similarity_threshold": 0, "mode": "live"})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"concurrency": 0, "mode": "live"})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"target_sentences": 5, "mode": "live"})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"mode": "sometimes"})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"rnus": 5})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"paths": {"fixture": "x"}})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of(R"({"mode": "replay", "paths": {"fixtures": "/nonexistent/f"}})"), ErrorCode::ConfigError);
    EXPECT_EQ(config_error_of("not json"), ErrorCode::ConfigError);
}

TEST(Config, MissingFileIsConfigError) {
    try {
        PipelineConfig::load("/nonexistent/config.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    }
}

TEST(Config, ExitCodes) {
    EXPECT_EQ(exit_code_for(ErrorCode::ConfigError), 2);
    EXPECT_EQ(exit_code_for(ErrorCode::FixtureMiss), 3);
    EXPECT_EQ(exit_code_for(ErrorCode::ProviderError), 4);
    EXPECT_EQ(exit_code_for(ErrorCode::IoError), 1);
}

// ----------------------------------------------------------------------------
// Analysis
// ----------------------------------------------------------------------------

TEST(Analyze, PersistenceAndDropperReports) {
    Workspace ws;
    FakeGateway gw(respond);
    const auto result = analyze(ws.config, ws.reports, gw);

    // Noise from one run never reaches the kept set.
    for (const auto& r : result.iocs) EXPECT_NE(r.surface, "startup folder");
    const auto kept = std::count_if(result.iocs.begin(), result.iocs.end(), [](const auto& r) { return r.kept(); });
    EXPECT_EQ(kept, 5);

    EXPECT_EQ(result.graph.nodes.size(), 5u);
    ASSERT_EQ(result.graph.edges.size(), 2u);
    for (const auto& e : result.graph.edges) EXPECT_TRUE(e.verified);

    ASSERT_EQ(result.rules.size(), 2u);
    bool persistence = false;
    for (const auto& r : result.rules) {
        if (r.template_name != "registry_persistence") continue;
        persistence = true;
        EXPECT_TRUE(regex::full_match(regex::compile(r.condition_fields[0].pattern), kRunKey));
        EXPECT_TRUE(regex::full_match(regex::compile(r.condition_fields[1].pattern), kRundll));
    }
    EXPECT_TRUE(persistence);
    EXPECT_EQ(result.report_ids, (std::vector<std::string>{"persistence", "dropper"}));
}

TEST(Analyze, ArtifactsIndependentOfConcurrency) {
    Workspace ws;
    std::map<std::string, std::string> first;
    for (int width : {1, 8}) {
        ws.config.concurrency = width;
        FakeGateway gw(respond);
        auto artifacts = render_artifacts(ws.config, analyze(ws.config, ws.reports, gw));
        if (first.empty()) first = std::move(artifacts);
        else EXPECT_EQ(artifacts, first);
    }
    for (const char* name : {"iocs.json", "patterns.json", "edges.json", "graph.json", "graph.dot", "rules.json",
                             "run_manifest.json"}) {
        EXPECT_TRUE(first.count(name)) << name;
    }
    EXPECT_EQ(json::parse(first.at("run_manifest.json")).at("status"), "ok");
}

TEST(Analyze, DuplicateReportIdsRejected) {
    Workspace ws;
    FakeGateway gw(respond);
    EXPECT_THROW(analyze(ws.config, {ws.reports[0], ws.reports[0]}, gw), Error);
}

// ----------------------------------------------------------------------------
// Runs with the production gateway
// ----------------------------------------------------------------------------

TEST(RunPipeline, MissingFixtureExitsThreeWithManifest) {
    Workspace ws;
    const auto outcome = run_pipeline(ws.config, ws.reports);
    EXPECT_EQ(outcome.exit_code, 3);
    const auto manifest = json::parse(text::read_file(ws.dir.str("out/run_manifest.json")));
    EXPECT_EQ(manifest.at("status"), "error");
    EXPECT_EQ(manifest.at("error").at("code"), "FixtureMiss");
    EXPECT_FALSE(fs::exists(ws.dir.path() / "out" / "graph.json"));
}

TEST(RunPipeline, MissingReportIsConfigExit) {
    Workspace ws;
    FakeGateway gw(respond);
    EXPECT_EQ(run_pipeline(ws.config, {ws.dir.str("nope.txt")}, gw).exit_code, 2);
}

TEST(RunPipeline, RecordAgainstMockThenReplayIsIdentical) {
    Workspace ws;
    ctiforge::testing::MockModelServer server(
        ctiforge::testing::MockScript::from_json(text::read_file(source_path("tests/corpus/unit_script.json"))),
        source_path("prompts"));
    server.start();

    PipelineConfig record = ws.config;
    record.mode = gateway::Mode::Record;
    record.model.requests_per_second = 10000;
    record.model.retry_base_ms = 1;
    record.paths.output = ws.dir.str("recorded");
    ::setenv("MODEL_API_BASE", server.base_url().c_str(), 1);
    const auto rec = run_pipeline(record, ws.reports);
    ::unsetenv("MODEL_API_BASE");
    server.stop();
    ASSERT_EQ(rec.exit_code, 0) << rec.message;
    EXPECT_TRUE(server.unmatched().empty());

    PipelineConfig replay = ws.config;
    replay.paths.output = ws.dir.str("replayed");
    const auto rep = run_pipeline(replay, ws.reports);
    ASSERT_EQ(rep.exit_code, 0) << rep.message;

    auto a = read_tree(ws.dir.path() / "recorded");
    auto b = read_tree(ws.dir.path() / "replayed");
    // The manifests differ only in the recorded mode.
    auto ma = json::parse(a.at("run_manifest.json"));
    auto mb = json::parse(b.at("run_manifest.json"));
    ma["config"].erase("mode");
    mb["config"].erase("mode");
    EXPECT_EQ(ma, mb);
    a.erase("run_manifest.json");
    b.erase("run_manifest.json");
    EXPECT_EQ(a, b);
    EXPECT_FALSE(json::parse(a.at("graph.json")).at("edges").empty());
}
