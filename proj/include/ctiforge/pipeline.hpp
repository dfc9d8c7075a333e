#pragma once

#include "ctiforge/diagnostics.hpp"
#include "ctiforge/error.hpp"
#include "ctiforge/extraction.hpp"
#include "ctiforge/graph.hpp"
#include "ctiforge/knowledge_base.hpp"
#include "ctiforge/model_gateway.hpp"
#include "ctiforge/regex_synthesis.hpp"
#include "ctiforge/relationships.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ctiforge::pipeline {

struct ModelSettings {
    std::string name = "gpt-4";
    std::string embedding_model = "text-embedding-3-small";
    int max_in_flight = 4;
    double requests_per_second = 10.0;
    int retry_base_ms = 500;
    int timeout_s = 60;
};

/// Every path is absolute after loading (relative paths in a config file are
/// resolved against the file's directory).
struct PipelinePaths {
    std::string store;           ///< serialized knowledge store; built from seed_knowledge if absent
    std::string seed_knowledge;  ///< knowledge.jsonl
    std::string fixtures;
    std::string prompts;
    std::string data;  ///< verb_map.json, alias_verbs.json, compat_matrix.json, rule_templates.json
    std::string output;
};

struct PipelineConfig {
    int runs = 5;
    int vote_threshold = 3;
    double similarity_threshold = kb::kDefaultSimilarityThreshold;
    double extraction_temperature = 0.7;
    int max_attempts = 4;
    int max_reidentify = 2;
    gateway::Mode mode = gateway::Mode::Replay;
    int concurrency = 4;
    int target_sentences = 4;
    std::uint64_t seed = 0x5eed;
    ModelSettings model;
    PipelinePaths paths;

    /// Parses a config file. Throws Error(ConfigError).
    static PipelineConfig load(const std::string& path);
    static PipelineConfig from_json(std::string_view json_text, const std::string& base_dir);

    /// Snapshot written to the run manifest. Paths are omitted so that the
    /// manifest does not depend on where the repository is checked out.
    std::string to_json() const;

    /// Throws Error(ConfigError) when a field is out of range or replay mode
    /// has no fixture directory.
    void validate() const;

    gateway::GatewayConfig gateway_config() const;
};

/// Process exit code for an error: 2 config, 3 fixture miss, 4 provider,
/// 1 anything else.
int exit_code_for(ErrorCode code);

/// Everything the data directory provides to the relationship and rule
/// stages.
struct DataFiles {
    relations::VerbTable verbs;
    relations::AliasVerbs alias_verbs;
    relations::CompatibilityMatrix matrix;
    graph::RuleTemplates rule_templates;

    static DataFiles load(const std::string& data_dir);
};

/// Loads the store from config.paths.store, or embeds the seed file when the
/// store does not exist yet.
kb::VectorStore open_store(const PipelineConfig& config, gateway::Gateway& gw);

/// In-memory result of an analysis; `write_artifacts` serializes it.
struct AnalysisResult {
    std::vector<extraction::IocRecord> iocs;        ///< every purified record, rejected included
    std::vector<regex::RegexPattern> patterns;      ///< deduplicated
    std::size_t patterns_before_dedup = 0;
    std::vector<relations::RelationEdge> edges;     ///< after verification
    graph::RelationshipGraph graph;
    std::vector<graph::SiemRuleDraft> rules;
    Diagnostics diagnostics;                        ///< sorted
    std::vector<std::string> report_ids;
};

/// Runs every stage over the given reports through `gw`. Reports are
/// processed concurrently up to config.concurrency; the result does not
/// depend on the width. Infrastructure errors propagate as Error.
AnalysisResult analyze(const PipelineConfig& config, const std::vector<std::string>& report_paths,
                       gateway::Gateway& gw);

/// File name -> contents for iocs.json, patterns.json, edges.json,
/// graph.json, graph.dot, rules.json and run_manifest.json.
std::map<std::string, std::string> render_artifacts(const PipelineConfig& config, const AnalysisResult& result);

/// Manifest for a run that stopped on an infrastructure error.
std::string render_failure_manifest(const PipelineConfig& config, const Error& error);

struct RunOutcome {
    int exit_code = 0;
    std::string message;
};

/// analyze + write artifacts into config.paths.output with a ModelGateway
/// built from the config. Never throws; failures become exit codes and a
/// manifest describing the error.
RunOutcome run_pipeline(const PipelineConfig& config, const std::vector<std::string>& report_paths);

/// Same, with a caller-provided gateway (tests, embedding hosts).
RunOutcome run_pipeline(const PipelineConfig& config, const std::vector<std::string>& report_paths,
                        gateway::Gateway& gw);

}  // namespace ctiforge::pipeline
