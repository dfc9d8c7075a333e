#include "ctiforge/pipeline.hpp"

#include "ctiforge/ingest.hpp"
#include "ctiforge/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <set>
#include <thread>

namespace ctiforge::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;
using extraction::IocRecord;

namespace {

/// Runs fn(0..n-1) on up to `width` threads. The first exception by index is
/// rethrown once every task has finished.
template <typename Fn>
void parallel_for(std::size_t n, int width, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> threads;
        const std::size_t extra = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(width, 1))) - (n > 0 ? 1 : 0);
        for (std::size_t t = 0; t < extra; ++t) threads.emplace_back(worker);
        worker();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::string resolve(const std::string& base_dir, const std::string& p) {
    if (p.empty()) return p;
    const fs::path path(p);
    return (path.is_absolute() ? path : fs::path(base_dir) / path).lexically_normal().string();
}

json ref_json(const IocRef& r) {
    return json{{"ioc_type", std::string(to_string(r.type))}, {"canonical", r.canonical}};
}

json evidence_json(const std::optional<extraction::Evidence>& e) {
    if (!e) return nullptr;
    json j{{"method", e->method}, {"detail", e->detail}};
    j["kind"] = e->kind ? json(std::string(kb::to_string(*e->kind))) : json(nullptr);
    j["score"] = e->score ? json(*e->score) : json(nullptr);
    return j;
}

}  // namespace

// ============================================================================
// Configuration
// ============================================================================

PipelineConfig PipelineConfig::from_json(std::string_view json_text, const std::string& base_dir) {
    static const std::set<std::string> kTopKeys{
        "runs", "vote_threshold", "similarity_threshold", "extraction_temperature", "max_attempts",
        "max_reidentify", "mode", "concurrency", "target_sentences", "seed", "model", "paths"};
    static const std::set<std::string> kModelKeys{"name", "embedding_model", "max_in_flight",
                                                  "requests_per_second", "retry_base_ms", "timeout_s"};
    static const std::set<std::string> kPathKeys{"store", "seed_knowledge", "fixtures", "prompts", "data", "output"};

    PipelineConfig c;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
        const auto check_keys = [](const json& obj, const std::set<std::string>& allowed, const std::string& where) {
            for (const auto& [key, value] : obj.items()) {
                if (allowed.count(key) == 0) throw Error(ErrorCode::ConfigError, "unknown config key '" + where + key + "'");
            }
        };
        check_keys(j, kTopKeys, "");

        c.runs = j.value("runs", c.runs);
        c.vote_threshold = j.value("vote_threshold", c.vote_threshold);
        c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
        c.extraction_temperature = j.value("extraction_temperature", c.extraction_temperature);
        c.max_attempts = j.value("max_attempts", c.max_attempts);
        c.max_reidentify = j.value("max_reidentify", c.max_reidentify);
        c.concurrency = j.value("concurrency", c.concurrency);
        c.target_sentences = j.value("target_sentences", c.target_sentences);
        c.seed = j.value("seed", c.seed);
        if (j.contains("mode")) {
            const auto mode = gateway::parse_mode(j["mode"].get<std::string>());
            if (!mode) throw Error(ErrorCode::ConfigError, "mode must be live, replay or record");
            c.mode = *mode;
        }
        if (j.contains("model")) {
            const json& m = j["model"];
            check_keys(m, kModelKeys, "model.");
            c.model.name = m.value("name", c.model.name);
            c.model.embedding_model = m.value("embedding_model", c.model.embedding_model);
            c.model.max_in_flight = m.value("max_in_flight", c.model.max_in_flight);
            c.model.requests_per_second = m.value("requests_per_second", c.model.requests_per_second);
            c.model.retry_base_ms = m.value("retry_base_ms", c.model.retry_base_ms);
            c.model.timeout_s = m.value("timeout_s", c.model.timeout_s);
        }

        const json paths = j.value("paths", json::object());
        check_keys(paths, kPathKeys, "paths.");
        const auto path_of = [&](const char* key, const char* fallback) {
            return resolve(base_dir, paths.value(key, std::string(fallback)));
        };
        c.paths.store = path_of("store", "");
        c.paths.seed_knowledge = path_of("seed_knowledge", "data/knowledge.jsonl");
        c.paths.fixtures = path_of("fixtures", "fixtures");
        c.paths.prompts = path_of("prompts", "prompts");
        c.paths.data = path_of("data", "data");
        c.paths.output = path_of("output", "out");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::string bytes;
    try {
        bytes = text::read_file(path);
    } catch (const Error&) {
        throw Error(ErrorCode::ConfigError, "cannot read config file: " + path);
    }
    const fs::path base = fs::absolute(path).parent_path();
    return from_json(bytes, base.string());
}

std::string PipelineConfig::to_json() const {
    const json j{
        {"runs", runs},
        {"vote_threshold", vote_threshold},
        {"similarity_threshold", similarity_threshold},
        {"extraction_temperature", extraction_temperature},
        {"max_attempts", max_attempts},
        {"max_reidentify", max_reidentify},
        {"mode", std::string(gateway::to_string(mode))},
        {"target_sentences", target_sentences},
        {"seed", seed},
        {"model", {{"name", model.name}, {"embedding_model", model.embedding_model}}},
    };
    return j.dump();
}

void PipelineConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
    if (runs < 1) fail("runs must be >= 1");
    if (vote_threshold < 1 || vote_threshold > runs) fail("vote_threshold must be in [1, runs]");
    if (!(similarity_threshold > 0.0 && similarity_threshold <= 1.0)) fail("similarity_threshold must be in (0, 1]");
    if (!(extraction_temperature >= 0.0 && extraction_temperature <= 2.0)) fail("extraction_temperature must be in [0, 2]");
    if (max_attempts < 1) fail("max_attempts must be >= 1");
    if (max_reidentify < 0) fail("max_reidentify must be >= 0");
    if (concurrency < 1 || concurrency > 256) fail("concurrency must be in [1, 256]");
    if (target_sentences < 3 || target_sentences > 4) fail("target_sentences must be 3 or 4");
    if (model.max_in_flight < 1) fail("model.max_in_flight must be >= 1");
    if (!(model.requests_per_second > 0.0)) fail("model.requests_per_second must be > 0");
    if (model.retry_base_ms < 0 || model.timeout_s < 1) fail("model retry/timeout settings out of range");
    if (paths.prompts.empty() || paths.data.empty()) fail("paths.prompts and paths.data are required");
    if (paths.store.empty() && paths.seed_knowledge.empty()) fail("either paths.store or paths.seed_knowledge is required");
    if (mode != gateway::Mode::Live) {
        if (paths.fixtures.empty()) fail("replay and record modes need paths.fixtures");
        if (mode == gateway::Mode::Replay && !fs::is_directory(paths.fixtures)) {
            fail("fixtures directory not found: " + paths.fixtures);
        }
    }
}

gateway::GatewayConfig PipelineConfig::gateway_config() const {
    gateway::GatewayConfig g;
    g.mode = mode;
    g.fixtures_dir = paths.fixtures;
    g.model = model.name;
    g.embedding_model = model.embedding_model;
    g.max_in_flight = model.max_in_flight;
    g.requests_per_second = model.requests_per_second;
    g.retry_base = std::chrono::milliseconds(model.retry_base_ms);
    g.timeout = std::chrono::seconds(model.timeout_s);
    g.apply_environment();
    return g;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::InvalidArgument:
        case ErrorCode::FileNotFound:
            return 2;
        case ErrorCode::FixtureMiss:
            return 3;
        case ErrorCode::ProviderError:
            return 4;
        default:
            return 1;
    }
}

DataFiles DataFiles::load(const std::string& data_dir) {
    const fs::path dir(data_dir);
    return DataFiles{
        relations::VerbTable::load((dir / "verb_map.json").string()),
        relations::AliasVerbs::load((dir / "alias_verbs.json").string()),
        relations::CompatibilityMatrix::load((dir / "compat_matrix.json").string()),
        graph::RuleTemplates::load((dir / "rule_templates.json").string()),
    };
}

kb::VectorStore open_store(const PipelineConfig& config, gateway::Gateway& gw) {
    if (!config.paths.store.empty() && fs::exists(config.paths.store)) {
        return kb::VectorStore::load(config.paths.store);
    }
    spdlog::info("knowledge store not found; embedding seed file {}", config.paths.seed_knowledge);
    return kb::build_store(kb::load_seed(config.paths.seed_knowledge), gw);
}

// ============================================================================
// Analysis
// ============================================================================

namespace {

struct ReportOutput {
    std::string report_id;
    std::vector<IocRecord> records;
    std::vector<relations::RelationEdge> edges;
    Diagnostics diagnostics;
};

struct Context {
    const PipelineConfig& config;
    gateway::Gateway& gw;
    const gateway::PromptLibrary& prompts;
    const kb::VectorStore& store;
    const DataFiles& data;
};

std::string paragraph_subject(const ingest::Paragraph& p) {
    return p.report_id + "#" + std::to_string(p.index);
}

ReportOutput process_report(const Context& ctx, const ingest::CtiReport& report) {
    ReportOutput out;
    out.report_id = report.source_id;
    const auto paragraphs = ingest::segment_paragraphs(report, ctx.config.target_sentences);

    // Steps 1-3: extraction, voting, knowledge filtering.
    const extraction::FilterOptions filter{ctx.config.similarity_threshold};
    for (const auto& p : paragraphs) {
        const auto candidates = extraction::extract_candidates(p, ctx.config.runs, ctx.gw, ctx.prompts,
                                                               out.diagnostics, ctx.config.extraction_temperature);
        const auto tallies = extraction::majority_vote(candidates, ctx.config.runs, ctx.config.vote_threshold);
        std::set<IocRef> voted;
        for (const auto& t : tallies) voted.insert(t.key);
        for (const auto& c : candidates) {
            const IocRef key{c.ioc_type, extraction::normalize_candidate(c)};
            if (voted.insert(key).second) {
                out.diagnostics.push_back({"majority_vote", paragraph_subject(p),
                                           "below threshold: " + std::string(to_string(c.ioc_type)) + " '" +
                                               c.surface + "'"});
            }
        }
        for (const auto& t : tallies) {
            IocRecord r = extraction::kb_filter(t, ctx.store, ctx.gw, filter);
            if (!r.kept()) {
                out.diagnostics.push_back({"kb_filter", std::string(to_string(r.ioc_type)) + " '" + r.surface + "'",
                                           "rejected: " + r.reason});
            }
            out.records.push_back(std::move(r));
        }
    }

    // Steps 5-7: relationships over the report's retained IOCs.
    const relations::IocIndex index(out.records);
    for (const auto& p : paragraphs) {
        auto pairs = relations::extract_pairs(p, ctx.gw, ctx.prompts, out.diagnostics);
        pairs = relations::resolve_pronouns(pairs, index, ctx.data.alias_verbs);
        pairs = relations::filter_pairs(pairs, index, &out.diagnostics);
        for (auto& edge : relations::map_edges(pairs, index, ctx.data.verbs, out.diagnostics)) {
            const auto surface_of = [&](const IocRef& ref) {
                for (const auto& r : out.records) {
                    if (r.kept() && r.ref() == ref) return r.surface;
                }
                return ref.canonical;
            };
            const relations::VerifyContext vc{p.text, surface_of(edge.src), surface_of(edge.dst)};
            out.edges.push_back(relations::verify_edge(std::move(edge), ctx.data.matrix, ctx.data.verbs, ctx.gw,
                                                       ctx.prompts, vc, ctx.config.max_reidentify, out.diagnostics));
        }
    }
    return out;
}

regex::RegexPattern synthesize_one(const Context& ctx, const IocRecord& record, Diagnostics& diagnostics) {
    if (!is_structured(record.ioc_type)) return regex::synthesize_literal(record);

    const auto substrings = regex::split_ioc(record);
    const auto spans = regex::classify_spans(substrings, ctx.store, ctx.gw,
                                             regex::ClassifyOptions{ctx.config.similarity_threshold});
    regex::SynthesisOptions options;
    options.max_attempts = ctx.config.max_attempts;
    options.mutation.seed = ctx.config.seed;
    regex::RegexPattern p = regex::synthesize_regex(record, spans, ctx.gw, ctx.prompts, options);
    const std::string subject = std::string(to_string(record.ioc_type)) + " '" + record.surface + "'";
    if (p.origin == regex::Origin::Fallback) {
        diagnostics.push_back({"regex_synthesis", subject,
                               "model patterns failed validation after " + std::to_string(p.attempts) +
                                   " attempts; deterministic pattern used"});
    }
    if (!p.validation.verdict) {
        diagnostics.push_back({"regex_synthesis", subject, "final pattern failed validation: " +
                                                               p.validation.first_failure(record.surface)});
    }
    return p;
}

bool edge_less(const relations::RelationEdge& a, const relations::RelationEdge& b) {
    return std::tie(a.paragraph_ref, a.src, a.dst, a.category, a.raw_verb, a.verified, a.reidentify_count) <
           std::tie(b.paragraph_ref, b.src, b.dst, b.category, b.raw_verb, b.verified, b.reidentify_count);
}

}  // namespace

AnalysisResult analyze(const PipelineConfig& config, const std::vector<std::string>& report_paths,
                       gateway::Gateway& gw) {
    config.validate();
    if (report_paths.empty()) throw Error(ErrorCode::InvalidArgument, "no reports given");

    const auto prompts = gateway::PromptLibrary::load(config.paths.prompts);
    const auto data = DataFiles::load(config.paths.data);
    const kb::VectorStore store = open_store(config, gw);
    const Context ctx{config, gw, prompts, store, data};

    // Step 0: ingest, sequentially so that input errors surface in order.
    std::vector<ingest::CtiReport> reports;
    std::set<std::string> ids;
    AnalysisResult result;
    for (const auto& path : report_paths) {
        auto report = ingest::load_report(path, ingest::format_from_path(path));
        if (!ids.insert(report.source_id).second) {
            throw Error(ErrorCode::InvalidArgument, "two reports share the id '" + report.source_id + "'");
        }
        result.report_ids.push_back(report.source_id);
        reports.push_back(std::move(report));
    }

    std::vector<ReportOutput> outputs(reports.size());
    parallel_for(reports.size(), config.concurrency,
                 [&](std::size_t i) { outputs[i] = process_report(ctx, reports[i]); });

    for (auto& o : outputs) {
        result.iocs.insert(result.iocs.end(), o.records.begin(), o.records.end());
        result.edges.insert(result.edges.end(), o.edges.begin(), o.edges.end());
        result.diagnostics.insert(result.diagnostics.end(), o.diagnostics.begin(), o.diagnostics.end());
    }

    // Step 4: one pattern per distinct retained IOC, built from its earliest
    // occurrence (report order, then paragraph).
    std::vector<const IocRecord*> unique;
    {
        std::set<IocRef> seen;
        for (const auto& r : result.iocs) {
            if (r.kept() && seen.insert(r.ref()).second) unique.push_back(&r);
        }
    }
    std::vector<regex::RegexPattern> patterns(unique.size());
    std::vector<Diagnostics> synth_diags(unique.size());
    parallel_for(unique.size(), config.concurrency,
                 [&](std::size_t i) { patterns[i] = synthesize_one(ctx, *unique[i], synth_diags[i]); });
    for (auto& d : synth_diags) result.diagnostics.insert(result.diagnostics.end(), d.begin(), d.end());

    result.patterns_before_dedup = patterns.size();
    result.patterns = regex::dedup_patterns(patterns);

    // Step 8: graph and rules.
    std::sort(result.edges.begin(), result.edges.end(), edge_less);
    result.graph = graph::build_graph(result.patterns, result.edges, &result.diagnostics);
    result.rules = graph::emit_rules(result.graph, data.rule_templates);

    std::sort(result.diagnostics.begin(), result.diagnostics.end());
    return result;
}

// ============================================================================
// Artifacts
// ============================================================================

std::map<std::string, std::string> render_artifacts(const PipelineConfig& config, const AnalysisResult& result) {
    std::map<std::string, std::string> files;

    json iocs = json::array();
    for (const auto& r : result.iocs) {
        iocs.push_back({{"canonical", r.canonical},
                        {"surface", r.surface},
                        {"ioc_type", std::string(to_string(r.ioc_type))},
                        {"report_id", r.paragraph_ref.report_id},
                        {"paragraph", r.paragraph_ref.index},
                        {"votes", r.votes},
                        {"runs_total", r.runs_total},
                        {"status", std::string(extraction::to_string(r.status))},
                        {"reason", r.reason},
                        {"evidence", evidence_json(r.evidence)}});
    }
    files["iocs.json"] = iocs.dump(2) + "\n";

    json patterns = json::array();
    for (const auto& p : result.patterns) {
        json spans = json::array();
        for (const auto& s : p.spans) {
            spans.push_back({{"text", s.text},
                             {"start", s.start},
                             {"end", s.end},
                             {"role", std::string(regex::to_string(s.role))},
                             {"context", std::string(regex::to_string(s.context))},
                             {"evidence", evidence_json(s.evidence)}});
        }
        json merged = json::array();
        for (const auto& r : p.merged_ioc_refs) merged.push_back(ref_json(r));
        const auto count_true = [](const std::vector<std::pair<std::string, bool>>& v) {
            return std::count_if(v.begin(), v.end(), [](const auto& x) { return x.second; });
        };
        patterns.push_back({{"node_id", graph::node_id_for(p.ioc_type, p.pattern)},
                            {"pattern", p.pattern},
                            {"dialect", std::string(regex::kDialect)},
                            {"ioc_type", std::string(to_string(p.ioc_type))},
                            {"ioc_ref", ref_json(p.ioc_ref)},
                            {"source", p.source},
                            {"signature", p.signature},
                            {"spans", spans},
                            {"origin", std::string(regex::to_string(p.origin))},
                            {"attempts", p.attempts},
                            {"merged_ioc_refs", merged},
                            {"validation",
                             {{"compiled", p.validation.compiled},
                              {"matches_original", p.validation.matches_original},
                              {"mutants_total", p.validation.matches_mutants.size()},
                              {"mutants_matched", count_true(p.validation.matches_mutants)},
                              {"negatives_total", p.validation.rejects_negatives.size()},
                              {"negatives_rejected", count_true(p.validation.rejects_negatives)},
                              {"verdict", p.validation.verdict}}}});
    }
    files["patterns.json"] = patterns.dump(2) + "\n";

    json edges = json::array();
    for (const auto& e : result.edges) {
        edges.push_back({{"src", ref_json(e.src)},
                         {"dst", ref_json(e.dst)},
                         {"category", std::string(relations::to_string(e.category))},
                         {"raw_verb", e.raw_verb},
                         {"report_id", e.paragraph_ref.report_id},
                         {"paragraph", e.paragraph_ref.index},
                         {"verified", e.verified},
                         {"reidentify_count", e.reidentify_count}});
    }
    files["edges.json"] = edges.dump(2) + "\n";

    files["graph.json"] = graph::export_graph(result.graph, graph::ExportFormat::Json);
    files["graph.dot"] = graph::export_graph(result.graph, graph::ExportFormat::Dot);
    files["rules.json"] = graph::rules_to_json(result.rules);

    const auto count_status = [&](extraction::Status s) {
        return std::count_if(result.iocs.begin(), result.iocs.end(), [s](const IocRecord& r) { return r.status == s; });
    };
    json diagnostics = json::array();
    for (const auto& d : result.diagnostics) {
        diagnostics.push_back({{"stage", d.stage}, {"subject", d.subject}, {"message", d.message}});
    }
    const json manifest{
        {"status", "ok"},
        {"config", json::parse(config.to_json())},
        {"reports", result.report_ids},
        {"counts",
         {{"iocs_retained", count_status(extraction::Status::Retained)},
          {"iocs_adjusted", count_status(extraction::Status::Adjusted)},
          {"iocs_rejected", count_status(extraction::Status::Rejected)},
          {"patterns_before_dedup", result.patterns_before_dedup},
          {"patterns", result.patterns.size()},
          {"edges", result.edges.size()},
          {"edges_verified", std::count_if(result.edges.begin(), result.edges.end(),
                                           [](const relations::RelationEdge& e) { return e.verified; })},
          {"graph_nodes", result.graph.nodes.size()},
          {"graph_edges", result.graph.edges.size()},
          {"rules", result.rules.size()}}},
        {"diagnostics", diagnostics},
    };
    files["run_manifest.json"] = manifest.dump(2) + "\n";
    return files;
}

std::string render_failure_manifest(const PipelineConfig& config, const Error& error) {
    const json manifest{
        {"status", "error"},
        {"config", json::parse(config.to_json())},
        {"error", {{"code", to_string(error.code())}, {"message", error.what()}}},
    };
    return manifest.dump(2) + "\n";
}

RunOutcome run_pipeline(const PipelineConfig& config, const std::vector<std::string>& report_paths,
                        gateway::Gateway& gw) {
    const auto write_failure = [&](const Error& e) {
        spdlog::error("{}: {}", to_string(e.code()), e.what());
        try {
            text::write_file((fs::path(config.paths.output) / "run_manifest.json").string(),
                             render_failure_manifest(config, e));
        } catch (const std::exception& w) {
            spdlog::error("could not write failure manifest: {}", w.what());
        }
        return RunOutcome{exit_code_for(e.code()), e.what()};
    };

    try {
        const AnalysisResult result = analyze(config, report_paths, gw);
        for (const auto& [name, bytes] : render_artifacts(config, result)) {
            text::write_file((fs::path(config.paths.output) / name).string(), bytes);
        }
        return RunOutcome{0, ""};
    } catch (const Error& e) {
        return write_failure(e);
    } catch (const std::exception& e) {
        return write_failure(Error(ErrorCode::IoError, e.what()));
    }
}

RunOutcome run_pipeline(const PipelineConfig& config, const std::vector<std::string>& report_paths) {
    try {
        config.validate();
        gateway::ModelGateway gw(config.gateway_config());
        return run_pipeline(config, report_paths, gw);
    } catch (const Error& e) {
        spdlog::error("{}: {}", to_string(e.code()), e.what());
        return RunOutcome{exit_code_for(e.code()), e.what()};
    }
}

}  // namespace ctiforge::pipeline
