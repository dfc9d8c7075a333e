// ctiforge command line: analyze reports, build the knowledge store, or
// inspect paragraph segmentation. Talks to the library through its C API.

#include "ctiforge/ctiforge.h"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

int exit_code(ctf_status status) {
    switch (status) {
        case CTF_OK:
            return 0;
        case CTF_ERR_CONFIG:
        case CTF_ERR_INVALID_ARG:
            return 2;
        case CTF_ERR_FIXTURE_MISS:
            return 3;
        case CTF_ERR_PROVIDER:
            return 4;
        default:
            return 1;
    }
}

int report_failure(ctf_status status) {
    std::cerr << "ctiforge: " << ctf_last_error() << "\n";
    return exit_code(status);
}

/// Owns a ctf_config for the duration of a command.
struct ConfigHandle {
    ctf_config* ptr = nullptr;
    ~ConfigHandle() { ctf_config_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ctiforge: CTI reports to IOCs, regexes, relationship graphs and SIEM rule drafts"};
    app.require_subcommand(1);
    int verbosity = 2;
    app.add_option("-v,--verbosity", verbosity, "0 errors, 1 warnings, 2 info, 3 debug")->check(CLI::Range(0, 3));
    app.set_version_flag("--version", std::string(ctf_version()));

    // ---- analyze ----------------------------------------------------------
    auto* analyze = app.add_subcommand("analyze", "Run the full pipeline over one or more reports");
    std::vector<std::string> reports;
    std::string config_path;
    std::string out_dir;
    std::optional<std::string> mode;
    std::optional<int> runs;
    std::optional<int> vote_threshold;
    std::optional<double> sim_threshold;
    std::optional<int> concurrency;
    analyze->add_option("reports", reports, "Report files (.txt, .md, .html)")->required()->check(CLI::ExistingFile);
    analyze->add_option("--config", config_path, "Pipeline config JSON")->required();
    analyze->add_option("--out", out_dir, "Artifact directory (defaults to paths.output)");
    analyze->add_option("--mode", mode, "Model gateway mode")->check(CLI::IsMember({"live", "replay", "record"}));
    analyze->add_option("--runs", runs, "Extraction runs per paragraph");
    analyze->add_option("--vote-threshold", vote_threshold, "Runs an IOC must appear in");
    analyze->add_option("--sim-threshold", sim_threshold, "Knowledge-store similarity threshold");
    analyze->add_option("--concurrency", concurrency, "Reports and IOCs processed in parallel");

    // ---- kb build ---------------------------------------------------------
    auto* kb = app.add_subcommand("kb", "Knowledge store commands");
    kb->require_subcommand(1);
    auto* kb_build = kb->add_subcommand("build", "Embed a seed knowledge file into a store");
    std::string seed_path;
    std::string store_out;
    std::string kb_config;
    std::string kb_mode = "live";
    std::string kb_fixtures;
    kb_build->add_option("--seed", seed_path, "knowledge.jsonl")->required()->check(CLI::ExistingFile);
    kb_build->add_option("--out", store_out, "Output store file")->required();
    kb_build->add_option("--config", kb_config, "Pipeline config JSON (model and fixture settings)");
    kb_build->add_option("--mode", kb_mode, "Model gateway mode")->check(CLI::IsMember({"live", "replay", "record"}));
    kb_build->add_option("--fixtures", kb_fixtures, "Fixture directory for replay/record");

    // ---- segment ----------------------------------------------------------
    auto* segment = app.add_subcommand("segment", "Print a report's paragraphs as JSON lines");
    std::string segment_report;
    int target_sentences = 4;
    segment->add_option("report", segment_report, "Report file")->required()->check(CLI::ExistingFile);
    segment->add_option("--target", target_sentences, "Sentences per paragraph (3 or 4)")->check(CLI::Range(3, 4));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    ctf_set_log_level(verbosity);

    if (*analyze) {
        ConfigHandle cfg;
        if (auto st = ctf_config_load(config_path.c_str(), &cfg.ptr); st != CTF_OK) return report_failure(st);
        ctf_status st = CTF_OK;
        if (mode && st == CTF_OK) st = ctf_config_set_string(cfg.ptr, "mode", mode->c_str());
        if (runs && st == CTF_OK) st = ctf_config_set_int(cfg.ptr, "runs", *runs);
        if (vote_threshold && st == CTF_OK) st = ctf_config_set_int(cfg.ptr, "vote_threshold", *vote_threshold);
        if (sim_threshold && st == CTF_OK) st = ctf_config_set_double(cfg.ptr, "similarity_threshold", *sim_threshold);
        if (concurrency && st == CTF_OK) st = ctf_config_set_int(cfg.ptr, "concurrency", *concurrency);
        if (st != CTF_OK) return report_failure(st);

        std::vector<const char*> paths;
        for (const auto& r : reports) paths.push_back(r.c_str());
        st = ctf_analyze(cfg.ptr, paths.data(), paths.size(), out_dir.empty() ? nullptr : out_dir.c_str());
        return st == CTF_OK ? 0 : report_failure(st);
    }

    if (*kb_build) {
        ConfigHandle cfg;
        ctf_status st = kb_config.empty() ? ctf_config_new(nullptr, &cfg.ptr) : ctf_config_load(kb_config.c_str(), &cfg.ptr);
        if (st != CTF_OK) return report_failure(st);
        if (kb_config.empty() || kb_build->count("--mode") > 0) st = ctf_config_set_string(cfg.ptr, "mode", kb_mode.c_str());
        if (st == CTF_OK && !kb_fixtures.empty()) {
            const std::string abs = std::filesystem::absolute(kb_fixtures).string();
            st = ctf_config_set_string(cfg.ptr, "fixtures", abs.c_str());
        }
        if (st == CTF_OK) st = ctf_kb_build(cfg.ptr, seed_path.c_str(), store_out.c_str());
        return st == CTF_OK ? 0 : report_failure(st);
    }

    if (*segment) {
        char* jsonl = nullptr;
        const ctf_status st = ctf_segment(segment_report.c_str(), target_sentences, &jsonl);
        if (st != CTF_OK) return report_failure(st);
        std::fputs(jsonl, stdout);
        ctf_string_free(jsonl);
        return 0;
    }
    return 2;
}
