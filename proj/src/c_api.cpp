#include "ctiforge/ctiforge.h"

#include "ctiforge/error.hpp"
#include "ctiforge/ingest.hpp"
#include "ctiforge/knowledge_base.hpp"
#include "ctiforge/pipeline.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

struct ctf_config {
    ctiforge::pipeline::PipelineConfig config;
    std::string base_dir;
};

namespace {

using ctiforge::Error;
using ctiforge::ErrorCode;

thread_local std::string g_last_error;

ctf_status status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
            return CTF_ERR_CONFIG;
        case ErrorCode::FixtureMiss:
            return CTF_ERR_FIXTURE_MISS;
        case ErrorCode::ProviderError:
            return CTF_ERR_PROVIDER;
        case ErrorCode::InvalidArgument:
        case ErrorCode::EmptyText:
        case ErrorCode::UnsupportedType:
            return CTF_ERR_INVALID_ARG;
        case ErrorCode::FileNotFound:
        case ErrorCode::IoError:
        case ErrorCode::EmptyDocument:
        case ErrorCode::ParseError:
            return CTF_ERR_IO;
        case ErrorCode::DimensionMismatch:
        case ErrorCode::ZeroVector:
        case ErrorCode::EmptyStore:
            return CTF_ERR_INTERNAL;
    }
    return CTF_ERR_INTERNAL;
}

ctf_status fail(ctf_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

/// Runs `body` and converts any exception into a status. No exception
/// crosses the C boundary.
template <typename Fn>
ctf_status guarded(Fn&& body) {
    try {
        g_last_error.clear();
        return body();
    } catch (const Error& e) {
        return fail(status_for(e.code()), std::string(ctiforge::to_string(e.code())) + ": " + e.what());
    } catch (const std::bad_alloc&) {
        return fail(CTF_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(CTF_ERR_INTERNAL, e.what());
    }
}

std::string resolve(const ctf_config* c, const char* value) {
    const std::filesystem::path p(value);
    return p.is_absolute() || p.empty() ? p.string() : (std::filesystem::path(c->base_dir) / p).lexically_normal().string();
}

ctf_status status_from_exit(const ctiforge::pipeline::RunOutcome& outcome) {
    switch (outcome.exit_code) {
        case 0:
            return CTF_OK;
        case 2:
            return fail(CTF_ERR_CONFIG, outcome.message);
        case 3:
            return fail(CTF_ERR_FIXTURE_MISS, outcome.message);
        case 4:
            return fail(CTF_ERR_PROVIDER, outcome.message);
        default:
            return fail(CTF_ERR_IO, outcome.message);
    }
}

}  // namespace

extern "C" {

const char* ctf_version(void) { return CTIFORGE_VERSION; }

void ctf_set_log_level(int level) {
    static constexpr spdlog::level::level_enum kLevels[] = {spdlog::level::err, spdlog::level::warn,
                                                            spdlog::level::info, spdlog::level::debug};
    spdlog::set_level(kLevels[level < 0 ? 0 : (level > 3 ? 3 : level)]);
}

const char* ctf_last_error(void) { return g_last_error.c_str(); }

ctf_status ctf_config_new(const char* base_dir, ctf_config** out) {
    if (out == nullptr) return fail(CTF_ERR_INVALID_ARG, "out must not be NULL");
    return guarded([&] {
        const std::string base = base_dir != nullptr ? base_dir : std::filesystem::current_path().string();
        auto cfg = ctiforge::pipeline::PipelineConfig::from_json("{}", base);
        *out = new ctf_config{std::move(cfg), base};
        return CTF_OK;
    });
}

ctf_status ctf_config_load(const char* path, ctf_config** out) {
    if (path == nullptr || out == nullptr) return fail(CTF_ERR_INVALID_ARG, "path and out must not be NULL");
    return guarded([&] {
        auto cfg = ctiforge::pipeline::PipelineConfig::load(path);
        *out = new ctf_config{std::move(cfg), std::filesystem::absolute(path).parent_path().string()};
        return CTF_OK;
    });
}

void ctf_config_free(ctf_config* config) { delete config; }

ctf_status ctf_config_set_int(ctf_config* config, const char* key, long long value) {
    if (config == nullptr || key == nullptr) return fail(CTF_ERR_INVALID_ARG, "config and key must not be NULL");
    auto& c = config->config;
    const std::string k(key);
    const int v = static_cast<int>(value);
    if (k == "runs") c.runs = v;
    else if (k == "vote_threshold") c.vote_threshold = v;
    else if (k == "max_attempts") c.max_attempts = v;
    else if (k == "max_reidentify") c.max_reidentify = v;
    else if (k == "concurrency") c.concurrency = v;
    else if (k == "target_sentences") c.target_sentences = v;
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(value);
    else return fail(CTF_ERR_INVALID_ARG, "unknown integer key: " + k);
    return CTF_OK;
}

ctf_status ctf_config_set_double(ctf_config* config, const char* key, double value) {
    if (config == nullptr || key == nullptr) return fail(CTF_ERR_INVALID_ARG, "config and key must not be NULL");
    auto& c = config->config;
    const std::string k(key);
    if (k == "similarity_threshold") c.similarity_threshold = value;
    else if (k == "extraction_temperature") c.extraction_temperature = value;
    else return fail(CTF_ERR_INVALID_ARG, "unknown double key: " + k);
    return CTF_OK;
}

ctf_status ctf_config_set_string(ctf_config* config, const char* key, const char* value) {
    if (config == nullptr || key == nullptr || value == nullptr) {
        return fail(CTF_ERR_INVALID_ARG, "config, key and value must not be NULL");
    }
    auto& c = config->config;
    const std::string k(key);
    if (k == "mode") {
        const auto mode = ctiforge::gateway::parse_mode(value);
        if (!mode) return fail(CTF_ERR_CONFIG, std::string("mode must be live, replay or record, got ") + value);
        c.mode = *mode;
    } else if (k == "store") c.paths.store = resolve(config, value);
    else if (k == "seed_knowledge") c.paths.seed_knowledge = resolve(config, value);
    else if (k == "fixtures") c.paths.fixtures = resolve(config, value);
    else if (k == "prompts") c.paths.prompts = resolve(config, value);
    else if (k == "data") c.paths.data = resolve(config, value);
    else if (k == "output") c.paths.output = resolve(config, value);
    else return fail(CTF_ERR_INVALID_ARG, "unknown string key: " + k);
    return CTF_OK;
}

ctf_status ctf_analyze(const ctf_config* config, const char* const* reports, size_t count, const char* out_dir) {
    if (config == nullptr) return fail(CTF_ERR_INVALID_ARG, "config must not be NULL");
    if (count > 0 && reports == nullptr) return fail(CTF_ERR_INVALID_ARG, "reports must not be NULL");
    return guarded([&] {
        auto cfg = config->config;
        if (out_dir != nullptr) cfg.paths.output = std::filesystem::absolute(out_dir).string();
        std::vector<std::string> paths;
        for (size_t i = 0; i < count; ++i) {
            if (reports[i] == nullptr) return fail(CTF_ERR_INVALID_ARG, "report path is NULL");
            paths.emplace_back(reports[i]);
        }
        return status_from_exit(ctiforge::pipeline::run_pipeline(cfg, paths));
    });
}

ctf_status ctf_kb_build(const ctf_config* config, const char* seed_path, const char* out_path) {
    if (config == nullptr || out_path == nullptr) return fail(CTF_ERR_INVALID_ARG, "config and out_path must not be NULL");
    return guarded([&] {
        const auto& cfg = config->config;
        if (cfg.mode != ctiforge::gateway::Mode::Live && cfg.paths.fixtures.empty()) {
            return fail(CTF_ERR_CONFIG, "replay and record modes need a fixtures directory");
        }
        const std::string seed = seed_path != nullptr ? std::string(seed_path) : cfg.paths.seed_knowledge;
        ctiforge::gateway::ModelGateway gw(cfg.gateway_config());
        const auto store = ctiforge::kb::build_store(ctiforge::kb::load_seed(seed), gw);
        store.save(out_path);
        return CTF_OK;
    });
}

ctf_status ctf_segment(const char* report_path, int target_sentences, char** out_jsonl) {
    if (report_path == nullptr || out_jsonl == nullptr) {
        return fail(CTF_ERR_INVALID_ARG, "report_path and out_jsonl must not be NULL");
    }
    *out_jsonl = nullptr;
    return guarded([&] {
        const auto report = ctiforge::ingest::load_report(report_path, ctiforge::ingest::format_from_path(report_path));
        std::string lines;
        for (const auto& p : ctiforge::ingest::segment_paragraphs(report, target_sentences)) {
            const nlohmann::json j{{"report_id", p.report_id},
                                   {"index", p.index},
                                   {"sentence_count", p.sentence_count},
                                   {"text", p.text}};
            lines += j.dump() + "\n";
        }
        char* buf = static_cast<char*>(std::malloc(lines.size() + 1));
        if (buf == nullptr) return fail(CTF_ERR_INTERNAL, "out of memory");
        std::memcpy(buf, lines.c_str(), lines.size() + 1);
        *out_jsonl = buf;
        return CTF_OK;
    });
}

void ctf_string_free(char* s) { std::free(s); }

}  // extern "C"
