#include <httplib.h>

#include "ctiforge/model_gateway.hpp"

#include "ctiforge/error.hpp"
#include "ctiforge/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <semaphore>
#include <thread>

namespace ctiforge::gateway {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<TaskTag, std::string_view>, 5> kTaskNames{{
    {TaskTag::ExtractIocs, "extract_iocs"},
    {TaskTag::GenerateRegex, "generate_regex"},
    {TaskTag::RefineRegex, "refine_regex"},
    {TaskTag::ExtractPairs, "extract_pairs"},
    {TaskTag::ReidentifyRelation, "reidentify_relation"},
}};

constexpr char kSeparator = '\x1f';

}  // namespace

std::string_view to_string(TaskTag tag) {
    for (const auto& [t, name] : kTaskNames) {
        if (t == tag) return name;
    }
    return "unknown";
}

std::optional<TaskTag> parse_task_tag(std::string_view text) {
    for (const auto& [t, name] : kTaskNames) {
        if (name == text) return t;
    }
    return std::nullopt;
}

std::string_view to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::Stop: return "stop";
        case FinishReason::Length: return "length";
        case FinishReason::Error: return "error";
    }
    return "error";
}

FinishReason parse_finish_reason(std::string_view text) {
    if (text == "stop") return FinishReason::Stop;
    if (text == "length") return FinishReason::Length;
    return FinishReason::Error;
}

std::optional<Mode> parse_mode(std::string_view text) {
    if (text == "live") return Mode::Live;
    if (text == "replay") return Mode::Replay;
    if (text == "record") return Mode::Record;
    return std::nullopt;
}

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::Live: return "live";
        case Mode::Replay: return "replay";
        case Mode::Record: return "record";
    }
    return "replay";
}

std::string fixture_key(const Prompt& prompt) {
    std::string material;
    material.reserve(prompt.system_text.size() + prompt.user_text.size() + 16);
    material.append(prompt.system_text);
    material.push_back(kSeparator);
    material.append(prompt.user_text);
    material.push_back(kSeparator);
    material.append(std::to_string(prompt.run_index));
    return text::sha256_hex(material);
}

std::string embedding_key(std::string_view text) { return text::sha256_hex(text); }

void GatewayConfig::apply_environment() {
    const auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v == nullptr ? std::string() : std::string(v);
    };
    if (api_base.empty()) api_base = env("MODEL_API_BASE");
    if (embed_api_base.empty()) embed_api_base = env("EMBED_API_BASE");
    if (api_key.empty()) api_key = env("MODEL_API_KEY");
}

// ============================================================================
// Transport
// ============================================================================

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;    // base path without trailing slash
};

Endpoint split_base_url(const std::string& base) {
    const std::size_t scheme_end = base.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "API base must include a scheme: " + base);
    }
    const std::size_t path_start = base.find('/', scheme_end + 3);
    Endpoint ep;
    ep.origin = base.substr(0, path_start);
    ep.path = path_start == std::string::npos ? "" : base.substr(path_start);
    while (!ep.path.empty() && ep.path.back() == '/') ep.path.pop_back();
    return ep;
}

// Token bucket refilled at `rate` tokens per second, capacity max(1, rate).
class RateLimiter {
public:
    explicit RateLimiter(double rate)
        : rate_(rate), capacity_(std::max(1.0, rate)), tokens_(capacity_),
          last_(std::chrono::steady_clock::now()) {}

    void acquire() {
        if (rate_ <= 0.0) return;
        for (;;) {
            std::chrono::duration<double> wait{};
            {
                std::lock_guard lock(mutex_);
                const auto now = std::chrono::steady_clock::now();
                tokens_ = std::min(capacity_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
                last_ = now;
                if (tokens_ >= 1.0) {
                    tokens_ -= 1.0;
                    return;
                }
                wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
            }
            std::this_thread::sleep_for(wait);
        }
    }

private:
    std::mutex mutex_;
    double rate_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
};

}  // namespace

class ModelGateway::Transport {
public:
    explicit Transport(const GatewayConfig& config)
        : config_(config), in_flight_(std::max(1, config.max_in_flight)),
          limiter_(config.requests_per_second) {}

    json post(const std::string& base, const std::string& route, const json& body) {
        if (base.empty()) {
            throw Error(ErrorCode::ConfigError, "no API base configured (MODEL_API_BASE)");
        }
        const Endpoint ep = split_base_url(base);
        const std::string payload = body.dump();
        std::string last_error;

        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1) {
                std::this_thread::sleep_for(config_.retry_base * (1 << (attempt - 2)));
            }
            limiter_.acquire();
            in_flight_.acquire();
            attempts_.fetch_add(1);
            httplib::Result res = [&] {
                httplib::Client client(ep.origin);
                client.set_connection_timeout(config_.timeout);
                client.set_read_timeout(config_.timeout);
                client.set_write_timeout(config_.timeout);
                httplib::Headers headers;
                if (!config_.api_key.empty()) {
                    headers.emplace("Authorization", "Bearer " + config_.api_key);
                }
                return client.Post(ep.path + route, headers, payload, "application/json");
            }();
            in_flight_.release();

            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                spdlog::warn("{} {} attempt {}: {}", ep.origin, route, attempt, last_error);
                continue;
            }
            if (res->status == 200) {
                try {
                    return json::parse(res->body);
                } catch (const json::exception& e) {
                    throw Error(ErrorCode::ProviderError, std::string("malformed provider response: ") + e.what());
                }
            }
            last_error = "HTTP " + std::to_string(res->status) + (res->status == 429 ? " (rate limited)" : "");
            const bool transient = res->status == 429 || res->status >= 500;
            spdlog::warn("{} {} attempt {}: {}", ep.origin, route, attempt, last_error);
            if (!transient) break;
        }
        throw Error(ErrorCode::ProviderError, route + " failed: " + last_error);
    }

    int attempts() const { return attempts_.load(); }

private:
    const GatewayConfig& config_;
    std::counting_semaphore<> in_flight_;
    RateLimiter limiter_;
    std::atomic<int> attempts_{0};
};

// ============================================================================
// ModelGateway
// ============================================================================

ModelGateway::ModelGateway(GatewayConfig config) : config_(std::move(config)) {
    if (config_.mode != Mode::Live && config_.fixtures_dir.empty()) {
        throw Error(ErrorCode::ConfigError, "replay and record modes need a fixtures directory");
    }
    if (config_.mode == Mode::Replay && !fs::is_directory(config_.fixtures_dir)) {
        throw Error(ErrorCode::ConfigError, "fixtures directory not found: " + config_.fixtures_dir);
    }
    if (config_.max_attempts < 1) config_.max_attempts = 1;
    if (config_.embed_api_base.empty()) config_.embed_api_base = config_.api_base;
    if (config_.mode != Mode::Replay) transport_ = std::make_unique<Transport>(config_);
}

ModelGateway::~ModelGateway() = default;

int ModelGateway::http_attempts() const { return transport_ ? transport_->attempts() : 0; }

Completion ModelGateway::complete(const Prompt& prompt) {
    if (config_.mode == Mode::Replay) return replay_completion(prompt);

    json body = {
        {"model", config_.model},
        {"messages", json::array({
            {{"role", "system"}, {"content", prompt.system_text}},
            {{"role", "user"}, {"content", prompt.user_text}},
        })},
        {"temperature", prompt.temperature},
        {"seed", prompt.run_index},
    };
    const json response = transport_->post(config_.api_base, "/chat/completions", body);

    Completion completion;
    try {
        const json& choice = response.at("choices").at(0);
        completion.text = choice.at("message").at("content").get<std::string>();
        completion.finish_reason = parse_finish_reason(choice.value("finish_reason", "stop"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderError, std::string("unexpected completion schema: ") + e.what());
    }
    if (config_.mode == Mode::Record) record_completion(prompt, completion);
    return completion;
}

EmbeddingVector ModelGateway::embed(std::string_view text) {
    if (text.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
    if (config_.mode == Mode::Replay) return replay_embedding(text);

    json body = {{"model", config_.embedding_model}, {"input", std::string(text)}};
    const json response = transport_->post(config_.embed_api_base, "/embeddings", body);

    EmbeddingVector vec;
    try {
        for (const auto& v : response.at("data").at(0).at("embedding")) {
            vec.values.push_back(v.get<float>());
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderError, std::string("unexpected embedding schema: ") + e.what());
    }
    if (vec.values.empty()) throw Error(ErrorCode::ProviderError, "provider returned an empty embedding");
    if (config_.mode == Mode::Record) record_embedding(text, vec);
    return vec;
}

Completion ModelGateway::replay_completion(const Prompt& prompt) const {
    const std::string key = fixture_key(prompt);
    const fs::path path = fs::path(config_.fixtures_dir) / std::string(to_string(prompt.task_tag)) / (key + ".json");
    if (!fs::is_regular_file(path)) {
        throw Error(ErrorCode::FixtureMiss,
                    "no fixture for " + std::string(to_string(prompt.task_tag)) + "/" + key);
    }
    const json j = json::parse(text::read_file(path.string()));
    return Completion{j.at("response_text").get<std::string>(),
                      parse_finish_reason(j.value("finish_reason", "stop"))};
}

EmbeddingVector ModelGateway::replay_embedding(std::string_view text) const {
    const std::string key = embedding_key(text);
    const fs::path path = fs::path(config_.fixtures_dir) / "embeddings" / (key + ".json");
    if (!fs::is_regular_file(path)) {
        throw Error(ErrorCode::FixtureMiss, "no embedding fixture for '" + std::string(text) + "' (" + key + ")");
    }
    const json j = json::parse(text::read_file(path.string()));
    EmbeddingVector vec;
    for (const auto& v : j.at("values")) vec.values.push_back(v.get<float>());
    if (vec.values.size() != j.at("dim").get<std::size_t>()) {
        throw Error(ErrorCode::ParseError, "embedding fixture dim mismatch: " + path.string());
    }
    return vec;
}

namespace {

void write_atomically(const fs::path& path, const std::string& bytes) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    text::write_file(tmp.string(), bytes);
    fs::rename(tmp, path);
}

}  // namespace

void ModelGateway::record_completion(const Prompt& prompt, const Completion& completion) {
    const std::string key = fixture_key(prompt);
    const json j = {
        {"prompt_digest", key},
        {"response_text", completion.text},
        {"finish_reason", std::string(to_string(completion.finish_reason))},
    };
    std::lock_guard lock(record_mutex_);
    write_atomically(fs::path(config_.fixtures_dir) / std::string(to_string(prompt.task_tag)) / (key + ".json"),
                     j.dump(2) + "\n");
}

void ModelGateway::record_embedding(std::string_view text, const EmbeddingVector& vec) {
    json values = json::array();
    for (float v : vec.values) values.push_back(static_cast<double>(v));
    const json j = {{"dim", vec.dim()}, {"values", values}};
    std::lock_guard lock(record_mutex_);
    write_atomically(fs::path(config_.fixtures_dir) / "embeddings" / (embedding_key(text) + ".json"),
                     j.dump() + "\n");
}

// ============================================================================
// Prompt templates
// ============================================================================

PromptTemplate PromptTemplate::parse(std::string_view file_text) {
    const std::string body = text::sanitize_utf8(file_text);
    std::size_t pos = 0;
    while (pos <= body.size()) {
        const std::size_t eol = body.find('\n', pos);
        const std::string_view line = std::string_view(body).substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        if (text::trim(line) == "---") {
            PromptTemplate t;
            t.system_text = std::string(text::trim(std::string_view(body).substr(0, pos)));
            t.user_text = eol == std::string::npos ? "" : std::string(text::trim(std::string_view(body).substr(eol + 1)));
            return t;
        }
        if (eol == std::string::npos) break;
        pos = eol + 1;
    }
    throw Error(ErrorCode::ParseError, "prompt template lacks a '---' separator line");
}

PromptTemplate PromptTemplate::load(const std::string& path) { return parse(text::read_file(path)); }

std::string PromptTemplate::render_user(const std::map<std::string, std::string>& values) const {
    std::string out;
    std::size_t pos = 0;
    while (pos < user_text.size()) {
        const std::size_t open = user_text.find("{{", pos);
        if (open == std::string::npos) break;
        const std::size_t close = user_text.find("}}", open + 2);
        if (close == std::string::npos) break;
        out.append(user_text, pos, open - pos);
        const std::string name(text::trim(std::string_view(user_text).substr(open + 2, close - open - 2)));
        const auto it = values.find(name);
        if (it != values.end()) out.append(it->second);
        else out.append(user_text, open, close + 2 - open);
        pos = close + 2;
    }
    out.append(user_text, pos);
    return out;
}

PromptLibrary PromptLibrary::load(const std::string& dir) {
    PromptLibrary lib;
    for (const auto& [tag, name] : kTaskNames) {
        const fs::path path = fs::path(dir) / (std::string(name) + ".txt");
        if (!fs::is_regular_file(path)) {
            throw Error(ErrorCode::ConfigError, "missing prompt template: " + path.string());
        }
        lib.templates_.emplace(tag, PromptTemplate::load(path.string()));
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(TaskTag tag) const {
    const auto it = templates_.find(tag);
    if (it == templates_.end()) {
        throw Error(ErrorCode::ConfigError, "no template for task " + std::string(to_string(tag)));
    }
    return it->second;
}

Prompt PromptLibrary::make(TaskTag tag, const std::map<std::string, std::string>& values,
                           double temperature, int run_index) const {
    const PromptTemplate& t = get(tag);
    return Prompt{tag, t.system_text, t.render_user(values), temperature, run_index};
}

}  // namespace ctiforge::gateway
