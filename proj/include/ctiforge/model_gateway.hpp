#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctiforge::gateway {

enum class TaskTag {
    ExtractIocs,
    GenerateRegex,
    RefineRegex,
    ExtractPairs,
    ReidentifyRelation,
};

std::string_view to_string(TaskTag tag);
std::optional<TaskTag> parse_task_tag(std::string_view text);

struct Prompt {
    TaskTag task_tag = TaskTag::ExtractIocs;
    std::string system_text;
    std::string user_text;
    double temperature = 0.0;
    int run_index = 0;
};

enum class FinishReason { Stop, Length, Error };

std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view text);

struct Completion {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
};

struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

/// Hex fixture key for a prompt: SHA-256 over system text, user text and
/// run index, separated by unit-separator bytes.
std::string fixture_key(const Prompt& prompt);

/// Hex fixture key for an embedding request (SHA-256 of the text).
std::string embedding_key(std::string_view text);

/// Every completion and embedding in the pipeline goes through this
/// interface. Implementations must be safe to call from several threads.
class Gateway {
public:
    virtual ~Gateway() = default;
    virtual Completion complete(const Prompt& prompt) = 0;
    virtual EmbeddingVector embed(std::string_view text) = 0;
};

enum class Mode { Live, Replay, Record };

std::optional<Mode> parse_mode(std::string_view text);
std::string_view to_string(Mode mode);

struct GatewayConfig {
    Mode mode = Mode::Replay;
    std::string fixtures_dir;

    std::string api_base;        ///< chat endpoint base, e.g. http://host:port/v1
    std::string embed_api_base;  ///< defaults to api_base when empty
    std::string api_key;
    std::string model = "gpt-4";
    std::string embedding_model = "text-embedding-3-small";

    int max_attempts = 3;
    std::chrono::milliseconds retry_base{500};
    std::chrono::seconds timeout{60};
    int max_in_flight = 4;
    double requests_per_second = 10.0;

    /// Fills api_base/embed_api_base/api_key from MODEL_API_BASE,
    /// EMBED_API_BASE and MODEL_API_KEY when they are unset.
    void apply_environment();
};

/// The production gateway: live HTTP, replay from fixtures, or live with
/// every response recorded to fixtures.
class ModelGateway final : public Gateway {
public:
    explicit ModelGateway(GatewayConfig config);
    ~ModelGateway() override;

    ModelGateway(const ModelGateway&) = delete;
    ModelGateway& operator=(const ModelGateway&) = delete;

    Completion complete(const Prompt& prompt) override;
    EmbeddingVector embed(std::string_view text) override;

    const GatewayConfig& config() const { return config_; }

    /// Number of HTTP attempts issued so far (live/record modes).
    int http_attempts() const;

private:
    class Transport;

    Completion replay_completion(const Prompt& prompt) const;
    EmbeddingVector replay_embedding(std::string_view text) const;
    void record_completion(const Prompt& prompt, const Completion& completion);
    void record_embedding(std::string_view text, const EmbeddingVector& vec);

    GatewayConfig config_;
    std::unique_ptr<Transport> transport_;
    std::mutex record_mutex_;
};

// ============================================================================
// Prompt templates
// ============================================================================

/// A prompt template file: system part and user part separated by a line
/// containing only "---". Placeholders are written {{name}}.
struct PromptTemplate {
    std::string system_text;
    std::string user_text;

    static PromptTemplate parse(std::string_view file_text);
    static PromptTemplate load(const std::string& path);

    /// Substitutes placeholders in the user part. Unknown placeholders are
    /// left verbatim.
    std::string render_user(const std::map<std::string, std::string>& values) const;
};

/// All templates of a prompts/ directory, one file per task tag.
class PromptLibrary {
public:
    static PromptLibrary load(const std::string& dir);

    const PromptTemplate& get(TaskTag tag) const;

    Prompt make(TaskTag tag, const std::map<std::string, std::string>& values,
                double temperature, int run_index = 0) const;

private:
    std::map<TaskTag, PromptTemplate> templates_;
};

}  // namespace ctiforge::gateway
