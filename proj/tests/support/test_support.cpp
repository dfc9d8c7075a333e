#include "test_support.hpp"

#include "mock_model_server.hpp"

#include "ctiforge/text.hpp"

#include <random>

namespace ctiforge::testing {

namespace fs = std::filesystem;

std::string source_path(const std::string& relative) {
    const fs::path root(CTIFORGE_SOURCE_DIR);
    return relative.empty() ? root.string() : (root / relative).string();
}

gateway::Completion FakeGateway::complete(const gateway::Prompt& prompt) {
    {
        std::lock_guard lock(mutex_);
        seen_.push_back(prompt);
    }
    return gateway::Completion{responder_ ? responder_(prompt) : "[]", gateway::FinishReason::Stop};
}

gateway::EmbeddingVector FakeGateway::embed(std::string_view text) {
    ++embed_calls_;
    return gateway::EmbeddingVector{hashed_embedding(text)};
}

std::vector<gateway::Prompt> FakeGateway::prompts() const {
    std::lock_guard lock(mutex_);
    return seen_;
}

const kb::VectorStore& default_store() {
    static const kb::VectorStore store = [] {
        FakeGateway gw;
        return kb::build_store(kb::load_seed(source_path("data/knowledge.jsonl")), gw);
    }();
    return store;
}

const gateway::PromptLibrary& default_prompts() {
    static const gateway::PromptLibrary prompts = gateway::PromptLibrary::load(source_path("prompts"));
    return prompts;
}

TempDir::TempDir() {
    std::random_device rd;
    const fs::path base = fs::temp_directory_path();
    for (;;) {
        path_ = base / ("ctiforge-test-" + std::to_string(rd()));
        if (fs::create_directory(path_)) break;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string TempDir::str(const std::string& child) const {
    return child.empty() ? path_.string() : (path_ / child).string();
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            out[fs::relative(entry.path(), dir).generic_string()] = text::read_file(entry.path().string());
        }
    }
    return out;
}

}  // namespace ctiforge::testing
