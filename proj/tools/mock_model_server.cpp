// Standalone scripted model server, used to record fixture corpora:
//
//   mock_model_server --script tests/corpus/mock_script.json --prompts prompts --port 8711
//   MODEL_API_BASE=http://127.0.0.1:8711/v1 ctiforge analyze ... --mode record

#include "mock_model_server.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>

namespace {
ctiforge::testing::MockModelServer* g_server = nullptr;
void on_signal(int) {
    if (g_server != nullptr) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scripted OpenAI-compatible model server for fixture recording"};
    std::string script_path;
    std::string prompts_dir = "prompts";
    int port = 8711;
    app.add_option("--script", script_path, "Mock script JSON")->required()->check(CLI::ExistingFile);
    app.add_option("--prompts", prompts_dir, "Prompt template directory")->check(CLI::ExistingDirectory);
    app.add_option("--port", port, "Listen port");
    CLI11_PARSE(app, argc, argv);

    try {
        ctiforge::testing::MockModelServer server(ctiforge::testing::MockScript::load(script_path), prompts_dir);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        spdlog::info("serving on http://127.0.0.1:{}/v1", port);
        server.run_forever(port);
        for (const auto& u : server.unmatched()) spdlog::warn("unmatched request: {}", u);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
