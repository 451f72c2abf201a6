#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ddap/agents.hpp"

namespace ddap {

/// Replays a fixed transcript, one entry per request, strictly in order.
class ScriptedBackend : public Backend {
public:
    struct Entry {
        std::optional<std::string> expect_stage;
        std::string response;
    };

    explicit ScriptedBackend(std::vector<Entry> entries);

    /// Parses the JSON array transcript format. Throws InputError.
    static std::vector<Entry> parse_transcript(const Document& doc);
    static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    std::string complete(const ChatRequest& request) override;

    std::size_t consumed() const;
    std::size_t remaining() const;
    /// Every request served so far, in order.
    std::vector<ChatRequest> requests() const;

private:
    mutable std::mutex mutex_;
    std::vector<Entry> entries_;
    std::size_t next_ = 0;
    std::vector<ChatRequest> requests_;
};

struct HttpBackendConfig {
    std::string base_url;
    std::string model;
    std::string api_key;
    std::chrono::seconds timeout{120};
};

/// OpenAI-style chat completion client: POST {base_url}/chat/completions.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    std::string complete(const ChatRequest& request) override;

private:
    HttpBackendConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

struct BackendSettings {
    enum class Kind { http, scripted };

    Kind kind = Kind::http;
    HttpBackendConfig http;
    std::filesystem::path script_path;

    /// DDAP_LLM_BACKEND, DDAP_LLM_BASE_URL, DDAP_LLM_MODEL, DDAP_LLM_API_KEY,
    /// DDAP_SCRIPT_PATH.
    static BackendSettings from_env();
};

std::unique_ptr<Backend> make_backend(const BackendSettings& settings);

}  // namespace ddap
