#include "ddap/backends.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

namespace ddap {

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries) : entries_(std::move(entries)) {}

std::vector<ScriptedBackend::Entry> ScriptedBackend::parse_transcript(const Document& doc) {
    if (!doc.is_array()) throw InputError("scripted transcript must be a JSON array");
    std::vector<Entry> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        if (!e.is_object() || !e.contains("response") || !e["response"].is_string()) {
            throw InputError(fmt::format("transcript entry {} needs a string 'response'", i));
        }
        Entry entry;
        entry.response = e["response"].get<std::string>();
        if (auto it = e.find("expect_stage"); it != e.end() && !it->is_null()) {
            if (!it->is_string()) {
                throw InputError(fmt::format("transcript entry {}: expect_stage must be a string", i));
            }
            entry.expect_stage = it->get<std::string>();
        }
        out.push_back(std::move(entry));
    }
    return out;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError(fmt::format("transcript not found: {}", path.string()));
    Document doc;
    try {
        doc = Document::parse(in);
    } catch (const Document::parse_error& e) {
        throw InputError(fmt::format("transcript {} is not valid JSON: {}", path.string(), e.what()));
    }
    return std::make_unique<ScriptedBackend>(parse_transcript(doc));
}

std::string ScriptedBackend::complete(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    if (next_ >= entries_.size()) {
        throw TranscriptExhaustedError(
            fmt::format("scripted transcript exhausted after {} entries (stage {})", entries_.size(),
                        request.stage));
    }
    const auto& entry = entries_[next_];
    if (entry.expect_stage && *entry.expect_stage != request.stage) {
        throw FixtureError(fmt::format("transcript entry {} expects stage '{}' but live stage is '{}'",
                                       next_, *entry.expect_stage, request.stage));
    }
    ++next_;
    requests_.push_back(request);
    return entry.response;
}

std::size_t ScriptedBackend::consumed() const {
    std::lock_guard lock(mutex_);
    return next_;
}

std::size_t ScriptedBackend::remaining() const {
    std::lock_guard lock(mutex_);
    return entries_.size() - next_;
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

// --- HTTP ------------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const auto& url = config_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw InputError(fmt::format("base URL '{}' has no scheme", url));
    }
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpBackend::complete(const ChatRequest& request) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const Document body = {
        {"model", config_.model},
        {"messages", Document::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
    };
    auto res = client.Post(path_prefix_ + "/chat/completions", headers,
                           body.dump(-1, ' ', false, Document::error_handler_t::replace),
                           "application/json");
    if (!res) {
        throw TransientBackendError(
            fmt::format("transport error: {}", httplib::to_string(res.error())));
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransientBackendError(fmt::format("HTTP {}", res->status));
    }
    if (res->status != 200) {
        throw BackendError(fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 512)));
    }
    try {
        const auto doc = Document::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Document::exception& e) {
        throw BackendError(fmt::format("unexpected chat completion response: {}", e.what()));
    }
}

// --- settings ----------------------------------------------------------------------

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::move(fallback);
}

}  // namespace

BackendSettings BackendSettings::from_env() {
    BackendSettings s;
    const auto kind = env_or("DDAP_LLM_BACKEND", "http");
    if (kind == "scripted") {
        s.kind = Kind::scripted;
    } else if (kind == "http") {
        s.kind = Kind::http;
    } else {
        throw InputError(fmt::format("DDAP_LLM_BACKEND must be 'http' or 'scripted', got '{}'", kind));
    }
    s.http.base_url = env_or("DDAP_LLM_BASE_URL", "http://localhost:8000/v1");
    s.http.model = env_or("DDAP_LLM_MODEL");
    s.http.api_key = env_or("DDAP_LLM_API_KEY");
    s.script_path = env_or("DDAP_SCRIPT_PATH");
    return s;
}

std::unique_ptr<Backend> make_backend(const BackendSettings& settings) {
    if (settings.kind == BackendSettings::Kind::scripted) {
        if (settings.script_path.empty()) {
            throw InputError("scripted backend needs DDAP_SCRIPT_PATH");
        }
        return ScriptedBackend::from_file(settings.script_path);
    }
    return std::make_unique<HttpBackend>(settings.http);
}

}  // namespace ddap
