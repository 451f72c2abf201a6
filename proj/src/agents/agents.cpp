#include "ddap/agents.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace ddap {

std::string_view to_string(AgentId id) {
    switch (id) {
        case AgentId::problem_definer: return "problem_definer";
        case AgentId::compute_specifier: return "compute_specifier";
        case AgentId::pipeline_designer: return "pipeline_designer";
        case AgentId::code_generator: return "code_generator";
    }
    return "unknown";
}

std::string_view to_string(Speaker s) {
    switch (s) {
        case Speaker::system: return "system";
        case Speaker::user: return "user";
        case Speaker::agent: return "agent";
    }
    return "unknown";
}

void validate_config(const AgentConfig& config) {
    if (config.role_text.empty()) throw InputError("agent role_text must be nonempty");
    if (!(config.temperature >= 0.0 && config.temperature <= 2.0)) {
        throw InputError(fmt::format("temperature {} outside [0, 2]", config.temperature));
    }
    if (config.max_reprompt < 0) throw InputError("max_reprompt must be >= 0");
}

void to_json(Document& j, const ConversationTurn& turn) {
    j = {{"speaker", to_string(turn.speaker)}, {"text", turn.text}, {"timestamp", turn.timestamp}};
}

void from_json(const Document& j, ConversationTurn& turn) {
    const auto s = j.at("speaker").get<std::string>();
    if (s == "system") {
        turn.speaker = Speaker::system;
    } else if (s == "user") {
        turn.speaker = Speaker::user;
    } else if (s == "agent") {
        turn.speaker = Speaker::agent;
    } else {
        throw InputError(fmt::format("unknown speaker '{}'", s));
    }
    turn.text = j.at("text").get<std::string>();
    turn.timestamp = j.value("timestamp", "");
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)),
                       ms.count());
}

// --- envelopes ---------------------------------------------------------------

EnvelopeParseError::EnvelopeParseError(const std::string& reason, std::string raw)
    : InputError(fmt::format("malformed envelope: {}", reason)), reason_(reason), raw_(std::move(raw)) {}

Envelope parse_envelope(std::string_view raw) {
    const std::string text(raw);
    Document doc;
    try {
        doc = Document::parse(text);
    } catch (const Document::parse_error&) {
        throw EnvelopeParseError("response is not a single JSON object", text);
    }
    if (!doc.is_object()) throw EnvelopeParseError("response is not a JSON object", text);
    for (const auto& [key, _] : doc.items()) {
        if (key != "status" && key != "message" && key != "payload") {
            throw EnvelopeParseError(fmt::format("unexpected field '{}'", key), text);
        }
    }
    Envelope env;
    const auto status = doc.find("status");
    if (status == doc.end() || !status->is_string()) {
        throw EnvelopeParseError("missing string field 'status'", text);
    }
    if (*status == "question") {
        env.status = EnvelopeStatus::question;
    } else if (*status == "final") {
        env.status = EnvelopeStatus::final;
    } else {
        throw EnvelopeParseError(
            fmt::format("status must be \"question\" or \"final\", got {}", status->dump()), text);
    }
    const auto message = doc.find("message");
    if (message == doc.end() || !message->is_string()) {
        throw EnvelopeParseError("missing string field 'message'", text);
    }
    env.message = message->get<std::string>();
    if (const auto payload = doc.find("payload"); payload != doc.end()) {
        if (!payload->is_object()) throw EnvelopeParseError("'payload' must be a JSON object", text);
        env.payload = *payload;
    }
    return env;
}

// --- prompts -----------------------------------------------------------------

std::string render_artifact_section(const PromptArtifact& artifact) {
    std::string out = fmt::format("### Artifact: {}\n", to_string(artifact.kind));
    if (artifact.kind != ArtifactKind::code_artifact || !artifact.document.contains("files")) {
        out += canonical_dump(artifact.document);
        out += '\n';
        return out;
    }
    // Code is shown verbatim so line structure and error locations stay readable.
    Document manifest = artifact.document;
    for (auto& f : manifest["files"]) {
        if (f.is_object()) f.erase("content");
    }
    out += canonical_dump(manifest);
    out += '\n';
    for (const auto& f : artifact.document["files"]) {
        if (!f.is_object()) continue;
        out += fmt::format("--- file: {} ---\n", f.value("relative_path", ""));
        out += f.value("content", "");
        if (out.back() != '\n') out += '\n';
        out += "--- end of file ---\n";
    }
    return out;
}

std::string render_prompt(const AgentConfig& config, std::span<const PromptArtifact> prior_artifacts,
                          std::span<const Snippet> snippets,
                          std::span<const ConversationTurn> conversation) {
    std::string out = config.role_text;
    out += "\n\nGuardrails:\n";
    for (std::size_t i = 0; i < config.guardrail_checklist.size(); ++i) {
        out += fmt::format("{}. {}\n", i + 1, config.guardrail_checklist[i]);
    }
    for (const auto& a : prior_artifacts) {
        out += '\n';
        out += render_artifact_section(a);
    }
    for (const auto& s : snippets) {
        out += fmt::format("\n### Context: {}\n{}\n", s.source_id, s.text);
    }
    if (!conversation.empty()) {
        out += "\n### Conversation\n";
        for (const auto& t : conversation) {
            out += fmt::format("[{}] {}\n", to_string(t.speaker), t.text);
        }
    }
    return out;
}

// --- retrieval ---------------------------------------------------------------

namespace {

std::vector<std::string> fold_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += static_cast<char>(std::tolower(c));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

Retrieval retrieve_context(std::string_view query, std::span<const Snippet> corpus, std::size_t k) {
    if (k == 0) throw InputError("k must be >= 1");
    const auto terms_vec = fold_tokens(query);
    const std::set<std::string> terms(terms_vec.begin(), terms_vec.end());
    Retrieval out;
    for (const auto& s : corpus) {
        const auto tokens = fold_tokens(s.text);
        const std::set<std::string> present(tokens.begin(), tokens.end());
        const auto score = std::count_if(terms.begin(), terms.end(),
                                         [&](const auto& t) { return present.contains(t); });
        if (score == 0) continue;
        out.snippets.push_back({s.source_id, s.text, static_cast<double>(score)});
    }
    std::sort(out.snippets.begin(), out.snippets.end(), [](const Snippet& a, const Snippet& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.source_id < b.source_id;
    });
    if (out.snippets.size() > k) out.snippets.resize(k);
    return out;
}

Retrieval retrieve_context(std::string_view query, const std::filesystem::path& corpus_dir,
                           std::size_t k) {
    std::error_code ec;
    if (!std::filesystem::is_directory(corpus_dir, ec)) {
        if (k == 0) throw InputError("k must be >= 1");
        return {{}, true};
    }
    std::vector<Snippet> corpus;
    for (const auto& entry : std::filesystem::directory_iterator(corpus_dir, ec)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream text;
        text << in.rdbuf();
        corpus.push_back({entry.path().filename().string(), text.str(), 0.0});
    }
    return retrieve_context(query, corpus, k);
}

// --- transport -----------------------------------------------------------------

std::string send_turn(const AgentConfig& config, Backend& backend, std::string_view prompt,
                      std::string_view stage, const RetryPolicy& retry,
                      const TurnRecorder& recorder) {
    ChatRequest request{std::string(stage), config.agent_id, std::string(prompt), config.temperature};
    if (recorder) {
        recorder({{"type", "request"},
                  {"stage", request.stage},
                  {"agent", to_string(config.agent_id)},
                  {"temperature", config.temperature},
                  {"prompt", request.prompt},
                  {"timestamp", now_iso8601()}});
    }
    const int attempts = std::max(1, retry.max_attempts);
    auto delay = retry.initial_delay;
    for (int attempt = 1;; ++attempt) {
        try {
            auto response = backend.complete(request);
            if (recorder) {
                recorder({{"type", "response"},
                          {"stage", request.stage},
                          {"attempt", attempt},
                          {"text", response},
                          {"timestamp", now_iso8601()}});
            }
            return response;
        } catch (const TransientBackendError& e) {
            if (recorder) {
                recorder({{"type", "transport_error"},
                          {"stage", request.stage},
                          {"attempt", attempt},
                          {"detail", e.what()},
                          {"timestamp", now_iso8601()}});
            }
            if (attempt >= attempts) {
                throw RetryExhaustedError(
                    fmt::format("backend failed after {} attempts: {}", attempt, e.what()), attempt);
            }
        }
        std::this_thread::sleep_for(delay);
        delay = std::chrono::milliseconds(
            static_cast<std::chrono::milliseconds::rep>(static_cast<double>(delay.count()) * retry.multiplier));
    }
}

// --- guarded exchange ------------------------------------------------------------

Envelope converse(const ExchangeContext& context, std::vector<ConversationTurn>& conversation,
                  int& reprompt_count, const EnvelopeCheck& check) {
    validate_config(context.config);
    while (true) {
        const auto prompt =
            render_prompt(context.config, context.prior_artifacts, context.snippets, conversation);
        const auto raw = send_turn(context.config, context.backend, prompt, context.stage,
                                   context.retry, context.recorder);
        std::optional<std::string> problem;
        Envelope env;
        try {
            env = parse_envelope(raw);
            if (check) problem = check(env);
        } catch (const EnvelopeParseError& e) {
            problem = e.what();
        }
        if (!problem) {
            conversation.push_back({Speaker::agent,
                                    env.message.empty() ? std::string("(no message)") : env.message,
                                    now_iso8601()});
            return env;
        }
        // The rejected reply stays on record, including the one that exhausts the budget.
        conversation.push_back({Speaker::agent, raw.empty() ? std::string("(empty response)") : raw,
                                now_iso8601()});
        if (reprompt_count >= context.config.max_reprompt) {
            throw GuardrailError(fmt::format("{}: {} (after {} corrective re-prompts)", context.stage,
                                             *problem, reprompt_count));
        }
        ++reprompt_count;
        conversation.push_back({Speaker::system,
                                fmt::format("Your previous reply was rejected: {}. {}", *problem,
                                            kEnvelopeReminder),
                                now_iso8601()});
    }
}

}  // namespace ddap
