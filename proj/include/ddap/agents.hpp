#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddap/artifacts.hpp"
#include "ddap/errors.hpp"

namespace ddap {

enum class AgentId { problem_definer, compute_specifier, pipeline_designer, code_generator };

std::string_view to_string(AgentId id);

struct AgentConfig {
    AgentId agent_id = AgentId::problem_definer;
    std::string role_text;
    std::vector<std::string> guardrail_checklist;
    double temperature = 0.7;
    int max_reprompt = 2;
};

/// Throws InputError when the config breaks its invariants.
void validate_config(const AgentConfig& config);

/// Default role configurations, one per interaction type.
namespace roles {
AgentConfig problem_definer();
AgentConfig compute_specifier();
AgentConfig preprocessing_designer();
AgentConfig pipeline_designer();
AgentConfig code_generator();
AgentConfig code_repairer();
}  // namespace roles

/// The instruction appended to corrective re-prompts.
extern const std::string_view kEnvelopeReminder;

enum class Speaker { system, user, agent };

std::string_view to_string(Speaker s);

struct ConversationTurn {
    Speaker speaker = Speaker::user;
    std::string text;
    std::string timestamp;
};

void to_json(Document& j, const ConversationTurn& turn);
void from_json(const Document& j, ConversationTurn& turn);

/// Current UTC time, ISO-8601 with millisecond precision.
std::string now_iso8601();

// --- envelopes ---------------------------------------------------------------

enum class EnvelopeStatus { question, final };

struct Envelope {
    EnvelopeStatus status = EnvelopeStatus::question;
    std::string message;
    std::optional<Document> payload;
};

class EnvelopeParseError : public InputError {
public:
    EnvelopeParseError(const std::string& reason, std::string raw);

    const std::string& reason() const noexcept { return reason_; }
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string reason_;
    std::string raw_;
};

/// Accepts exactly one JSON object with `status`, `message` and an optional
/// object `payload`. Anything else throws EnvelopeParseError.
Envelope parse_envelope(std::string_view raw);

// --- prompts -----------------------------------------------------------------

struct Snippet {
    std::string source_id;
    std::string text;
    double score = 0.0;
};

struct PromptArtifact {
    ArtifactKind kind;
    Document document;
};

/// Role text, numbered guardrails, prior artifacts, context snippets and the
/// conversation, in that order. Deterministic.
std::string render_prompt(const AgentConfig& config, std::span<const PromptArtifact> prior_artifacts,
                          std::span<const Snippet> snippets,
                          std::span<const ConversationTurn> conversation);

/// The labeled section an artifact occupies inside a prompt.
std::string render_artifact_section(const PromptArtifact& artifact);

// --- retrieval ---------------------------------------------------------------

struct Retrieval {
    std::vector<Snippet> snippets;
    bool corpus_missing = false;
};

/// Scores each snippet by the number of distinct case-folded query terms it
/// contains; returns at most `k`, best first, ties by source_id.
Retrieval retrieve_context(std::string_view query, std::span<const Snippet> corpus, std::size_t k);
/// Corpus = every regular file in `corpus_dir`; source_id is the file name.
Retrieval retrieve_context(std::string_view query, const std::filesystem::path& corpus_dir,
                           std::size_t k);

// --- backends ----------------------------------------------------------------

struct ChatRequest {
    std::string stage;
    AgentId agent = AgentId::problem_definer;
    std::string prompt;
    double temperature = 0.7;
};

class Backend {
public:
    virtual ~Backend() = default;
    /// Raw response text. Throws TransientBackendError for retryable failures.
    virtual std::string complete(const ChatRequest& request) = 0;
};

class TransientBackendError : public BackendError {
public:
    using BackendError::BackendError;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_delay{500};
    double multiplier = 2.0;
};

/// Receives one JSON record per request and per response.
using TurnRecorder = std::function<void(const Document& entry)>;

/// Sends one prompt, retrying transient failures with exponential backoff.
std::string send_turn(const AgentConfig& config, Backend& backend, std::string_view prompt,
                      std::string_view stage, const RetryPolicy& retry = {},
                      const TurnRecorder& recorder = {});

// --- guarded exchange ----------------------------------------------------------

/// Returns a problem description when an otherwise well-formed envelope must
/// be rejected, or nullopt to accept it.
using EnvelopeCheck = std::function<std::optional<std::string>(const Envelope&)>;

struct ExchangeContext {
    const AgentConfig& config;
    Backend& backend;
    std::string stage;
    std::vector<PromptArtifact> prior_artifacts;
    std::vector<Snippet> snippets;
    RetryPolicy retry;
    TurnRecorder recorder;
};

/// Prompts until an envelope parses and passes `check`. Each rejection appends
/// the rejected reply and a corrective system turn to `conversation` and
/// increments `reprompt_count`; once the count has reached
/// `config.max_reprompt` the next rejection throws GuardrailError. The
/// accepted reply's message is appended as an agent turn; a rejected reply,
/// including the one that exhausts the budget, is appended verbatim.
Envelope converse(const ExchangeContext& context, std::vector<ConversationTurn>& conversation,
                  int& reprompt_count, const EnvelopeCheck& check);

}  // namespace ddap
