#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ddap/agents.hpp"
#include "ddap/artifacts.hpp"
#include "ddap/sandbox.hpp"
#include "ddap/store.hpp"

namespace ddap {

enum class Stage { problem_definition, compute_spec, pipeline_generation, code_generation, done };

std::string_view to_string(Stage stage);
/// Throws InputError for an unknown name.
Stage stage_from_string(std::string_view name);

/// The stage whose completion produces an artifact of `kind`.
Stage producing_stage(ArtifactKind kind);

struct Profile {
    std::string domain;
    std::string expertise;
};

void to_json(Document& j, const Profile& p);
void from_json(const Document& j, Profile& p);

struct SessionState {
    std::string session_id;
    Stage stage = Stage::problem_definition;
    /// Every stage the session has been in, in order.
    std::vector<Stage> stage_history{Stage::problem_definition};
    std::map<Stage, std::vector<ConversationTurn>> conversations;
    /// Latest artifact of each kind; for code artifacts, the latest one generated.
    std::map<ArtifactKind, ArtifactRef> artifact_refs;
    /// Latest code artifact (original or repaired) per candidate index.
    std::map<int, ArtifactRef> code_refs;
    /// Every artifact recorded for the session, in order.
    std::vector<ArtifactRef> artifact_history;
    std::optional<int> selected_candidate;
    std::map<Stage, int> reprompt_counts;
    std::optional<Profile> profile;
    std::string last_message;
    /// Most recent execution per code artifact id.
    std::map<std::string, ExecutionResult> executions;

    bool has(ArtifactKind kind) const { return artifact_refs.count(kind) != 0; }
    int reprompts(Stage stage) const;
};

void to_json(Document& j, const SessionState& s);
void from_json(const Document& j, SessionState& s);

struct TurnResult {
    enum class Kind { agent_question, stage_complete };
    Kind kind = Kind::agent_question;
    std::string message;
    std::optional<ArtifactRef> artifact_ref;
    Stage stage = Stage::problem_definition;
};

std::string_view to_string(TurnResult::Kind kind);
void to_json(Document& j, const TurnResult& r);

struct GeneratedCode {
    CodeArtifact code;
    ArtifactRef ref;
};

struct OrchestratorOptions {
    SandboxLimits limits{};
    RetryPolicy retry{};
    /// Directory of reference snippets; retrieval is skipped when unset.
    std::optional<std::filesystem::path> corpus_dir;
    std::size_t retrieval_k = 3;
};

/// Drives the four-stage workflow. Every operation takes the caller's session
/// state, updates it, and writes it to the store before returning (also when
/// the operation fails part-way).
class Orchestrator {
public:
    Orchestrator(ArtifactStore& store, Backend& backend, OrchestratorOptions options = {});

    ArtifactStore& store() noexcept { return store_; }
    const OrchestratorOptions& options() const noexcept { return options_; }

    SessionState create_session(std::optional<Profile> profile = std::nullopt);
    /// Throws NotFoundError.
    SessionState load_session(std::string_view session_id) const;

    /// Stages 1 and 2: one user turn, one agent turn.
    TurnResult submit_user_message(SessionState& state, std::string_view text);

    /// Stage 3, first step: one-shot preprocessing plan.
    PreprocessingPlan generate_preprocessing(SessionState& state);
    /// Stage 3, second step: one-shot five-candidate set; advances to code generation.
    PipelineSet generate_pipelines(SessionState& state);

    void select_pipeline(SessionState& state, int index);

    /// Stage 4: code for `candidate_index`, or the selected candidate.
    GeneratedCode generate_code(SessionState& state, std::optional<int> candidate_index = std::nullopt);
    /// Code for all five candidates, in index order.
    std::vector<GeneratedCode> generate_all_code(SessionState& state);

    /// Records an artifact from another session; the target must be in the
    /// stage that produces that kind. Skips that stage's dialogue.
    ArtifactRef import_artifact(SessionState& state, const ArtifactRef& source);

    ExecutionResult execute(SessionState& state, const ArtifactRef& code_ref);
    /// Repairs a code artifact whose last execution failed.
    GeneratedCode repair(SessionState& state, const ArtifactRef& code_ref);
    /// Execute, repairing within the budget until a run succeeds.
    RunOutcome run_code(SessionState& state, const ArtifactRef& code_ref);

    /// Ends stage 4 without a successful execution. Requires a code artifact.
    void finalize(SessionState& state);

    /// Looks up "<session_id>.<stem>" in the owning session. Throws NotFoundError.
    ArtifactRef resolve_ref(std::string_view id) const;
    Document load_artifact(const ArtifactRef& ref) const { return store_.load_artifact(ref); }

    /// The prompt the next agent turn of `state` would receive in stage 1 or 2.
    std::string preview_prompt(const SessionState& state) const;

private:
    void save(const SessionState& state);
    void advance(SessionState& state, Stage next);
    ArtifactRef record(SessionState& state, ArtifactRef ref);
    /// Artifacts shown to the agent working in `stage`; the preprocessing plan is
    /// included in pipeline_generation unless `include_plan` is false.
    std::vector<PromptArtifact> prior_artifacts(const SessionState& state, Stage stage,
                                                bool include_plan = true) const;
    std::vector<Snippet> retrieve(const SessionState& state, Stage stage) const;
    Envelope exchange(SessionState& state, Stage stage, const AgentConfig& config,
                      std::vector<PromptArtifact> prior, std::vector<Snippet> snippets,
                      std::vector<ConversationTurn> seed, const EnvelopeCheck& check, bool keep_history);
    CodeArtifact load_code(const ArtifactRef& ref) const;
    const ArtifactRef& require_code_ref(const SessionState& state, const ArtifactRef& ref) const;

    ArtifactStore& store_;
    Backend& backend_;
    OrchestratorOptions options_;
};

struct HeadlessOptions {
    std::optional<Profile> profile;
    /// Candidate to generate code for; all five when `all_candidates`.
    int candidate = 1;
    bool all_candidates = false;
    /// Execute (and repair) the generated code; otherwise finalize directly.
    bool execute = false;
};

struct ArtifactSet {
    SessionState state;
    ArtifactRef problem;
    ArtifactRef compute;
    ArtifactRef preprocessing;
    ArtifactRef pipelines;
    std::vector<ArtifactRef> code;
    std::optional<RunOutcome> run;
};

/// The whole workflow without interaction: `u0` opens stage 1 and `answers`
/// are fed, in order, whenever an agent asks a question. A failure is rethrown
/// with its error code, naming the stage and turn index.
ArtifactSet run_headless(Orchestrator& orchestrator, std::string_view u0, const std::vector<std::string>& answers,
                         const HeadlessOptions& options = {});

}  // namespace ddap
