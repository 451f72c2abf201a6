#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddap/agents.hpp"
#include "ddap/artifacts.hpp"
#include "ddap/store.hpp"

namespace ddap {

inline constexpr std::string_view kEntrypointPlaceholder = "{entrypoint}";

struct SandboxLimits {
    double wall_clock_seconds = 600.0;
    std::size_t output_truncation_bytes = 65536;
    std::string interpreter_command_template = "python3 {entrypoint}";
    /// Reported as exit_status when the run is killed for exceeding the wall clock.
    int timeout_exit_status = 124;

    /// Defaults, with DDAP_SANDBOX_TIMEOUT_SECONDS applied when set.
    static SandboxLimits from_env();
};

/// Throws InputError when a limit breaks its invariants.
void validate_limits(const SandboxLimits& limits);

struct ExecutionResult {
    int exit_status = 0;
    std::string stdout_excerpt;
    std::string stderr_excerpt;
    std::int64_t duration_ms = 0;
    bool timed_out = false;

    bool succeeded() const noexcept { return !timed_out && exit_status == 0; }
};

void to_json(Document& j, const ExecutionResult& r);
void from_json(const Document& j, ExecutionResult& r);

/// Keeps the last `limit` bytes, starting on a UTF-8 boundary, with invalid
/// sequences replaced by U+FFFD.
std::string tail_excerpt(std::string_view bytes, std::size_t limit);

/// Writes the code's files into `workspace` (created if absent, must be empty)
/// and runs the interpreter command there. Throws SandboxError when the
/// interpreter cannot be started.
ExecutionResult execute_code(const CodeArtifact& code, const SandboxLimits& limits,
                             const std::filesystem::path& workspace);

/// Same, in a private temporary directory that is removed afterwards.
ExecutionResult execute_code(const CodeArtifact& code, const SandboxLimits& limits);

struct RepairContext {
    Backend& backend;
    ArtifactStore& store;
    std::string session_id;
    /// Upstream artifacts shown to the repair agent ahead of the failing code.
    std::vector<PromptArtifact> upstream;
    AgentConfig config = roles::code_repairer();
    int max_repairs = 1;
    RetryPolicy retry{};
    TurnRecorder recorder{};
    /// Corrective re-prompts spent by the exchange are added here when set.
    int* reprompt_count = nullptr;
};

struct RepairResult {
    CodeArtifact code;
    ArtifactRef ref;
};

/// One-shot repair turn: the prompt carries the full failing code and the
/// stderr excerpt. The returned artifact has repair_count + 1 and is persisted
/// next to the original. Throws RepairBudgetError without contacting the
/// agent when the budget is spent.
RepairResult repair_code(RepairContext& context, const CodeArtifact& code,
                         const ExecutionResult& failure);

/// The repair prompt for `code`, without sending it.
std::string render_repair_prompt(const RepairContext& context, const CodeArtifact& code,
                                 const ExecutionResult& failure);

struct RunOutcome {
    ExecutionResult result;
    CodeArtifact code;
    int executions = 0;
    int repairs = 0;
    std::vector<ArtifactRef> repaired_refs;
};

using Executor = std::function<ExecutionResult(const CodeArtifact&)>;
using Repairer = std::function<RepairResult(const CodeArtifact&, const ExecutionResult&)>;

/// Execute; while the run fails and the artifact's repair_count is below
/// `max_repairs`, repair and execute again.
RunOutcome run_with_repair(const CodeArtifact& code, const Executor& execute, const Repairer& repair,
                           int max_repairs);

/// Runs each attempt in a fresh workspace of the context's session.
RunOutcome run_with_repair(const CodeArtifact& code, const SandboxLimits& limits, RepairContext& context);

}  // namespace ddap
