#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ddap/errors.hpp"

namespace ddap {

using Document = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kCandidateCount = 5;

// The four workflow artifacts, plus the Stage-3 preprocessing plan which is
// persisted on its own before it is folded into the pipeline set.
enum class ArtifactKind {
    problem_definition,
    compute_spec,
    preprocessing_plan,
    pipeline_set,
    code_artifact,
};

std::string_view to_string(ArtifactKind kind);
std::optional<ArtifactKind> artifact_kind_from_string(std::string_view name);

/// Throws InputError for names outside the known kinds.
ArtifactKind parse_artifact_kind(std::string_view name);

/// Sorted keys, no whitespace. The byte form used for hashing, storage and
/// prompt embedding.
std::string canonical_dump(const Document& doc);

struct Violation {
    std::string field_path;
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool valid() const noexcept { return violations.empty(); }
    bool operator==(const ValidationReport&) const = default;

    /// "path: message; path: message"
    std::string summary() const;
};

void to_json(Document& j, const ValidationReport& report);

class ValidationError : public InputError {
public:
    ValidationError(ArtifactKind kind, ValidationReport report);

    ArtifactKind kind() const noexcept { return kind_; }
    const ValidationReport& report() const noexcept { return report_; }

private:
    ArtifactKind kind_;
    ValidationReport report_;
};

struct ValidationOptions {
    int max_repairs = 1;
};

/// Enumerates every schema violation of `document` against `kind`. Pure.
ValidationReport validate_artifact(ArtifactKind kind, const Document& document,
                                   const ValidationOptions& options = {});
ValidationReport validate_artifact(std::string_view kind, const Document& document,
                                   const ValidationOptions& options = {});

// ---------------------------------------------------------------------------
// Typed views. Unknown fields at every record level are kept in `extra` and
// written back unchanged.

enum class Expertise { novice, intermediate, expert };
enum class TaskType { classification, regression, clustering, other };
enum class Modality { image, text, tabular, time_series, mixed };
enum class ComputeLocation { on_premises, cloud, hybrid };
enum class AcceleratorKind { gpu, tpu, cpu_only };

struct DataDescription {
    Modality modality = Modality::tabular;
    std::uint64_t record_count = 0;
    std::string feature_summary;
    std::string target_description;
    Document extra = Document::object();
};

struct ProblemDefinition {
    std::string domain;
    Expertise user_expertise = Expertise::novice;
    TaskType task_type = TaskType::other;
    std::string objective;
    DataDescription data_description;
    std::vector<std::string> constraints;
    std::vector<std::string> success_metrics;
    Document extra = Document::object();
};

struct Accelerator {
    AcceleratorKind kind = AcceleratorKind::cpu_only;
    std::int64_t count = 1;
    double memory_gb = 0.0;
    Document extra = Document::object();
};

struct Budget {
    double amount = 0.0;
    std::string currency;
    Document extra = Document::object();
};

struct ComputeSpec {
    ComputeLocation location = ComputeLocation::on_premises;
    std::vector<Accelerator> accelerators;
    double storage_gb = 0.0;
    std::optional<Budget> budget;  // nullopt encodes "unconstrained"
    std::string preferred_ml_platform;
    Document extra = Document::object();
};

struct PreprocessingStep {
    std::string name;
    std::string description;
    std::string rationale;
    Document extra = Document::object();
};

struct PreprocessingPlan {
    std::vector<PreprocessingStep> steps;
    Document extra = Document::object();
};

struct PipelineCandidate {
    int index = 0;
    std::string name;
    std::string description;
    std::vector<std::string> preprocessing_refs;
    std::string model_family;
    std::string training_procedure;
    std::vector<std::string> evaluation_metrics;
    std::vector<std::string> pros;
    std::vector<std::string> cons;
    Document extra = Document::object();
};

struct PipelineSet {
    PreprocessingPlan preprocessing;
    std::vector<PipelineCandidate> candidates;
    Document extra = Document::object();

    const PipelineCandidate* candidate(int index) const;
};

struct CodeFile {
    std::string relative_path;
    std::string content;
    Document extra = Document::object();
};

struct CodeArtifact {
    int candidate_index = 0;
    std::vector<CodeFile> files;
    std::string entrypoint;
    std::string platform;
    int repair_count = 0;
    Document extra = Document::object();

    const CodeFile* find_file(std::string_view relative_path) const;
};

void to_json(Document& j, const DataDescription& v);
void from_json(const Document& j, DataDescription& v);
void to_json(Document& j, const ProblemDefinition& v);
void from_json(const Document& j, ProblemDefinition& v);
void to_json(Document& j, const Accelerator& v);
void from_json(const Document& j, Accelerator& v);
void to_json(Document& j, const Budget& v);
void from_json(const Document& j, Budget& v);
void to_json(Document& j, const ComputeSpec& v);
void from_json(const Document& j, ComputeSpec& v);
void to_json(Document& j, const PreprocessingStep& v);
void from_json(const Document& j, PreprocessingStep& v);
void to_json(Document& j, const PreprocessingPlan& v);
void from_json(const Document& j, PreprocessingPlan& v);
void to_json(Document& j, const PipelineCandidate& v);
void from_json(const Document& j, PipelineCandidate& v);
void to_json(Document& j, const PipelineSet& v);
void from_json(const Document& j, PipelineSet& v);
void to_json(Document& j, const CodeFile& v);
void from_json(const Document& j, CodeFile& v);
void to_json(Document& j, const CodeArtifact& v);
void from_json(const Document& j, CodeArtifact& v);

template <typename T>
struct ArtifactTraits;

template <>
struct ArtifactTraits<ProblemDefinition> {
    static constexpr ArtifactKind kind = ArtifactKind::problem_definition;
};
template <>
struct ArtifactTraits<ComputeSpec> {
    static constexpr ArtifactKind kind = ArtifactKind::compute_spec;
};
template <>
struct ArtifactTraits<PreprocessingPlan> {
    static constexpr ArtifactKind kind = ArtifactKind::preprocessing_plan;
};
template <>
struct ArtifactTraits<PipelineSet> {
    static constexpr ArtifactKind kind = ArtifactKind::pipeline_set;
};
template <>
struct ArtifactTraits<CodeArtifact> {
    static constexpr ArtifactKind kind = ArtifactKind::code_artifact;
};

/// Validates, then converts. Throws ValidationError.
template <typename T>
T from_document(const Document& doc, const ValidationOptions& options = {}) {
    auto report = validate_artifact(ArtifactTraits<T>::kind, doc, options);
    if (!report.valid()) {
        throw ValidationError(ArtifactTraits<T>::kind, std::move(report));
    }
    return doc.get<T>();
}

/// Full artifact document, including `artifact_kind` and `schema_version`.
template <typename T>
Document to_document(const T& value) {
    Document doc = value;
    doc["artifact_kind"] = std::string(to_string(ArtifactTraits<T>::kind));
    doc["schema_version"] = kSchemaVersion;
    return doc;
}

/// Adds `artifact_kind` / `schema_version` when an agent payload omits them.
/// Existing values are left alone so a mismatch still fails validation.
Document stamp_artifact(Document payload, ArtifactKind kind);

std::string_view to_string(Expertise v);
std::string_view to_string(TaskType v);
std::string_view to_string(Modality v);
std::string_view to_string(ComputeLocation v);
std::string_view to_string(AcceleratorKind v);

}  // namespace ddap
