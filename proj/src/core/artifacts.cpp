#include "ddap/artifacts.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <span>

#include <fmt/format.h>

namespace ddap {

namespace {

constexpr std::array<std::string_view, 5> kKindNames{
    "problem_definition", "compute_spec", "preprocessing_plan", "pipeline_set", "code_artifact"};
constexpr std::array<std::string_view, 3> kExpertiseNames{"novice", "intermediate", "expert"};
constexpr std::array<std::string_view, 4> kTaskTypeNames{"classification", "regression",
                                                         "clustering", "other"};
constexpr std::array<std::string_view, 5> kModalityNames{"image", "text", "tabular",
                                                         "time_series", "mixed"};
constexpr std::array<std::string_view, 3> kLocationNames{"on_premises", "cloud", "hybrid"};
constexpr std::array<std::string_view, 3> kAcceleratorNames{"gpu", "tpu", "cpu_only"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<E>(i);
    }
    return std::nullopt;
}

template <typename E, std::size_t N>
E enum_from(const Document& j, const std::array<std::string_view, N>& names,
            std::string_view what) {
    auto s = j.get<std::string>();
    auto e = lookup<E>(names, s);
    if (!e) throw InputError(fmt::format("unknown {} '{}'", what, s));
    return *e;
}

std::string join_names(std::span<const std::string_view> names) {
    std::string out;
    for (auto n : names) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

std::string child(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : fmt::format("{}.{}", path, key);
}

std::string element(const std::string& path, std::size_t i) {
    return fmt::format("{}[{}]", path, i);
}

// Collects violations for one document. Every check records at most one
// violation per field and returns the field when it is usable.
class Checker {
public:
    explicit Checker(std::vector<Violation>& out) : out_(out) {}

    void fail(std::string path, std::string message) {
        out_.push_back({std::move(path), std::move(message)});
    }

    const Document* field(const Document& obj, const std::string& key, const std::string& path) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            fail(child(path, key), "missing required field");
            return nullptr;
        }
        return &*it;
    }

    const Document* object(const Document& obj, const std::string& key, const std::string& path) {
        const auto* v = field(obj, key, path);
        if (v && !v->is_object()) {
            fail(child(path, key), "must be an object");
            return nullptr;
        }
        return v;
    }

    const Document* array(const Document& obj, const std::string& key, const std::string& path) {
        const auto* v = field(obj, key, path);
        if (v && !v->is_array()) {
            fail(child(path, key), "must be an array");
            return nullptr;
        }
        return v;
    }

    std::optional<std::string> string(const Document& obj, const std::string& key,
                                      const std::string& path, bool nonempty) {
        const auto* v = field(obj, key, path);
        if (!v) return std::nullopt;
        if (!v->is_string()) {
            fail(child(path, key), "must be a string");
            return std::nullopt;
        }
        auto s = v->get<std::string>();
        if (nonempty && s.empty()) {
            fail(child(path, key), "must be nonempty");
            return std::nullopt;
        }
        return s;
    }

    template <std::size_t N>
    void enumeration(const Document& obj, const std::string& key, const std::string& path,
                     const std::array<std::string_view, N>& names) {
        auto s = string(obj, key, path, false);
        if (s && !lookup<int>(names, *s)) {
            fail(child(path, key), fmt::format("must be one of: {}", join_names(names)));
        }
    }

    std::optional<std::int64_t> integer(const Document& obj, const std::string& key,
                                        const std::string& path, std::int64_t min,
                                        std::optional<std::int64_t> max = std::nullopt) {
        const auto* v = field(obj, key, path);
        if (!v) return std::nullopt;
        if (!v->is_number_integer()) {
            fail(child(path, key), "must be an integer");
            return std::nullopt;
        }
        if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
            if (max) {
                fail(child(path, key), fmt::format("must be <= {}", *max));
                return std::nullopt;
            }
            return INT64_MAX;
        }
        auto n = v->get<std::int64_t>();
        if (n < min) {
            fail(child(path, key), fmt::format("must be >= {}", min));
            return std::nullopt;
        }
        if (max && n > *max) {
            fail(child(path, key), fmt::format("must be <= {}", *max));
            return std::nullopt;
        }
        return n;
    }

    std::optional<double> number(const Document& obj, const std::string& key,
                                 const std::string& path, double min) {
        const auto* v = field(obj, key, path);
        if (!v) return std::nullopt;
        if (!v->is_number()) {
            fail(child(path, key), "must be a number");
            return std::nullopt;
        }
        auto x = v->get<double>();
        if (x < min) {
            fail(child(path, key), fmt::format("must be >= {}", min));
            return std::nullopt;
        }
        return x;
    }

    std::optional<std::vector<std::string>> string_list(const Document& obj, const std::string& key,
                                                        const std::string& path,
                                                        bool nonempty_list) {
        const auto* v = array(obj, key, path);
        if (!v) return std::nullopt;
        const auto p = child(path, key);
        if (nonempty_list && v->empty()) {
            fail(p, "must contain at least one entry");
            return std::nullopt;
        }
        std::vector<std::string> out;
        bool ok = true;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const auto& e = (*v)[i];
            if (!e.is_string() || e.get_ref<const std::string&>().empty()) {
                fail(element(p, i), "must be a nonempty string");
                ok = false;
                continue;
            }
            out.push_back(e.get<std::string>());
        }
        if (!ok) return std::nullopt;
        return out;
    }

private:
    std::vector<Violation>& out_;
};

void check_header(Checker& c, const Document& doc, ArtifactKind kind) {
    if (auto k = c.string(doc, "artifact_kind", "", false); k && *k != to_string(kind)) {
        c.fail("artifact_kind", fmt::format("expected '{}', got '{}'", to_string(kind), *k));
    }
    if (auto v = c.integer(doc, "schema_version", "", 0); v && *v != kSchemaVersion) {
        c.fail("schema_version", fmt::format("unsupported schema version {}", *v));
    }
}

void check_problem_definition(Checker& c, const Document& doc) {
    c.string(doc, "domain", "", false);
    c.enumeration(doc, "user_expertise", "", kExpertiseNames);
    c.enumeration(doc, "task_type", "", kTaskTypeNames);
    c.string(doc, "objective", "", true);
    if (const auto* data = c.object(doc, "data_description", "")) {
        const std::string p = "data_description";
        c.enumeration(*data, "modality", p, kModalityNames);
        c.integer(*data, "record_count", p, 0);
        c.string(*data, "feature_summary", p, false);
        c.string(*data, "target_description", p, false);
    }
    c.string_list(doc, "constraints", "", false);
    c.string_list(doc, "success_metrics", "", true);
}

void check_compute_spec(Checker& c, const Document& doc) {
    c.enumeration(doc, "location", "", kLocationNames);
    if (const auto* accs = c.array(doc, "accelerators", "")) {
        if (accs->empty()) c.fail("accelerators", "must contain at least one entry");
        for (std::size_t i = 0; i < accs->size(); ++i) {
            const auto p = element("accelerators", i);
            const auto& a = (*accs)[i];
            if (!a.is_object()) {
                c.fail(p, "must be an object");
                continue;
            }
            c.enumeration(a, "kind", p, kAcceleratorNames);
            c.integer(a, "count", p, 1);
            c.number(a, "memory_gb", p, 0.0);
        }
    }
    c.number(doc, "storage_gb", "", 0.0);
    if (const auto* budget = c.field(doc, "budget", "")) {
        if (budget->is_string()) {
            if (budget->get<std::string>() != "unconstrained") {
                c.fail("budget", "must be an object or \"unconstrained\"");
            }
        } else if (budget->is_object()) {
            c.number(*budget, "amount", "budget", 0.0);
            c.string(*budget, "currency", "budget", true);
        } else {
            c.fail("budget", "must be an object or \"unconstrained\"");
        }
    }
    c.string(doc, "preferred_ml_platform", "", false);
}

// Returns the step names when the plan is well formed.
std::optional<std::set<std::string>> check_plan_body(Checker& c, const Document& plan,
                                                     const std::string& path) {
    const auto* steps = c.array(plan, "steps", path);
    if (!steps) return std::nullopt;
    const auto sp = child(path, "steps");
    if (steps->empty()) {
        c.fail(sp, "must contain at least one step");
        return std::nullopt;
    }
    std::set<std::string> names;
    bool ok = true;
    for (std::size_t i = 0; i < steps->size(); ++i) {
        const auto p = element(sp, i);
        const auto& s = (*steps)[i];
        if (!s.is_object()) {
            c.fail(p, "must be an object");
            ok = false;
            continue;
        }
        auto name = c.string(s, "name", p, true);
        c.string(s, "description", p, false);
        c.string(s, "rationale", p, false);
        if (!name) {
            ok = false;
        } else if (!names.insert(*name).second) {
            c.fail(child(p, "name"), fmt::format("duplicate step name '{}'", *name));
            ok = false;
        }
    }
    if (!ok) return std::nullopt;
    return names;
}

void check_pipeline_set(Checker& c, const Document& doc) {
    std::optional<std::set<std::string>> step_names;
    if (const auto* plan = c.object(doc, "preprocessing", "")) {
        step_names = check_plan_body(c, *plan, "preprocessing");
    }
    const auto* cands = c.array(doc, "candidates", "");
    if (!cands) return;
    if (cands->size() != static_cast<std::size_t>(kCandidateCount)) {
        c.fail("candidates", fmt::format("expected exactly {} candidates, got {}",
                                         kCandidateCount, cands->size()));
    }
    std::set<std::int64_t> seen;
    for (std::size_t i = 0; i < cands->size(); ++i) {
        const auto p = element("candidates", i);
        const auto& cand = (*cands)[i];
        if (!cand.is_object()) {
            c.fail(p, "must be an object");
            continue;
        }
        if (auto idx = c.integer(cand, "index", p, 1, kCandidateCount)) {
            if (!seen.insert(*idx).second) {
                c.fail(child(p, "index"), fmt::format("duplicate candidate index {}", *idx));
            }
        }
        c.string(cand, "name", p, true);
        c.string(cand, "description", p, false);
        if (auto refs = c.string_list(cand, "preprocessing_refs", p, false); refs && step_names) {
            for (std::size_t r = 0; r < refs->size(); ++r) {
                if (!step_names->contains((*refs)[r])) {
                    c.fail(element(child(p, "preprocessing_refs"), r),
                           fmt::format("unknown preprocessing step '{}'", (*refs)[r]));
                }
            }
        }
        c.string(cand, "model_family", p, false);
        c.string(cand, "training_procedure", p, false);
        c.string_list(cand, "evaluation_metrics", p, false);
        c.string_list(cand, "pros", p, true);
        c.string_list(cand, "cons", p, true);
    }
}

bool is_safe_relative_path(std::string_view path) {
    if (path.empty() || path.front() == '/' || path.find('\\') != std::string_view::npos ||
        path.find('\0') != std::string_view::npos) {
        return false;
    }
    std::size_t start = 0;
    while (start <= path.size()) {
        auto end = path.find('/', start);
        if (end == std::string_view::npos) end = path.size();
        auto seg = path.substr(start, end - start);
        if (seg.empty() || seg == "." || seg == "..") return false;
        start = end + 1;
    }
    return true;
}

void check_code_artifact(Checker& c, const Document& doc, const ValidationOptions& options) {
    c.integer(doc, "candidate_index", "", 1, kCandidateCount);
    std::set<std::string> paths;
    if (const auto* files = c.array(doc, "files", "")) {
        if (files->empty()) c.fail("files", "must contain at least one file");
        for (std::size_t i = 0; i < files->size(); ++i) {
            const auto p = element("files", i);
            const auto& f = (*files)[i];
            if (!f.is_object()) {
                c.fail(p, "must be an object");
                continue;
            }
            if (auto rel = c.string(f, "relative_path", p, true)) {
                if (!is_safe_relative_path(*rel)) {
                    c.fail(child(p, "relative_path"), "must be a relative path without '..'");
                } else if (*rel == "manifest.json") {
                    c.fail(child(p, "relative_path"), "'manifest.json' is reserved");
                } else if (!paths.insert(*rel).second) {
                    c.fail(child(p, "relative_path"), fmt::format("duplicate path '{}'", *rel));
                }
            }
            c.string(f, "content", p, false);
        }
    }
    if (auto entry = c.string(doc, "entrypoint", "", true); entry && !paths.contains(*entry)) {
        c.fail("entrypoint", fmt::format("'{}' is not one of the files", *entry));
    }
    c.string(doc, "platform", "", false);
    c.integer(doc, "repair_count", "", 0, options.max_repairs);
}

template <typename T>
void put_extra(Document& j, const T& v) {
    for (const auto& [k, val] : v.extra.items()) j[k] = val;
}

// Everything in `j` that is not a known field of the record.
Document extra_fields(const Document& j, std::initializer_list<std::string_view> known) {
    Document extra = Document::object();
    for (const auto& [k, val] : j.items()) {
        if (k == "artifact_kind" || k == "schema_version") continue;
        if (std::find(known.begin(), known.end(), k) != known.end()) continue;
        extra[k] = val;
    }
    return extra;
}

}  // namespace

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::bad_stage: return "bad_stage";
        case ErrorCode::validation_failed: return "validation_failed";
        case ErrorCode::backend_failure: return "backend_failure";
        case ErrorCode::guardrail_exhausted: return "guardrail_exhausted";
        case ErrorCode::sandbox_error: return "sandbox_error";
    }
    return "unknown";
}

std::string_view to_string(ArtifactKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }
std::string_view to_string(Expertise v) { return kExpertiseNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(TaskType v) { return kTaskTypeNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Modality v) { return kModalityNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(ComputeLocation v) { return kLocationNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(AcceleratorKind v) {
    return kAcceleratorNames[static_cast<std::size_t>(v)];
}

std::optional<ArtifactKind> artifact_kind_from_string(std::string_view name) {
    return lookup<ArtifactKind>(kKindNames, name);
}

ArtifactKind parse_artifact_kind(std::string_view name) {
    if (auto k = artifact_kind_from_string(name)) return *k;
    throw InputError(fmt::format("unknown artifact kind '{}'", name));
}

std::string canonical_dump(const Document& doc) {
    return doc.dump(-1, ' ', false, Document::error_handler_t::strict);
}

std::string ValidationReport::summary() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += v.field_path.empty() ? v.message : fmt::format("{}: {}", v.field_path, v.message);
    }
    return out;
}

void to_json(Document& j, const ValidationReport& report) {
    j = Document::object();
    j["valid"] = report.valid();
    j["violations"] = Document::array();
    for (const auto& v : report.violations) {
        j["violations"].push_back({{"field_path", v.field_path}, {"message", v.message}});
    }
}

ValidationError::ValidationError(ArtifactKind kind, ValidationReport report)
    : InputError(fmt::format("invalid {}: {}", to_string(kind), report.summary())),
      kind_(kind),
      report_(std::move(report)) {}

ValidationReport validate_artifact(ArtifactKind kind, const Document& document,
                                   const ValidationOptions& options) {
    ValidationReport report;
    Checker c(report.violations);
    if (!document.is_object()) {
        c.fail("", "document must be a JSON object");
        return report;
    }
    check_header(c, document, kind);
    switch (kind) {
        case ArtifactKind::problem_definition: check_problem_definition(c, document); break;
        case ArtifactKind::compute_spec: check_compute_spec(c, document); break;
        case ArtifactKind::preprocessing_plan: check_plan_body(c, document, ""); break;
        case ArtifactKind::pipeline_set: check_pipeline_set(c, document); break;
        case ArtifactKind::code_artifact: check_code_artifact(c, document, options); break;
    }
    return report;
}

ValidationReport validate_artifact(std::string_view kind, const Document& document,
                                   const ValidationOptions& options) {
    return validate_artifact(parse_artifact_kind(kind), document, options);
}

Document stamp_artifact(Document payload, ArtifactKind kind) {
    if (!payload.is_object()) return payload;
    if (!payload.contains("artifact_kind")) payload["artifact_kind"] = std::string(to_string(kind));
    if (!payload.contains("schema_version")) payload["schema_version"] = kSchemaVersion;
    return payload;
}

const PipelineCandidate* PipelineSet::candidate(int index) const {
    for (const auto& c : candidates) {
        if (c.index == index) return &c;
    }
    return nullptr;
}

const CodeFile* CodeArtifact::find_file(std::string_view relative_path) const {
    for (const auto& f : files) {
        if (f.relative_path == relative_path) return &f;
    }
    return nullptr;
}

// --- conversions -----------------------------------------------------------

void to_json(Document& j, const DataDescription& v) {
    j = {{"modality", to_string(v.modality)},
         {"record_count", v.record_count},
         {"feature_summary", v.feature_summary},
         {"target_description", v.target_description}};
    put_extra(j, v);
}

void from_json(const Document& j, DataDescription& v) {
    v.modality = enum_from<Modality>(j.at("modality"), kModalityNames, "modality");
    v.record_count = j.at("record_count").get<std::uint64_t>();
    v.feature_summary = j.at("feature_summary").get<std::string>();
    v.target_description = j.at("target_description").get<std::string>();
    v.extra = extra_fields(j, {"modality", "record_count", "feature_summary", "target_description"});
}

void to_json(Document& j, const ProblemDefinition& v) {
    j = {{"domain", v.domain},
         {"user_expertise", to_string(v.user_expertise)},
         {"task_type", to_string(v.task_type)},
         {"objective", v.objective},
         {"data_description", v.data_description},
         {"constraints", v.constraints},
         {"success_metrics", v.success_metrics}};
    put_extra(j, v);
}

void from_json(const Document& j, ProblemDefinition& v) {
    v.domain = j.at("domain").get<std::string>();
    v.user_expertise = enum_from<Expertise>(j.at("user_expertise"), kExpertiseNames, "expertise");
    v.task_type = enum_from<TaskType>(j.at("task_type"), kTaskTypeNames, "task type");
    v.objective = j.at("objective").get<std::string>();
    v.data_description = j.at("data_description").get<DataDescription>();
    v.constraints = j.at("constraints").get<std::vector<std::string>>();
    v.success_metrics = j.at("success_metrics").get<std::vector<std::string>>();
    v.extra = extra_fields(j, {"domain", "user_expertise", "task_type", "objective",
                               "data_description", "constraints", "success_metrics"});
}

void to_json(Document& j, const Accelerator& v) {
    j = {{"kind", to_string(v.kind)}, {"count", v.count}, {"memory_gb", v.memory_gb}};
    put_extra(j, v);
}

void from_json(const Document& j, Accelerator& v) {
    v.kind = enum_from<AcceleratorKind>(j.at("kind"), kAcceleratorNames, "accelerator kind");
    v.count = j.at("count").get<std::int64_t>();
    v.memory_gb = j.at("memory_gb").get<double>();
    v.extra = extra_fields(j, {"kind", "count", "memory_gb"});
}

void to_json(Document& j, const Budget& v) {
    j = {{"amount", v.amount}, {"currency", v.currency}};
    put_extra(j, v);
}

void from_json(const Document& j, Budget& v) {
    v.amount = j.at("amount").get<double>();
    v.currency = j.at("currency").get<std::string>();
    v.extra = extra_fields(j, {"amount", "currency"});
}

void to_json(Document& j, const ComputeSpec& v) {
    j = {{"location", to_string(v.location)},
         {"accelerators", v.accelerators},
         {"storage_gb", v.storage_gb},
         {"preferred_ml_platform", v.preferred_ml_platform}};
    if (v.budget) {
        j["budget"] = *v.budget;
    } else {
        j["budget"] = "unconstrained";
    }
    put_extra(j, v);
}

void from_json(const Document& j, ComputeSpec& v) {
    v.location = enum_from<ComputeLocation>(j.at("location"), kLocationNames, "location");
    v.accelerators = j.at("accelerators").get<std::vector<Accelerator>>();
    v.storage_gb = j.at("storage_gb").get<double>();
    const auto& b = j.at("budget");
    if (b.is_object()) {
        v.budget = b.get<Budget>();
    } else {
        v.budget.reset();
    }
    v.preferred_ml_platform = j.at("preferred_ml_platform").get<std::string>();
    v.extra = extra_fields(j, {"location", "accelerators", "storage_gb", "budget",
                               "preferred_ml_platform"});
}

void to_json(Document& j, const PreprocessingStep& v) {
    j = {{"name", v.name}, {"description", v.description}, {"rationale", v.rationale}};
    put_extra(j, v);
}

void from_json(const Document& j, PreprocessingStep& v) {
    v.name = j.at("name").get<std::string>();
    v.description = j.at("description").get<std::string>();
    v.rationale = j.at("rationale").get<std::string>();
    v.extra = extra_fields(j, {"name", "description", "rationale"});
}

void to_json(Document& j, const PreprocessingPlan& v) {
    j = {{"steps", v.steps}};
    put_extra(j, v);
}

void from_json(const Document& j, PreprocessingPlan& v) {
    v.steps = j.at("steps").get<std::vector<PreprocessingStep>>();
    v.extra = extra_fields(j, {"steps"});
}

void to_json(Document& j, const PipelineCandidate& v) {
    j = {{"index", v.index},
         {"name", v.name},
         {"description", v.description},
         {"preprocessing_refs", v.preprocessing_refs},
         {"model_family", v.model_family},
         {"training_procedure", v.training_procedure},
         {"evaluation_metrics", v.evaluation_metrics},
         {"pros", v.pros},
         {"cons", v.cons}};
    put_extra(j, v);
}

void from_json(const Document& j, PipelineCandidate& v) {
    v.index = j.at("index").get<int>();
    v.name = j.at("name").get<std::string>();
    v.description = j.at("description").get<std::string>();
    v.preprocessing_refs = j.at("preprocessing_refs").get<std::vector<std::string>>();
    v.model_family = j.at("model_family").get<std::string>();
    v.training_procedure = j.at("training_procedure").get<std::string>();
    v.evaluation_metrics = j.at("evaluation_metrics").get<std::vector<std::string>>();
    v.pros = j.at("pros").get<std::vector<std::string>>();
    v.cons = j.at("cons").get<std::vector<std::string>>();
    v.extra = extra_fields(j, {"index", "name", "description", "preprocessing_refs",
                               "model_family", "training_procedure", "evaluation_metrics", "pros",
                               "cons"});
}

void to_json(Document& j, const PipelineSet& v) {
    j = {{"preprocessing", v.preprocessing}, {"candidates", v.candidates}};
    put_extra(j, v);
}

void from_json(const Document& j, PipelineSet& v) {
    v.preprocessing = j.at("preprocessing").get<PreprocessingPlan>();
    v.candidates = j.at("candidates").get<std::vector<PipelineCandidate>>();
    v.extra = extra_fields(j, {"preprocessing", "candidates"});
}

void to_json(Document& j, const CodeFile& v) {
    j = {{"relative_path", v.relative_path}, {"content", v.content}};
    put_extra(j, v);
}

void from_json(const Document& j, CodeFile& v) {
    v.relative_path = j.at("relative_path").get<std::string>();
    v.content = j.at("content").get<std::string>();
    v.extra = extra_fields(j, {"relative_path", "content"});
}

void to_json(Document& j, const CodeArtifact& v) {
    j = {{"candidate_index", v.candidate_index},
         {"files", v.files},
         {"entrypoint", v.entrypoint},
         {"platform", v.platform},
         {"repair_count", v.repair_count}};
    put_extra(j, v);
}

void from_json(const Document& j, CodeArtifact& v) {
    v.candidate_index = j.at("candidate_index").get<int>();
    v.files = j.at("files").get<std::vector<CodeFile>>();
    v.entrypoint = j.at("entrypoint").get<std::string>();
    v.platform = j.at("platform").get<std::string>();
    v.repair_count = j.at("repair_count").get<int>();
    v.extra = extra_fields(j, {"candidate_index", "files", "entrypoint", "platform",
                               "repair_count"});
}

}  // namespace ddap
