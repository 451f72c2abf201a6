#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "ddap/artifacts.hpp"

namespace ddap {

struct ArtifactRef {
    std::string session_id;
    ArtifactKind kind = ArtifactKind::problem_definition;
    std::optional<int> candidate_index;  // code artifacts only
    std::string path;                    // relative to the store root
    std::string content_hash;            // lowercase hex SHA-256

    /// "<session_id>.<file stem>", e.g. "3f9c….a4_code_2_r1". Safe in URLs.
    std::string id() const;

    bool operator==(const ArtifactRef&) const = default;
};

void to_json(Document& j, const ArtifactRef& ref);
void from_json(const Document& j, ArtifactRef& ref);

std::string sha256_hex(std::string_view bytes);

/// Session ids are generated as 32 lowercase hex digits; anything outside
/// [A-Za-z0-9_-] is rejected so ids can be used as directory names.
bool is_valid_session_id(std::string_view id);
std::string new_session_id();

/// On-disk layout:
///   sessions/<id>/session.json
///   sessions/<id>/artifacts/{a1_problem.json, a2_compute.json, a3_preprocessing.json,
///                            a3_pipelines.json, a4_code_<k>[_r<n>]/{manifest.json, files...}}
///   sessions/<id>/conversations/<stage>.jsonl
///   sessions/<id>/logs/<stage>.jsonl
///   sessions/<id>/workspaces/<run>/
class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path root, ValidationOptions validation = {});

    const std::filesystem::path& root() const noexcept { return root_; }
    const ValidationOptions& validation() const noexcept { return validation_; }

    /// Validates, then writes atomically. Throws ValidationError (nothing
    /// written) or StorageError.
    ArtifactRef persist_artifact(std::string_view session_id, ArtifactKind kind, const Document& document);

    /// Throws NotFoundError for a missing file, CorruptionError when the bytes
    /// no longer hash to `ref.content_hash`.
    Document load_artifact(const ArtifactRef& ref) const;

    /// Copies the source artifact's stored bytes into `target_session_id`.
    ArtifactRef import_artifact(std::string_view target_session_id, const ArtifactRef& source);

    std::filesystem::path session_dir(std::string_view session_id) const;
    bool session_exists(std::string_view session_id) const;

    void save_session(std::string_view session_id, const Document& state);
    std::optional<Document> load_session(std::string_view session_id) const;

    /// Appends one JSON line to sessions/<id>/<stream>/<name>.jsonl.
    void append_jsonl(std::string_view session_id, std::string_view stream, std::string_view name,
                      const Document& entry);

    /// Creates and returns a new empty directory under the session's workspaces.
    std::filesystem::path make_workspace(std::string_view session_id, std::string_view label);

    /// Test hook invoked between writing a temporary file and renaming it
    /// into place; throwing from it simulates a crash at that point.
    void set_fault_injector(std::function<void(std::string_view point)> injector) {
        fault_injector_ = std::move(injector);
    }

private:
    std::filesystem::path checked_session_dir(std::string_view session_id) const;
    std::string stem_for(ArtifactKind kind, const Document& document) const;
    void write_file_atomic(const std::filesystem::path& target, std::string_view bytes);
    void write_code_dir_atomic(const std::filesystem::path& target, const Document& document);
    Document load_code_dir(const std::filesystem::path& dir) const;

    std::filesystem::path root_;
    ValidationOptions validation_;
    std::function<void(std::string_view)> fault_injector_;
};

}  // namespace ddap
