#pragma once

// Shared helpers for the test binaries: temporary directories, fixture access
// and the artifact documents of the canonical scripted session.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ddap/artifacts.hpp"
#include "ddap/backends.hpp"

namespace ddap::test {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        auto tmpl = (fs::temp_directory_path() / "ddap-test-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& child) const { return path_ / child; }

private:
    fs::path path_;
};

inline fs::path fixture(const std::string& name) { return fs::path(DDAP_FIXTURE_DIR) / name; }

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline Document read_json(const fs::path& path) { return Document::parse(read_file(path)); }

inline std::vector<ScriptedBackend::Entry> transcript(const std::string& name) {
    return ScriptedBackend::parse_transcript(read_json(fixture(name)));
}

inline std::string intent() {
    auto text = read_file(fixture("intent.txt"));
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
}

inline std::vector<std::string> answers() {
    return read_json(fixture("answers.json")).get<std::vector<std::string>>();
}

/// Raw envelope text as an agent would send it.
inline std::string envelope(const std::string& status, const std::string& message,
                            const std::optional<Document>& payload = std::nullopt) {
    Document doc{{"status", status}, {"message", message}};
    if (payload) doc["payload"] = *payload;
    return doc.dump();
}

inline ScriptedBackend::Entry reply(const std::string& stage, const std::string& status, const std::string& message,
                                    const std::optional<Document>& payload = std::nullopt) {
    return {stage, envelope(status, message, payload)};
}

/// The payload carried by entry `index` of the canonical transcript.
inline Document canonical_payload(std::size_t index) {
    const auto entries = transcript("canonical_transcript.json");
    return Document::parse(entries.at(index).response).at("payload");
}

// Indices into the canonical transcript.
inline constexpr std::size_t kProblemEntry = 3;
inline constexpr std::size_t kComputeEntry = 6;
inline constexpr std::size_t kPlanEntry = 7;
inline constexpr std::size_t kPipelinesEntry = 8;
inline constexpr std::size_t kCodeEntry = 9;

inline Document problem_doc() { return stamp_artifact(canonical_payload(kProblemEntry), ArtifactKind::problem_definition); }
inline Document compute_doc() { return stamp_artifact(canonical_payload(kComputeEntry), ArtifactKind::compute_spec); }
inline Document plan_doc() { return stamp_artifact(canonical_payload(kPlanEntry), ArtifactKind::preprocessing_plan); }

inline Document pipelines_doc() {
    auto doc = stamp_artifact(canonical_payload(kPipelinesEntry), ArtifactKind::pipeline_set);
    doc["preprocessing"] = canonical_payload(kPlanEntry);
    return doc;
}

inline Document code_doc(int candidate = 2) {
    auto doc = stamp_artifact(canonical_payload(kCodeEntry), ArtifactKind::code_artifact);
    doc["candidate_index"] = candidate;
    doc["repair_count"] = 0;
    return doc;
}

/// A code artifact consisting of one Python entrypoint.
inline Document python_code(const std::string& source, int candidate = 1) {
    return {{"artifact_kind", "code_artifact"},
            {"schema_version", kSchemaVersion},
            {"candidate_index", candidate},
            {"files", Document::array({{{"relative_path", "main.py"}, {"content", source}}})},
            {"entrypoint", "main.py"},
            {"platform", "python"},
            {"repair_count", 0}};
}

}  // namespace ddap::test
