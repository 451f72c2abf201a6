#include "ddap/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace fs = std::filesystem;

namespace ddap {

namespace {

std::string random_hex(std::size_t bytes) {
    thread_local std::mt19937_64 engine{std::random_device{}()};
    std::string out;
    out.reserve(bytes * 2);
    for (std::size_t i = 0; i < bytes; ++i) {
        out += fmt::format("{:02x}", static_cast<unsigned>(engine() & 0xFF));
    }
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError(fmt::format("cannot open {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_all(int fd, std::string_view bytes, const fs::path& path) {
    while (!bytes.empty()) {
        const auto n = ::write(fd, bytes.data(), bytes.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw StorageError(fmt::format("write {}: {}", path.string(), std::strerror(errno)));
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

void write_file_synced(const fs::path& path, std::string_view bytes) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) throw StorageError(fmt::format("create {}: {}", path.string(), std::strerror(errno)));
    try {
        write_all(fd, bytes, path);
        if (::fsync(fd) != 0) {
            throw StorageError(fmt::format("fsync {}: {}", path.string(), std::strerror(errno)));
        }
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StorageError(fmt::format("create directory {}: {}", dir.string(), ec.message()));
}

// Removes a temporary path unless released.
class TempGuard {
public:
    explicit TempGuard(fs::path path) : path_(std::move(path)) {}
    ~TempGuard() {
        if (!path_.empty()) {
            std::error_code ec;
            fs::remove_all(path_, ec);
        }
    }
    TempGuard(const TempGuard&) = delete;
    TempGuard& operator=(const TempGuard&) = delete;
    void release() { path_.clear(); }

private:
    fs::path path_;
};

std::string stem_of(const std::string& path) {
    auto name = fs::path(path).filename().string();
    if (name.ends_with(".json")) name.resize(name.size() - 5);
    return name;
}

}  // namespace

std::string ArtifactRef::id() const { return fmt::format("{}.{}", session_id, stem_of(path)); }

void to_json(Document& j, const ArtifactRef& ref) {
    j = {{"id", ref.id()},
         {"session_id", ref.session_id},
         {"artifact_kind", to_string(ref.kind)},
         {"path", ref.path},
         {"content_hash", ref.content_hash}};
    if (ref.candidate_index) j["candidate_index"] = *ref.candidate_index;
}

void from_json(const Document& j, ArtifactRef& ref) {
    ref.session_id = j.at("session_id").get<std::string>();
    ref.kind = parse_artifact_kind(j.at("artifact_kind").get<std::string>());
    ref.path = j.at("path").get<std::string>();
    ref.content_hash = j.at("content_hash").get<std::string>();
    if (auto it = j.find("candidate_index"); it != j.end() && !it->is_null()) {
        ref.candidate_index = it->get<int>();
    } else {
        ref.candidate_index.reset();
    }
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw StorageError("SHA-256 digest failed");
    }
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

bool is_valid_session_id(std::string_view id) {
    if (id.empty() || id.size() > 128) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
               c == '-';
    });
}

std::string new_session_id() { return random_hex(16); }

ArtifactStore::ArtifactStore(fs::path root, ValidationOptions validation)
    : root_(std::move(root)), validation_(validation) {}

fs::path ArtifactStore::session_dir(std::string_view session_id) const {
    return root_ / "sessions" / std::string(session_id);
}

fs::path ArtifactStore::checked_session_dir(std::string_view session_id) const {
    if (!is_valid_session_id(session_id)) {
        throw NotFoundError(fmt::format("invalid session id '{}'", session_id));
    }
    return session_dir(session_id);
}

bool ArtifactStore::session_exists(std::string_view session_id) const {
    if (!is_valid_session_id(session_id)) return false;
    std::error_code ec;
    return fs::exists(session_dir(session_id) / "session.json", ec);
}

std::string ArtifactStore::stem_for(ArtifactKind kind, const Document& document) const {
    switch (kind) {
        case ArtifactKind::problem_definition: return "a1_problem";
        case ArtifactKind::compute_spec: return "a2_compute";
        case ArtifactKind::preprocessing_plan: return "a3_preprocessing";
        case ArtifactKind::pipeline_set: return "a3_pipelines";
        case ArtifactKind::code_artifact: {
            const int k = document.at("candidate_index").get<int>();
            const int n = document.at("repair_count").get<int>();
            return n == 0 ? fmt::format("a4_code_{}", k) : fmt::format("a4_code_{}_r{}", k, n);
        }
    }
    throw InputError("unknown artifact kind");
}

void ArtifactStore::write_file_atomic(const fs::path& target, std::string_view bytes) {
    ensure_dir(target.parent_path());
    const auto tmp = target.parent_path() / fmt::format(".{}.tmp-{}", target.filename().string(), random_hex(6));
    TempGuard guard(tmp);
    write_file_synced(tmp, bytes);
    if (fault_injector_) fault_injector_("before_rename");
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw StorageError(fmt::format("rename into {}: {}", target.string(), ec.message()));
    guard.release();
}

void ArtifactStore::write_code_dir_atomic(const fs::path& target, const Document& document) {
    ensure_dir(target.parent_path());
    const auto tmp = target.parent_path() / fmt::format(".{}.tmp-{}", target.filename().string(), random_hex(6));
    TempGuard guard(tmp);
    ensure_dir(tmp);
    Document manifest = document;
    for (auto& f : manifest["files"]) f.erase("content");
    write_file_synced(tmp / "manifest.json", canonical_dump(manifest));
    for (const auto& f : document["files"]) {
        const fs::path file = tmp / f["relative_path"].get<std::string>();
        ensure_dir(file.parent_path());
        write_file_synced(file, f["content"].get_ref<const std::string&>());
    }
    if (fault_injector_) fault_injector_("before_rename");

    std::error_code ec;
    std::optional<fs::path> old;
    if (fs::exists(target, ec)) {
        old = target.parent_path() / fmt::format(".{}.old-{}", target.filename().string(), random_hex(6));
        fs::rename(target, *old, ec);
        if (ec) throw StorageError(fmt::format("move aside {}: {}", target.string(), ec.message()));
    }
    fs::rename(tmp, target, ec);
    if (ec) {
        if (old) fs::rename(*old, target, ec);
        throw StorageError(fmt::format("rename into {}: {}", target.string(), ec.message()));
    }
    guard.release();
    if (old) fs::remove_all(*old, ec);
}

ArtifactRef ArtifactStore::persist_artifact(std::string_view session_id, ArtifactKind kind,
                                            const Document& document) {
    const auto dir = checked_session_dir(session_id) / "artifacts";
    auto report = validate_artifact(kind, document, validation_);
    if (!report.valid()) throw ValidationError(kind, std::move(report));

    const auto canonical = canonical_dump(document);
    const auto stem = stem_for(kind, document);
    ArtifactRef ref;
    ref.session_id = std::string(session_id);
    ref.kind = kind;
    ref.content_hash = sha256_hex(canonical);
    if (kind == ArtifactKind::code_artifact) {
        ref.candidate_index = document.at("candidate_index").get<int>();
        ref.path = fmt::format("sessions/{}/artifacts/{}", session_id, stem);
        write_code_dir_atomic(dir / stem, document);
    } else {
        ref.path = fmt::format("sessions/{}/artifacts/{}.json", session_id, stem);
        write_file_atomic(dir / (stem + ".json"), canonical);
    }
    return ref;
}

Document ArtifactStore::load_code_dir(const fs::path& dir) const {
    const auto manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw NotFoundError(fmt::format("artifact not found: {}", dir.string()));
    }
    Document doc;
    try {
        doc = Document::parse(read_file(manifest_path));
        for (auto& f : doc.at("files")) {
            const auto rel = f.at("relative_path").get<std::string>();
            const auto path = dir / rel;
            if (!fs::exists(path)) {
                throw CorruptionError(fmt::format("code file missing: {}", path.string()));
            }
            f["content"] = read_file(path);
        }
    } catch (const Document::exception& e) {
        throw CorruptionError(fmt::format("unreadable code artifact {}: {}", dir.string(), e.what()));
    }
    return doc;
}

Document ArtifactStore::load_artifact(const ArtifactRef& ref) const {
    checked_session_dir(ref.session_id);
    const auto path = root_ / ref.path;
    std::error_code ec;
    if (!fs::exists(path, ec)) throw NotFoundError(fmt::format("artifact not found: {}", ref.path));

    Document doc;
    std::string hash;
    if (ref.kind == ArtifactKind::code_artifact) {
        doc = load_code_dir(path);
        try {
            hash = sha256_hex(canonical_dump(doc));
        } catch (const Document::exception&) {
            throw CorruptionError(fmt::format("code artifact {} is not valid UTF-8", ref.path));
        }
    } else {
        const auto bytes = read_file(path);
        hash = sha256_hex(bytes);
        if (hash == ref.content_hash) doc = Document::parse(bytes);
    }
    if (hash != ref.content_hash) {
        throw CorruptionError(fmt::format("content hash mismatch for {}: expected {}, found {}",
                                          ref.path, ref.content_hash, hash));
    }
    return doc;
}

ArtifactRef ArtifactStore::import_artifact(std::string_view target_session_id, const ArtifactRef& source) {
    const auto doc = load_artifact(source);
    const auto dir = checked_session_dir(target_session_id) / "artifacts";
    ArtifactRef ref = source;
    ref.session_id = std::string(target_session_id);
    const auto name = fs::path(source.path).filename().string();
    ref.path = fmt::format("sessions/{}/artifacts/{}", target_session_id, name);
    if (source.kind == ArtifactKind::code_artifact) {
        write_code_dir_atomic(dir / name, doc);
    } else {
        write_file_atomic(dir / name, read_file(root_ / source.path));
    }
    return ref;
}

void ArtifactStore::save_session(std::string_view session_id, const Document& state) {
    write_file_atomic(checked_session_dir(session_id) / "session.json", state.dump(2) + "\n");
}

std::optional<Document> ArtifactStore::load_session(std::string_view session_id) const {
    if (!session_exists(session_id)) return std::nullopt;
    try {
        return Document::parse(read_file(session_dir(session_id) / "session.json"));
    } catch (const Document::parse_error& e) {
        throw CorruptionError(fmt::format("session {} state unreadable: {}", session_id, e.what()));
    }
}

void ArtifactStore::append_jsonl(std::string_view session_id, std::string_view stream,
                                 std::string_view name, const Document& entry) {
    const auto dir = checked_session_dir(session_id) / std::string(stream);
    ensure_dir(dir);
    std::ofstream out(dir / fmt::format("{}.jsonl", name), std::ios::app | std::ios::binary);
    if (!out) throw StorageError(fmt::format("cannot append to {}/{}", stream, name));
    out << entry.dump(-1, ' ', false, Document::error_handler_t::replace) << '\n';
}

fs::path ArtifactStore::make_workspace(std::string_view session_id, std::string_view label) {
    const auto base = checked_session_dir(session_id) / "workspaces";
    ensure_dir(base);
    for (int attempt = 0; attempt < 16; ++attempt) {
        const auto dir = base / fmt::format("{}-{}", label, random_hex(4));
        std::error_code ec;
        if (fs::create_directory(dir, ec)) return dir;
    }
    throw StorageError("could not create a fresh workspace directory");
}

}  // namespace ddap
