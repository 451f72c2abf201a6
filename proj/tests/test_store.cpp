#include <doctest.h>

#include "ddap/store.hpp"
#include "support.hpp"

using namespace ddap;
using namespace ddap::test;

namespace {

std::size_t count_entries(const fs::path& dir) {
    std::error_code ec;
    if (!fs::exists(dir, ec)) return 0;
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::recursive_directory_iterator(dir)) ++n;
    return n;
}

}  // namespace

TEST_CASE("sha-256 known answers") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("session ids") {
    const auto a = new_session_id();
    const auto b = new_session_id();
    CHECK(a != b);
    CHECK(a.size() == 32);
    CHECK(is_valid_session_id(a));
    CHECK_FALSE(is_valid_session_id(""));
    CHECK_FALSE(is_valid_session_id("../etc"));
    CHECK_FALSE(is_valid_session_id("a.b"));
    CHECK_FALSE(is_valid_session_id(std::string(129, 'a')));
}

TEST_CASE("persist and load") {
    TempDir root;
    ArtifactStore store(root.path());
    const auto session = new_session_id();

    SUBCASE("round trip for every kind, in the documented layout") {
        const std::vector<std::pair<ArtifactKind, Document>> docs{
            {ArtifactKind::problem_definition, problem_doc()},   {ArtifactKind::compute_spec, compute_doc()},
            {ArtifactKind::preprocessing_plan, plan_doc()},      {ArtifactKind::pipeline_set, pipelines_doc()},
            {ArtifactKind::code_artifact, code_doc(3)},
        };
        const std::vector<std::string> paths{"a1_problem.json", "a2_compute.json", "a3_preprocessing.json",
                                             "a3_pipelines.json", "a4_code_3"};
        for (std::size_t i = 0; i < docs.size(); ++i) {
            const auto& [kind, doc] = docs[i];
            const auto ref = store.persist_artifact(session, kind, doc);
            CHECK(ref.kind == kind);
            CHECK(ref.path == "sessions/" + session + "/artifacts/" + paths[i]);
            CHECK(fs::exists(root.path() / ref.path));
            CHECK(ref.content_hash == sha256_hex(canonical_dump(doc)));
            CHECK(store.load_artifact(ref) == doc);
        }
    }
    SUBCASE("json artifacts are stored as canonical bytes") {
        const auto ref = store.persist_artifact(session, ArtifactKind::compute_spec, compute_doc());
        CHECK(read_file(root.path() / ref.path) == canonical_dump(compute_doc()));
    }
    SUBCASE("code artifacts are a directory of verbatim files plus a manifest") {
        const auto doc = code_doc(2);
        const auto ref = store.persist_artifact(session, ArtifactKind::code_artifact, doc);
        REQUIRE(ref.candidate_index == 2);
        const auto dir = root.path() / ref.path;
        CHECK(fs::is_directory(dir));
        for (const auto& f : doc["files"]) {
            CHECK(read_file(dir / f["relative_path"].get<std::string>()) == f["content"].get<std::string>());
        }
        const auto manifest = read_json(dir / "manifest.json");
        CHECK_FALSE(manifest["files"][0].contains("content"));
        CHECK(ref.id() == session + ".a4_code_2");

        auto repaired = doc;
        repaired["repair_count"] = 1;
        const auto rref = store.persist_artifact(session, ArtifactKind::code_artifact, repaired);
        CHECK(rref.path == "sessions/" + session + "/artifacts/a4_code_2_r1");
        CHECK(fs::exists(dir));  // the original stays
    }
    SUBCASE("identical content gives identical hashes") {
        const auto a = store.persist_artifact(session, ArtifactKind::problem_definition, problem_doc());
        const auto b = store.persist_artifact(session, ArtifactKind::problem_definition, problem_doc());
        CHECK(a.content_hash == b.content_hash);
        CHECK(a == b);
    }
    SUBCASE("invalid documents are rejected and nothing is written") {
        auto doc = pipelines_doc();
        doc["candidates"].erase(0);
        const auto before = count_entries(store.session_dir(session));
        CHECK_THROWS_AS(store.persist_artifact(session, ArtifactKind::pipeline_set, doc), ValidationError);
        CHECK(count_entries(store.session_dir(session)) == before);
    }
    SUBCASE("bad session ids are rejected") {
        CHECK_THROWS_AS(store.persist_artifact("../x", ArtifactKind::problem_definition, problem_doc()), NotFoundError);
    }
}

TEST_CASE("corruption and missing files") {
    TempDir root;
    ArtifactStore store(root.path());
    const auto session = new_session_id();

    SUBCASE("one flipped byte") {
        const auto ref = store.persist_artifact(session, ArtifactKind::compute_spec, compute_doc());
        auto bytes = read_file(root.path() / ref.path);
        const auto pos = bytes.find("PyTorch");
        REQUIRE(pos != std::string::npos);
        bytes[pos] = 'Q';
        std::ofstream(root.path() / ref.path, std::ios::binary | std::ios::trunc) << bytes;
        CHECK_THROWS_AS(store.load_artifact(ref), CorruptionError);
    }
    SUBCASE("edited code file") {
        const auto ref = store.persist_artifact(session, ArtifactKind::code_artifact, code_doc());
        std::ofstream(root.path() / ref.path / "main.py", std::ios::app) << "# tampered\n";
        CHECK_THROWS_AS(store.load_artifact(ref), CorruptionError);
    }
    SUBCASE("dangling reference") {
        auto ref = store.persist_artifact(session, ArtifactKind::compute_spec, compute_doc());
        fs::remove(root.path() / ref.path);
        CHECK_THROWS_AS(store.load_artifact(ref), NotFoundError);
    }
}

TEST_CASE("a crash before the rename leaves no partial file") {
    TempDir root;
    ArtifactStore store(root.path());
    const auto session = new_session_id();
    const auto first = store.persist_artifact(session, ArtifactKind::problem_definition, problem_doc());
    const auto original = read_file(root.path() / first.path);

    store.set_fault_injector([](std::string_view point) {
        if (point == "before_rename") throw StorageError("simulated crash");
    });
    auto changed = problem_doc();
    changed["objective"] = "Something else entirely.";
    CHECK_THROWS_AS(store.persist_artifact(session, ArtifactKind::problem_definition, changed), StorageError);
    CHECK_THROWS_AS(store.persist_artifact(session, ArtifactKind::code_artifact, code_doc()), StorageError);

    // The earlier version is intact, the new code directory never appeared,
    // and no temporary files are left behind.
    CHECK(read_file(root.path() / first.path) == original);
    CHECK(store.load_artifact(first) == problem_doc());
    CHECK_FALSE(fs::exists(store.session_dir(session) / "artifacts" / "a4_code_2"));
    for (const auto& e : fs::directory_iterator(store.session_dir(session) / "artifacts")) {
        CHECK_MESSAGE(e.path().filename().string().front() != '.', e.path().string());
    }
}

TEST_CASE("import copies bytes into another session") {
    TempDir root;
    ArtifactStore store(root.path());
    const auto source_session = new_session_id();
    const auto target_session = new_session_id();
    const auto src = store.persist_artifact(source_session, ArtifactKind::compute_spec, compute_doc());
    const auto imported = store.import_artifact(target_session, src);
    CHECK(imported.session_id == target_session);
    CHECK(imported.content_hash == src.content_hash);
    CHECK(read_file(root.path() / imported.path) == read_file(root.path() / src.path));

    const auto code_src = store.persist_artifact(source_session, ArtifactKind::code_artifact, code_doc());
    const auto code_imported = store.import_artifact(target_session, code_src);
    CHECK(store.load_artifact(code_imported) == code_doc());
}

TEST_CASE("sessions, logs and workspaces") {
    TempDir root;
    ArtifactStore store(root.path());
    const auto session = new_session_id();
    CHECK_FALSE(store.session_exists(session));
    CHECK_FALSE(store.load_session(session).has_value());
    store.save_session(session, Document{{"stage", "compute_spec"}});
    CHECK(store.session_exists(session));
    CHECK((*store.load_session(session))["stage"] == "compute_spec");

    store.append_jsonl(session, "logs", "compute_spec", Document{{"n", 1}});
    store.append_jsonl(session, "logs", "compute_spec", Document{{"n", 2}});
    CHECK(read_file(store.session_dir(session) / "logs" / "compute_spec.jsonl") == "{\"n\":1}\n{\"n\":2}\n");

    const auto w1 = store.make_workspace(session, "run");
    const auto w2 = store.make_workspace(session, "run");
    CHECK(w1 != w2);
    CHECK(fs::is_empty(w1));
}
