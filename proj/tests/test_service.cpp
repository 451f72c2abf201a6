#include <doctest.h>

#include <future>

#include "service_support.hpp"

using namespace ddap;
using namespace ddap::test;

namespace {

/// Forwards to a scripted backend, but holds the first request until released.
class GatedBackend : public Backend {
public:
    explicit GatedBackend(Entries entries) : inner_(std::move(entries)), release_(gate_.get_future().share()) {}

    std::string complete(const ChatRequest& request) override {
        if (!entered_flag_.exchange(true)) entered_.set_value();
        release_.wait();
        return inner_.complete(request);
    }

    void wait_until_entered() { entered_.get_future().wait(); }
    void release() { gate_.set_value(); }

private:
    ScriptedBackend inner_;
    std::promise<void> gate_;
    std::shared_future<void> release_;
    std::promise<void> entered_;
    std::atomic<bool> entered_flag_{false};
};

std::string error_code(const ApiReply& r) { return r.body.at("error").at("code").get<std::string>(); }

}  // namespace

TEST_CASE("error codes map to HTTP statuses") {
    CHECK(http_status(ErrorCode::not_found) == 404);
    CHECK(http_status(ErrorCode::bad_stage) == 409);
    CHECK(http_status(ErrorCode::validation_failed) == 400);
    CHECK(http_status(ErrorCode::backend_failure) == 502);
    CHECK(http_status(ErrorCode::guardrail_exhausted) == 502);
    CHECK(http_status(ErrorCode::sandbox_error) == 500);
    CHECK(api_error_body(ErrorCode::bad_stage, "x") == Document{{"error", {{"code", "bad_stage"}, {"detail", "x"}}}});
}

TEST_CASE("a scripted session over HTTP") {
    Harness h(canonical());
    TestServer server(h.orchestrator);
    auto client = server.client();

    CHECK(api(client, "GET", "/api/health").body == Document{{"status", "ok"}});

    const auto created = api(client, "POST", "/api/sessions", {{"profile", {{"domain", "entomology"}, {"expertise", "intermediate"}}}});
    REQUIRE(created.status == 201);
    CHECK(created.body["stage"] == "problem_definition");
    const auto id = created.body["session_id"].get<std::string>();
    const auto base = "/api/sessions/" + id;

    auto turn = api(client, "POST", base + "/messages", {{"text", intent()}});
    REQUIRE(turn.status == 200);
    CHECK(turn.body["kind"] == "agent_question");
    CHECK(turn.body["message"] == "What kind of data do you have for the pest images, and roughly how many?");
    CHECK(turn.body["artifact_ref"].is_null());

    const auto all = answers();
    for (std::size_t i = 0; i < 3; ++i) turn = api(client, "POST", base + "/messages", {{"text", all[i]}});
    CHECK(turn.body["kind"] == "stage_complete");
    CHECK(turn.body["stage"] == "compute_spec");
    const auto a1_id = id + ".a1_problem";
    CHECK(turn.body["artifact_ref"]["path"] == "sessions/" + id + "/artifacts/a1_problem.json");

    const auto a1 = api(client, "GET", "/api/artifacts/" + a1_id);
    CHECK(a1.status == 200);
    CHECK(a1.body == h.store.load_artifact(h.orchestrator.resolve_ref(a1_id)));

    for (std::size_t i = 3; i < 6; ++i) turn = api(client, "POST", base + "/messages", {{"text", all[i]}});
    CHECK(turn.body["stage"] == "pipeline_generation");

    // Out-of-order and invalid requests.
    CHECK(error_code(api(client, "POST", base + "/pipelines")) == "bad_stage");
    CHECK(api(client, "POST", base + "/messages", {{"text", "more"}}).status == 409);
    CHECK(api(client, "POST", base + "/pipelines/select", {{"index", 1}}).status == 409);

    const auto plan = api(client, "POST", base + "/preprocessing");
    REQUIRE(plan.status == 200);
    CHECK(plan.body["document"]["artifact_kind"] == "preprocessing_plan");
    const auto set = api(client, "POST", base + "/pipelines");
    REQUIRE(set.status == 200);
    CHECK(set.body["document"]["candidates"].size() == 5);
    CHECK(set.body["stage"] == "code_generation");

    const auto bad_index = api(client, "POST", base + "/pipelines/select", {{"index", 9}});
    CHECK(bad_index.status == 400);
    CHECK(error_code(bad_index) == "validation_failed");
    CHECK(api(client, "POST", base + "/pipelines/select", {{"index", "two"}}).status == 400);
    CHECK(api(client, "POST", base + "/pipelines/select", {{"index", 2}}).body["selected_candidate"] == 2);

    const auto code = api(client, "POST", base + "/code");
    REQUIRE(code.status == 200);
    CHECK(code.body["document"]["candidate_index"] == 2);
    const auto code_id = id + ".a4_code_2";
    CHECK(code.body["artifact_ref"]["path"] == "sessions/" + id + "/artifacts/a4_code_2");

    const auto ran = api(client, "POST", "/api/code/" + code_id + "/execute");
    REQUIRE(ran.status == 200);
    CHECK(ran.body["result"]["succeeded"] == true);
    CHECK(ran.body["result"]["exit_status"] == 0);
    CHECK(ran.body["stage"] == "done");
    CHECK(api(client, "POST", "/api/code/" + code_id + "/repair").status == 409);

    const auto state = api(client, "GET", base);
    CHECK(state.body["stage"] == "done");
    CHECK(state.body["stage_index"] == 4);
    CHECK(state.body["profile"]["expertise"] == "intermediate");
    const auto listed = api(client, "GET", base + "/artifacts").body["artifacts"];
    CHECK(listed.size() == 5);
    CHECK(h.backend.remaining() == 0);
}

TEST_CASE("API errors") {
    Harness h({});
    TestServer server(h.orchestrator);
    auto client = server.client();
    const auto missing = new_session_id();

    const auto not_found = api(client, "GET", "/api/sessions/" + missing);
    CHECK(not_found.status == 404);
    CHECK(error_code(not_found) == "not_found");
    CHECK(not_found.body["error"]["detail"].get<std::string>().find(missing) != std::string::npos);
    CHECK(api(client, "GET", "/api/sessions/..%2Fetc").status == 404);
    CHECK(api(client, "GET", "/api/artifacts/" + missing + ".a1_problem").status == 404);
    CHECK(error_code(api(client, "GET", "/api/no/such/route")) == "not_found");
    CHECK(api(client, "POST", "/api/code/" + missing + ".a4_code_1/execute").status == 404);

    const auto id = api(client, "POST", "/api/sessions").body["session_id"].get<std::string>();
    const auto base = "/api/sessions/" + id;
    auto res = client.Post(base + "/messages", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(api(client, "POST", base + "/messages", Document::object()).status == 400);
    CHECK(api(client, "POST", base + "/messages", {{"text", ""}}).status == 400);
    CHECK(api(client, "POST", "/api/sessions", {{"profile", {{"domain", "x"}, {"expertise", "guru"}}}}).status == 400);
    CHECK(api(client, "POST", base + "/finalize").status == 409);
    CHECK(api(client, "POST", base + "/import", {{"ref", missing + ".a2_compute"}}).status == 404);

    // The scripted backend has nothing left to say: a backend failure.
    const auto drained = api(client, "POST", base + "/messages", {{"text", intent()}});
    CHECK(drained.status == 502);
    CHECK(error_code(drained) == "backend_failure");
}

TEST_CASE("guardrail exhaustion over HTTP") {
    Harness h({{"problem_definition", "no"}, {"problem_definition", "no"}, {"problem_definition", "no"}});
    TestServer server(h.orchestrator);
    auto client = server.client();
    const auto id = api(client, "POST", "/api/sessions").body["session_id"].get<std::string>();
    const auto r = api(client, "POST", "/api/sessions/" + id + "/messages", {{"text", intent()}});
    CHECK(r.status == 502);
    CHECK(error_code(r) == "guardrail_exhausted");
    CHECK(api(client, "GET", "/api/sessions/" + id).body["reprompt_counts"]["problem_definition"] == 2);
}

TEST_CASE("a session handles one request at a time") {
    TempDir root;
    ArtifactStore store(root.path());
    GatedBackend backend(canonical());
    Orchestrator orch(store, backend);
    TestServer server(orch);
    auto client = server.client();
    const auto id = api(client, "POST", "/api/sessions").body["session_id"].get<std::string>();
    const auto other = api(client, "POST", "/api/sessions").body["session_id"].get<std::string>();

    auto first = std::async(std::launch::async, [&] {
        auto c = server.client();
        return api(c, "POST", "/api/sessions/" + id + "/messages", {{"text", intent()}});
    });
    backend.wait_until_entered();
    const auto busy = api(client, "POST", "/api/sessions/" + id + "/messages", {{"text", "again"}});
    CHECK(busy.status == 409);
    CHECK(error_code(busy) == "bad_stage");
    CHECK(busy.body["error"]["detail"].get<std::string>().find("busy") != std::string::npos);
    // Other sessions are unaffected.
    CHECK(api(client, "GET", "/api/sessions/" + other).status == 200);
    backend.release();
    CHECK(first.get().status == 200);
    CHECK(api(client, "GET", "/api/sessions/" + id).status == 200);
}

TEST_CASE("a restarted service resumes sessions") {
    TempDir root;
    ArtifactStore store(root.path());
    std::string id;
    {
        ScriptedBackend backend(slice("canonical_transcript.json", 0, 2));
        Orchestrator orch(store, backend);
        TestServer server(orch);
        auto client = server.client();
        id = api(client, "POST", "/api/sessions").body["session_id"].get<std::string>();
        api(client, "POST", "/api/sessions/" + id + "/messages", {{"text", intent()}});
        api(client, "POST", "/api/sessions/" + id + "/messages", {{"text", answers()[0]}});
    }
    ScriptedBackend backend(slice("canonical_transcript.json", 2, 10));
    Orchestrator orch(store, backend);
    TestServer server(orch);
    auto client = server.client();
    const auto state = api(client, "GET", "/api/sessions/" + id);
    REQUIRE(state.status == 200);
    CHECK(state.body["conversations"]["problem_definition"].size() == 4);
    const auto turn = api(client, "POST", "/api/sessions/" + id + "/messages", {{"text", answers()[1]}});
    CHECK(turn.body["message"] == "How will you judge success: which metrics matter most?");
}

TEST_CASE("importing over HTTP") {
    Harness h(concat({canonical(), slice("canonical_transcript.json", 3, 4), slice("canonical_transcript.json", 7, 8)}));
    const auto donor = run_headless(h.orchestrator, intent(), answers());
    TestServer server(h.orchestrator);
    auto client = server.client();
    const auto id = api(client, "POST", "/api/sessions").body["session_id"].get<std::string>();
    const auto base = "/api/sessions/" + id;
    CHECK(api(client, "POST", base + "/import", {{"ref", donor.compute.id()}}).status == 409);
    api(client, "POST", base + "/messages", {{"text", intent()}});
    const auto imported = api(client, "POST", base + "/import", {{"ref", donor.compute.id()}});
    REQUIRE(imported.status == 200);
    CHECK(imported.body["stage"] == "pipeline_generation");
    CHECK(imported.body["artifact_ref"]["content_hash"] == donor.compute.content_hash);
    CHECK(api(client, "POST", base + "/preprocessing").status == 200);
}

TEST_CASE("the API and the command line write identical artifacts") {
    Harness h(canonical());
    TestServer server(h.orchestrator);
    auto client = server.client();
    const auto api_session = drive_canonical_over_http(client);

    TempDir cli_dir;
    const auto cli_session = headless_via_cli(cli_dir.path());

    const auto from_api = tree(h.store.session_dir(api_session) / "artifacts");
    const auto from_cli = tree(cli_dir.path() / "sessions" / cli_session / "artifacts");
    CHECK(from_api.size() == 7);
    CHECK(from_api == from_cli);
}
