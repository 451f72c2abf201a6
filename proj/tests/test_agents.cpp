#include <doctest.h>

#include <atomic>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "ddap/agents.hpp"
#include "ddap/backends.hpp"
#include "support.hpp"

using namespace ddap;
using namespace ddap::test;

namespace {

constexpr RetryPolicy kFastRetry{3, std::chrono::milliseconds(1), 2.0};

/// Fails with a transient error `failures` times, then answers.
class FlakyBackend : public Backend {
public:
    FlakyBackend(int failures, std::string answer) : failures_(failures), answer_(std::move(answer)) {}

    std::string complete(const ChatRequest& request) override {
        ++calls;
        last = request;
        if (calls <= failures_) throw TransientBackendError("connection reset");
        return answer_;
    }

    int calls = 0;
    ChatRequest last;

private:
    int failures_;
    std::string answer_;
};

/// Local chat-completion stub. `handler` decides each response.
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return fmt::format("http://127.0.0.1:{}/v1", port_); }

    std::atomic<int> hits{0};

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion(const std::string& content) {
    return Document{{"choices", Document::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

}  // namespace

TEST_CASE("role configurations") {
    for (const auto& config : {roles::problem_definer(), roles::compute_specifier(), roles::preprocessing_designer(),
                               roles::pipeline_designer(), roles::code_generator(), roles::code_repairer()}) {
        CHECK_NOTHROW(validate_config(config));
        CHECK_FALSE(config.guardrail_checklist.empty());
        CHECK(config.max_reprompt == 2);
        CHECK(config.role_text.find("\"status\"") != std::string::npos);
    }
    CHECK(roles::problem_definer().temperature == doctest::Approx(0.7));
    CHECK(roles::compute_specifier().temperature == doctest::Approx(0.7));
    CHECK(roles::pipeline_designer().temperature == doctest::Approx(0.4));
    CHECK(roles::code_generator().temperature == doctest::Approx(0.2));
    CHECK(roles::code_repairer().role_text.find("repair") != std::string::npos);

    AgentConfig bad = roles::problem_definer();
    bad.temperature = 3.0;
    CHECK_THROWS_AS(validate_config(bad), InputError);
    bad = roles::problem_definer();
    bad.role_text.clear();
    CHECK_THROWS_AS(validate_config(bad), InputError);
    bad = roles::problem_definer();
    bad.max_reprompt = -1;
    CHECK_THROWS_AS(validate_config(bad), InputError);
}

TEST_CASE("envelope parsing") {
    SUBCASE("question") {
        const auto env = parse_envelope(R"({"status":"question","message":"How many images?"})");
        CHECK(env.status == EnvelopeStatus::question);
        CHECK(env.message == "How many images?");
        CHECK_FALSE(env.payload.has_value());
    }
    SUBCASE("final with payload") {
        const auto env = parse_envelope(R"({"status":"final","message":"done","payload":{"a":1}})");
        CHECK(env.status == EnvelopeStatus::final);
        REQUIRE(env.payload.has_value());
        CHECK((*env.payload)["a"] == 1);
    }
    SUBCASE("malformed") {
        for (const char* raw : {
                 "Sure! Here is what I think.",
                 "",
                 "[1,2]",
                 R"({"status":"question"})",
                 R"({"status":"maybe","message":"x"})",
                 R"({"status":"final","message":"x","payload":[1]})",
                 R"({"status":"final","message":"x","extra":1})",
                 R"({"status":"final","message":"x"} trailing)",
                 R"({"status":"question","message":"a"}{"status":"question","message":"b"})",
             }) {
            CHECK_THROWS_AS_MESSAGE(parse_envelope(raw), EnvelopeParseError, raw);
        }
    }
    SUBCASE("the raw reply is kept") {
        try {
            parse_envelope("not json");
            FAIL("expected a parse error");
        } catch (const EnvelopeParseError& e) {
            CHECK(e.raw() == "not json");
            CHECK(e.code() == ErrorCode::validation_failed);
        }
    }
}

TEST_CASE("prompt rendering") {
    AgentConfig config;
    config.role_text = "You are a test agent.";
    config.guardrail_checklist = {"Be brief.", "Ask one question."};
    const auto a1 = problem_doc();
    const std::vector<PromptArtifact> prior{{ArtifactKind::problem_definition, a1}};
    const std::vector<Snippet> snippets{{"notes.txt", "Jute pests are insects.", 2.0}};
    const std::vector<ConversationTurn> turns{{Speaker::user, "hello", "t0"}, {Speaker::agent, "hi", "t1"}};

    const auto prompt = render_prompt(config, prior, snippets, turns);
    const std::string expected = "You are a test agent.\n\nGuardrails:\n1. Be brief.\n2. Ask one question.\n"
                                 "\n### Artifact: problem_definition\n" +
                                 canonical_dump(a1) +
                                 "\n"
                                 "\n### Context: notes.txt\nJute pests are insects.\n"
                                 "\n### Conversation\n[user] hello\n[agent] hi\n";
    CHECK(prompt == expected);
    CHECK(render_prompt(config, prior, snippets, turns) == prompt);
}

TEST_CASE("code artifacts appear verbatim in prompts") {
    const auto code = code_doc();
    const auto section = render_artifact_section({ArtifactKind::code_artifact, code});
    for (const auto& f : code["files"]) {
        CHECK(section.find(f["content"].get<std::string>()) != std::string::npos);
        CHECK(section.find("--- file: " + f["relative_path"].get<std::string>() + " ---") != std::string::npos);
    }
}

TEST_CASE("retrieval") {
    const std::vector<Snippet> corpus{
        {"b.txt", "jute pest images", 0},
        {"a.txt", "jute fibre", 0},
        {"c.txt", "stock prices", 0},
        {"d.txt", "Pest PEST jute photos", 0},
    };
    const auto r = retrieve_context("Jute pest photos", corpus, 3);
    REQUIRE(r.snippets.size() == 3);
    CHECK(r.snippets[0].source_id == "d.txt");
    CHECK(r.snippets[0].score == 3);
    CHECK(r.snippets[1].source_id == "b.txt");
    CHECK(r.snippets[2].source_id == "a.txt");
    CHECK(retrieve_context("weather", corpus, 2).snippets.empty());
    CHECK_THROWS_AS(retrieve_context("x", corpus, 0), InputError);

    TempDir dir;
    CHECK(retrieve_context("x", dir / "missing", 2).corpus_missing);
    std::ofstream(dir / "one.md") << "pest control notes";
    const auto from_dir = retrieve_context("pest", dir.path(), 2);
    CHECK_FALSE(from_dir.corpus_missing);
    REQUIRE(from_dir.snippets.size() == 1);
    CHECK(from_dir.snippets[0].source_id == "one.md");
}

TEST_CASE("send_turn retries transient failures") {
    SUBCASE("recovers within the attempt budget") {
        FlakyBackend backend(2, "ok");
        std::vector<Document> log;
        const auto reply = send_turn(roles::code_generator(), backend, "prompt", "code_generation", kFastRetry,
                                     [&](const Document& e) { log.push_back(e); });
        CHECK(reply == "ok");
        CHECK(backend.calls == 3);
        CHECK(backend.last.temperature == doctest::Approx(0.2));
        CHECK(backend.last.stage == "code_generation");
        CHECK(log.front()["type"] == "request");
        CHECK(log.back()["type"] == "response");
    }
    SUBCASE("gives up after the last attempt") {
        FlakyBackend backend(5, "ok");
        try {
            send_turn(roles::code_generator(), backend, "prompt", "code_generation", kFastRetry);
            FAIL("expected exhaustion");
        } catch (const RetryExhaustedError& e) {
            CHECK(e.attempts() == 3);
            CHECK(e.code() == ErrorCode::backend_failure);
        }
        CHECK(backend.calls == 3);
    }
}

TEST_CASE("http backend against a local stub") {
    SUBCASE("three server errors exhaust the retries") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        });
        HttpBackend backend({stub.base_url(), "test-model", "", std::chrono::seconds(5)});
        CHECK_THROWS_AS(send_turn(roles::problem_definer(), backend, "p", "problem_definition", kFastRetry),
                        RetryExhaustedError);
        CHECK(stub.hits == 3);
    }
    SUBCASE("request shape and success after a 429") {
        Document seen;
        std::string auth;
        std::atomic<int> n{0};
        StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
            if (n++ == 0) {
                res.status = 429;
                return;
            }
            seen = Document::parse(req.body);
            auth = req.get_header_value("Authorization");
            res.set_content(completion(R"({"status":"question","message":"Q?"})"), "application/json");
        });
        HttpBackend backend({stub.base_url(), "test-model", "secret", std::chrono::seconds(5)});
        const auto reply = send_turn(roles::problem_definer(), backend, "the prompt", "problem_definition", kFastRetry);
        CHECK(reply == R"({"status":"question","message":"Q?"})");
        CHECK(stub.hits == 2);
        CHECK(seen["model"] == "test-model");
        CHECK(seen["messages"][0]["role"] == "user");
        CHECK(seen["messages"][0]["content"] == "the prompt");
        CHECK(seen["temperature"].get<double>() == doctest::Approx(0.7));
        CHECK(auth == "Bearer secret");
    }
    SUBCASE("client errors are not retried") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
        HttpBackend backend({stub.base_url(), "m", "", std::chrono::seconds(5)});
        CHECK_THROWS_AS(send_turn(roles::problem_definer(), backend, "p", "problem_definition", kFastRetry),
                        BackendError);
        CHECK(stub.hits == 1);
    }
    SUBCASE("unreachable server") {
        HttpBackend backend({"http://127.0.0.1:1/v1", "m", "", std::chrono::seconds(1)});
        CHECK_THROWS_AS(send_turn(roles::problem_definer(), backend, "p", "problem_definition", kFastRetry),
                        RetryExhaustedError);
    }
    SUBCASE("malformed completion body") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"choices\":[]}", "application/json");
        });
        HttpBackend backend({stub.base_url(), "m", "", std::chrono::seconds(5)});
        CHECK_THROWS_AS(backend.complete({"problem_definition", AgentId::problem_definer, "p", 0.7}), BackendError);
    }
}

TEST_CASE("scripted backend") {
    ScriptedBackend backend({{std::string("problem_definition"), "one"}, {std::nullopt, "two"}});
    CHECK(backend.complete({"problem_definition", AgentId::problem_definer, "p", 0.7}) == "one");
    CHECK(backend.complete({"anything", AgentId::problem_definer, "p", 0.7}) == "two");
    CHECK_THROWS_AS(backend.complete({"x", AgentId::problem_definer, "p", 0.7}), TranscriptExhaustedError);

    ScriptedBackend mismatch({{std::string("compute_spec"), "one"}});
    CHECK_THROWS_AS(mismatch.complete({"problem_definition", AgentId::problem_definer, "p", 0.7}), FixtureError);
    CHECK_THROWS_AS(ScriptedBackend::from_file("/nonexistent/transcript.json"), NotFoundError);
    CHECK_THROWS_AS(ScriptedBackend::parse_transcript(Document{{"response", "x"}}), InputError);
    CHECK(transcript("canonical_transcript.json").size() == 10);
}

TEST_CASE("backend settings from the environment") {
    ::setenv("DDAP_LLM_BACKEND", "scripted", 1);
    ::setenv("DDAP_SCRIPT_PATH", fixture("canonical_transcript.json").c_str(), 1);
    auto settings = BackendSettings::from_env();
    CHECK(settings.kind == BackendSettings::Kind::scripted);
    CHECK(make_backend(settings) != nullptr);
    ::setenv("DDAP_LLM_BACKEND", "carrier-pigeon", 1);
    CHECK_THROWS_AS(BackendSettings::from_env(), InputError);
    ::unsetenv("DDAP_LLM_BACKEND");
    ::unsetenv("DDAP_SCRIPT_PATH");
    settings = BackendSettings::from_env();
    CHECK(settings.kind == BackendSettings::Kind::http);
    CHECK(settings.http.base_url == "http://localhost:8000/v1");
}

TEST_CASE("guarded exchange") {
    const auto config = roles::problem_definer();
    const auto question = envelope("question", "What data do you have?");
    auto run = [&](std::vector<std::string> replies, int& count, std::vector<ConversationTurn>& conversation) {
        std::vector<ScriptedBackend::Entry> entries;
        for (auto& r : replies) entries.push_back({std::nullopt, std::move(r)});
        ScriptedBackend backend(std::move(entries));
        const ExchangeContext ctx{config, backend, "problem_definition", {}, {}, kFastRetry, {}};
        return converse(ctx, conversation, count, {});
    };

    SUBCASE("two malformed replies then a valid one") {
        int count = 0;
        std::vector<ConversationTurn> conversation{{Speaker::user, "I study pests.", ""}};
        const auto env = run({"plain prose", "{\"status\":\"final\"}", question}, count, conversation);
        CHECK(env.message == "What data do you have?");
        CHECK(count == 2);
        // user, (rejected, correction) x2, accepted
        REQUIRE(conversation.size() == 6);
        CHECK(conversation[1].text == "plain prose");
        CHECK(conversation[2].speaker == Speaker::system);
        CHECK(conversation[2].text.find("rejected") != std::string::npos);
        CHECK(conversation[2].text.find(kEnvelopeReminder) != std::string::npos);
        CHECK(conversation[5].speaker == Speaker::agent);
    }
    SUBCASE("three malformed replies exhaust the guardrail") {
        int count = 0;
        std::vector<ConversationTurn> conversation;
        try {
            run({"a", "b", "c", question}, count, conversation);
            FAIL("expected guardrail exhaustion");
        } catch (const GuardrailError& e) {
            CHECK(e.code() == ErrorCode::guardrail_exhausted);
        }
        CHECK(count == 2);
    }
    SUBCASE("the budget is shared across turns of a stage") {
        int count = 2;
        std::vector<ConversationTurn> conversation;
        CHECK_THROWS_AS(run({"bad", question}, count, conversation), GuardrailError);
    }
    SUBCASE("checks can reject well-formed envelopes") {
        std::vector<ScriptedBackend::Entry> entries{{std::nullopt, question},
                                                    {std::nullopt, envelope("final", "ok", Document{{"x", 1}})}};
        ScriptedBackend backend(std::move(entries));
        const ExchangeContext ctx{config, backend, "problem_definition", {}, {}, kFastRetry, {}};
        int count = 0;
        std::vector<ConversationTurn> conversation;
        const auto env = converse(ctx, conversation, count, [](const Envelope& e) -> std::optional<std::string> {
            if (e.status != EnvelopeStatus::final) return "need a final answer";
            return std::nullopt;
        });
        CHECK(env.status == EnvelopeStatus::final);
        CHECK(count == 1);
        const auto prompts = backend.requests();
        REQUIRE(prompts.size() == 2);
        CHECK(prompts[1].prompt.find("need a final answer") != std::string::npos);
    }
}
