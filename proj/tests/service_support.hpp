#pragma once

// An in-process API server on an ephemeral port, and a scripted client
// session driven through it. Shared by the unit tests and the acceptance binary.

#include <httplib.h>

#include <sstream>
#include <thread>

#include "ddap/cli.hpp"
#include "ddap/service.hpp"
#include "orchestrator_support.hpp"

namespace ddap::test {

class TestServer {
public:
    TestServer(Orchestrator& orchestrator) : service_(orchestrator) {
        port_ = service_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { service_.listen(); });
        while (!service_.running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    ~TestServer() { stop(); }
    TestServer(const TestServer&) = delete;
    TestServer& operator=(const TestServer&) = delete;

    void stop() {
        service_.stop();
        if (thread_.joinable()) thread_.join();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30, 0);
        return c;
    }

private:
    Service service_;
    int port_ = 0;
    std::thread thread_;
};

struct ApiReply {
    int status = 0;
    Document body;
};

inline ApiReply api(httplib::Client& client, const std::string& method, const std::string& path,
                    const Document& body = Document::object()) {
    auto res = method == "GET" ? client.Get(path) : client.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("no response for " + method + " " + path);
    return {res->status, res->body.empty() ? Document() : Document::parse(res->body)};
}

/// Plays the canonical dialogue through the API (select candidate 1, generate
/// its code, finalize) and returns the session id. Throws on any non-2xx reply.
inline std::string drive_canonical_over_http(httplib::Client& client) {
    auto expect = [](const ApiReply& r, int status, const std::string& what) {
        if (r.status != status) throw std::runtime_error(what + " returned " + std::to_string(r.status) + ": " + r.body.dump());
        return r.body;
    };
    const auto created = expect(api(client, "POST", "/api/sessions"), 201, "create");
    const auto id = created["session_id"].get<std::string>();
    const auto base = "/api/sessions/" + id;
    std::vector<std::string> inputs{intent()};
    for (const auto& a : answers()) inputs.push_back(a);
    std::string stage = created["stage"];
    for (const auto& text : inputs) {
        if (stage != "problem_definition" && stage != "compute_spec") break;
        stage = expect(api(client, "POST", base + "/messages", {{"text", text}}), 200, "message")["stage"];
    }
    expect(api(client, "POST", base + "/preprocessing"), 200, "preprocessing");
    expect(api(client, "POST", base + "/pipelines"), 200, "pipelines");
    expect(api(client, "POST", base + "/pipelines/select", {{"index", 1}}), 200, "select");
    expect(api(client, "POST", base + "/code"), 200, "code");
    expect(api(client, "POST", base + "/finalize"), 200, "finalize");
    return id;
}

struct CliRun {
    int exit_code = 0;
    std::string out;
    std::string err;
};

inline CliRun run_cli(const std::vector<std::string>& args, const std::string& input = "") {
    std::istringstream in(input);
    std::ostringstream out, err;
    CliRun r;
    r.exit_code = cli_run(args, in, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

/// Runs `ddap headless` on the canonical fixture into `data_dir`; returns the session id.
inline std::string headless_via_cli(const fs::path& data_dir) {
    const auto r = run_cli({"--data-dir", data_dir.string(), "headless", "--intent", fixture("intent.txt").string(),
                            "--answers", fixture("answers.json").string(), "--script",
                            fixture("canonical_transcript.json").string()});
    if (r.exit_code != 0) throw std::runtime_error("headless failed: " + r.err);
    const auto first_line = r.out.substr(0, r.out.find('\n'));
    return first_line.substr(std::string("session ").size());
}

}  // namespace ddap::test
