#include "ddap/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ddap/backends.hpp"
#include "ddap/metrics.hpp"
#include "ddap/orchestrator.hpp"
#include "ddap/service.hpp"

namespace ddap {

namespace {

namespace fs = std::filesystem;

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : std::move(fallback);
}

/// Builds the configured backend on first use, so commands that never talk to
/// an agent do not need backend settings.
class LazyBackend : public Backend {
public:
    explicit LazyBackend(std::optional<fs::path> script) : script_(std::move(script)) {}

    std::string complete(const ChatRequest& request) override {
        if (!inner_) {
            if (script_) {
                inner_ = ScriptedBackend::from_file(*script_);
            } else {
                inner_ = make_backend(BackendSettings::from_env());
            }
        }
        return inner_->complete(request);
    }

private:
    std::optional<fs::path> script_;
    std::unique_ptr<Backend> inner_;
};

/// Diagnostics are a single line.
std::string one_line(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '\n') {
            out += "; ";
        } else if (c != '\r') {
            out += c;
        }
    }
    return out;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError(fmt::format("cannot read {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

/// A JSON array of strings, or one answer per nonempty line.
std::vector<std::string> read_answers(const fs::path& path) {
    const auto text = read_text(path);
    const auto trimmed = trim(text);
    if (!trimmed.empty() && trimmed.front() == '[') {
        Document doc;
        try {
            doc = Document::parse(trimmed);
        } catch (const Document::parse_error& e) {
            throw InputError(fmt::format("{} is not a valid JSON array: {}", path.string(), e.what()));
        }
        std::vector<std::string> out;
        for (const auto& a : doc) {
            if (!a.is_string()) throw InputError(fmt::format("{} must hold only strings", path.string()));
            out.push_back(a.get<std::string>());
        }
        return out;
    }
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (auto t = trim(line); !t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::optional<Profile> make_profile(const std::string& domain, const std::string& expertise) {
    if (domain.empty() && expertise.empty()) return std::nullopt;
    return Profile{domain, expertise.empty() ? "novice" : expertise};
}

void print_candidates(std::ostream& out, const PipelineSet& set) {
    for (const auto& c : set.candidates) {
        out << fmt::format("  [{}] {} — {}\n", c.index, c.name, c.description);
        for (const auto& p : c.pros) out << "      + " << p << "\n";
        for (const auto& n : c.cons) out << "      - " << n << "\n";
    }
}

void print_execution(std::ostream& out, const std::string& id, const ExecutionResult& r) {
    out << fmt::format("execution {}: {} (exit status {}, {} ms)\n", id, r.succeeded() ? "succeeded" : "failed",
                       r.exit_status, r.duration_ms);
    if (!r.stdout_excerpt.empty()) out << "--- stdout ---\n" << r.stdout_excerpt << "\n";
    if (!r.stderr_excerpt.empty()) out << "--- stderr ---\n" << r.stderr_excerpt << "\n";
}

// --- chat --------------------------------------------------------------------------

int chat_loop(Orchestrator& orch, SessionState& state, std::istream& in, std::ostream& out) {
    auto read_line = [&](std::string_view prompt, std::string& line) {
        out << prompt << std::flush;
        while (std::getline(in, line)) {
            line = trim(line);
            if (!line.empty()) return line != "/quit";
        }
        out << "\n";
        return false;
    };
    out << fmt::format("session {} — stage {}\n", state.session_id, to_string(state.stage));
    if (!state.last_message.empty()) out << "agent: " << state.last_message << "\n";
    std::string line;
    while (true) {
        switch (state.stage) {
            case Stage::problem_definition:
            case Stage::compute_spec: {
                if (!read_line("> ", line)) return kExitOk;
                const auto turn = orch.submit_user_message(state, line);
                out << "agent: " << turn.message << "\n";
                if (turn.kind == TurnResult::Kind::stage_complete) {
                    out << fmt::format("[saved {} — now in {}]\n", turn.artifact_ref->path, to_string(state.stage));
                }
                break;
            }
            case Stage::pipeline_generation: {
                if (!state.has(ArtifactKind::preprocessing_plan)) {
                    out << "[generating preprocessing plan]\n";
                    const auto plan = orch.generate_preprocessing(state);
                    for (const auto& s : plan.steps) out << "  * " << s.name << ": " << s.description << "\n";
                }
                out << "[generating pipeline candidates]\n";
                print_candidates(out, orch.generate_pipelines(state));
                break;
            }
            case Stage::code_generation: {
                if (!state.selected_candidate) {
                    if (!read_line("select a candidate (1-5): ", line)) return kExitOk;
                    try {
                        orch.select_pipeline(state, std::stoi(line));
                    } catch (const std::logic_error&) {
                        out << "please enter a number between 1 and 5\n";
                    } catch (const RangeError& e) {
                        out << e.what() << "\n";
                    }
                    break;
                }
                const int k = *state.selected_candidate;
                if (!state.code_refs.count(k)) {
                    out << fmt::format("[generating code for candidate {}]\n", k);
                    const auto g = orch.generate_code(state);
                    for (const auto& f : g.code.files) out << "  " << f.relative_path << "\n";
                    out << fmt::format("[saved {}]\n", g.ref.path);
                    break;
                }
                if (!read_line("run | repair | finalize | select <k> | /quit: ", line)) return kExitOk;
                const auto ref = state.code_refs.at(k);
                try {
                    if (line == "run") {
                        print_execution(out, ref.id(), orch.execute(state, ref));
                    } else if (line == "repair") {
                        const auto g = orch.repair(state, ref);
                        out << fmt::format("[saved repaired code {}]\n", g.ref.path);
                    } else if (line == "finalize") {
                        orch.finalize(state);
                    } else if (line.rfind("select ", 0) == 0) {
                        try {
                            orch.select_pipeline(state, std::stoi(line.substr(7)));
                        } catch (const std::logic_error&) {
                            out << "usage: select <1-5>\n";
                        }
                    } else {
                        out << "unknown command\n";
                    }
                } catch (const Error& e) {
                    // Stay in the loop: the user can pick another action.
                    out << fmt::format("error: {}: {}\n", to_string(e.code()), one_line(e.what()));
                }
                break;
            }
            case Stage::done:
                out << "session complete.\n";
                return kExitOk;
        }
    }
}

// --- serve -------------------------------------------------------------------------

int serve(Orchestrator& orch, const std::string& host, int port, std::ostream& out) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(orch);
    const int bound = service.bind(host, port);
    out << fmt::format("listening on http://{}:{}\n", host, bound) << std::flush;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        service.stop();
    });
    service.listen();
    // listen() only returns after stop(); wake the waiter if something else stopped us.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kExitOk;
}

// --- eval ----------------------------------------------------------------------------

metrics::ResultTable read_baseline(const fs::path& path, const std::string& pipeline) {
    Document doc;
    try {
        doc = Document::parse(read_text(path));
    } catch (const Document::parse_error& e) {
        throw InputError(fmt::format("{} is not valid JSON: {}", path.string(), e.what()));
    }
    if (!doc.is_object()) throw InputError("baseline must be a JSON object");
    // Either {metric: value} for the evaluated pipeline, or {pipeline: {metric: value}}.
    const bool flat = std::all_of(doc.begin(), doc.end(), [](const Document& v) { return v.is_number(); });
    try {
        if (flat) return {{pipeline, doc.get<metrics::MetricSet>()}};
        return doc.get<metrics::ResultTable>();
    } catch (const Document::exception&) {
        throw InputError("baseline values must be numbers");
    }
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Staged, artifact-driven assistant for building data-driven pipelines", "ddap"};
    app.require_subcommand(1);
    std::string data_dir = env_or("DDAP_DATA_DIR", "ddap-data");
    app.add_option("--data-dir", data_dir, "Session store root (DDAP_DATA_DIR)");
    int max_repairs = 1;
    app.add_option("--max-repairs", max_repairs, "Repair budget per code artifact")->check(CLI::NonNegativeNumber);
    std::string corpus_dir;
    app.add_option("--corpus", corpus_dir, "Directory of reference snippets for retrieval")->check(CLI::ExistingDirectory);

    std::string profile_domain, profile_expertise;
    auto add_profile = [&](CLI::App* cmd) {
        cmd->add_option("--domain", profile_domain, "Researcher domain");
        cmd->add_option("--expertise", profile_expertise, "Researcher expertise")
            ->check(CLI::IsMember({"novice", "intermediate", "expert"}));
    };

    auto* cmd_new = app.add_subcommand("new", "Create a session and print its id");
    add_profile(cmd_new);

    std::string session_id;
    std::string script;
    auto* cmd_chat = app.add_subcommand("chat", "Interactive session on stdin/stdout");
    cmd_chat->add_option("--session", session_id, "Session id")->required();
    cmd_chat->add_option("--script", script, "Scripted transcript to use as the agent backend")
        ->check(CLI::ExistingFile);

    std::string intent_path, answers_path;
    int candidate = 1;
    bool all_candidates = false, execute = false;
    auto* cmd_headless = app.add_subcommand("headless", "Run every stage from an intent and a list of answers");
    cmd_headless->add_option("--intent", intent_path, "File holding the opening request")->required()
        ->check(CLI::ExistingFile);
    cmd_headless->add_option("--answers", answers_path, "Answers: JSON array of strings or one per line")
        ->required()->check(CLI::ExistingFile);
    cmd_headless->add_option("--candidate", candidate, "Candidate to generate code for")->check(CLI::Range(1, 5));
    cmd_headless->add_flag("--all", all_candidates, "Generate code for all five candidates");
    cmd_headless->add_flag("--execute", execute, "Execute (and repair) the generated code");
    cmd_headless->add_option("--script", script, "Scripted transcript to use as the agent backend")
        ->check(CLI::ExistingFile);
    add_profile(cmd_headless);

    std::string host = "127.0.0.1";
    int port = std::atoi(env_or("DDAP_PORT", "8080").c_str());
    auto* cmd_serve = app.add_subcommand("serve", "Serve the JSON API");
    cmd_serve->add_option("--port", port, "Port (DDAP_PORT)")->check(CLI::Range(0, 65535));
    cmd_serve->add_option("--host", host, "Bind address");
    cmd_serve->add_option("--script", script, "Scripted transcript to use as the agent backend")
        ->check(CLI::ExistingFile);

    std::string pred_path, task, positive, baseline_path, pipeline_name, format = "text";
    std::string label_column = "label", distance = "euclidean";
    auto* cmd_eval = app.add_subcommand("eval", "Score predictions from a CSV file");
    cmd_eval->add_option("--pred", pred_path, "CSV with y_true,y_pred (or features and a label column)")
        ->required()->check(CLI::ExistingFile);
    cmd_eval->add_option("--task", task, "Task kind")->required()
        ->check(CLI::IsMember({"classification", "regression", "clustering"}));
    cmd_eval->add_option("--positive", positive, "Positive label for binary scores");
    cmd_eval->add_option("--label-column", label_column, "Cluster label column");
    cmd_eval->add_option("--distance", distance, "Clustering distance")
        ->check(CLI::IsMember({"euclidean", "manhattan", "chebyshev"}));
    cmd_eval->add_option("--baseline", baseline_path, "JSON baseline metrics")->check(CLI::ExistingFile);
    cmd_eval->add_option("--pipeline", pipeline_name, "Pipeline name in the report");
    cmd_eval->add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json"}));

    std::string code_ref;
    bool repair = false;
    auto* cmd_exec = app.add_subcommand("exec", "Execute a stored code artifact");
    cmd_exec->add_option("--code", code_ref, "Code artifact id, e.g. <session>.a4_code_2")->required();
    cmd_exec->add_flag("--repair", repair, "Repair and re-run on failure, within the budget");
    cmd_exec->add_option("--script", script, "Scripted transcript to use as the agent backend")
        ->check(CLI::ExistingFile);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (cmd_eval->parsed()) {
            std::ifstream csv(pred_path, std::ios::binary);
            const auto table = metrics::read_csv(csv);
            metrics::MetricSet scores;
            if (task == "classification") {
                scores = metrics::evaluate_classification(
                    table, positive.empty() ? std::nullopt : std::optional<std::string>(positive));
            } else if (task == "regression") {
                scores = metrics::evaluate_regression(table);
            } else {
                scores = metrics::evaluate_clustering(table, label_column, *metrics::distance_from_string(distance));
            }
            const auto name = pipeline_name.empty() ? fs::path(pred_path).stem().string() : pipeline_name;
            std::optional<metrics::ResultTable> baseline;
            if (!baseline_path.empty()) baseline = read_baseline(baseline_path, name);
            const auto report = metrics::emit_report({{name, scores}}, baseline);
            out << (format == "json" ? report.to_json().dump(2) + "\n" : report.to_text());
            return kExitOk;
        }

        ArtifactStore store(data_dir, ValidationOptions{max_repairs});
        LazyBackend backend(script.empty() ? std::nullopt : std::optional<fs::path>(script));
        OrchestratorOptions options;
        options.limits = SandboxLimits::from_env();
        if (!corpus_dir.empty()) options.corpus_dir = fs::path(corpus_dir);
        Orchestrator orch(store, backend, options);

        if (cmd_new->parsed()) {
            const auto state = orch.create_session(make_profile(profile_domain, profile_expertise));
            out << state.session_id << "\n";
            return kExitOk;
        }
        if (cmd_chat->parsed()) {
            auto state = orch.load_session(session_id);
            return chat_loop(orch, state, in, out);
        }
        if (cmd_headless->parsed()) {
            HeadlessOptions h;
            h.profile = make_profile(profile_domain, profile_expertise);
            h.candidate = candidate;
            h.all_candidates = all_candidates;
            h.execute = execute;
            const auto result = run_headless(orch, trim(read_text(intent_path)), read_answers(answers_path), h);
            out << "session " << result.state.session_id << "\n";
            for (const auto& ref : result.state.artifact_history) {
                out << fmt::format("{} {} {}\n", to_string(ref.kind), (store.root() / ref.path).string(),
                                   ref.content_hash);
            }
            if (result.run) print_execution(out, result.run->code.entrypoint, result.run->result);
            out << "stage " << to_string(result.state.stage) << "\n";
            if (result.run && !result.run->result.succeeded()) {
                err << fmt::format("error: execution failed after {} run(s) and {} repair(s)\n",
                                   result.run->executions, result.run->repairs);
                return kExitFailure;
            }
            return kExitOk;
        }
        if (cmd_serve->parsed()) return serve(orch, host, port, out);
        if (cmd_exec->parsed()) {
            const auto ref = orch.resolve_ref(code_ref);
            auto state = orch.load_session(ref.session_id);
            ExecutionResult result;
            std::string ran = ref.id();
            if (repair) {
                auto outcome = orch.run_code(state, ref);
                if (!outcome.repaired_refs.empty()) ran = outcome.repaired_refs.back().id();
                result = outcome.result;
            } else {
                result = orch.execute(state, ref);
            }
            print_execution(out, ran, result);
            if (!result.succeeded()) {
                err << fmt::format("error: execution of {} failed with exit status {}\n", ran, result.exit_status);
                return kExitFailure;
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        err << fmt::format("error: {}: {}\n", to_string(e.code()), one_line(e.what()));
        return kExitFailure;
    } catch (const std::exception& e) {
        err << fmt::format("error: {}: {}\n", to_string(ErrorCode::backend_failure), one_line(e.what()));
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace ddap
