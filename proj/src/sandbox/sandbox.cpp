#include "ddap/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <climits>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace fs = std::filesystem;

namespace ddap {

SandboxLimits SandboxLimits::from_env() {
    SandboxLimits limits;
    if (const char* v = std::getenv("DDAP_SANDBOX_TIMEOUT_SECONDS"); v && *v) {
        char* end = nullptr;
        const double seconds = std::strtod(v, &end);
        if (end == v || *end != '\0' || !(seconds > 0)) {
            throw InputError(fmt::format("DDAP_SANDBOX_TIMEOUT_SECONDS must be a positive number, got '{}'", v));
        }
        limits.wall_clock_seconds = seconds;
    }
    return limits;
}

void validate_limits(const SandboxLimits& limits) {
    if (!(limits.wall_clock_seconds > 0)) throw InputError("wall_clock_seconds must be > 0");
    const auto& t = limits.interpreter_command_template;
    const auto first = t.find(kEntrypointPlaceholder);
    if (first == std::string::npos ||
        t.find(kEntrypointPlaceholder, first + kEntrypointPlaceholder.size()) != std::string::npos) {
        throw InputError(fmt::format("command template '{}' must contain exactly one {}", t,
                                     kEntrypointPlaceholder));
    }
}

void to_json(Document& j, const ExecutionResult& r) {
    j = {{"exit_status", r.exit_status},
         {"stdout_excerpt", r.stdout_excerpt},
         {"stderr_excerpt", r.stderr_excerpt},
         {"duration_ms", r.duration_ms},
         {"timed_out", r.timed_out},
         {"succeeded", r.succeeded()}};
}

void from_json(const Document& j, ExecutionResult& r) {
    r.exit_status = j.at("exit_status").get<int>();
    r.stdout_excerpt = j.at("stdout_excerpt").get<std::string>();
    r.stderr_excerpt = j.at("stderr_excerpt").get<std::string>();
    r.duration_ms = j.at("duration_ms").get<std::int64_t>();
    r.timed_out = j.at("timed_out").get<bool>();
}

namespace {

std::string sanitize_utf8(std::string_view in) {
    static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        const auto c = static_cast<unsigned char>(in[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            out += static_cast<char>(c);
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        }
        bool ok = len > 0 && i + len <= in.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto cc = static_cast<unsigned char>(in[i + k]);
            if ((cc & 0xC0) != 0x80) {
                ok = false;
            } else {
                cp = (cp << 6) | (cc & 0x3F);
            }
        }
        if (ok) {
            static constexpr std::array<std::uint32_t, 5> kMin{0, 0, 0x80, 0x800, 0x10000};
            ok = cp >= kMin[len] && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
        }
        if (ok) {
            out.append(in.substr(i, len));
            i += len;
        } else {
            out.append(kReplacement);
            ++i;
        }
    }
    return out;
}

std::string_view skip_continuation(std::string_view s) {
    std::size_t k = 0;
    while (k < s.size() && k < 3 && (static_cast<unsigned char>(s[k]) & 0xC0) == 0x80) ++k;
    return s.substr(k);
}

// Retains at most the last `cap` bytes of a stream.
class TailBuffer {
public:
    explicit TailBuffer(std::size_t cap) : cap_(cap) {}

    void append(const char* data, std::size_t n) {
        buf_.append(data, n);
        if (buf_.size() > 2 * cap_ + 4096) buf_.erase(0, buf_.size() - cap_ - 4);
    }

    const std::string& bytes() const { return buf_; }

private:
    std::size_t cap_;
    std::string buf_;
};

std::vector<std::string> build_argv(const std::string& tmpl, const std::string& entrypoint) {
    std::vector<std::string> argv;
    std::istringstream in(tmpl);
    std::string token;
    while (in >> token) {
        if (auto pos = token.find(kEntrypointPlaceholder); pos != std::string::npos) {
            token.replace(pos, kEntrypointPlaceholder.size(), entrypoint);
        }
        argv.push_back(token);
    }
    return argv;
}

std::vector<std::string> scrubbed_environment(const fs::path& workspace) {
    const char* path = std::getenv("PATH");
    return {
        fmt::format("PATH={}", path ? path : "/usr/local/bin:/usr/bin:/bin"),
        fmt::format("HOME={}", workspace.string()),
        fmt::format("TMPDIR={}", workspace.string()),
        "LANG=C.UTF-8",
        "PYTHONUNBUFFERED=1",
        "PYTHONDONTWRITEBYTECODE=1",
    };
}

void materialize(const CodeArtifact& code, const fs::path& workspace) {
    std::error_code ec;
    fs::create_directories(workspace, ec);
    if (ec) throw SandboxError(fmt::format("cannot create workspace {}: {}", workspace.string(), ec.message()));
    if (!fs::is_empty(workspace, ec)) {
        throw SandboxError(fmt::format("workspace {} is not empty", workspace.string()));
    }
    for (const auto& f : code.files) {
        const auto target = workspace / f.relative_path;
        fs::create_directories(target.parent_path(), ec);
        std::ofstream out(target, std::ios::binary);
        out << f.content;
        if (!out) throw SandboxError(fmt::format("cannot write {}", target.string()));
    }
}

struct Pipe {
    int read = -1;
    int write = -1;

    Pipe() {
        int fds[2];
        if (::pipe2(fds, O_CLOEXEC) != 0) {
            throw SandboxError(fmt::format("pipe: {}", std::strerror(errno)));
        }
        read = fds[0];
        write = fds[1];
    }
    ~Pipe() {
        close_read();
        close_write();
    }
    Pipe(const Pipe&) = delete;
    Pipe& operator=(const Pipe&) = delete;

    void close_read() {
        if (read >= 0) ::close(read);
        read = -1;
    }
    void close_write() {
        if (write >= 0) ::close(write);
        write = -1;
    }
};

int decode_status(int status) {
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
    return -1;
}

}  // namespace

std::string tail_excerpt(std::string_view bytes, std::size_t limit) {
    if (limit == 0) return {};
    if (bytes.size() > limit + 3) bytes = bytes.substr(bytes.size() - limit - 3);
    auto clean = sanitize_utf8(skip_continuation(bytes));
    if (clean.size() <= limit) return clean;
    return std::string(skip_continuation(std::string_view(clean).substr(clean.size() - limit)));
}

ExecutionResult execute_code(const CodeArtifact& code, const SandboxLimits& limits,
                             const fs::path& workspace) {
    validate_limits(limits);
    {
        auto report = validate_artifact(ArtifactKind::code_artifact, to_document(code), {INT_MAX});
        if (!report.valid()) throw ValidationError(ArtifactKind::code_artifact, std::move(report));
    }
    materialize(code, workspace);

    const auto args = build_argv(limits.interpreter_command_template, code.entrypoint);
    const auto env = scrubbed_environment(workspace);
    std::vector<char*> argv, envp;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    for (const auto& e : env) envp.push_back(const_cast<char*>(e.c_str()));
    envp.push_back(nullptr);
    const auto workdir = workspace.string();

    Pipe out, err, exec_status;
    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw SandboxError(fmt::format("fork: {}", std::strerror(errno)));
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out.write, STDOUT_FILENO);
        ::dup2(err.write, STDERR_FILENO);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        int e = 0;
        if (::chdir(workdir.c_str()) != 0) {
            e = errno;
        } else {
            ::execvpe(argv[0], argv.data(), envp.data());
            e = errno;
        }
        [[maybe_unused]] auto n = ::write(exec_status.write, &e, sizeof e);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    out.close_write();
    err.close_write();
    exec_status.close_write();

    int exec_errno = 0;
    ssize_t got;
    do {
        got = ::read(exec_status.read, &exec_errno, sizeof exec_errno);
    } while (got < 0 && errno == EINTR);
    if (got == static_cast<ssize_t>(sizeof exec_errno)) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        throw SandboxError(fmt::format("cannot start '{}': {}", args.front(), std::strerror(exec_errno)));
    }

    const auto deadline =
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(limits.wall_clock_seconds));
    TailBuffer out_buf(limits.output_truncation_bytes), err_buf(limits.output_truncation_bytes);
    bool timed_out = false;
    std::array<char, 8192> chunk{};
    std::array<pollfd, 2> fds{{{out.read, POLLIN, 0}, {err.read, POLLIN, 0}}};
    while (fds[0].fd >= 0 || fds[1].fd >= 0) {
        int wait_ms = -1;
        if (!timed_out) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) {
                ::kill(-pid, SIGKILL);
                timed_out = true;
            } else {
                wait_ms = static_cast<int>(std::min<std::int64_t>(left.count() + 1, INT_MAX));
            }
        }
        const int ready = ::poll(fds.data(), fds.size(), timed_out ? 1000 : wait_ms);
        if (ready < 0) {
            if (errno == EINTR) continue;
            ::kill(-pid, SIGKILL);
            throw SandboxError(fmt::format("poll: {}", std::strerror(errno)));
        }
        if (ready == 0) {
            // After the kill, stop waiting on pipes that a detached process still holds.
            if (timed_out) break;
            continue;
        }
        for (std::size_t i = 0; i < fds.size(); ++i) {
            if (fds[i].fd < 0 || fds[i].revents == 0) continue;
            const auto n = ::read(fds[i].fd, chunk.data(), chunk.size());
            if (n > 0) {
                (i == 0 ? out_buf : err_buf).append(chunk.data(), static_cast<std::size_t>(n));
            } else if (n == 0 || errno != EINTR) {
                fds[i].fd = -1;
            }
        }
    }
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    // Reap anything left in the process group.
    ::kill(-pid, SIGKILL);
    const auto end = std::chrono::steady_clock::now();

    ExecutionResult result;
    result.timed_out = timed_out;
    result.exit_status = timed_out ? limits.timeout_exit_status : decode_status(status);
    result.stdout_excerpt = tail_excerpt(out_buf.bytes(), limits.output_truncation_bytes);
    result.stderr_excerpt = tail_excerpt(err_buf.bytes(), limits.output_truncation_bytes);
    result.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(end - start).count();
    return result;
}

ExecutionResult execute_code(const CodeArtifact& code, const SandboxLimits& limits) {
    auto tmpl = (fs::temp_directory_path() / "ddap-run-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
        throw SandboxError(fmt::format("mkdtemp: {}", std::strerror(errno)));
    }
    const fs::path dir(tmpl);
    struct Cleanup {
        fs::path dir;
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(dir, ec);
        }
    } cleanup{dir};
    return execute_code(code, limits, dir);
}

// --- repair -----------------------------------------------------------------------

namespace {

std::string failure_report(const CodeArtifact& code, const ExecutionResult& failure) {
    std::string text = fmt::format(
        "Execution of {} failed ({}).\nError output:\n{}", code.entrypoint,
        failure.timed_out ? std::string("timed out") : fmt::format("exit status {}", failure.exit_status),
        failure.stderr_excerpt.empty() ? "(none)" : failure.stderr_excerpt);
    if (failure.stderr_excerpt.empty() && !failure.stdout_excerpt.empty()) {
        text += fmt::format("\nStandard output:\n{}", failure.stdout_excerpt);
    }
    return text;
}

std::vector<PromptArtifact> repair_inputs(const RepairContext& context, const CodeArtifact& code) {
    auto prior = context.upstream;
    prior.push_back({ArtifactKind::code_artifact, to_document(code)});
    return prior;
}

}  // namespace

std::string render_repair_prompt(const RepairContext& context, const CodeArtifact& code,
                                 const ExecutionResult& failure) {
    const std::vector<ConversationTurn> turns{{Speaker::system, failure_report(code, failure), ""}};
    return render_prompt(context.config, repair_inputs(context, code), {}, turns);
}

RepairResult repair_code(RepairContext& context, const CodeArtifact& code, const ExecutionResult& failure) {
    if (failure.succeeded()) throw InputError("repair requested for a successful execution");
    if (code.repair_count >= context.max_repairs) {
        throw RepairBudgetError(fmt::format("repair budget exhausted: candidate {} already repaired {} of {} times",
                                            code.candidate_index, code.repair_count, context.max_repairs));
    }
    const auto prior = repair_inputs(context, code);
    std::vector<ConversationTurn> conversation{{Speaker::system, failure_report(code, failure), now_iso8601()}};

    const ExchangeContext exchange{context.config, context.backend, "code_generation", prior, {},
                                   context.retry,  context.recorder};
    Document accepted;
    const auto validation = ValidationOptions{context.max_repairs};
    auto check = [&](const Envelope& env) -> std::optional<std::string> {
        if (env.status != EnvelopeStatus::final) return "code repair is a single exchange; status must be \"final\"";
        if (!env.payload) return "status \"final\" requires a payload";
        Document doc = stamp_artifact(*env.payload, ArtifactKind::code_artifact);
        doc["candidate_index"] = code.candidate_index;
        doc["repair_count"] = code.repair_count + 1;
        if (!doc.contains("platform")) doc["platform"] = code.platform;
        auto report = validate_artifact(ArtifactKind::code_artifact, doc, validation);
        if (!report.valid()) return report.summary();
        accepted = std::move(doc);
        return std::nullopt;
    };
    int local_reprompts = 0;
    int& reprompts = context.reprompt_count ? *context.reprompt_count : local_reprompts;
    converse(exchange, conversation, reprompts, check);

    RepairResult result;
    result.ref = context.store.persist_artifact(context.session_id, ArtifactKind::code_artifact, accepted);
    result.code = accepted.get<CodeArtifact>();
    return result;
}

RunOutcome run_with_repair(const CodeArtifact& code, const Executor& execute, const Repairer& repair,
                           int max_repairs) {
    RunOutcome outcome;
    outcome.code = code;
    outcome.result = execute(outcome.code);
    outcome.executions = 1;
    while (!outcome.result.succeeded() && outcome.code.repair_count < max_repairs) {
        auto repaired = repair(outcome.code, outcome.result);
        outcome.code = std::move(repaired.code);
        outcome.repaired_refs.push_back(std::move(repaired.ref));
        ++outcome.repairs;
        outcome.result = execute(outcome.code);
        ++outcome.executions;
    }
    return outcome;
}

RunOutcome run_with_repair(const CodeArtifact& code, const SandboxLimits& limits, RepairContext& context) {
    const Executor execute = [&](const CodeArtifact& c) {
        const auto label = c.repair_count == 0 ? fmt::format("a4_code_{}", c.candidate_index)
                                               : fmt::format("a4_code_{}_r{}", c.candidate_index, c.repair_count);
        return execute_code(c, limits, context.store.make_workspace(context.session_id, label));
    };
    const Repairer repair = [&](const CodeArtifact& c, const ExecutionResult& r) {
        return repair_code(context, c, r);
    };
    return run_with_repair(code, execute, repair, context.max_repairs);
}

}  // namespace ddap
