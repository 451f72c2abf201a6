#include "ddap/service.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <mutex>

#include <fmt/format.h>
#include <httplib.h>

namespace ddap {

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::not_found: return 404;
        case ErrorCode::bad_stage: return 409;
        case ErrorCode::validation_failed: return 400;
        case ErrorCode::backend_failure: return 502;
        case ErrorCode::guardrail_exhausted: return 502;
        case ErrorCode::sandbox_error: return 500;
    }
    return 500;
}

Document api_error_body(ErrorCode code, std::string_view detail) {
    return {{"error", {{"code", to_string(code)}, {"detail", detail}}}};
}

namespace {

std::string dump(const Document& doc) { return doc.dump(-1, ' ', false, Document::error_handler_t::replace); }

void send_json(httplib::Response& res, int status, const Document& body) {
    res.status = status;
    res.set_content(dump(body), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, std::string_view detail) {
    send_json(res, http_status(code), api_error_body(code, detail));
}

Document parse_body(const httplib::Request& req) {
    if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) return Document::object();
    Document doc;
    try {
        doc = Document::parse(req.body);
    } catch (const Document::parse_error& e) {
        throw InputError(fmt::format("request body is not valid JSON: {}", e.what()));
    }
    if (!doc.is_object()) throw InputError("request body must be a JSON object");
    return doc;
}

Document session_summary(const SessionState& s) {
    Document j = s;
    j["stage_index"] = static_cast<int>(s.stage);
    return j;
}

template <typename T>
T field(const Document& body, const char* name) {
    auto it = body.find(name);
    if (it == body.end()) throw InputError(fmt::format("missing field '{}'", name));
    try {
        return it->get<T>();
    } catch (const Document::exception&) {
        throw InputError(fmt::format("field '{}' has the wrong type", name));
    }
}

}  // namespace

struct Service::Impl {
    Orchestrator& orchestrator;
    httplib::Server server;
    std::mutex locks_mutex;
    std::map<std::string, std::shared_ptr<std::mutex>> locks;
    std::atomic<bool> bound{false};

    explicit Impl(Orchestrator& o) : orchestrator(o) { routes(); }

    std::shared_ptr<std::mutex> lock_for(const std::string& session_id) {
        std::lock_guard guard(locks_mutex);
        auto& slot = locks[session_id];
        if (!slot) slot = std::make_shared<std::mutex>();
        return slot;
    }

    /// Loads the session under its lock and runs `body`; the lock is not
    /// waited for: a busy session is a stage conflict.
    template <typename Body>
    Document with_session(const std::string& session_id, Body&& body) {
        if (!is_valid_session_id(session_id)) throw NotFoundError(fmt::format("session '{}' not found", session_id));
        auto mutex = lock_for(session_id);
        std::unique_lock lock(*mutex, std::try_to_lock);
        if (!lock.owns_lock()) {
            throw StageError(fmt::format("session {} is busy with another request", session_id));
        }
        auto state = orchestrator.load_session(session_id);
        return body(state);
    }

    using Handler = std::function<std::pair<int, Document>(const httplib::Request&)>;

    httplib::Server::Handler wrap(Handler handler) {
        return [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
            try {
                auto [status, body] = handler(req);
                send_json(res, status, body);
            } catch (const Error& e) {
                send_error(res, e.code(), e.what());
            } catch (const Document::exception& e) {
                send_error(res, ErrorCode::validation_failed, e.what());
            } catch (const std::exception& e) {
                send_error(res, ErrorCode::backend_failure, fmt::format("internal error: {}", e.what()));
            }
        };
    }

    void routes() {
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
            send_error(res, ErrorCode::backend_failure, "internal error");
        });
        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (res.status == 404 && res.body.empty()) {
                send_error(res, ErrorCode::not_found, fmt::format("no endpoint {} {}", req.method, req.path));
            }
        });

        server.Get("/api/health", wrap([](const httplib::Request&) {
            return std::pair{200, Document{{"status", "ok"}}};
        }));

        server.Post("/api/sessions", wrap([this](const httplib::Request& req) {
            const auto body = parse_body(req);
            std::optional<Profile> profile;
            if (auto it = body.find("profile"); it != body.end() && !it->is_null()) profile = it->get<Profile>();
            const auto state = orchestrator.create_session(profile);
            return std::pair{201, Document{{"session_id", state.session_id}, {"stage", to_string(state.stage)}}};
        }));

        server.Get("/api/sessions/:id", wrap([this](const httplib::Request& req) {
            return std::pair{200, with_session(req.path_params.at("id"),
                                               [](SessionState& s) { return session_summary(s); })};
        }));

        server.Post("/api/sessions/:id/messages", wrap([this](const httplib::Request& req) {
            const auto body = parse_body(req);
            const auto text = field<std::string>(body, "text");
            return std::pair{200, with_session(req.path_params.at("id"), [&](SessionState& s) {
                                 return Document(orchestrator.submit_user_message(s, text));
                             })};
        }));

        server.Get("/api/sessions/:id/artifacts", wrap([this](const httplib::Request& req) {
            return std::pair{200, with_session(req.path_params.at("id"), [](SessionState& s) {
                                 return Document{{"artifacts", s.artifact_history}};
                             })};
        }));

        server.Get("/api/artifacts/:ref", wrap([this](const httplib::Request& req) {
            const auto ref = orchestrator.resolve_ref(req.path_params.at("ref"));
            return std::pair{200, orchestrator.load_artifact(ref)};
        }));

        server.Post("/api/sessions/:id/import", wrap([this](const httplib::Request& req) {
            const auto body = parse_body(req);
            const auto source = orchestrator.resolve_ref(field<std::string>(body, "ref"));
            return std::pair{200, with_session(req.path_params.at("id"), [&](SessionState& s) {
                                 const auto ref = orchestrator.import_artifact(s, source);
                                 return Document{{"artifact_ref", ref}, {"stage", to_string(s.stage)}};
                             })};
        }));

        server.Post("/api/sessions/:id/pipelines/select", wrap([this](const httplib::Request& req) {
            const auto body = parse_body(req);
            const auto index = field<int>(body, "index");
            return std::pair{200, with_session(req.path_params.at("id"), [&](SessionState& s) {
                                 orchestrator.select_pipeline(s, index);
                                 return session_summary(s);
                             })};
        }));

        server.Post("/api/sessions/:id/preprocessing", wrap([this](const httplib::Request& req) {
            return std::pair{200, with_session(req.path_params.at("id"), [&](SessionState& s) {
                                 orchestrator.generate_preprocessing(s);
                                 const auto& ref = s.artifact_refs.at(ArtifactKind::preprocessing_plan);
                                 return Document{{"artifact_ref", ref},
                                                 {"document", orchestrator.load_artifact(ref)},
                                                 {"message", s.last_message},
                                                 {"stage", to_string(s.stage)}};
                             })};
        }));

        server.Post("/api/sessions/:id/pipelines", wrap([this](const httplib::Request& req) {
            return std::pair{200, with_session(req.path_params.at("id"), [&](SessionState& s) {
                                 orchestrator.generate_pipelines(s);
                                 const auto& ref = s.artifact_refs.at(ArtifactKind::pipeline_set);
                                 return Document{{"artifact_ref", ref},
                                                 {"document", orchestrator.load_artifact(ref)},
                                                 {"message", s.last_message},
                                                 {"stage", to_string(s.stage)}};
                             })};
        }));

        server.Post("/api/sessions/:id/code", wrap([this](const httplib::Request& req) {
            const auto body = parse_body(req);
            std::optional<int> index;
            if (auto it = body.find("candidate_index"); it != body.end() && !it->is_null()) {
                index = field<int>(body, "candidate_index");
            }
            const bool all = body.value("all", false);
            return std::pair{200, with_session(req.path_params.at("id"), [&](SessionState& s) {
                                 std::vector<GeneratedCode> generated;
                                 if (all) {
                                     generated = orchestrator.generate_all_code(s);
                                 } else {
                                     generated.push_back(orchestrator.generate_code(s, index));
                                 }
                                 Document refs = Document::array();
                                 for (const auto& g : generated) refs.push_back(g.ref);
                                 return Document{{"artifact_ref", generated.back().ref},
                                                 {"artifact_refs", refs},
                                                 {"document", to_document(generated.back().code)},
                                                 {"message", s.last_message},
                                                 {"stage", to_string(s.stage)}};
                             })};
        }));

        server.Post("/api/code/:ref/execute", wrap([this](const httplib::Request& req) {
            const auto ref = orchestrator.resolve_ref(req.path_params.at("ref"));
            return std::pair{200, with_session(ref.session_id, [&](SessionState& s) {
                                 const auto result = orchestrator.execute(s, ref);
                                 return Document{{"artifact_ref", ref},
                                                 {"result", result},
                                                 {"stage", to_string(s.stage)}};
                             })};
        }));

        server.Post("/api/code/:ref/repair", wrap([this](const httplib::Request& req) {
            const auto ref = orchestrator.resolve_ref(req.path_params.at("ref"));
            return std::pair{200, with_session(ref.session_id, [&](SessionState& s) {
                                 const auto repaired = orchestrator.repair(s, ref);
                                 return Document{{"artifact_ref", repaired.ref},
                                                 {"document", to_document(repaired.code)},
                                                 {"message", s.last_message},
                                                 {"stage", to_string(s.stage)}};
                             })};
        }));

        server.Post("/api/sessions/:id/finalize", wrap([this](const httplib::Request& req) {
            return std::pair{200, with_session(req.path_params.at("id"), [&](SessionState& s) {
                                 orchestrator.finalize(s);
                                 return session_summary(s);
                             })};
        }));
    }
};

Service::Service(Orchestrator& orchestrator) : impl_(std::make_unique<Impl>(orchestrator)) {}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    int bound = 0;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else {
        bound = impl_->server.bind_to_port(host, port) ? port : -1;
    }
    if (bound <= 0) throw Error(ErrorCode::backend_failure, fmt::format("cannot bind {}:{}", host, port));
    impl_->bound = true;
    return bound;
}

void Service::listen() {
    if (!impl_->bound) throw StageError("listen() called before bind()");
    impl_->server.listen_after_bind();
}

void Service::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

bool Service::running() const { return impl_->server.is_running(); }

}  // namespace ddap
