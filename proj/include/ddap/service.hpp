#pragma once

#include <memory>
#include <string>

#include "ddap/errors.hpp"
#include "ddap/orchestrator.hpp"

namespace ddap {

/// HTTP status used for each error code.
int http_status(ErrorCode code);

/// {"error": {"code": ..., "detail": ...}}
Document api_error_body(ErrorCode code, std::string_view detail);

/// JSON API over an Orchestrator. Requests for distinct sessions run
/// concurrently; a request for a session that is already handling one fails
/// with bad_stage. Session state lives in the store, so a restarted service
/// resumes existing sessions.
class Service {
public:
    explicit Service(Orchestrator& orchestrator);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds `host:port` (port 0 picks a free port) and returns the bound
    /// port. Throws Error(backend_failure) when the address cannot be bound.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    /// Stops accepting connections; in-flight requests finish first.
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ddap
