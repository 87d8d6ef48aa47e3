#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "skele/agent/client.hpp"
#include "skele/orchestrator/orchestrator.hpp"

namespace httplib {
class Server;
}

namespace skele::service {

namespace fs = std::filesystem;

struct ServiceConfig {
    fs::path projects_root;                      // one folder per project
    std::shared_ptr<agent::LlmClient> client;    // null: runs without codegen, chat unavailable
    std::shared_ptr<agent::LlmClient> reviewer;  // null: the agent client reviews its own commands
    orchestrator::RunOptions run_options;        // per-request mode and node filter override these
    std::size_t max_upload_bytes = 25 * 1024 * 1024;
    std::chrono::milliseconds approval_timeout{std::chrono::minutes(10)};  // unanswered requests are denied
};

// REST + server-sent-event backend over a directory of projects.
//
//   GET  /api/projects                               list
//   POST /api/projects                    {name}     create
//   GET  /api/projects/{p}/process.json              canonical JSON
//   PUT  /api/projects/{p}/process.json              validate + save (422 on errors)
//   POST /api/projects/{p}/run            {nodes?, mode?}                  SSE
//   POST /api/projects/{p}/nodes/{id}/clear-code
//   POST /api/projects/{p}/nodes/{id}/attachments    multipart, field "file"
//   POST /api/projects/{p}/chat           {message, session?}              SSE
//   POST /api/chat/{session}/approve      {request_id, approve, all?}
//   GET  /api/projects/{p}/files
//   GET  /api/projects/{p}/files/{path}
//
// Runs, clear-code, uploads, PUTs and chat turns share one writer lease per
// project; a second writer gets 409. Reads never wait.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Registers every route on `server`.
    void install(httplib::Server& server);

    // Serves on a background thread. Port 0 picks a free port; returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    const ServiceConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace skele::service
