#include "skele/service/service.hpp"

#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include <httplib.h>

#include "skele/agent/sandbox.hpp"
#include "skele/agent/session.hpp"
#include "skele/context/prompts.hpp"
#include "skele/util/fs.hpp"
#include "skele/util/log.hpp"
#include "skele/workflow/project.hpp"

namespace skele::service {

namespace {

using workflow::Json;
using httplib::Request;
using httplib::Response;

void send_json(Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, int status, std::string_view code, std::string_view message) {
    send_json(res, status, Json{{"error", code}, {"message", message}});
}

std::string sse_frame(std::string_view event, const Json& data) {
    return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

Json block_json(const agent::CommandBlock& block) {
    Json j{{"kind", agent::to_string(block.kind)}};
    if (block.kind == agent::BlockKind::Shell)
        j["command"] = block.command_line;
    else
        j["path"] = block.path;
    if (block.kind == agent::BlockKind::FileWrite) j["bytes"] = block.contents.size();
    return j;
}

std::optional<Json> parse_body(const Request& req, Response& res) {
    if (req.body.empty()) return Json::object();
    try {
        Json j = Json::parse(req.body);
        if (j.is_object()) return j;
    } catch (const nlohmann::json::parse_error&) {
    }
    send_error(res, 400, "bad_request", "request body must be a JSON object");
    return std::nullopt;
}

std::string random_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    static constexpr char hex[] = "0123456789abcdef";
    std::string id;
    auto v = rng();
    for (int i = 0; i < 16; ++i, v >>= 4) id += hex[v & 0xf];
    return id;
}

std::optional<fs::file_time_type> mtime_of(const fs::path& p) {
    std::error_code ec;
    auto t = fs::last_write_time(p, ec);
    if (ec) return std::nullopt;
    return t;
}

} // namespace

// Sessions outlive a single request: the transcript carries over between
// messages and an approval decision arrives on a different connection.
struct ChatSession : agent::ApprovalGate {
    std::string id;
    std::string project;
    std::vector<agent::Message> transcript;
    std::optional<fs::file_time_type> guarded_seen;
    std::atomic<bool> streaming{false};

    std::mutex m;
    std::condition_variable cv;
    std::optional<std::string> pending_request;
    std::optional<agent::ApprovalDecision> decision;
    std::function<void(const Json&)> announce;  // writes an approval_request event
    std::chrono::milliseconds timeout{0};

    agent::ApprovalDecision decide(const agent::CommandBlock& block) override {
        std::unique_lock lock(m);
        const std::string request = random_id();
        pending_request = request;
        decision.reset();
        const Json event{{"session", id}, {"request_id", request}, {"block", block_json(block)}};
        lock.unlock();
        if (announce) announce(event);
        lock.lock();
        const bool answered = cv.wait_for(lock, timeout, [&] { return decision.has_value(); });
        pending_request.reset();
        return answered ? *decision : agent::ApprovalDecision::Deny;
    }

    // False when `request` is not the outstanding one.
    bool resolve(const std::string& request, agent::ApprovalDecision d) {
        {
            std::lock_guard lock(m);
            if (!pending_request || *pending_request != request || decision) return false;
            decision = d;
        }
        cv.notify_all();
        return true;
    }
};

struct Service::Impl {
    ServiceConfig config;
    std::mutex leases_m;
    std::set<std::string> leased;
    std::mutex sessions_m;
    std::map<std::string, std::shared_ptr<ChatSession>> sessions;
    std::unique_ptr<httplib::Server> own_server;
    std::thread server_thread;

    explicit Impl(ServiceConfig c) : config(std::move(c)) {}

    // Held by one writer per project; released on destruction.
    struct Lease {
        Impl* impl;
        std::string project;
        ~Lease() {
            std::lock_guard lock(impl->leases_m);
            impl->leased.erase(project);
        }
    };

    std::shared_ptr<Lease> try_lease(const std::string& project) {
        {
            std::lock_guard lock(leases_m);
            if (!leased.insert(project).second) return nullptr;
        }
        auto lease = std::make_shared<Lease>();
        lease->impl = this;
        lease->project = project;
        return lease;
    }

    // Project folder for a URL segment, or nullopt (404 already written).
    std::optional<fs::path> project_dir(const std::string& name, Response& res) const {
        std::error_code ec;
        const fs::path dir = config.projects_root / name;
        if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos || workflow::sanitize_name(name) != name ||
            !fs::is_regular_file(dir / workflow::kProcessFile, ec)) {
            send_error(res, 404, "not_found", "unknown project '" + name + "'");
            return std::nullopt;
        }
        return dir;
    }

    bool busy(const std::string& project, Response& res, std::shared_ptr<Lease>& lease) {
        lease = try_lease(project);
        if (lease) return false;
        send_error(res, 409, "busy", "a run or edit is in progress for project '" + project + "'");
        return true;
    }

    void list_projects(const Request&, Response& res) {
        Json out = Json::array();
        std::error_code ec;
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(config.projects_root, ec))
            if (e.is_directory(ec) && fs::is_regular_file(e.path() / workflow::kProcessFile, ec)) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) {
            Json entry{{"name", d.filename().string()}};
            try {
                const auto p = workflow::load_project(d);
                entry["process_name"] = p.process_name;
                entry["node_count"] = p.nodes.size();
            } catch (const std::exception& e) {
                entry["error"] = e.what();
            }
            out.push_back(std::move(entry));
        }
        send_json(res, 200, out);
    }

    void create_project(const Request& req, Response& res) {
        auto body = parse_body(req, res);
        if (!body) return;
        const std::string name = body->value("name", "");
        const std::string folder = name.find_first_not_of(" \t\r\n") == std::string::npos ? "" : workflow::sanitize_name(name);
        if (folder.empty()) return send_error(res, 422, "empty_name", "project name is empty after sanitizing");
        const fs::path dir = config.projects_root / folder;
        std::error_code ec;
        if (fs::exists(dir, ec)) return send_error(res, 409, "exists", "project '" + folder + "' already exists");
        workflow::Project project;
        project.process_name = name;
        project.process_description = body->value("description", "");
        fs::create_directories(dir, ec);
        workflow::save_project(project, dir);
        send_json(res, 201, Json{{"name", folder}, {"project", workflow::project_to_json(project)}});
    }

    void get_process(const Request& req, Response& res) {
        auto dir = project_dir(req.matches[1], res);
        if (!dir) return;
        try {
            res.set_content(workflow::serialize_project(workflow::load_project(*dir)), "application/json");
        } catch (const Error& e) {
            send_error(res, 422, e.code(), e.what());
        }
    }

    void put_process(const Request& req, Response& res) {
        const std::string name = req.matches[1];
        auto dir = project_dir(name, res);
        if (!dir) return;
        std::shared_ptr<Lease> lease;
        if (busy(name, res, lease)) return;
        workflow::Project project;
        try {
            project = workflow::parse_project(req.body);
        } catch (const Error& e) {
            return send_error(res, 422, e.code(), e.what());
        }
        const auto report = workflow::validate(project);
        if (report.error_count() > 0) return send_json(res, 422, report.to_json());
        workflow::save_project(project, *dir);
        send_json(res, 200, report.to_json());
    }

    void run(const Request& req, Response& res) {
        const std::string name = req.matches[1];
        auto dir = project_dir(name, res);
        if (!dir) return;
        auto body = parse_body(req, res);
        if (!body) return;

        orchestrator::RunOptions options = config.run_options;
        options.reviewer = config.reviewer ? config.reviewer.get() : config.run_options.reviewer;
        if (auto m = body->find("mode"); m != body->end()) {
            auto mode = m->is_string() ? orchestrator::parse_mode(m->get<std::string>()) : std::nullopt;
            if (!mode) return send_error(res, 422, "bad_mode", "mode must be \"persist\" or \"fast\"");
            options.mode = *mode;
        }

        std::shared_ptr<Lease> lease;
        if (busy(name, res, lease)) return;
        workflow::Project project;
        try {
            project = workflow::load_project(*dir);
        } catch (const Error& e) {
            return send_error(res, 422, e.code(), e.what());
        }
        if (auto n = body->find("nodes"); n != body->end() && !n->is_null()) {
            if (!n->is_array()) return send_error(res, 422, "bad_nodes", "nodes must be a list of node ids");
            std::set<workflow::NodeId> filter;
            for (const auto& id : *n) {
                const std::string s = id.is_string() ? id.get<std::string>() : id.dump();
                if (!project.contains(s)) return send_error(res, 422, "unknown_node", "unknown node '" + s + "'");
                filter.insert(s);
            }
            options.node_filter = std::move(filter);
        }
        const auto report = workflow::validate(project);
        if (!report.executable()) return send_json(res, 422, report.to_json());

        auto client = config.client;
        const fs::path workspace = *dir;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [lease, client, options, workspace, project](std::size_t, httplib::DataSink& sink) mutable {
                auto write = [&](std::string_view event, const Json& data) {
                    const auto frame = sse_frame(event, data);
                    sink.write(frame.data(), frame.size());
                };
                try {
                    orchestrator::run_process(project, workspace, client.get(), options,
                                              [&](const orchestrator::RunEvent& ev) {
                                                  switch (ev.kind) {
                                                  case orchestrator::RunEvent::Kind::NodeStarted:
                                                      write("node_started", Json{{"node_id", ev.node_id}});
                                                      break;
                                                  case orchestrator::RunEvent::Kind::NodeFinished:
                                                      write("node_finished", ev.result->to_json());
                                                      break;
                                                  case orchestrator::RunEvent::Kind::RunComplete: {
                                                      Json j = ev.report->to_json();
                                                      j["project"] = workflow::project_to_json(ev.report->project);
                                                      write("run_complete", j);
                                                      break;
                                                  }
                                                  }
                                              });
                } catch (const orchestrator::ValidationFailed& e) {
                    write("error", Json{{"error", e.code()}, {"report", e.report.to_json()}});
                } catch (const std::exception& e) {
                    write("error", Json{{"error", "run_failed"}, {"message", e.what()}});
                }
                lease.reset();  // before the stream ends, so a follow-up request is not refused
                sink.done();
                return true;
            });
    }

    void clear_code(const Request& req, Response& res) {
        const std::string name = req.matches[1];
        auto dir = project_dir(name, res);
        if (!dir) return;
        std::shared_ptr<Lease> lease;
        if (busy(name, res, lease)) return;
        try {
            auto project = workflow::load_project(*dir);
            const std::string id = req.matches[2];
            if (!project.contains(id)) return send_error(res, 404, "unknown_node", "unknown node '" + id + "'");
            const bool removed =
                orchestrator::clear_code(project, id, *dir, config.run_options.prompt.script_extension);
            workflow::save_project(project, *dir);
            send_json(res, 200, Json{{"removed", removed}, {"node", workflow::node_to_json(project.at(id))}});
        } catch (const Error& e) {
            send_error(res, 422, e.code(), e.what());
        }
    }

    void upload(const Request& req, Response& res) {
        const std::string name = req.matches[1];
        auto dir = project_dir(name, res);
        if (!dir) return;
        if (!req.is_multipart_form_data() || req.files.empty())
            return send_error(res, 400, "bad_request", "expected multipart/form-data with a file field");
        std::shared_ptr<Lease> lease;
        if (busy(name, res, lease)) return;

        workflow::Project project;
        try {
            project = workflow::load_project(*dir);
        } catch (const Error& e) {
            return send_error(res, 422, e.code(), e.what());
        }
        const std::string id = req.matches[2];
        if (!project.contains(id)) return send_error(res, 404, "unknown_node", "unknown node '" + id + "'");
        auto& node = project.at(id);
        const fs::path folder = *dir / workflow::sanitize_name(node.name);
        const std::vector<fs::path> roots{*dir};

        Json stored = Json::array();
        for (const auto& [field, file] : req.files) {
            const std::string base = fs::path(file.filename).filename().string();
            if (base.empty() || base == "." || base == "..")
                return send_error(res, 422, "bad_filename", "attachment needs a plain file name");
            if (file.content.size() > config.max_upload_bytes)
                return send_error(res, 413, "too_large", "attachment exceeds the upload limit");
            const fs::path target = folder / base;
            if (!agent::contain_path(target, roots))
                return send_error(res, 403, "forbidden", "attachment path escapes the project");
            util::write_file(target, file.content);
            if (std::find(node.input.files.begin(), node.input.files.end(), base) == node.input.files.end())
                node.input.files.push_back(base);
            stored.push_back(base);
        }
        workflow::save_project(project, *dir);
        send_json(res, 200, Json{{"stored", stored}, {"node", workflow::node_to_json(node)}});
    }

    void list_files(const Request& req, Response& res) {
        auto dir = project_dir(req.matches[1], res);
        if (!dir) return;
        Json out = Json::array();
        for (const auto& [rel, stamp] : util::list_files(*dir)) {
            const fs::path p(rel);
            if (std::distance(p.begin(), p.end()) < 2) continue;  // node-folder files only
            bool hidden = false;
            for (const auto& part : p)
                if (part == agent::kLogDir || part.string().starts_with("temp_")) hidden = true;
            if (hidden) continue;
            out.push_back(Json{{"path", rel}, {"size", stamp.size}, {"mime", util::mime_for(p)}});
        }
        send_json(res, 200, out);
    }

    void download(const Request& req, Response& res) {
        auto dir = project_dir(req.matches[1], res);
        if (!dir) return;
        const std::string rel = req.matches[2];
        const fs::path target = *dir / rel;
        const std::vector<fs::path> roots{*dir};
        if (fs::path(rel).is_absolute() || !agent::contain_path(target, roots))
            return send_error(res, 403, "forbidden", "path escapes the project");
        std::error_code ec;
        if (!fs::is_regular_file(target, ec)) return send_error(res, 404, "not_found", "no file '" + rel + "'");
        res.set_content(util::read_file(target), util::mime_for(target));
    }

    void chat(const Request& req, Response& res) {
        const std::string name = req.matches[1];
        auto dir = project_dir(name, res);
        if (!dir) return;
        auto body = parse_body(req, res);
        if (!body) return;
        if (!config.client) return send_error(res, 503, "agent_unavailable", "no agent client is configured");
        const std::string message = body->value("message", "");
        if (message.empty()) return send_error(res, 422, "empty_message", "message is empty");

        std::shared_ptr<ChatSession> session;
        {
            std::lock_guard lock(sessions_m);
            const std::string sid = body->value("session", "");
            if (!sid.empty()) {
                auto it = sessions.find(sid);
                if (it == sessions.end() || it->second->project != name)
                    return send_error(res, 404, "unknown_session", "unknown chat session '" + sid + "'");
                session = it->second;
            } else {
                session = std::make_shared<ChatSession>();
                session->id = random_id();
                session->project = name;
                session->timeout = config.approval_timeout;
                sessions[session->id] = session;
            }
        }
        if (session->streaming.exchange(true))
            return send_error(res, 409, "busy", "chat session is already answering a message");
        std::shared_ptr<Lease> lease;
        if (busy(name, res, lease)) {
            session->streaming = false;
            return;
        }

        std::string prompt;
        try {
            prompt = context::render_chat_prompt(*dir, config.run_options.prompt,
                                                 config.run_options.library ? *config.run_options.library
                                                                            : context::PromptLibrary::builtin());
        } catch (const Error& e) {
            session->streaming = false;
            return send_error(res, 422, e.code(), e.what());
        }

        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Skele-Session", session->id);
        auto client = config.client;
        auto reviewer = config.reviewer;
        const auto exec = config.run_options.exec;
        const auto limits = config.run_options.session_limits;
        const auto markers = config.run_options.prompt.markers;
        const fs::path workspace = *dir;
        res.set_chunked_content_provider(
            "text/event-stream",
            [=, lease = lease](std::size_t, httplib::DataSink& sink) mutable {
                std::mutex write_m;
                auto write = [&](std::string_view event, Json data) {
                    data["session"] = session->id;
                    const auto frame = sse_frame(event, data);
                    std::lock_guard lock(write_m);
                    sink.write(frame.data(), frame.size());
                };
                session->announce = [&](const Json& ev) { write("approval_request", ev); };

                const fs::path process_file = workspace / workflow::kProcessFile;
                auto process_stamp = mtime_of(process_file);
                auto broadcast_if_changed = [&] {
                    const auto now = mtime_of(process_file);
                    if (now == process_stamp) return;
                    process_stamp = now;
                    Json ev{{"role", "system"}, {"process_updated", true}};
                    try {
                        const auto project = workflow::load_project(workspace);
                        ev["project"] = workflow::project_to_json(project);
                        ev["validation"] = workflow::validate(project).to_json();
                    } catch (const Error& e) {
                        ev["validation"] = Json{{"error", e.code()}, {"message", e.what()}};
                    }
                    write("chat_message", ev);
                };

                agent::SessionConfig cfg;
                cfg.system_prompt = prompt;
                cfg.roots = {workspace};
                cfg.workspace = workspace;
                cfg.limits = limits;
                cfg.mode = agent::SessionMode::Chat;
                cfg.markers = markers;
                cfg.exec = exec;
                cfg.reviewer = reviewer.get();
                cfg.approval = session.get();
                cfg.guarded_file = process_file;
                cfg.guarded_seen = session->guarded_seen;
                cfg.log_name = "chat_" + session->id;
                cfg.on_event = [&](const agent::SessionEvent& ev) {
                    using K = agent::SessionEvent::Kind;
                    switch (ev.kind) {
                    case K::UserMessage: write("chat_message", Json{{"role", "agent"}, {"text", ev.text}}); break;
                    case K::BlockResult: {
                        Json j{{"role", "tool"}, {"text", ev.text}, {"status", agent::to_string(*ev.status)}};
                        if (ev.block) j["block"] = block_json(*ev.block);
                        write("chat_message", j);
                        broadcast_if_changed();
                        break;
                    }
                    case K::Diagnostic: write("chat_message", Json{{"role", "system"}, {"text", ev.text}}); break;
                    case K::ApprovalResolved:
                        if (ev.text == "denied")
                            write("chat_message", Json{{"role", "tool"},
                                                       {"text", agent::kDeniedObservation},
                                                       {"status", "denied"},
                                                       {"block", block_json(*ev.block)}});
                        break;
                    case K::ApprovalRequested: break;  // the gate announces requests itself
                    }
                };

                auto transcript = session->transcript;
                transcript.push_back({agent::Role::User, message});
                try {
                    auto result = agent::run_session(cfg, *client, std::move(transcript));
                    session->transcript = std::move(result.transcript);
                    session->guarded_seen = result.guarded_seen;
                    if (result.outcome == agent::Outcome::Aborted)
                        write("error", Json{{"error", "agent_unavailable"}, {"message", result.error}});
                    write("chat_message", Json{{"role", "system"},
                                               {"done", true},
                                               {"outcome", agent::to_string(result.outcome)}});
                } catch (const std::exception& e) {
                    write("error", Json{{"error", "session_failed"}, {"message", e.what()}});
                }
                session->announce = nullptr;
                session->streaming = false;
                lease.reset();
                sink.done();
                return true;
            });
    }

    void approve(const Request& req, Response& res) {
        auto body = parse_body(req, res);
        if (!body) return;
        std::shared_ptr<ChatSession> session;
        {
            std::lock_guard lock(sessions_m);
            auto it = sessions.find(req.matches[1]);
            if (it == sessions.end()) return send_error(res, 404, "unknown_session", "unknown chat session");
            session = it->second;
        }
        const std::string request = body->value("request_id", "");
        const bool approved = body->value("approve", false);
        const bool all = body->value("all", false);
        const auto decision = !approved ? agent::ApprovalDecision::Deny
                              : all     ? agent::ApprovalDecision::ApproveAll
                                        : agent::ApprovalDecision::Approve;
        if (!session->resolve(request, decision))
            return send_error(res, 409, "no_pending_request", "no pending approval request '" + request + "'");
        send_json(res, 200, Json{{"ok", true}});
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    std::error_code ec;
    fs::create_directories(impl_->config.projects_root, ec);
    impl_->config.projects_root = fs::canonical(impl_->config.projects_root);
}

Service::~Service() { stop(); }

const ServiceConfig& Service::config() const { return impl_->config; }

void Service::install(httplib::Server& server) {
    Impl* s = impl_.get();
    auto bind = [s](void (Impl::*fn)(const Request&, Response&)) {
        return [s, fn](const Request& req, Response& res) {
            try {
                (s->*fn)(req, res);
            } catch (const std::exception& e) {
                util::log(util::LogLevel::Error, std::string("request failed: ") + e.what());
                send_error(res, 500, "internal", e.what());
            }
        };
    };
    server.set_payload_max_length(s->config.max_upload_bytes + 1024 * 1024);
    server.Get("/api/projects", bind(&Impl::list_projects));
    server.Post("/api/projects", bind(&Impl::create_project));
    server.Get(R"(/api/projects/([^/]+)/process\.json)", bind(&Impl::get_process));
    server.Put(R"(/api/projects/([^/]+)/process\.json)", bind(&Impl::put_process));
    server.Post(R"(/api/projects/([^/]+)/run)", bind(&Impl::run));
    server.Post(R"(/api/projects/([^/]+)/nodes/([^/]+)/clear-code)", bind(&Impl::clear_code));
    server.Post(R"(/api/projects/([^/]+)/nodes/([^/]+)/attachments)", bind(&Impl::upload));
    server.Post(R"(/api/projects/([^/]+)/chat)", bind(&Impl::chat));
    server.Post(R"(/api/chat/([^/]+)/approve)", bind(&Impl::approve));
    server.Get(R"(/api/projects/([^/]+)/files)", bind(&Impl::list_files));
    server.Get(R"(/api/projects/([^/]+)/files/(.+))", bind(&Impl::download));
}

int Service::start(const std::string& host, int port) {
    if (impl_->own_server) throw Error("already_started", "service is already serving");
    impl_->own_server = std::make_unique<httplib::Server>();
    install(*impl_->own_server);
    int bound = port;
    if (port == 0)
        bound = impl_->own_server->bind_to_any_port(host);
    else if (!impl_->own_server->bind_to_port(host, port))
        bound = -1;
    if (bound < 0) {
        impl_->own_server.reset();
        throw Error("bind_failed", "could not bind " + host + ":" + std::to_string(port));
    }
    impl_->server_thread = std::thread([srv = impl_->own_server.get()] { srv->listen_after_bind(); });
    impl_->own_server->wait_until_ready();
    return bound;
}

void Service::stop() {
    if (!impl_ || !impl_->own_server) return;
    impl_->own_server->stop();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
    impl_->own_server.reset();
}

} // namespace skele::service
