#include "skele/orchestrator/orchestrator.hpp"

#include <algorithm>
#include <set>

#include "skele/context/context.hpp"
#include "skele/util/fs.hpp"
#include "skele/util/log.hpp"
#include "skele/util/subprocess.hpp"

namespace skele::orchestrator {

namespace {

using Clock = std::chrono::steady_clock;
using workflow::Json;

constexpr std::size_t kRepairSummaryLines = 50;
constexpr std::size_t kRepairStderrBytes = 16 * 1024;

const context::PromptLibrary& library_of(const RunOptions& options) {
    return options.library ? *options.library : context::PromptLibrary::builtin();
}

std::string session_log_name(std::string_view kind, const std::string& folder) {
    const auto ticks = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    return std::string(kind) + "_" + folder + "_" + std::to_string(ticks);
}

agent::SessionConfig session_config(const fs::path& workspace, std::string prompt, const RunOptions& options,
                                    std::string log_name) {
    agent::SessionConfig cfg;
    cfg.system_prompt = std::move(prompt);
    cfg.roots = {workspace};
    cfg.workspace = workspace;
    cfg.limits = options.session_limits;
    cfg.mode = agent::SessionMode::Codegen;
    cfg.markers = options.prompt.markers;
    cfg.exec = options.exec;
    cfg.reviewer = options.reviewer;
    cfg.log_name = std::move(log_name);
    return cfg;
}

std::string node_prompt(const Project& project, const workflow::Node& node, const fs::path& workspace,
                        const RunOptions& options) {
    const auto bundle = context::assemble_context(project, node.id, workspace, options.prompt.script_extension);
    std::string prompt = context::render_node_prompt(bundle, node.input.text, options.prompt, library_of(options));
    const auto attachments = context::load_input_attachments(node, workspace / bundle.folder_name);
    return context::append_file_context(prompt, attachments);
}

std::optional<util::FileStamp> stamp_of(const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return std::nullopt;
    return util::FileStamp{fs::last_write_time(p, ec), fs::file_size(p, ec)};
}

std::string read_if_exists(const fs::path& p) {
    std::error_code ec;
    return fs::is_regular_file(p, ec) ? util::read_file(p) : std::string();
}

} // namespace

std::string_view to_string(RunMode mode) { return mode == RunMode::Persist ? "persist" : "fast"; }

std::optional<RunMode> parse_mode(std::string_view text) {
    if (text == "persist") return RunMode::Persist;
    if (text == "fast") return RunMode::Fast;
    return std::nullopt;
}

std::string_view to_string(NodeStatus status) {
    switch (status) {
    case NodeStatus::Success: return "success";
    case NodeStatus::Failed: return "failed";
    case NodeStatus::SkippedNotMarked: return "skipped_not_marked";
    case NodeStatus::CodeMissing: return "code_missing";
    }
    return "unknown";
}

std::string_view to_string(CodeState state) {
    switch (state) {
    case CodeState::Cached: return "cached";
    case CodeState::Generated: return "generated";
    case CodeState::Missing: return "missing";
    }
    return "unknown";
}

void RunOptions::check() const {
    if (max_repairs_per_node < 0) throw Error("invalid_options", "max_repairs_per_node must be >= 0");
    if (interpreter_command.find("{script}") == std::string::npos)
        throw Error("invalid_options", "interpreter command must contain {script}");
}

Json NodeRunResult::to_json(bool with_timing) const {
    Json j = Json::object();
    j["node_id"] = node_id;
    j["name"] = name;
    j["status"] = to_string(status);
    j["summary_text"] = summary_text;
    j["new_files"] = new_files;
    j["state"] = state ? state->to_json() : Json(nullptr);
    j["error"] = error;
    j["exit_code"] = exit_code;
    j["codegen_sessions_used"] = codegen_sessions_used;
    j["repair_sessions_used"] = repair_sessions_used;
    if (with_timing) j["wall_time_ms"] = wall_time.count();
    return j;
}

bool RunReport::all_success() const {
    return std::all_of(results.begin(), results.end(), [](const NodeRunResult& r) {
        return r.status == NodeStatus::Success || r.status == NodeStatus::SkippedNotMarked;
    });
}

const NodeRunResult* RunReport::find(std::string_view id) const {
    for (const auto& r : results)
        if (r.node_id == id) return &r;
    return nullptr;
}

Json RunReport::to_json(bool with_timing) const {
    Json results_json = Json::array();
    for (const auto& r : results) results_json.push_back(r.to_json(with_timing));
    Json j = Json::object();
    j["mode"] = to_string(mode);
    j["all_success"] = all_success();
    j["total_agent_sessions"] = total_agent_sessions;
    j["results"] = std::move(results_json);
    return j;
}

std::vector<NodeId> plan_run(const Project& project, const RunOptions& options) {
    auto report = workflow::validate(project);
    if (!report.executable()) throw ValidationFailed(std::move(report));
    std::set<NodeId> marked;
    for (const auto& n : project.nodes) {
        if (!n.run) continue;
        if (options.node_filter && !options.node_filter->count(n.id)) continue;
        marked.insert(n.id);
    }
    return workflow::topological_order(project, marked);
}

CodeState ensure_code(const Project& project, std::string_view node_id, const fs::path& workspace,
                      agent::LlmClient* client, const RunOptions& options) {
    const workflow::Node& node = project.at(node_id);
    const auto folder = contract::NodeFolder::of(workspace, node, options.prompt.script_extension);
    std::error_code ec;
    if (fs::is_regular_file(folder.script(), ec)) return CodeState::Cached;
    if (!options.agent_enabled || client == nullptr) return CodeState::Missing;

    fs::create_directories(folder.root(), ec);
    auto cfg = session_config(workspace, node_prompt(project, node, workspace, options), options,
                              session_log_name("codegen", folder.name));
    const auto result = agent::run_session(cfg, *client);
    if (result.outcome != agent::Outcome::Completed) throw SessionFailure(node.id, result.outcome);
    return fs::is_regular_file(folder.script(), ec) ? CodeState::Generated : CodeState::Missing;
}

NodeRunResult execute_node(Project& project, std::string_view node_id, const fs::path& workspace,
                           const RunOptions& options, const fs::path& state_root) {
    workflow::Node& node = project.at(node_id);
    const auto folder = contract::NodeFolder::of(workspace, node, options.prompt.script_extension);
    const auto started = Clock::now();

    NodeRunResult result;
    result.node_id = node.id;
    result.name = node.name;

    std::error_code ec;
    if (!fs::is_regular_file(folder.script(), ec)) {
        result.status = NodeStatus::CodeMissing;
        result.error = "no script at " + folder.script().string();
        return result;
    }

    const fs::path state_dir = state_root == workspace ? folder.root() : state_root / folder.name;
    fs::create_directories(state_dir, ec);
    const fs::path state_file = folder.state_file_in(state_dir);
    const auto state_before = stamp_of(state_file);
    const auto before = contract::snapshot(folder);

    const fs::path out_capture = folder.root() / ("temp_" + folder.name + "_stdout.txt");
    const fs::path err_capture = folder.root() / ("temp_" + folder.name + "_stderr.txt");
    util::SpawnOptions spawn;
    spawn.argv = util::expand_command(options.interpreter_command, folder.script().string());
    spawn.cwd = folder.root();
    spawn.env = {
        {kEnvProjectDir, workspace.string()},
        {kEnvNodeName, folder.name},
        {kEnvMode, std::string(to_string(options.mode))},
        {kEnvStateDir, state_dir.string()},
        {kEnvStateRoot, state_root.string()},
    };
    spawn.stdout_path = out_capture;
    spawn.stderr_path = err_capture;
    spawn.timeout = options.per_node_timeout;

    util::ExitStatus exit;
    std::string spawn_error;
    try {
        exit = util::run_process(spawn);
    } catch (const std::exception& e) {
        spawn_error = e.what();
    }
    const std::string stderr_text = read_if_exists(err_capture);
    fs::remove(out_capture, ec);
    fs::remove(err_capture, ec);
    result.exit_code = exit.exit_code;

    // Only a state file written by this run counts; anything else is stale.
    const auto state_after = stamp_of(state_file);
    if (!spawn_error.empty()) {
        result.error = "could not start script: " + spawn_error;
    } else if (exit.timed_out) {
        result.error = "timeout";
    } else if (state_after && state_after != state_before) {
        try {
            result.state = contract::read_state(state_file);
            if (!result.state->success()) result.error = result.state->error_log.value_or("");
        } catch (const std::exception& e) {
            result.error = std::string("invalid state file: ") + e.what();
        }
    } else {
        result.error = "script did not write " + state_file.filename().string();
    }
    if (result.error.empty() && exit.exit_code != 0)
        result.error = "script exited with code " + std::to_string(exit.exit_code) +
                       (stderr_text.empty() ? "" : ": " + contract::tail_lines(stderr_text, 5));

    const bool success = result.error.empty() && result.state && result.state->success() && exit.exit_code == 0;
    result.status = success ? NodeStatus::Success : NodeStatus::Failed;
    if (!success && (!result.state || result.state->success())) {
        // Successors must not consume a stale or contradicting success record.
        contract::write_state(state_file, contract::NodeState::failed(result.error));
        if (!result.state) result.state = contract::NodeState::failed(result.error);
    }

    auto outputs = contract::collect_outputs(folder, before);
    for (const auto& w : outputs.warnings) util::log(util::LogLevel::Info, "node " + node.id + ": " + w);
    result.summary_text = outputs.summary_text;
    result.new_files = std::move(outputs.new_files);
    node.output.text = result.summary_text;
    node.output.files = result.new_files;

    result.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started);
    result.stderr_tail = contract::tail_lines(stderr_text, 40);
    return result;
}

RunReport run_process(const Project& input, const fs::path& workspace, agent::LlmClient* client,
                      const RunOptions& options, const RunObserver& observer) {
    options.check();
    RunReport report;
    report.mode = options.mode;
    report.project = input;
    Project& project = report.project;

    const auto plan = plan_run(project, options);
    auto emit = [&](RunEvent ev) {
        if (observer) observer(ev);
    };

    std::optional<util::TempDir> scratch;
    if (options.mode == RunMode::Fast) scratch.emplace("skele-fast");
    const fs::path state_root = scratch ? scratch->path() : workspace;

    if (options.node_filter) {
        for (const auto& id : *options.node_filter) {
            const auto* n = project.find(id);
            if (n && !n->run) {
                NodeRunResult skipped;
                skipped.node_id = n->id;
                skipped.name = n->name;
                skipped.status = NodeStatus::SkippedNotMarked;
                report.results.push_back(std::move(skipped));
            }
        }
    }

    for (const auto& id : plan) {
        emit({RunEvent::Kind::NodeStarted, id});
        const auto started = Clock::now();
        NodeRunResult result;
        int codegen = 0;
        std::string codegen_error;
        try {
            const bool cached = ensure_code(project, id, workspace, nullptr, options) == CodeState::Cached;
            if (!cached && options.agent_enabled && client) ++codegen;
            if (!cached) ensure_code(project, id, workspace, client, options);
        } catch (const SessionFailure& e) {
            codegen_error = e.what();
        } catch (const std::exception& e) {
            codegen_error = std::string("code generation failed: ") + e.what();
        }

        result = execute_node(project, id, workspace, options, state_root);
        if (result.status == NodeStatus::CodeMissing && !codegen_error.empty()) result.error = codegen_error;

        // A node that failed because a prior failed in this run is not its own script's fault.
        bool prior_failed = false;
        for (const auto& prior : project.at(id).priors) {
            const auto* pr = report.find(prior);
            if (pr && (pr->status == NodeStatus::Failed || pr->status == NodeStatus::CodeMissing)) prior_failed = true;
        }

        int repairs = 0;
        while (result.status == NodeStatus::Failed && !prior_failed && repairs < options.max_repairs_per_node &&
               options.agent_enabled && client) {
            ++repairs;
            const workflow::Node& node = project.at(id);
            const auto folder = contract::NodeFolder::of(workspace, node, options.prompt.script_extension);
            context::RepairDetails details;
            details.script_path = folder.script();
            details.attempt = repairs;
            details.max_attempts = options.max_repairs_per_node;
            details.exit_status = result.exit_code >= 0 ? "exit code " + std::to_string(result.exit_code) : "killed";
            details.error_log = result.error;
            details.summary_tail = contract::tail_lines(result.summary_text, kRepairSummaryLines);
            details.stderr_text = result.stderr_tail.substr(0, kRepairStderrBytes);
            std::string prompt = node_prompt(project, node, workspace, options) +
                                 context::render_repair_section(details, library_of(options));
            try {
                auto cfg = session_config(workspace, std::move(prompt), options, session_log_name("repair", folder.name));
                const auto session = agent::run_session(cfg, *client);
                if (session.outcome != agent::Outcome::Completed)
                    util::log(util::LogLevel::Warn, "repair session for node " + id + " ended: " +
                                                        std::string(agent::to_string(session.outcome)));
            } catch (const std::exception& e) {
                util::log(util::LogLevel::Warn, "repair session for node " + id + " failed: " + e.what());
            }
            result = execute_node(project, id, workspace, options, state_root);
        }

        result.codegen_sessions_used = codegen;
        result.repair_sessions_used = repairs;
        result.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started);
        report.total_agent_sessions += codegen + repairs;
        report.results.push_back(std::move(result));
        emit({RunEvent::Kind::NodeFinished, id, &report.results.back()});
    }

    if (options.mode == RunMode::Persist) workflow::save_project(project, workspace);
    emit({RunEvent::Kind::RunComplete, {}, nullptr, &report});
    return report;
}

bool clear_code(Project& project, std::string_view node_id, const fs::path& workspace, std::string_view ext) {
    workflow::Node& node = project.at(node_id);
    const auto folder = contract::NodeFolder::of(workspace, node, std::string(ext));
    bool removed = false;
    std::error_code ec;
    for (const auto& p : {folder.script(), folder.state_file(), folder.summary_file()}) removed |= fs::remove(p, ec);
    node.output = {};
    return removed;
}

} // namespace skele::orchestrator
