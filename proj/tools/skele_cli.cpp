// skele: run, validate and scaffold workflow projects; optionally serve them over HTTP.
//
// Exit codes: 0 success, 1 node failure or validation error, 2 usage error.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "skele/agent/client.hpp"
#include "skele/orchestrator/orchestrator.hpp"
#include "skele/service/service.hpp"
#include "skele/util/fs.hpp"
#include "skele/workflow/project.hpp"

namespace fs = std::filesystem;
namespace orch = skele::orchestrator;
namespace wf = skele::workflow;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

std::string severity_name(wf::Severity s) { return s == wf::Severity::Error ? "error" : "warning"; }

void print_diagnostics(const wf::ValidationReport& report) {
    for (const auto& d : report.diagnostics) {
        std::cerr << severity_name(d.severity) << " [" << d.code << "]";
        if (!d.node_ids.empty()) {
            std::cerr << " nodes";
            for (const auto& id : d.node_ids) std::cerr << ' ' << id;
        }
        std::cerr << ": " << d.message << '\n';
    }
}

std::set<std::string> split_ids(const std::string& csv) {
    std::set<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.insert(item);
    return out;
}

std::unique_ptr<skele::agent::LlmClient> make_client(bool wanted) {
    if (!wanted) return nullptr;
    auto cfg = skele::agent::HttpClientConfig::from_env();
    if (!cfg.configured()) {
        std::cerr << "note: SKELE_LLM_BASE_URL/SKELE_LLM_MODEL not set; running without the coding agent\n";
        return nullptr;
    }
    return std::make_unique<skele::agent::HttpLlmClient>(std::move(cfg));
}

int cmd_validate(const fs::path& dir) {
    wf::Project project;
    try {
        project = wf::load_project(dir);
    } catch (const skele::Error& e) {
        std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
        return kFailure;
    }
    const auto report = wf::validate(project);
    print_diagnostics(report);
    std::cout << project.nodes.size() << " nodes, " << report.error_count() << " errors\n";
    return report.executable() ? kOk : kFailure;
}

int cmd_new(const std::string& name, const fs::path& parent, const std::string& description) {
    if (name.find_first_not_of(" \t\r\n\f\v") == std::string::npos) {
        std::cerr << "error: project name is empty\n";
        return kUsage;
    }
    const fs::path dir = parent / wf::sanitize_name(name);
    std::error_code ec;
    if (fs::exists(dir / wf::kProcessFile, ec)) {
        std::cerr << "error: " << (dir / wf::kProcessFile).string() << " already exists\n";
        return kFailure;
    }
    fs::create_directories(dir, ec);
    wf::Project project;
    project.process_name = name;
    project.process_description = description;
    wf::save_project(project, dir);
    std::cout << "created " << (dir / wf::kProcessFile).string() << '\n';
    return kOk;
}

struct RunFlags {
    fs::path dir;
    std::string mode = "persist";
    std::string nodes;
    bool no_agent = false;
    int max_repairs = 2;
    double timeout_s = 300;
    std::string report_path;
    std::string interpreter = "python3 {script}";
};

int cmd_run(const RunFlags& f) {
    orch::RunOptions options;
    options.mode = *orch::parse_mode(f.mode);
    options.max_repairs_per_node = f.max_repairs;
    options.per_node_timeout = std::chrono::milliseconds(static_cast<long long>(f.timeout_s * 1000));
    options.interpreter_command = f.interpreter;

    wf::Project project;
    try {
        project = wf::load_project(f.dir);
    } catch (const skele::Error& e) {
        std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
        return kFailure;
    }
    if (!f.nodes.empty()) {
        auto ids = split_ids(f.nodes);
        for (const auto& id : ids)
            if (!project.contains(id)) {
                std::cerr << "error: unknown node '" << id << "'\n";
                return kUsage;
            }
        options.node_filter = std::move(ids);
    }

    auto client = make_client(!f.no_agent);
    options.agent_enabled = client != nullptr;

    orch::RunReport report;
    try {
        options.check();
        report = orch::run_process(project, fs::absolute(f.dir), client.get(), options, [](const orch::RunEvent& ev) {
            if (ev.kind == orch::RunEvent::Kind::NodeStarted) std::cerr << "running node " << ev.node_id << "...\n";
        });
    } catch (const orch::ValidationFailed& e) {
        print_diagnostics(e.report);
        std::cout << project.nodes.size() << " nodes, " << e.report.error_count() << " errors\n";
        return kFailure;
    } catch (const skele::Error& e) {
        std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
        return kFailure;
    }

    for (const auto& r : report.results) {
        std::cout << '[' << orch::to_string(r.status) << "] " << r.node_id << ' ' << r.name;
        if (!r.new_files.empty()) std::cout << " (" << r.new_files.size() << " new files)";
        if (!r.error.empty()) std::cout << ": " << r.error;
        std::cout << '\n';
    }
    std::cout << report.results.size() << " nodes, " << report.total_agent_sessions << " agent sessions\n";

    if (!f.report_path.empty()) {
        try {
            skele::util::write_file(f.report_path, report.to_json().dump(2) + "\n");
        } catch (const std::exception& e) {
            std::cerr << "error: could not write report: " << e.what() << '\n';
            return kFailure;
        }
    }
    return report.all_success() ? kOk : kFailure;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const fs::path& root, const std::string& host, int port, bool no_agent) {
    skele::service::ServiceConfig cfg;
    cfg.projects_root = root;
    cfg.client = make_client(!no_agent);
    cfg.run_options.agent_enabled = cfg.client != nullptr;
    skele::service::Service service(std::move(cfg));
    const int bound = service.start(host, port);
    std::cout << "serving " << fs::absolute(root).string() << " on http://" << host << ':' << bound << '\n'
              << std::flush;
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    service.stop();
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"skele: deterministic workflow runner"};
    app.require_subcommand(1);

    fs::path validate_dir;
    auto* validate = app.add_subcommand("validate", "Check a project's process.json");
    validate->add_option("dir", validate_dir, "Project folder")->required();

    std::string new_name, new_description;
    fs::path new_parent = ".";
    auto* create = app.add_subcommand("new", "Create an empty project folder");
    create->add_option("name", new_name, "Project name")->required();
    create->add_option("--in", new_parent, "Parent folder");
    create->add_option("--description", new_description, "Project description");

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "Execute the run-marked nodes");
    run->add_option("dir", run_flags.dir, "Project folder")->required();
    run->add_option("--mode", run_flags.mode, "persist or fast")->check(CLI::IsMember({"persist", "fast"}));
    run->add_option("--nodes", run_flags.nodes, "Comma separated node ids to run");
    auto* no_agent = run->add_flag("--no-agent", run_flags.no_agent, "Never call the coding agent");
    run->add_option("--max-repairs", run_flags.max_repairs, "Repair sessions per failing node")
        ->check(CLI::NonNegativeNumber)
        ->excludes(no_agent);
    run->add_option("--timeout", run_flags.timeout_s, "Per-node timeout in seconds")->check(CLI::PositiveNumber);
    run->add_option("--report", run_flags.report_path, "Write a JSON run report");
    run->add_option("--interpreter", run_flags.interpreter, "Command template for node scripts");

    fs::path serve_root;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    bool serve_no_agent = false;
    auto* serve = app.add_subcommand("serve", "Serve a folder of projects over HTTP");
    serve->add_option("root", serve_root, "Folder holding one folder per project")->required();
    serve->add_option("--host", serve_host);
    serve->add_option("--port", serve_port)->check(CLI::Range(0, 65535));
    serve->add_flag("--no-agent", serve_no_agent);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*validate) return cmd_validate(validate_dir);
        if (*create) return cmd_new(new_name, new_parent, new_description);
        if (*run) {
            if (run_flags.interpreter.find("{script}") == std::string::npos) {
                std::cerr << "error: --interpreter must contain {script}\n";
                return kUsage;
            }
            return cmd_run(run_flags);
        }
        if (*serve) return cmd_serve(serve_root, serve_host, serve_port, serve_no_agent);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}
