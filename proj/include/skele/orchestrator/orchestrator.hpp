#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skele/agent/session.hpp"
#include "skele/context/prompts.hpp"
#include "skele/contract/node_contract.hpp"
#include "skele/workflow/project.hpp"

namespace skele::orchestrator {

namespace fs = std::filesystem;
using workflow::NodeId;
using workflow::Project;

enum class RunMode { Persist, Fast };

std::string_view to_string(RunMode mode);
std::optional<RunMode> parse_mode(std::string_view text);

struct RunOptions {
    RunMode mode = RunMode::Persist;
    int max_repairs_per_node = 2;
    bool agent_enabled = true;
    std::optional<std::set<NodeId>> node_filter;
    std::string interpreter_command = "python3 {script}";
    std::chrono::milliseconds per_node_timeout{std::chrono::seconds(300)};

    context::PromptConfig prompt;
    const context::PromptLibrary* library = nullptr;  // built-in when null
    agent::SessionLimits session_limits;
    agent::ExecOptions exec;
    agent::LlmClient* reviewer = nullptr;  // defaults to the agent client

    // Throws skele::Error("invalid_options") on a negative repair bound or a
    // command template without {script}.
    void check() const;
};

enum class NodeStatus { Success, Failed, SkippedNotMarked, CodeMissing };

std::string_view to_string(NodeStatus status);

struct NodeRunResult {
    NodeId node_id;
    std::string name;
    NodeStatus status = NodeStatus::Failed;
    std::string summary_text;
    std::vector<std::string> new_files;
    std::optional<contract::NodeState> state;
    std::string error;  // error_log or engine-side failure reason
    int exit_code = -1;
    int codegen_sessions_used = 0;
    int repair_sessions_used = 0;
    std::chrono::milliseconds wall_time{0};
    std::string stderr_tail;  // last lines of the script's stderr, fed to repairs

    workflow::Json to_json(bool with_timing = false) const;
};

struct RunReport {
    RunMode mode = RunMode::Persist;
    std::vector<NodeRunResult> results;
    int total_agent_sessions = 0;
    Project project;  // with refreshed output fields

    // True when every executed node succeeded (skipped nodes are not executed).
    bool all_success() const;
    const NodeRunResult* find(std::string_view id) const;
    workflow::Json to_json(bool with_timing = false) const;
};

struct ValidationFailed : Error {
    explicit ValidationFailed(workflow::ValidationReport r)
        : Error("validation_failed", "project has validation errors"), report(std::move(r)) {}
    workflow::ValidationReport report;
};

struct SessionFailure : Error {
    SessionFailure(NodeId id, agent::Outcome outcome)
        : Error("session_failure", "code generation for node '" + id + "' ended: " + std::string(agent::to_string(outcome))),
          node_id(std::move(id)) {}
    NodeId node_id;
};

struct RunEvent {
    enum class Kind { NodeStarted, NodeFinished, RunComplete };
    Kind kind;
    NodeId node_id;
    const NodeRunResult* result = nullptr;  // NodeFinished
    const RunReport* report = nullptr;      // RunComplete
};

using RunObserver = std::function<void(const RunEvent&)>;

// Run-marked nodes in topological order, intersected with the node filter.
// Unmarked priors are not pulled in. Throws ValidationFailed.
std::vector<NodeId> plan_run(const Project& project, const RunOptions& options);

enum class CodeState { Cached, Generated, Missing };

std::string_view to_string(CodeState state);

// Returns Cached without touching the client when the script exists.
// Throws SessionFailure when a codegen session ends without completing.
CodeState ensure_code(const Project& project, std::string_view node_id, const fs::path& workspace,
                      agent::LlmClient* client, const RunOptions& options);

// Spawns the node script and ingests its state, summary and new files into
// `project`. `state_root` is where state files live for this run (the project
// folder in Persist mode, a scratch folder in Fast mode).
NodeRunResult execute_node(Project& project, std::string_view node_id, const fs::path& workspace,
                           const RunOptions& options, const fs::path& state_root);

RunReport run_process(const Project& project, const fs::path& workspace, agent::LlmClient* client,
                      const RunOptions& options, const RunObserver& observer = {});

// Removes the node's script, state and summary (the test folder stays) and
// resets node.output. Returns true if any file was removed.
bool clear_code(Project& project, std::string_view node_id, const fs::path& workspace, std::string_view ext = "py");

// Environment variable names passed to node scripts.
inline constexpr const char* kEnvProjectDir = "SKELE_PROJECT_DIR";
inline constexpr const char* kEnvNodeName = "SKELE_NODE_NAME";
inline constexpr const char* kEnvMode = "SKELE_MODE";
inline constexpr const char* kEnvStateDir = "SKELE_STATE_DIR";
inline constexpr const char* kEnvStateRoot = "SKELE_STATE_ROOT";

} // namespace skele::orchestrator
