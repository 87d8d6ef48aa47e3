#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skele/util/fs.hpp"
#include "skele/workflow/project.hpp"

namespace skele::contract {

namespace fs = std::filesystem;
using workflow::Json;

struct StateMissing : Error {
    explicit StateMissing(const fs::path& p) : Error("state_missing", "state file not found: " + p.string()) {}
};
struct ContractViolation : Error {
    explicit ContractViolation(const std::string& msg) : Error("contract_violation", msg) {}
};
struct StateSyntaxError : Error {
    explicit StateSyntaxError(const std::string& msg) : Error("syntax_error", msg) {}
};

enum class TaskStatus { Success, Failed };

// The persisted output record of one node run.
struct NodeState {
    TaskStatus status = TaskStatus::Failed;
    std::optional<std::string> error_log;  // required when failed
    Json values = Json::object();          // every other key, in file order

    bool success() const { return status == TaskStatus::Success; }
    Json to_json() const;
    bool operator==(const NodeState&) const = default;

    static NodeState failed(std::string error_log);
};

NodeState parse_state(std::string_view text);
NodeState read_state(const fs::path& path);
void write_state(const fs::path& path, const NodeState& state);

inline constexpr std::string_view kStateSuffix = ".state.json";
inline constexpr std::string_view kSummarySuffix = "_summary.txt";
inline constexpr std::string_view kTempPrefix = "temp_";

// On-disk layout of one node: <project>/<name>/ holding <name>.<ext>,
// <name>.state.json, <name>_summary.txt and test/test_<name>.<ext>.
struct NodeFolder {
    fs::path project_dir;
    std::string name;  // sanitized
    std::string ext = "py";

    static NodeFolder of(const fs::path& project_dir, const workflow::Node& node, std::string ext = "py");

    fs::path root() const { return project_dir / name; }
    fs::path script() const { return root() / (name + "." + ext); }
    std::string state_file_name() const { return name + std::string(kStateSuffix); }
    fs::path state_file() const { return root() / state_file_name(); }
    fs::path state_file_in(const fs::path& dir) const { return dir / state_file_name(); }
    fs::path summary_file() const { return root() / (name + std::string(kSummarySuffix)); }
    fs::path test_dir() const { return root() / "test"; }
    fs::path test_script() const { return test_dir() / ("test_" + name + "." + ext); }
};

using FolderSnapshot = std::map<std::string, util::FileStamp>;

// Files under the node folder keyed by path relative to the folder.
FolderSnapshot snapshot(const NodeFolder& folder);

struct Outputs {
    std::string summary_text;
    std::vector<std::string> new_files;  // relative to the project folder, sorted
    std::vector<std::string> warnings;
};

// A file counts as new when it is absent from `before` or its size/mtime changed.
// The state file, summary file, temp_-prefixed files and agent logs never count.
Outputs collect_outputs(const NodeFolder& folder, const FolderSnapshot& before);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ConformanceReport {
    std::vector<Check> checks;
    bool all_passed() const;
    const Check* find(std::string_view name) const;
};

// Pre-run checks: script, test script. Post-run adds state contract, summary
// presence, task-description first line, freshness and the outcome message.
ConformanceReport conformance_check(const NodeFolder& folder, bool post_run = true);

// Last `n` lines of `text`.
std::string tail_lines(const std::string& text, std::size_t n);

} // namespace skele::contract
