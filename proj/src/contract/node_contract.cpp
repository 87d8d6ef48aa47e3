#include "skele/contract/node_contract.hpp"

#include <algorithm>
#include <cctype>

namespace skele::contract {

namespace {

constexpr auto kSummarySkew = std::chrono::seconds(5);

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool excluded(const std::string& rel, const NodeFolder& folder) {
    const fs::path p(rel);
    const std::string file = p.filename().string();
    if (file.starts_with(kTempPrefix)) return true;
    for (const auto& part : p)
        if (part == ".chat_agent_logs" || part.string().starts_with(kTempPrefix)) return true;
    return rel == folder.state_file_name() || rel == folder.summary_file().filename().string();
}

} // namespace

Json NodeState::to_json() const {
    Json j = Json::object();
    j["task_status"] = status == TaskStatus::Success ? "success" : "failed";
    if (error_log) j["error_log"] = *error_log;
    for (const auto& [k, v] : values.items()) j[k] = v;
    return j;
}

NodeState NodeState::failed(std::string error_log) {
    NodeState s;
    s.status = TaskStatus::Failed;
    s.error_log = std::move(error_log);
    return s;
}

NodeState parse_state(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw StateSyntaxError(e.what());
    }
    if (!doc.is_object()) throw ContractViolation("state must be a JSON object");
    auto status = doc.find("task_status");
    if (status == doc.end()) throw ContractViolation("state has no task_status");
    if (!status->is_string() || (*status != "success" && *status != "failed"))
        throw ContractViolation("task_status must be \"success\" or \"failed\", got " + status->dump());

    NodeState state;
    state.status = *status == "success" ? TaskStatus::Success : TaskStatus::Failed;
    if (auto log = doc.find("error_log"); log != doc.end() && !log->is_null())
        state.error_log = log->is_string() ? log->get<std::string>() : log->dump();
    if (state.status == TaskStatus::Failed && !state.error_log)
        throw ContractViolation("failed state must carry an error_log");
    for (const auto& [k, v] : doc.items())
        if (k != "task_status" && k != "error_log") state.values[k] = v;
    return state;
}

NodeState read_state(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw StateMissing(path);
    return parse_state(util::read_file(path));
}

void write_state(const fs::path& path, const NodeState& state) { util::write_file(path, state.to_json().dump(2) + "\n"); }

NodeFolder NodeFolder::of(const fs::path& project_dir, const workflow::Node& node, std::string ext) {
    return NodeFolder{project_dir, workflow::sanitize_name(node.name), std::move(ext)};
}

FolderSnapshot snapshot(const NodeFolder& folder) { return util::list_files(folder.root()); }

Outputs collect_outputs(const NodeFolder& folder, const FolderSnapshot& before) {
    Outputs out;
    std::error_code ec;
    if (fs::is_regular_file(folder.summary_file(), ec)) {
        out.summary_text = util::read_file(folder.summary_file());
    } else {
        out.warnings.push_back("no summary file " + folder.summary_file().filename().string() + " was written");
    }
    for (const auto& [rel, stamp] : util::list_files(folder.root())) {
        if (excluded(rel, folder)) continue;
        auto it = before.find(rel);
        if (it != before.end() && it->second == stamp) continue;
        out.new_files.push_back(folder.name + "/" + rel);
    }
    return out;  // list_files is ordered, so new_files is sorted
}

bool ConformanceReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

const Check* ConformanceReport::find(std::string_view name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

ConformanceReport conformance_check(const NodeFolder& folder, bool post_run) {
    ConformanceReport report;
    std::error_code ec;
    auto add = [&](std::string name, bool ok, std::string detail) {
        report.checks.push_back({std::move(name), ok, std::move(detail)});
    };

    add("script", fs::is_regular_file(folder.script(), ec), folder.script().string());
    add("unit_test", fs::is_regular_file(folder.test_script(), ec), folder.test_script().string());
    if (!post_run) return report;

    std::optional<NodeState> state;
    try {
        state = read_state(folder.state_file());
        add("state_contract", true, state->success() ? "success" : "failed: " + *state->error_log);
    } catch (const std::exception& e) {
        add("state_contract", false, e.what());
    }

    const bool has_summary = fs::is_regular_file(folder.summary_file(), ec);
    add("summary", has_summary, folder.summary_file().string());
    if (!has_summary) return report;

    const std::string summary = util::read_file(folder.summary_file());
    const std::string first_line = summary.substr(0, summary.find('\n'));
    const std::string first_lower = lower(first_line);
    const bool describes_task = first_line.find_first_not_of(" \t\r") != std::string::npos &&
                                !first_lower.starts_with("task completed") && !first_lower.starts_with("task failed");
    add("summary_task_description", describes_task, first_line);

    if (fs::is_regular_file(folder.state_file(), ec)) {
        // The summary's last line is normally written just before save(), so allow some skew.
        const auto summary_time = fs::last_write_time(folder.summary_file(), ec);
        const auto state_time = fs::last_write_time(folder.state_file(), ec);
        const bool fresh = summary_time + kSummarySkew >= state_time;
        add("summary_fresh", fresh, fresh ? "" : "summary is older than the state file");
    }

    const std::string body = lower(summary);
    if (!state || state->success()) {
        const bool ok = body.find("task completed") != std::string::npos;
        add("outcome_message", ok, ok ? "" : "summary lacks a \"Task completed successfully\" line");
    } else {
        const bool ok = body.find("task failed") != std::string::npos;
        add("outcome_message", ok, ok ? "" : "summary lacks a \"Task failed: <reason>\" line");
    }
    return report;
}

std::string tail_lines(const std::string& text, std::size_t n) {
    if (n == 0) return {};
    std::size_t pos = text.size();
    if (pos > 0 && text[pos - 1] == '\n') --pos;
    std::size_t count = 0;
    while (pos > 0) {
        if (text[pos - 1] == '\n' && ++count == n) break;
        --pos;
    }
    return text.substr(pos);
}

} // namespace skele::contract
