#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skele/agent/markers.hpp"
#include "skele/context/context.hpp"

namespace skele::context {

struct PromptConfig {
    std::string language = "Python";
    std::string script_extension = "py";
    std::string fence_language = "python";
    agent::BlockMarkerSet markers;
    // Deployment-specific helper code for LLM/embedding calls; the fallback notice is used when absent.
    std::optional<std::string> helper_snippet;
    // Example process.json shown to the chat agent; the shipped example is used when absent.
    std::optional<std::string> process_template;
};

// Named template texts. The built-in set is compiled from the prompts/ directory.
class PromptLibrary {
public:
    static const PromptLibrary& builtin();
    // Built-in templates overridden by any same-named files found in `dir`.
    static PromptLibrary from_directory(const std::filesystem::path& dir);

    const std::string& get(const std::string& name) const;
    void set(const std::string& name, std::string text) { templates_[name] = std::move(text); }

private:
    std::map<std::string, std::string> templates_;
};

using TemplateVars = std::map<std::string, std::string>;

// Replaces each `{name}` whose name is a key of `vars`; other braces pass through.
// Substituted values are not rescanned.
std::string render_template(std::string_view templ, const TemplateVars& vars);

std::string render_node_prompt(const ContextBundle& bundle, const std::string& task_text, const PromptConfig& config,
                               const PromptLibrary& library = PromptLibrary::builtin());

std::string render_chat_prompt(const std::filesystem::path& workspace, const PromptConfig& config,
                               const PromptLibrary& library = PromptLibrary::builtin());

std::string render_security_prompt(const std::string& command, const std::vector<std::filesystem::path>& allowed_folders,
                                   const PromptLibrary& library = PromptLibrary::builtin());

struct RepairDetails {
    std::filesystem::path script_path;
    int attempt = 1;
    int max_attempts = 1;
    std::string exit_status;
    std::string error_log;
    std::string summary_tail;
    std::string stderr_text;
};

// Failure section appended to a node prompt for a repair session.
std::string render_repair_section(const RepairDetails& details, const PromptLibrary& library = PromptLibrary::builtin());

} // namespace skele::context
