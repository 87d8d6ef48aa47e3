#include "skele/context/prompts.hpp"

#include <cctype>

#include "skele/util/fs.hpp"

namespace skele::context {

namespace detail {
const std::map<std::string, std::string>& embedded_prompts();
}

namespace {

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string join_paths(const std::vector<fs::path>& paths, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (i) out += sep;
        out += paths[i].string();
    }
    return out;
}

// Variables shared by the codegen and chat prompts.
TemplateVars common_vars(const PromptConfig& config, const PromptLibrary& library) {
    TemplateVars vars{
        {"language", config.language},
        {"language_upper", upper(config.language)},
        {"ext", config.script_extension},
        {"fence_lang", config.fence_language},
        {"shell_start", config.markers.shell_start},
        {"read_start", config.markers.read_start},
        {"write_start", config.markers.write_start},
        {"delete_start", config.markers.delete_start},
        {"block_end", config.markers.block_end},
        {"task_completed", config.markers.task_completed},
    };
    vars["helper_snippet"] = config.helper_snippet ? *config.helper_snippet
                                                   : render_template(library.get("helper_fallback.txt"), vars);
    vars["critical_instructions"] = render_template(library.get("critical_suffix.txt"), vars);
    return vars;
}

} // namespace

const PromptLibrary& PromptLibrary::builtin() {
    static const PromptLibrary lib = [] {
        PromptLibrary l;
        for (const auto& [name, text] : detail::embedded_prompts()) l.templates_[name] = text;
        return l;
    }();
    return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
    PromptLibrary lib = builtin();
    for (const auto& [name, _] : detail::embedded_prompts()) {
        std::error_code ec;
        if (fs::is_regular_file(dir / name, ec)) lib.templates_[name] = util::read_file(dir / name);
    }
    return lib;
}

const std::string& PromptLibrary::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw Error("missing_template", "no prompt template named " + name);
    return it->second;
}

std::string render_template(std::string_view templ, const TemplateVars& vars) {
    std::string out;
    out.reserve(templ.size());
    std::size_t i = 0;
    while (i < templ.size()) {
        const std::size_t open = templ.find('{', i);
        if (open == std::string_view::npos) {
            out.append(templ.substr(i));
            break;
        }
        out.append(templ.substr(i, open - i));
        std::size_t close = open + 1;
        while (close < templ.size() && (std::islower(static_cast<unsigned char>(templ[close])) || templ[close] == '_'))
            ++close;
        if (close < templ.size() && templ[close] == '}') {
            auto it = vars.find(std::string(templ.substr(open + 1, close - open - 1)));
            if (it != vars.end()) {
                out += it->second;
                i = close + 1;
                continue;
            }
        }
        out += '{';
        i = open + 1;
    }
    return out;
}

std::string render_node_prompt(const ContextBundle& bundle, const std::string& task_text, const PromptConfig& config,
                               const PromptLibrary& library) {
    TemplateVars vars = common_vars(config, library);
    const std::string project_dir = bundle.workspace_roots.empty() ? "" : bundle.workspace_roots.front().string();
    vars["working_dirs"] = join_paths(bundle.workspace_roots, ", ");
    vars["project_dir"] = project_dir;
    if (!bundle.folder_name.empty()) {
        vars["node_folder"] = bundle.folder_name;
        vars["node_folder_info"] = render_template(library.get("node_folder_info.txt"), vars);
    } else {
        vars["node_folder_info"] = "";
    }
    vars["task"] = task_text + "\n\n# NODE CONTEXT (target node, direct prior and successor nodes):\n" +
                   bundle.to_json().dump(2);
    return render_template(library.get("node_codegen.txt"), vars);
}

std::string render_chat_prompt(const std::filesystem::path& workspace, const PromptConfig& config,
                               const PromptLibrary& library) {
    std::error_code ec;
    if (!fs::is_directory(workspace, ec)) throw WorkspaceMissing(workspace);
    TemplateVars vars = common_vars(config, library);
    vars["working_dirs"] = workspace.string();
    vars["project_dir"] = workspace.string();
    vars["process_template"] = config.process_template ? *config.process_template : library.get("process_template.json");
    return render_template(library.get("chat.txt"), vars);
}

std::string render_security_prompt(const std::string& command, const std::vector<std::filesystem::path>& allowed_folders,
                                   const PromptLibrary& library) {
    std::string folders;
    for (std::size_t i = 0; i < allowed_folders.size(); ++i) {
        if (i) folders += '\n';
        folders += "  - " + allowed_folders[i].string();
    }
    return render_template(library.get("command_security.txt"), {{"folders_list", folders}, {"command", command}});
}

std::string render_repair_section(const RepairDetails& d, const PromptLibrary& library) {
    auto or_none = [](const std::string& s) { return s.empty() ? std::string("(none)") : s; };
    return render_template(library.get("repair.txt"), {
                                                          {"script_path", d.script_path.string()},
                                                          {"attempt", std::to_string(d.attempt)},
                                                          {"max_attempts", std::to_string(d.max_attempts)},
                                                          {"exit_status", or_none(d.exit_status)},
                                                          {"error_log", or_none(d.error_log)},
                                                          {"summary_tail", or_none(d.summary_tail)},
                                                          {"stderr", or_none(d.stderr_text)},
                                                      });
}

} // namespace skele::context
