#include "skele/context/context.hpp"

#include <algorithm>
#include <cstdint>

#include "skele/util/fs.hpp"

namespace skele::context {

namespace {

// Returns the byte offset just past `max_chars` code points, or npos if the
// text is shorter. Sets `valid` to false on malformed UTF-8.
// Byte offset just past the first `max_chars` code points, or npos when the
// text is shorter. The whole buffer is decoded strictly (no overlongs,
// surrogates or values past U+10FFFF), since a bad byte anywhere means the
// file is not text.
std::size_t utf8_prefix(std::string_view s, std::size_t max_chars, bool& valid) {
    valid = true;
    std::size_t chars = 0, i = 0, cut = std::string_view::npos;
    while (i < s.size()) {
        if (chars == max_chars && cut == std::string_view::npos) cut = i;
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > s.size()) {
            valid = false;
            return std::string_view::npos;
        }
        std::uint32_t cp = len == 1 ? c : c & (0x7F >> len);
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc >> 6) != 0x2) {
                valid = false;
                return std::string_view::npos;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            valid = false;
            return std::string_view::npos;
        }
        i += len;
        ++chars;
    }
    return cut;
}

bool is_text_mime(std::string_view mime) {
    return mime.starts_with("text/") || mime == "application/json" || mime == "application/xml";
}

Json with_key(const workflow::Node& node) {
    Json j = Json::object();
    j["node_name_key"] = node.id;
    const Json body = workflow::node_to_json(node);
    for (const auto& [k, v] : body.items()) j[k] = v;
    return j;
}

} // namespace

fs::path script_path_for(const fs::path& workspace, const std::string& folder, std::string_view ext) {
    return workspace / folder / (folder + "." + std::string(ext));
}

const Neighbor* ContextBundle::neighbor(std::string_view id) const {
    for (const auto& n : neighbors)
        if (n.node_id == id) return &n;
    return nullptr;
}

Json ContextBundle::to_json() const {
    Json j = Json::object();
    j["process_name"] = project_name;
    j["process_description"] = project_description;
    Json target = target_json;
    target["folder"] = folder_name;
    target["script_path"] = target_script_path.string();
    j["target_node"] = std::move(target);
    Json priors = Json::array();
    Json successors = Json::array();
    for (const auto& n : neighbors) {
        Json entry = n.json;
        entry["folder"] = n.folder_name;
        if (n.script_path) entry["script_path"] = n.script_path->string();
        if (n.script_text) entry["script"] = *n.script_text;
        (n.role == NeighborRole::Prior ? priors : successors).push_back(std::move(entry));
    }
    j["prior_nodes"] = std::move(priors);
    j["successor_nodes"] = std::move(successors);
    return j;
}

ContextBundle assemble_context(const workflow::Project& project, std::string_view node_id, const fs::path& workspace,
                               std::string_view script_extension) {
    const workflow::Node& target = project.at(node_id);
    std::error_code ec;
    if (!fs::is_directory(workspace, ec)) throw WorkspaceMissing(workspace);

    ContextBundle bundle;
    bundle.target_id = target.id;
    bundle.target_json = with_key(target);
    bundle.folder_name = workflow::sanitize_name(target.name);
    bundle.target_script_path = script_path_for(workspace, bundle.folder_name, script_extension);
    bundle.project_name = project.process_name;
    bundle.project_description = project.process_description;
    bundle.workspace_roots = {workspace};

    const auto blanket = workflow::markov_blanket(project, node_id);
    auto add = [&](const NodeId& id, NeighborRole role) {
        const workflow::Node* node = project.find(id);
        if (!node) return;  // dangling prior; validation reports it
        Neighbor n;
        n.node_id = id;
        n.role = role;
        n.json = with_key(*node);
        n.folder_name = workflow::sanitize_name(node->name);
        auto script = script_path_for(workspace, n.folder_name, script_extension);
        if (fs::is_regular_file(script, ec)) {
            n.script_path = script;
            n.script_text = util::read_file(script);
        }
        bundle.neighbors.push_back(std::move(n));
    };
    for (const auto& id : blanket.priors) add(id, NeighborRole::Prior);
    for (const auto& id : blanket.successors) add(id, NeighborRole::Successor);
    return bundle;
}

Attachment Attachment::make(std::string name, std::string mime, std::string bytes) {
    if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos ||
        name == "." || name == "..")
        throw AttachmentError("attachment name must be a bare file name: '" + name + "'");
    return Attachment{std::move(name), std::move(mime), std::move(bytes)};
}

std::string append_file_context(const std::string& prompt, std::span<const Attachment> attachments) {
    if (attachments.empty()) return prompt;
    std::string ctx = "\n\n============================\n# ATTACHED FILES:\n";
    for (const auto& a : attachments) {
        if (is_text_mime(a.mime_type)) {
            bool valid = true;
            const std::size_t cut = utf8_prefix(a.bytes, kAttachmentPreviewChars, valid);
            if (!valid) {
                ctx += "\n## File: " + a.file_name + ": [Error reading file: content is not valid UTF-8]\n";
                continue;
            }
            std::string preview = cut == std::string_view::npos ? a.bytes : a.bytes.substr(0, cut);
            if (cut != std::string_view::npos) preview += kTruncationMarker;
            ctx += "\n## File: " + a.file_name + "\n```\n" + preview + "\n```\n";
        } else {
            ctx += "\n## File: " + a.file_name + ": [Binary file attached - " + a.mime_type + "]\n";
        }
    }
    return prompt + ctx;
}

std::vector<Attachment> load_input_attachments(const workflow::Node& node, const fs::path& node_folder) {
    std::vector<Attachment> out;
    for (const auto& name : node.input.files) {
        const auto path = node_folder / fs::path(name).filename();
        std::error_code ec;
        if (!fs::is_regular_file(path, ec)) continue;
        out.push_back(Attachment::make(path.filename().string(), util::mime_for(path), util::read_file(path)));
    }
    return out;
}

} // namespace skele::context
