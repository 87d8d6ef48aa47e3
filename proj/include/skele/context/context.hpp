#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skele/workflow/project.hpp"

namespace skele::context {

namespace fs = std::filesystem;
using workflow::Json;
using workflow::NodeId;

struct WorkspaceMissing : Error {
    explicit WorkspaceMissing(const fs::path& p) : Error("workspace_missing", "workspace does not exist: " + p.string()) {}
};

enum class NeighborRole { Prior, Successor };

struct Neighbor {
    NodeId node_id;
    NeighborRole role;
    Json json;                               // node definition, with "node_name_key"
    std::string folder_name;
    std::optional<std::string> script_text;  // present iff the script exists on disk
    std::optional<fs::path> script_path;
};

struct ContextBundle {
    NodeId target_id;
    Json target_json;
    std::string folder_name;
    fs::path target_script_path;  // may not exist yet; the agent reads it itself
    std::vector<Neighbor> neighbors;
    std::string project_name;
    std::string project_description;
    std::vector<fs::path> workspace_roots;

    const Neighbor* neighbor(std::string_view id) const;
    // The JSON block appended to the task text in the node prompt.
    Json to_json() const;
};

// Script location convention: <workspace>/<folder>/<folder>.<ext>
fs::path script_path_for(const fs::path& workspace, const std::string& folder, std::string_view ext);

// Gathers the target node, its direct priors and successors, and any neighbor
// scripts present on disk. Nodes outside the blanket are never included.
ContextBundle assemble_context(const workflow::Project& project, std::string_view node_id, const fs::path& workspace,
                               std::string_view script_extension = "py");

struct AttachmentError : Error {
    explicit AttachmentError(const std::string& msg) : Error("invalid_attachment", msg) {}
};

struct Attachment {
    std::string file_name;  // bare file name, no separators
    std::string mime_type;
    std::string bytes;

    // Throws AttachmentError if `name` contains a path separator or is empty.
    static Attachment make(std::string name, std::string mime, std::string bytes);
};

inline constexpr std::size_t kAttachmentPreviewChars = 5000;
inline constexpr std::string_view kTruncationMarker = "\n... (content truncated)";

std::string append_file_context(const std::string& prompt, std::span<const Attachment> attachments);

// Loads the node's input files (from its folder) as attachments, skipping missing ones.
std::vector<Attachment> load_input_attachments(const workflow::Node& node, const fs::path& node_folder);

} // namespace skele::context
