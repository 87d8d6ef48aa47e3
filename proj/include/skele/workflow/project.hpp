#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "skele/error.hpp"

namespace skele::workflow {

using NodeId = std::string;
using Json = nlohmann::ordered_json;

struct SyntaxError : Error {
    explicit SyntaxError(const std::string& msg) : Error("syntax_error", msg) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& msg) : Error("schema_error", msg) {}
};
struct CycleError : Error {
    explicit CycleError(const std::string& msg) : Error("cycle", msg) {}
};
struct UnknownNode : Error {
    explicit UnknownNode(const NodeId& id) : Error("unknown_node", "unknown node '" + id + "'") {}
};
struct EmptyName : Error {
    EmptyName() : Error("empty_name", "node name is empty after trimming") {}
};

struct TextAndFiles {
    std::string text;
    std::vector<std::string> files;

    bool operator==(const TextAndFiles&) const = default;
};

struct Node {
    NodeId id;
    std::string name;
    std::string description;
    std::vector<NodeId> priors;
    bool run = false;
    TextAndFiles input;
    TextAndFiles output;
    // Keys this engine does not interpret, kept verbatim for round-trip.
    Json extras = Json::object();

    bool operator==(const Node&) const = default;
};

struct Project {
    std::string process_name;
    std::string process_description;
    std::vector<Node> nodes;  // insertion order of the "nodes" object
    Json extras = Json::object();
    std::optional<std::filesystem::path> source_path;
    std::optional<std::filesystem::file_time_type> last_modified;

    const Node* find(std::string_view id) const;
    Node* find(std::string_view id);
    const Node& at(std::string_view id) const;  // throws UnknownNode
    Node& at(std::string_view id);
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    std::vector<NodeId> ids() const;

    // Structural equality: ignores source_path and last_modified.
    bool same_structure(const Project& other) const;
};

Project parse_project(std::string_view text);
std::string serialize_project(const Project& project);
Json project_to_json(const Project& project);
Json node_to_json(const Node& node);

// File helpers: the process.json document at a project folder root.
inline constexpr std::string_view kProcessFile = "process.json";
Project load_project(const std::filesystem::path& project_dir);
void save_project(const Project& project, const std::filesystem::path& project_dir);

// Folder / script base name: ASCII letters lowercased, digits kept, every other
// character (per code point) replaced by '_'. Surrounding whitespace is trimmed.
std::string sanitize_name(std::string_view name);

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity;
    std::string code;
    std::vector<NodeId> node_ids;
    std::string message;
};

struct ValidationReport {
    std::vector<Diagnostic> diagnostics;

    std::size_t error_count() const;
    std::size_t warning_count() const;
    bool executable() const { return error_count() == 0; }
    bool has(std::string_view code) const;
    Json to_json() const;
};

ValidationReport validate(const Project& project);

// Kahn's algorithm; among ready nodes the lexicographically smallest id goes first.
std::vector<NodeId> topological_order(const Project& project,
                                      const std::optional<std::set<NodeId>>& subset = std::nullopt);

struct Blanket {
    NodeId target;
    std::set<NodeId> priors;
    std::set<NodeId> successors;
};

// Direct priors and direct successors only; no co-parents.
Blanket markov_blanket(const Project& project, std::string_view node_id);

} // namespace skele::workflow
