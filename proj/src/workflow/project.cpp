#include "skele/workflow/project.hpp"

#include <fstream>
#include <sstream>

namespace skele::workflow {

namespace {

const char* kind_name(const Json& j) { return j.type_name(); }

std::string string_field(const Json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (!it->is_string()) throw SchemaError(where + "." + key + " must be a string, got " + kind_name(*it));
    return it->get<std::string>();
}

void flatten_priors(const Json& value, std::vector<NodeId>& out, const std::string& where) {
    if (value.is_string()) {
        out.push_back(value.get<std::string>());
    } else if (value.is_array()) {
        for (const auto& item : value) flatten_priors(item, out, where);
    } else {
        throw SchemaError(where + ".priors contains a non-string entry (" + std::string(kind_name(value)) + ")");
    }
}

TextAndFiles parse_cell(const Json& obj, const char* key, const std::string& where) {
    TextAndFiles cell;
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return cell;
    if (!it->is_object()) throw SchemaError(where + "." + key + " must be an object");
    const std::string here = where + "." + key;
    cell.text = string_field(*it, "text", here);
    if (auto f = it->find("files"); f != it->end() && !f->is_null()) {
        if (!f->is_array()) throw SchemaError(here + ".files must be an array");
        for (const auto& file : *f) {
            if (!file.is_string()) throw SchemaError(here + ".files entries must be strings");
            cell.files.push_back(file.get<std::string>());
        }
    }
    return cell;
}

Node parse_node(const std::string& id, const Json& obj) {
    const std::string where = "nodes." + id;
    if (!obj.is_object()) throw SchemaError(where + " must be an object");
    Node node;
    node.id = id;
    node.name = string_field(obj, "name", where);
    node.description = string_field(obj, "description", where);
    if (auto p = obj.find("priors"); p != obj.end() && !p->is_null()) {
        if (!p->is_array()) throw SchemaError(where + ".priors must be an array");
        flatten_priors(*p, node.priors, where);
    }
    if (auto r = obj.find("run"); r != obj.end() && !r->is_null()) {
        if (!r->is_boolean()) throw SchemaError(where + ".run must be true or false");
        node.run = r->get<bool>();
    }
    node.input = parse_cell(obj, "input", where);
    node.output = parse_cell(obj, "output", where);
    for (const auto& [key, value] : obj.items()) {
        if (key == "name" || key == "description" || key == "priors" || key == "run" || key == "input" ||
            key == "output")
            continue;
        node.extras[key] = value;
    }
    return node;
}

Json cell_to_json(const TextAndFiles& cell) {
    Json j = Json::object();
    j["text"] = cell.text;
    j["files"] = cell.files;
    return j;
}

} // namespace

const Node* Project::find(std::string_view id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

Node* Project::find(std::string_view id) {
    for (auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const Node& Project::at(std::string_view id) const {
    if (const Node* n = find(id)) return *n;
    throw UnknownNode(std::string(id));
}

Node& Project::at(std::string_view id) {
    if (Node* n = find(id)) return *n;
    throw UnknownNode(std::string(id));
}

std::vector<NodeId> Project::ids() const {
    std::vector<NodeId> out;
    out.reserve(nodes.size());
    for (const auto& n : nodes) out.push_back(n.id);
    return out;
}

bool Project::same_structure(const Project& other) const {
    return process_name == other.process_name && process_description == other.process_description &&
           nodes == other.nodes && extras == other.extras;
}

Project parse_project(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw SyntaxError(e.what());
    }
    if (!doc.is_object()) throw SchemaError("process document must be a JSON object");

    Project project;
    project.process_name = string_field(doc, "process_name", "project");
    project.process_description = string_field(doc, "process_description", "project");
    // Older documents use the display-style keys.
    if (!doc.contains("process_name")) project.process_name = string_field(doc, "project name", "project");
    if (!doc.contains("process_description"))
        project.process_description = string_field(doc, "project description", "project");

    if (auto it = doc.find("nodes"); it != doc.end() && !it->is_null()) {
        if (!it->is_object()) throw SchemaError("nodes must be an object keyed by node id");
        for (const auto& [id, value] : it->items()) {
            if (id.empty()) throw SchemaError("node ids must be non-empty strings");
            project.nodes.push_back(parse_node(id, value));
        }
    }
    for (const auto& [key, value] : doc.items()) {
        if (key == "process_name" || key == "process_description" || key == "nodes") continue;
        if ((key == "project name" && !doc.contains("process_name")) ||
            (key == "project description" && !doc.contains("process_description")))
            continue;
        project.extras[key] = value;
    }
    return project;
}

Json node_to_json(const Node& node) {
    Json j = Json::object();
    j["name"] = node.name;
    j["description"] = node.description;
    j["priors"] = node.priors;
    j["run"] = node.run;
    j["input"] = cell_to_json(node.input);
    j["output"] = cell_to_json(node.output);
    for (const auto& [key, value] : node.extras.items()) j[key] = value;
    return j;
}

Json project_to_json(const Project& project) {
    Json j = Json::object();
    j["process_description"] = project.process_description;
    j["process_name"] = project.process_name;
    for (const auto& [key, value] : project.extras.items()) j[key] = value;
    Json nodes = Json::object();
    for (const auto& n : project.nodes) nodes[n.id] = node_to_json(n);
    j["nodes"] = std::move(nodes);
    return j;
}

std::string serialize_project(const Project& project) { return project_to_json(project).dump(); }

Project load_project(const std::filesystem::path& project_dir) {
    const auto file = project_dir / kProcessFile;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("project_missing", "cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    Project project = parse_project(buf.str());
    project.source_path = file;
    std::error_code ec;
    auto mtime = std::filesystem::last_write_time(file, ec);
    if (!ec) project.last_modified = mtime;
    return project;
}

void save_project(const Project& project, const std::filesystem::path& project_dir) {
    const auto file = project_dir / kProcessFile;
    const auto tmp = project_dir / (std::string(kProcessFile) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io_error", "cannot write " + tmp.string());
        out << project_to_json(project).dump(4) << '\n';
    }
    std::filesystem::rename(tmp, file);
}

} // namespace skele::workflow
