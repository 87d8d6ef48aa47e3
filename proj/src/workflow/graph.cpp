#include <algorithm>
#include <functional>
#include <map>
#include <queue>

#include "skele/workflow/project.hpp"

namespace skele::workflow {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Length of the UTF-8 sequence introduced by lead byte `c` (1 for invalid bytes).
std::size_t utf8_length(unsigned char c) {
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return 2;
    if ((c >> 4) == 0xE) return 3;
    if ((c >> 3) == 0x1E) return 4;
    return 1;
}

// Finds one cycle among existing-node edges, ignoring self edges (reported separately).
std::vector<NodeId> find_cycle(const Project& project) {
    enum class Mark { White, Grey, Black };
    std::map<NodeId, Mark> mark;
    for (const auto& n : project.nodes) mark[n.id] = Mark::White;

    std::vector<NodeId> stack;
    std::vector<NodeId> cycle;

    // Edges are walked from node to its priors; a cycle in that direction is a cycle in the graph.
    std::function<bool(const NodeId&)> visit = [&](const NodeId& id) -> bool {
        mark[id] = Mark::Grey;
        stack.push_back(id);
        for (const auto& prior : project.at(id).priors) {
            if (prior == id || !project.contains(prior)) continue;
            if (mark[prior] == Mark::Grey) {
                auto start = std::find(stack.begin(), stack.end(), prior);
                cycle.assign(start, stack.end());
                return true;
            }
            if (mark[prior] == Mark::White && visit(prior)) return true;
        }
        stack.pop_back();
        mark[id] = Mark::Black;
        return false;
    };

    for (const auto& n : project.nodes) {
        if (mark[n.id] == Mark::White && visit(n.id)) {
            std::reverse(cycle.begin(), cycle.end());  // report in edge direction
            return cycle;
        }
    }
    return {};
}

std::string join(const std::vector<NodeId>& ids, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += sep;
        out += ids[i];
    }
    return out;
}

} // namespace

std::string sanitize_name(std::string_view name) {
    std::size_t b = 0, e = name.size();
    while (b < e && is_space(name[b])) ++b;
    while (e > b && is_space(name[e - 1])) --e;
    if (b == e) throw EmptyName();

    std::string out;
    for (std::size_t i = b; i < e;) {
        const auto c = static_cast<unsigned char>(name[i]);
        if (c >= 'A' && c <= 'Z') {
            out += static_cast<char>(c - 'A' + 'a');
        } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            out += static_cast<char>(c);
        } else {
            out += '_';
        }
        i += std::min(utf8_length(c), e - i);
    }
    return out;
}

std::size_t ValidationReport::error_count() const {
    return static_cast<std::size_t>(std::count_if(diagnostics.begin(), diagnostics.end(),
                                                  [](const Diagnostic& d) { return d.severity == Severity::Error; }));
}

std::size_t ValidationReport::warning_count() const { return diagnostics.size() - error_count(); }

bool ValidationReport::has(std::string_view code) const {
    return std::any_of(diagnostics.begin(), diagnostics.end(), [&](const Diagnostic& d) { return d.code == code; });
}

Json ValidationReport::to_json() const {
    Json arr = Json::array();
    for (const auto& d : diagnostics) {
        arr.push_back({{"severity", d.severity == Severity::Error ? "error" : "warning"},
                       {"code", d.code},
                       {"node_ids", d.node_ids},
                       {"message", d.message}});
    }
    return Json{{"errors", error_count()}, {"warnings", warning_count()}, {"diagnostics", std::move(arr)}};
}

ValidationReport validate(const Project& project) {
    ValidationReport report;
    auto add = [&](Severity s, std::string code, std::vector<NodeId> ids, std::string msg) {
        report.diagnostics.push_back({s, std::move(code), std::move(ids), std::move(msg)});
    };

    std::map<std::string, std::vector<NodeId>> by_folder;
    for (const auto& n : project.nodes) {
        for (const auto& prior : n.priors) {
            if (prior == n.id) {
                add(Severity::Error, "self_prior", {n.id}, "node '" + n.id + "' lists itself as a prior");
            } else if (!project.contains(prior)) {
                add(Severity::Error, "dangling_prior", {n.id, prior},
                    "node '" + n.id + "' references missing prior '" + prior + "'");
            }
        }
        try {
            by_folder[sanitize_name(n.name)].push_back(n.id);
        } catch (const EmptyName&) {
            add(Severity::Error, "empty_name", {n.id}, "node '" + n.id + "' has an empty name");
        }
        if (n.run && n.input.text.empty())
            add(Severity::Warning, "empty_task", {n.id}, "node '" + n.id + "' is marked to run but has no task text");
    }
    for (const auto& [folder, ids] : by_folder) {
        if (ids.size() > 1)
            add(Severity::Error, "duplicate_sanitized_name", ids,
                "nodes " + join(ids, ", ") + " share the folder name '" + folder + "'");
    }
    if (auto cycle = find_cycle(project); !cycle.empty())
        add(Severity::Error, "cycle", cycle, "cycle through nodes " + join(cycle, " -> "));
    return report;
}

std::vector<NodeId> topological_order(const Project& project, const std::optional<std::set<NodeId>>& subset) {
    std::set<NodeId> members;
    if (subset) {
        for (const auto& id : *subset) {
            if (!project.contains(id)) throw UnknownNode(id);
            members.insert(id);
        }
    } else {
        for (const auto& n : project.nodes) members.insert(n.id);
    }

    std::map<NodeId, std::size_t> indegree;
    std::map<NodeId, std::vector<NodeId>> successors;
    for (const auto& id : members) indegree[id] = 0;
    for (const auto& id : members) {
        std::set<NodeId> seen;  // duplicate prior entries count once
        for (const auto& prior : project.at(id).priors) {
            if (!members.count(prior) || !seen.insert(prior).second) continue;
            ++indegree[id];
            successors[prior].push_back(id);
        }
    }

    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (const auto& [id, deg] : indegree)
        if (deg == 0) ready.push(id);

    std::vector<NodeId> order;
    order.reserve(members.size());
    while (!ready.empty()) {
        NodeId id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& succ : successors[id])
            if (--indegree[succ] == 0) ready.push(succ);
    }
    if (order.size() != members.size()) throw CycleError("graph contains a cycle; no topological order exists");
    return order;
}

Blanket markov_blanket(const Project& project, std::string_view node_id) {
    const Node& target = project.at(node_id);
    Blanket b;
    b.target = target.id;
    for (const auto& prior : target.priors)
        if (prior != target.id) b.priors.insert(prior);
    for (const auto& n : project.nodes) {
        if (n.id == target.id) continue;
        if (std::find(n.priors.begin(), n.priors.end(), target.id) != n.priors.end()) b.successors.insert(n.id);
    }
    return b;
}

} // namespace skele::workflow
