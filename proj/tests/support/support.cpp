#include "support.hpp"

#include <algorithm>
#include <numeric>

namespace skele::testing {

namespace {

const char* kScriptTemplate = R"PY(import json
import os
import sys

NODE = @NODE@
PRIORS = @PRIORS@
TASK = @TASK@


def _state_file(root, name):
    return os.path.join(root, name, name + ".state.json")


def load_prior(name):
    # Empty dictionary if a prior did not complete.
    for root in (os.environ.get("SKELE_STATE_ROOT"), os.environ.get("SKELE_PROJECT_DIR")):
        if root and os.path.isfile(_state_file(root, name)):
            with open(_state_file(root, name)) as f:
                state = json.load(f)
            return state if state.get("task_status") == "success" else {}
    return {}


def preprocess():
    priors = {p: load_prior(p) for p in PRIORS}
    for p, s in priors.items():
        if not s:
            raise RuntimeError("prior " + p + " did not complete")
    return priors


@COMPUTE@


def save(state):
    state_dir = os.environ.get("SKELE_STATE_DIR", ".")
    os.makedirs(state_dir, exist_ok=True)
    with open(os.path.join(state_dir, NODE + ".state.json"), "w") as f:
        json.dump(state, f, indent=2, sort_keys=True)


def main():
    @PRELUDE@
    lines = [TASK]
    try:
        priors = preprocess()
        values, notes = compute(priors)
        lines.extend(notes)
        lines.append("Task completed successfully")
        state = dict(values, task_status="success")
    except Exception as e:
        lines.append("Task failed: " + str(e))
        state = {"task_status": "failed", "error_log": str(e)}
    with open(NODE + "_summary.txt", "w") as f:
        f.write("\n".join(lines) + "\n")
    save(state)
    return 0


if __name__ == "__main__":
    sys.exit(main())
)PY";

const std::map<std::string, std::string>& compute_bodies() {
    static const std::map<std::string, std::string> bodies{
        {"download_mag7", R"PY(TICKERS = ["AAPL", "AMZN", "GOOGL", "META", "MSFT", "NVDA", "TSLA"]


def compute(priors):
    prices = {}
    for i, t in enumerate(TICKERS):
        prices[t] = [round(100 + 10 * i + 0.5 * d + (d * (i + 3)) % 7, 2) for d in range(100)]
    return {"prices": prices}, ["fetched 100 days of closing prices for %d tickers" % len(prices)])PY"},
        {"plot_prices", R"PY(def compute(priors):
    prices = priors["download_mag7"]["prices"]
    with open("prices.png", "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n" + json.dumps(prices, sort_keys=True).encode())
    return {"plot": "plot_prices/prices.png"}, ["plotted %d price series" % len(prices)])PY"},
        {"compute_20day_ma", R"PY(def compute(priors):
    prices = priors["download_mag7"]["prices"]
    ma = {}
    for t, s in sorted(prices.items()):
        ma[t] = [round(sum(s[i - 19:i + 1]) / 20, 4) for i in range(19, len(s))]
    return {"ma20": ma}, ["computed %d moving-average points per ticker" % len(ma["AAPL"])])PY"},
        {"plot_20day_ma", R"PY(def compute(priors):
    ma = priors["compute_20day_ma"]["ma20"]
    rows = []
    for t, s in sorted(ma.items()):
        pts = " ".join("%d,%.2f" % (i, v) for i, v in enumerate(s))
        rows.append('<polyline id="%s" points="%s"/>' % (t, pts))
    with open("ma20.svg", "w") as f:
        f.write('<svg xmlns="http://www.w3.org/2000/svg">' + "".join(rows) + "</svg>\n")
    return {"plot": "plot_20day_ma/ma20.svg"}, ["plotted %d moving averages" % len(ma)])PY"},
    };
    return bodies;
}

const std::map<std::string, std::pair<std::vector<std::string>, std::string>>& node_meta() {
    static const std::map<std::string, std::pair<std::vector<std::string>, std::string>> meta{
        {"download_mag7", {{}, "Download closing prices for the mag7 companies over the past 100 days."}},
        {"plot_prices", {{"download_mag7"}, "Plot the downloaded mag7 prices."}},
        {"compute_20day_ma", {{"download_mag7"}, "Compute the 20 day moving average of each mag7 price series."}},
        {"plot_20day_ma", {{"compute_20day_ma"}, "Plot the 20 day moving averages."}},
    };
    return meta;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
}

} // namespace

std::string read_fixture(const std::string& name) { return util::read_file(fs::path(SKELE_FIXTURE_DIR) / name); }

Mag7Workspace::Mag7Workspace() : dir(tmp.path() / "mag7") {
    fs::create_directories(dir);
    util::write_file(dir / "process.json", read_fixture("mag7_process.json"));
}

std::string mag7_script(const std::string& folder, ScriptBehavior behavior) {
    const auto& [priors, task] = node_meta().at(folder);
    std::string script = kScriptTemplate;
    replace_all(script, "@NODE@", workflow::Json(folder).dump());
    replace_all(script, "@PRIORS@", workflow::Json(priors).dump());
    replace_all(script, "@TASK@", workflow::Json(task).dump());
    std::string compute = compute_bodies().at(folder);
    std::string prelude = "pass";
    switch (behavior) {
    case ScriptBehavior::Conformant: break;
    case ScriptBehavior::FailCompute:
        compute = "def compute(priors):\n    raise RuntimeError(\"forced failure\")";
        break;
    case ScriptBehavior::Crash: prelude = "sys.stderr.write(\"boom: crashed before work\\n\"); sys.exit(3)"; break;
    case ScriptBehavior::Sleep: prelude = "import time; time.sleep(60)"; break;
    }
    replace_all(script, "@COMPUTE@", compute);
    replace_all(script, "@PRELUDE@", prelude);
    return script;
}

void write_mag7_scripts(const fs::path& dir, const std::map<std::string, ScriptBehavior>& overrides) {
    for (const auto& folder : kMag7Folders) {
        auto it = overrides.find(folder);
        const auto behavior = it == overrides.end() ? ScriptBehavior::Conformant : it->second;
        util::write_file(dir / folder / (folder + ".py"), mag7_script(folder, behavior));
    }
}

orchestrator::RunOptions fixture_options() {
    orchestrator::RunOptions options;
    options.interpreter_command = std::string(SKELE_PYTHON) + " {script}";
    options.per_node_timeout = std::chrono::seconds(30);
    options.session_limits.retry_backoff = std::chrono::milliseconds(0);
    return options;
}

std::string target_folder(const std::string& prompt) {
    const std::string key = "NODE-SPECIFIC SUBFOLDER (CRITICAL): ";
    auto pos = prompt.find(key);
    if (pos == std::string::npos) return {};
    pos += key.size();
    auto end = prompt.find('/', pos);
    return prompt.substr(pos, end - pos);
}

std::string write_block(const std::string& path, const std::string& contents) {
    return "```write_file\n" + path + "\n" + contents + "\n```";
}

std::string shell_block(const std::string& command) { return "```run_shell\n" + command + "\n```"; }

std::string FixtureCodegenAgent::do_complete(const std::string& system_prompt, std::span<const agent::Message> transcript) {
    const std::string folder = target_folder(system_prompt);
    if (transcript.empty()) {
        ++sessions[folder];
        return "Writing the node script.\n" + write_block(folder + "/" + folder + ".py", mag7_script(folder));
    }
    return "The script is in place. TASK_COMPLETED";
}

workflow::Project random_project(std::mt19937_64& rng, int max_nodes, double p, bool allow_cycles) {
    std::uniform_int_distribution<int> count(1, max_nodes);
    std::bernoulli_distribution edge(p);
    const int n = count(rng);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    workflow::Project project;
    project.process_name = "random";
    for (int i = 0; i < n; ++i) {
        workflow::Node node;
        node.id = "n" + std::to_string(i);
        node.name = "node " + std::to_string(i);
        node.input.text = "task " + std::to_string(i);
        node.run = true;
        project.nodes.push_back(node);
    }
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            // Edge perm[a] -> perm[b]: node perm[b] lists perm[a] as a prior.
            if (!allow_cycles && a > b) continue;
            if (edge(rng)) project.nodes[perm[b]].priors.push_back("n" + std::to_string(perm[a]));
        }
    return project;
}

bool oracle_has_cycle(const workflow::Project& project) {
    const std::size_t n = project.nodes.size();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[project.nodes[i].id] = i;
    // reach[i][j]: j is reachable from i by one or more edges (Warshall closure).
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t v = 0; v < n; ++v)
        for (const auto& prior : project.nodes[v].priors) {
            auto it = index.find(prior);
            if (it != index.end() && it->second != v) reach[it->second][v] = true;
        }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (reach[i][k])
                for (std::size_t j = 0; j < n; ++j)
                    if (reach[k][j]) reach[i][j] = true;
    for (std::size_t i = 0; i < n; ++i)
        if (reach[i][i]) return true;
    return false;
}

bool oracle_respects_edges(const workflow::Project& project, const std::vector<workflow::NodeId>& order) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i)
        if (!pos.emplace(order[i], i).second) return false;  // duplicate
    if (pos.size() != project.nodes.size()) return false;
    for (const auto& node : project.nodes)
        for (const auto& prior : node.priors)
            if (prior != node.id && pos.at(prior) >= pos.at(node.id)) return false;
    return true;
}

workflow::Blanket oracle_blanket(const workflow::Project& project, const std::string& id) {
    workflow::Blanket b;
    b.target = id;
    for (const auto& node : project.nodes) {
        if (node.id == id)
            for (const auto& p : node.priors)
                if (p != id) b.priors.insert(p);
        if (node.id != id && std::count(node.priors.begin(), node.priors.end(), id)) b.successors.insert(node.id);
    }
    return b;
}

namespace {

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto nl = text.find('\n', start);
        out.push_back(text.substr(start, nl == std::string::npos ? std::string::npos : nl - start));
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    return out;
}

std::string random_word(std::mt19937_64& rng, const std::string& alphabet, std::size_t max_len) {
    std::string w;
    const std::size_t len = rng() % (max_len + 1);
    for (std::size_t i = 0; i < len; ++i) w += alphabet[rng() % alphabet.size()];
    return w;
}

} // namespace

std::string random_response(std::mt19937_64& rng, const agent::BlockMarkerSet& m) {
    const std::vector<std::string> pool{
        m.shell_start, m.read_start, m.write_start, m.delete_start, m.block_end, m.block_end,
        "  " + m.shell_start, m.write_start + "  ", m.task_completed, "done " + m.task_completed,
        m.message_start, m.message_end, m.message_start + " hi " + m.message_end, "```python", "",
        "  ", "echo hi", "ls -la > out.txt", "/ws/p/a.txt", "some prose", "x = 1\r"};
    std::string out;
    const std::size_t lines = rng() % 14;
    for (std::size_t i = 0; i < lines; ++i) {
        if (i) out += '\n';
        out += rng() % 5 == 0 ? random_word(rng, "ab `*\n_TASKCOMPLETED", 12) : pool[rng() % pool.size()];
    }
    return out;
}

ExpectedTurn oracle_parse(const std::string& response, const agent::BlockMarkerSet& m) {
    ExpectedTurn expected;
    std::string outside;
    std::optional<std::string> kind;
    std::size_t nonempty_body = 0;
    for (const auto& line : lines_of(response)) {
        const auto t = trimmed(line);
        if (kind) {
            if (t == m.block_end) {
                if (*kind == m.shell_start && nonempty_body > 1 && !expected.error) expected.error = "multi_line_shell";
                ++expected.blocks;
                kind.reset();
            } else if (!t.empty()) {
                ++nonempty_body;
            }
            continue;
        }
        if (t == m.shell_start || t == m.read_start || t == m.write_start || t == m.delete_start) {
            kind = t;
            nonempty_body = 0;
            continue;
        }
        outside += line + "\n";
    }
    if (!expected.error && kind) expected.error = "unterminated_block";
    if (!expected.error && expected.blocks > 1) expected.error = "multiple_blocks";
    expected.completed = outside.find(m.task_completed) != std::string::npos;
    return expected;
}

agent::CommandBlock random_block(std::mt19937_64& rng, const agent::BlockMarkerSet& m) {
    const std::string text = "abcXYZ019 ._-/$>'\"|&;()";
    auto trimmed_word = [&] { return trimmed(random_word(rng, text, 24)); };
    switch (rng() % 4) {
    case 0: return agent::CommandBlock::shell(trimmed_word());
    case 1: return agent::CommandBlock::read(trimmed_word());
    case 2: return agent::CommandBlock::remove(trimmed_word());
    default: {
        std::string contents;
        const std::size_t lines = rng() % 6;
        for (std::size_t i = 0; i < lines; ++i) {
            if (i) contents += '\n';
            std::string line = rng() % 6 == 0 ? m.shell_start : random_word(rng, text + "\t\r`", 30);
            if (trimmed(line) == m.block_end) line += "x";
            contents += line;
        }
        std::string path = trimmed_word();
        if (path.empty()) path = "f.txt";
        return agent::CommandBlock::write(path, contents);
    }
    }
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::none, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        const auto rel = fs::relative(it->path(), root).generic_string();
        if (it->is_symlink(ec))
            out[rel] = "link:" + fs::read_symlink(it->path(), ec).string();
        else if (it->is_directory(ec))
            out[rel] = "dir";
        else
            out[rel] = "file:" + util::read_file(it->path());
    }
    return out;
}

} // namespace skele::testing
