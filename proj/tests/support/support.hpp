#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "skele/agent/client.hpp"
#include "skele/agent/protocol.hpp"
#include "skele/orchestrator/orchestrator.hpp"
#include "skele/util/fs.hpp"
#include "skele/workflow/project.hpp"

namespace skele::testing {

namespace fs = std::filesystem;

std::string read_fixture(const std::string& name);

// A fresh copy of the mag7 fixture at <tmp>/mag7/process.json.
struct Mag7Workspace {
    util::TempDir tmp{"skele-test"};
    fs::path dir;
    Mag7Workspace();
    workflow::Project project() const { return workflow::load_project(dir); }
};

enum class ScriptBehavior {
    Conformant,   // does the node's task, writes summary and state
    FailCompute,  // raises in compute(): state failed with "forced failure"
    Crash,        // exits 3 before writing anything
    Sleep,        // sleeps far past any test timeout
};

// Deterministic stand-in for the node's generated script. Priors are read from
// SKELE_STATE_ROOT first, then from the project folder.
std::string mag7_script(const std::string& folder, ScriptBehavior behavior = ScriptBehavior::Conformant);

// Writes scripts for all four mag7 nodes; `overrides` picks a behavior per folder name.
void write_mag7_scripts(const fs::path& dir, const std::map<std::string, ScriptBehavior>& overrides = {});

inline const std::vector<std::string> kMag7Folders{"download_mag7", "plot_prices", "compute_20day_ma", "plot_20day_ma"};

// python3 from the build configuration, fast session backoff.
orchestrator::RunOptions fixture_options();

// Mock agent that writes the conformant fixture script for whichever node the
// prompt targets, then reports completion. Counts sessions per folder.
class FixtureCodegenAgent : public agent::LlmClient {
public:
    std::map<std::string, int> sessions;  // folder -> sessions started

protected:
    std::string do_complete(const std::string& system_prompt, std::span<const agent::Message> transcript) override;
};

// Folder named by the "NODE-SPECIFIC SUBFOLDER (CRITICAL): <folder>/" line of a node prompt.
std::string target_folder(const std::string& prompt);

std::string write_block(const std::string& path, const std::string& contents);
std::string shell_block(const std::string& command);

// Random project over ids "n0".."n{k-1}" with each ordered pair an edge with
// probability `p`. Without `allow_cycles` edges only run from lower to higher
// index in a random permutation, so the graph is acyclic.
workflow::Project random_project(std::mt19937_64& rng, int max_nodes, double p, bool allow_cycles);

// Oracles written independently of the engine's graph code.
bool oracle_has_cycle(const workflow::Project& project);  // self edges ignored
bool oracle_respects_edges(const workflow::Project& project, const std::vector<workflow::NodeId>& order);
workflow::Blanket oracle_blanket(const workflow::Project& project, const std::string& id);

// Agent responses built from random arrangements of marker lines, messages,
// completion strings and filler text.
std::string random_response(std::mt19937_64& rng, const agent::BlockMarkerSet& markers);

// What parse_turn must report for `response`, computed by a separate line scanner.
struct ExpectedTurn {
    std::optional<std::string> error;  // protocol error code
    std::size_t blocks = 0;
    bool completed = false;
};
ExpectedTurn oracle_parse(const std::string& response, const agent::BlockMarkerSet& markers);

// A block that render_block can represent.
agent::CommandBlock random_block(std::mt19937_64& rng, const agent::BlockMarkerSet& markers);

// Every entry under `root` (files with contents, directories, symlink targets).
std::map<std::string, std::string> snapshot_tree(const fs::path& root);

} // namespace skele::testing
