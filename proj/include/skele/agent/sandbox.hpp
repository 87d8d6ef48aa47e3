#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skele/agent/client.hpp"
#include "skele/agent/protocol.hpp"
#include "skele/util/subprocess.hpp"

namespace skele::agent {

namespace fs = std::filesystem;

// Resolves `path` like realpath(3), except that missing trailing components are
// appended lexically. Dangling symlinks are followed through their target text.
// Returns an empty path on failure (relative input, symlink loop).
fs::path resolve_for_containment(const fs::path& path);

// Canonical forms of existing root directories; non-directories are dropped.
std::vector<fs::path> canonical_roots(std::span<const fs::path> roots);

// True iff the fully resolved path lies within some root. Fail-closed.
bool contain_path(const fs::path& path, std::span<const fs::path> roots);

struct ShellScan {
    bool allowed = true;
    std::string reason;
};

// Static check applied before any shell command runs: rejects shell expansions
// ($, backticks, ~) and any path argument or redirection target that resolves
// outside `roots` (relative paths are taken from `cwd`). The command word of
// each simple command may be an absolute executable path.
ShellScan scan_shell_command(const std::string& command, std::span<const fs::path> roots, const fs::path& cwd);

enum class VerdictKind { Safe, Unsafe };

struct Verdict {
    VerdictKind kind = VerdictKind::Unsafe;
    std::string reason;
    bool safe() const { return kind == VerdictKind::Safe; }
};

// Uses the last line that begins with "VERDICT: ". Anything unrecognised is Unsafe.
Verdict parse_verdict(std::string_view response);

// Asks `reviewer` for a verdict on `command`. Client failures yield Unsafe.
Verdict review_command(const std::string& command, std::span<const fs::path> roots, LlmClient& reviewer);

enum class BlockStatus { Ok, Blocked, Failed };

std::string_view to_string(BlockStatus status);

struct BlockResult {
    BlockStatus status = BlockStatus::Ok;
    std::string observation;
};

struct ExecOptions {
    std::size_t output_cap = 64 * 1024;
    std::chrono::milliseconds shell_timeout{std::chrono::minutes(5)};
    std::string shell = "/bin/sh";
    // Replaceable for tests that count spawns.
    std::function<util::ExitStatus(const util::SpawnOptions&)> spawner = util::run_process;
};

// Keeps the first `cap` bytes and appends a marker naming how much was dropped.
std::string cap_output(std::string text, std::size_t cap);

BlockResult execute_block(const CommandBlock& block, std::span<const fs::path> roots, const fs::path& workspace,
                          LlmClient& reviewer, const ExecOptions& options = {});

} // namespace skele::agent
