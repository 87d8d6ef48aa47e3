#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skele/error.hpp"

namespace skele::util {

struct SpawnError : Error {
    explicit SpawnError(const std::string& msg) : Error("spawn_error", msg) {}
};

struct SpawnOptions {
    std::vector<std::string> argv;  // argv[0] is looked up on PATH
    std::filesystem::path cwd;
    std::map<std::string, std::string> env;  // added to (overrides) the inherited environment
    std::filesystem::path stdout_path;       // empty: /dev/null
    std::filesystem::path stderr_path;       // empty: /dev/null; may equal stdout_path
    std::optional<std::chrono::milliseconds> timeout;
};

struct ExitStatus {
    int exit_code = -1;  // -1 when killed by a signal
    int signal = 0;
    bool timed_out = false;

    bool ok() const { return exit_code == 0 && !timed_out; }
};

// Runs the child in its own process group; on timeout the whole group is killed.
ExitStatus run_process(const SpawnOptions& options);

// Splits a command template on whitespace (no shell quoting) and substitutes `{script}`.
std::vector<std::string> expand_command(const std::string& templ, const std::string& script);

} // namespace skele::util
