#include "skele/util/subprocess.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace skele::util {

namespace {

std::vector<std::string> build_environment(const std::map<std::string, std::string>& extra) {
    std::map<std::string, std::string> merged;
    for (char** e = environ; e && *e; ++e) {
        std::string entry(*e);
        auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        merged[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    for (const auto& [k, v] : extra) merged[k] = v;
    std::vector<std::string> out;
    out.reserve(merged.size());
    for (const auto& [k, v] : merged) out.push_back(k + "=" + v);
    return out;
}

std::vector<char*> c_array(std::vector<std::string>& strings) {
    std::vector<char*> out;
    out.reserve(strings.size() + 1);
    for (auto& s : strings) out.push_back(s.data());
    out.push_back(nullptr);
    return out;
}

ExitStatus decode(int status) {
    ExitStatus st;
    if (WIFEXITED(status)) {
        st.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        st.signal = WTERMSIG(status);
    }
    return st;
}

} // namespace

ExitStatus run_process(const SpawnOptions& options) {
    if (options.argv.empty()) throw SpawnError("empty command");

    // Everything the child needs is prepared before fork; the child only makes
    // async-signal-safe calls.
    std::vector<std::string> args = options.argv;
    std::vector<std::string> envs = build_environment(options.env);
    auto argv = c_array(args);
    auto envp = c_array(envs);
    const std::string cwd = options.cwd.string();
    const std::string out_path = options.stdout_path.empty() ? "/dev/null" : options.stdout_path.string();
    const std::string err_path = options.stderr_path.empty() ? "/dev/null" : options.stderr_path.string();
    const bool shared_output = !options.stdout_path.empty() && options.stdout_path == options.stderr_path;

    int report[2];
    if (::pipe2(report, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));

    pid_t pid = ::fork();
    if (pid < 0) {
        ::close(report[0]);
        ::close(report[1]);
        throw SpawnError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::close(report[0]);
        auto fail = [&](int stage) {
            int payload[2] = {stage, errno};
            [[maybe_unused]] auto n = ::write(report[1], payload, sizeof payload);
            ::_exit(127);
        };
        ::setpgid(0, 0);
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) fail(1);
        int in = ::open("/dev/null", O_RDONLY);
        int out = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (in < 0 || out < 0) fail(2);
        int err = shared_output ? out : ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (err < 0) fail(2);
        ::dup2(in, 0);
        ::dup2(out, 1);
        ::dup2(err, 2);
        ::execvpe(argv[0], argv.data(), envp.data());
        fail(3);
    }

    ::close(report[1]);
    int payload[2] = {0, 0};
    ssize_t n;
    do {
        n = ::read(report[0], payload, sizeof payload);
    } while (n < 0 && errno == EINTR);
    ::close(report[0]);
    if (n == static_cast<ssize_t>(sizeof payload)) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        std::string what = payload[0] == 1 ? "chdir to " + cwd : payload[0] == 2 ? "open redirection" : "exec " + args[0];
        throw SpawnError(what + ": " + std::strerror(payload[1]));
    }

    using clock = std::chrono::steady_clock;
    const auto deadline = options.timeout ? std::optional(clock::now() + *options.timeout) : std::nullopt;
    auto pause = std::chrono::milliseconds(1);
    for (;;) {
        int status = 0;
        pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) return decode(status);
        if (r < 0 && errno != EINTR) throw SpawnError(std::string("waitpid: ") + std::strerror(errno));
        if (deadline && clock::now() >= *deadline) {
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            ExitStatus st = decode(status);
            st.timed_out = true;
            return st;
        }
        std::this_thread::sleep_for(pause);
        pause = std::min(pause * 2, std::chrono::milliseconds(20));
    }
}

std::vector<std::string> expand_command(const std::string& templ, const std::string& script) {
    std::vector<std::string> out;
    std::istringstream in(templ);
    std::string word;
    while (in >> word) {
        for (auto pos = word.find("{script}"); pos != std::string::npos; pos = word.find("{script}", pos + script.size()))
            word.replace(pos, 8, script);
        out.push_back(word);
    }
    return out;
}

} // namespace skele::util
