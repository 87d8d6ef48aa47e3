#include "skele/agent/sandbox.hpp"

#include <deque>

#include "skele/context/prompts.hpp"
#include "skele/util/fs.hpp"
#include "skele/util/log.hpp"

namespace skele::agent {

namespace {

constexpr int kMaxSymlinkHops = 40;

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::string describe_roots(std::span<const fs::path> roots) {
    std::string out;
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (i) out += ", ";
        out += roots[i].string();
    }
    return out;
}

// --- shell lexing -----------------------------------------------------------

struct Token {
    std::string text;
    bool is_operator = false;
    bool expansion = false;  // contained $ or ` outside single quotes
};

bool is_operator_char(char c) { return c == '|' || c == '&' || c == ';' || c == '(' || c == ')' || c == '<' || c == '>'; }

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Returns false (with reason) on unterminated quotes.
bool lex_shell(const std::string& cmd, std::vector<Token>& out, std::string& reason) {
    Token word;
    bool in_word = false;
    bool quoted = false;  // the current word had quotes, so it is not an fd number
    auto flush = [&] {
        if (in_word) out.push_back(std::move(word));
        word = Token{};
        in_word = false;
        quoted = false;
    };
    for (std::size_t i = 0; i < cmd.size(); ++i) {
        const char c = cmd[i];
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            flush();
        } else if (c == '#' && !in_word) {
            break;
        } else if (c == '\'') {
            auto end = cmd.find('\'', i + 1);
            if (end == std::string::npos) {
                reason = "unterminated single quote";
                return false;
            }
            word.text.append(cmd, i + 1, end - i - 1);
            in_word = quoted = true;
            i = end;
        } else if (c == '"') {
            std::size_t j = i + 1;
            for (; j < cmd.size() && cmd[j] != '"'; ++j) {
                if (cmd[j] == '\\' && j + 1 < cmd.size()) {
                    word.text += cmd[++j];
                    continue;
                }
                if (cmd[j] == '$' || cmd[j] == '`') word.expansion = true;
                word.text += cmd[j];
            }
            if (j >= cmd.size()) {
                reason = "unterminated double quote";
                return false;
            }
            in_word = quoted = true;
            i = j;
        } else if (c == '\\') {
            if (i + 1 < cmd.size()) word.text += cmd[++i];
            in_word = true;
        } else if (c == '$' || c == '`') {
            word.expansion = true;
            word.text += c;
            in_word = true;
        } else if (is_operator_char(c)) {
            std::string op;
            // "2>file", "2>&1": a bare digit word directly before a redirection is an fd number.
            if ((c == '<' || c == '>') && in_word && !quoted && all_digits(word.text)) {
                op = word.text;
                word = Token{};
                in_word = false;
            } else {
                flush();
            }
            op += c;
            while (i + 1 < cmd.size() && is_operator_char(cmd[i + 1]) && cmd[i + 1] != '(' && cmd[i + 1] != ')') op += cmd[++i];
            out.push_back(Token{op, true, false});
        } else {
            word.text += c;
            in_word = true;
        }
    }
    flush();
    return true;
}

bool is_device_path(std::string_view p) { return p == "/dev/null" || p == "/dev/stdout" || p == "/dev/stderr"; }

bool is_assignment(std::string_view w) {
    auto eq = w.find('=');
    if (eq == std::string_view::npos || eq == 0) return false;
    for (std::size_t i = 0; i < eq; ++i) {
        char c = w[i];
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    }
    return !std::isdigit(static_cast<unsigned char>(w[0]));
}

} // namespace

fs::path resolve_for_containment(const fs::path& path) {
    if (!path.is_absolute()) return {};
    const fs::path rel = path.relative_path();
    std::deque<fs::path> pending(rel.begin(), rel.end());
    fs::path cur = path.root_path();
    int hops = 0;
    while (!pending.empty()) {
        fs::path comp = pending.front();
        pending.pop_front();
        if (comp.empty() || comp == ".") continue;
        if (comp == "..") {
            cur = cur.parent_path();
            continue;
        }
        fs::path next = cur / comp;
        std::error_code ec;
        auto st = fs::symlink_status(next, ec);
        if (!ec && fs::is_symlink(st)) {
            if (++hops > kMaxSymlinkHops) return {};
            fs::path target = fs::read_symlink(next, ec);
            if (ec) return {};
            if (target.is_absolute()) {
                cur = target.root_path();
                target = target.relative_path();
            }
            std::vector<fs::path> parts(target.begin(), target.end());
            for (auto it = parts.rbegin(); it != parts.rend(); ++it) pending.push_front(*it);
            continue;
        }
        cur = std::move(next);
    }
    return cur.lexically_normal();
}

std::vector<fs::path> canonical_roots(std::span<const fs::path> roots) {
    std::vector<fs::path> out;
    for (const auto& r : roots) {
        std::error_code ec;
        auto c = fs::canonical(r, ec);
        if (!ec && fs::is_directory(c, ec)) out.push_back(c.lexically_normal());
    }
    return out;
}

bool contain_path(const fs::path& path, std::span<const fs::path> roots) {
    const fs::path resolved = resolve_for_containment(path);
    if (resolved.empty()) return false;
    for (const auto& root : roots) {
        const fs::path r = resolve_for_containment(root);
        if (!r.empty() && util::lexically_within(resolved, r)) return true;
    }
    return false;
}

ShellScan scan_shell_command(const std::string& command, std::span<const fs::path> roots, const fs::path& cwd) {
    std::vector<Token> tokens;
    std::string reason;
    if (!lex_shell(command, tokens, reason)) return {false, reason};

    auto check = [&](const std::string& word) -> ShellScan {
        if (word.empty() || is_device_path(word)) return {};
        if (word.front() == '~') return {false, "home-directory expansion is not permitted: " + word};
        fs::path p = fs::path(word).is_absolute() ? fs::path(word) : cwd / word;
        if (!contain_path(p, roots)) return {false, "path outside the allowed folders: " + word};
        return {};
    };

    bool command_position = true;
    bool redirect_target = false;
    bool fd_duplication = false;
    // Shells given -c, and eval, run their argument as another command line.
    enum class Nested { None, Shell, ShellScript, Eval } nested = Nested::None;
    for (const auto& tok : tokens) {
        if (tok.is_operator) {
            const bool redirect = tok.text.find_first_of("<>") != std::string::npos;
            if (redirect) {
                redirect_target = true;
                fd_duplication = tok.text.back() == '&';
            } else {
                command_position = true;
                nested = Nested::None;
            }
            continue;
        }
        if (tok.expansion) return {false, "shell expansion ($ or backtick) is not permitted: " + tok.text};
        if (redirect_target) {
            redirect_target = false;
            if (fd_duplication && (all_digits(tok.text) || tok.text == "-")) continue;
            if (auto r = check(tok.text); !r.allowed) return r;
            continue;
        }
        if (!tok.text.empty() && tok.text.front() == '~') return check(tok.text);
        if (command_position) {
            if (is_assignment(tok.text)) {
                if (auto r = check(tok.text.substr(tok.text.find('=') + 1)); !r.allowed) return r;
                continue;
            }
            command_position = false;
            const std::string base = fs::path(tok.text).filename().string();
            if (base == "sh" || base == "bash" || base == "dash" || base == "zsh" || base == "ksh")
                nested = Nested::Shell;
            else if (base == "eval")
                nested = Nested::Eval;
            continue;
        }
        if (nested == Nested::Shell && tok.text.starts_with("-") && tok.text.find('c') != std::string::npos) {
            nested = Nested::ShellScript;
            continue;
        }
        if (nested == Nested::ShellScript || nested == Nested::Eval) {
            if (nested == Nested::ShellScript) nested = Nested::Shell;
            if (auto r = scan_shell_command(tok.text, roots, cwd); !r.allowed) return r;
            continue;
        }
        std::string arg = tok.text;
        if (!arg.empty() && arg.front() == '-') {
            auto eq = arg.find('=');
            if (eq == std::string::npos) continue;
            arg = arg.substr(eq + 1);
        }
        if (auto r = check(arg); !r.allowed) return r;
    }
    return {};
}

Verdict parse_verdict(std::string_view response) {
    constexpr std::string_view prefix = "VERDICT: ";
    std::optional<std::string_view> last;
    std::size_t start = 0;
    while (start <= response.size()) {
        auto nl = response.find('\n', start);
        auto line = response.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (line.starts_with(prefix)) last = line.substr(prefix.size());
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    if (!last) return {VerdictKind::Unsafe, "no parseable verdict"};
    auto rest = trim(*last);
    if (rest == "SAFE") return {VerdictKind::Safe, ""};
    if (rest.starts_with("UNSAFE")) {
        auto reason = rest.substr(6);
        while (!reason.empty() && (reason.front() == ' ' || reason.front() == '-')) reason.remove_prefix(1);
        return {VerdictKind::Unsafe, std::string(reason)};
    }
    return {VerdictKind::Unsafe, "no parseable verdict"};
}

Verdict review_command(const std::string& command, std::span<const fs::path> roots, LlmClient& reviewer) {
    const std::vector<fs::path> folders(roots.begin(), roots.end());
    const std::string prompt = context::render_security_prompt(command, folders);
    try {
        const std::vector<Message> transcript{{Role::User, prompt}};
        return parse_verdict(reviewer.complete(prompt, transcript));
    } catch (const std::exception& e) {
        util::log(util::LogLevel::Warn, std::string("command review failed: ") + e.what());
        return {VerdictKind::Unsafe, "reviewer unavailable"};
    }
}

std::string_view to_string(BlockStatus status) {
    switch (status) {
    case BlockStatus::Ok: return "ok";
    case BlockStatus::Blocked: return "blocked";
    case BlockStatus::Failed: return "failed";
    }
    return "unknown";
}

std::string cap_output(std::string text, std::size_t cap) {
    if (text.size() <= cap) return text;
    const std::size_t dropped = text.size() - cap;
    text.resize(cap);
    return text + "\n... (output truncated, " + std::to_string(dropped) + " more bytes)";
}

BlockResult execute_block(const CommandBlock& block, std::span<const fs::path> roots, const fs::path& workspace,
                          LlmClient& reviewer, const ExecOptions& options) {
    auto blocked = [](std::string why) { return BlockResult{BlockStatus::Blocked, "BLOCKED: " + why}; };
    auto failed = [](std::string why) { return BlockResult{BlockStatus::Failed, "FAILED: " + why}; };

    if (block.kind != BlockKind::Shell) {
        if (block.path.empty()) return failed("no file path given in the " + std::string(to_string(block.kind)) + " block");
        const fs::path target = fs::path(block.path).is_absolute() ? fs::path(block.path) : workspace / block.path;
        if (!contain_path(target, roots))
            return blocked(block.path + " is outside the allowed folders (" + describe_roots(roots) + ")");

        std::error_code ec;
        switch (block.kind) {
        case BlockKind::FileRead: {
            if (!fs::exists(target, ec)) return failed("file not found: " + block.path);
            if (fs::is_directory(target, ec)) return failed(block.path + " is a directory; list it with a shell command");
            try {
                return {BlockStatus::Ok, "Contents of " + block.path + ":\n" +
                                             cap_output(util::read_file(target), options.output_cap)};
            } catch (const std::exception& e) {
                return failed(e.what());
            }
        }
        case BlockKind::FileWrite: {
            if (fs::is_directory(target, ec)) return failed(block.path + " is a directory");
            try {
                util::write_file(target, block.contents);
            } catch (const std::exception& e) {
                return failed(e.what());
            }
            return {BlockStatus::Ok, "wrote " + std::to_string(block.contents.size()) + " bytes to " + block.path};
        }
        case BlockKind::FileDelete: {
            if (!fs::exists(fs::symlink_status(target, ec))) return failed("file not found: " + block.path);
            if (fs::is_directory(target, ec)) return failed(block.path + " is a directory; only files can be deleted");
            if (!fs::remove(target, ec) || ec) return failed("could not delete " + block.path + ": " + ec.message());
            return {BlockStatus::Ok, "deleted " + block.path};
        }
        default: break;
        }
    }

    const std::string& cmd = block.command_line;
    if (trim(cmd).empty()) return failed("empty shell command");

    const Verdict verdict = review_command(cmd, roots, reviewer);
    if (!verdict.safe()) return blocked("command rejected by security review: " + verdict.reason);
    if (auto scan = scan_shell_command(cmd, roots, workspace); !scan.allowed)
        return blocked("command rejected by sandbox policy: " + scan.reason);

    util::TempDir scratch("skele-shell");
    const fs::path out_file = scratch.path() / "output.txt";
    util::SpawnOptions spawn;
    spawn.argv = {options.shell, "-c", cmd};
    spawn.cwd = workspace;
    spawn.stdout_path = out_file;
    spawn.stderr_path = out_file;
    spawn.timeout = options.shell_timeout;

    util::ExitStatus status;
    try {
        status = options.spawner(spawn);
    } catch (const std::exception& e) {
        return failed(std::string("could not start shell: ") + e.what());
    }
    std::string output;
    std::error_code ec;
    if (fs::exists(out_file, ec)) output = util::read_file(out_file);
    output = cap_output(std::move(output), options.output_cap);

    if (status.timed_out)
        return failed("command timed out after " + std::to_string(options.shell_timeout.count()) + " ms\n" + output);
    const std::string code = status.exit_code >= 0 ? std::to_string(status.exit_code)
                                                   : "signal " + std::to_string(status.signal);
    return {status.exit_code == 0 ? BlockStatus::Ok : BlockStatus::Failed, "exit code " + code + "\n" + output};
}

} // namespace skele::agent
