#include "skele/agent/session.hpp"

#include <fstream>
#include <thread>

#include <json.hpp>

#include "skele/util/log.hpp"

namespace skele::agent {

namespace {

class TranscriptLog {
public:
    TranscriptLog(const fs::path& workspace, const std::optional<std::string>& name) {
        if (!name) return;
        std::error_code ec;
        const fs::path dir = workspace / kLogDir;
        fs::create_directories(dir, ec);
        out_.open(dir / (*name + ".jsonl"), std::ios::app);
    }

    void append(const Message& m) {
        if (!out_) return;
        out_ << nlohmann::json{{"role", to_string(m.role)}, {"text", m.text}}.dump() << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

bool same_file(const fs::path& a, const fs::path& b) {
    const auto ra = resolve_for_containment(a);
    const auto rb = resolve_for_containment(b);
    return !ra.empty() && ra == rb;
}

std::optional<fs::file_time_type> mtime_of(const fs::path& p) {
    std::error_code ec;
    auto t = fs::last_write_time(p, ec);
    if (ec) return std::nullopt;
    return t;
}

} // namespace

std::string_view to_string(Outcome outcome) {
    switch (outcome) {
    case Outcome::Completed: return "completed";
    case Outcome::TurnLimit: return "turn_limit";
    case Outcome::Aborted: return "aborted";
    case Outcome::AwaitingUser: return "awaiting_user";
    }
    return "unknown";
}

SessionResult run_session(const SessionConfig& config, LlmClient& client, std::vector<Message> transcript) {
    if (config.limits.max_turns < 1) throw Error("invalid_limits", "max_turns must be at least 1");

    SessionResult result;
    result.guarded_seen = config.guarded_seen;
    LlmClient& reviewer = config.reviewer ? *config.reviewer : client;
    const auto roots = canonical_roots(config.roots);
    TranscriptLog log(config.workspace, config.log_name);
    for (const auto& m : transcript) log.append(m);

    auto emit = [&](SessionEvent ev) {
        if (config.on_event) config.on_event(ev);
    };
    auto push = [&](Role role, std::string text) {
        transcript.push_back({role, std::move(text)});
        log.append(transcript.back());
    };
    bool blanket_approval = false;

    for (int turn = 0; turn < config.limits.max_turns; ++turn) {
        std::string response;
        bool got = false;
        auto backoff = config.limits.retry_backoff;
        for (int attempt = 0; attempt <= config.limits.client_retries; ++attempt) {
            try {
                response = client.complete(config.system_prompt, transcript);
                got = true;
                break;
            } catch (const std::exception& e) {
                result.error = e.what();
                util::log(util::LogLevel::Warn, "agent call failed (attempt " + std::to_string(attempt + 1) + "): " + e.what());
                if (attempt < config.limits.client_retries && backoff.count() > 0) {
                    std::this_thread::sleep_for(backoff);
                    backoff *= 2;
                }
            }
        }
        if (!got) {
            result.outcome = Outcome::Aborted;
            break;
        }
        result.error.clear();
        ++result.turns_used;
        push(Role::Agent, response);

        ParsedTurn parsed;
        try {
            parsed = parse_turn(response, config.markers);
        } catch (const ProtocolError& e) {
            emit({SessionEvent::Kind::Diagnostic, e.what(), std::nullopt, std::nullopt});
            push(Role::Environment, std::string("ERROR: ") + e.what() +
                                        ". Reissue exactly one command block; shell blocks must be a single line.");
            continue;
        }
        for (const auto& msg : parsed.user_messages) {
            result.user_messages.push_back(msg);
            emit({SessionEvent::Kind::UserMessage, msg, std::nullopt, std::nullopt});
        }
        for (const auto& d : parsed.diagnostics) {
            util::log(util::LogLevel::Info, d);
            emit({SessionEvent::Kind::Diagnostic, d, std::nullopt, std::nullopt});
        }
        if (parsed.completed) {
            result.outcome = Outcome::Completed;
            result.transcript = std::move(transcript);
            return result;
        }
        if (!parsed.block) {
            if (config.mode == SessionMode::Chat) {
                result.outcome = Outcome::AwaitingUser;
                result.transcript = std::move(transcript);
                return result;
            }
            push(Role::Environment, "No command block found. Issue exactly one command block, or say " +
                                        config.markers.task_completed + " when the task is complete.");
            continue;
        }

        const CommandBlock& block = *parsed.block;
        if (config.approval && block.mutates() && !blanket_approval) {
            emit({SessionEvent::Kind::ApprovalRequested, "", block, std::nullopt});
            const auto decision = config.approval->decide(block);
            emit({SessionEvent::Kind::ApprovalResolved, decision == ApprovalDecision::Deny ? "denied" : "approved", block,
                  std::nullopt});
            if (decision == ApprovalDecision::Deny) {
                push(Role::Environment, std::string(kDeniedObservation));
                continue;
            }
            if (decision == ApprovalDecision::ApproveAll) blanket_approval = true;
        }

        const bool touches_guarded = config.guarded_file && block.kind != BlockKind::Shell &&
                                     same_file(fs::path(block.path).is_absolute() ? fs::path(block.path)
                                                                                  : config.workspace / block.path,
                                               *config.guarded_file);
        if (touches_guarded && block.mutates()) {
            const auto now = mtime_of(*config.guarded_file);
            if (now && (!result.guarded_seen || *result.guarded_seen != *now)) {
                BlockResult stale{BlockStatus::Blocked, "BLOCKED: " + config.guarded_file->filename().string() +
                                                            " changed since you last read it (edited by the user). "
                                                            "Read it again before writing."};
                emit({SessionEvent::Kind::BlockResult, stale.observation, block, stale.status});
                push(Role::Environment, stale.observation);
                continue;
            }
        }

        BlockResult res = execute_block(block, roots, config.workspace, reviewer, config.exec);
        if (touches_guarded && res.status == BlockStatus::Ok) result.guarded_seen = mtime_of(*config.guarded_file);
        emit({SessionEvent::Kind::BlockResult, res.observation, block, res.status});
        push(Role::Environment, res.observation);
    }

    if (result.outcome != Outcome::Aborted) result.outcome = Outcome::TurnLimit;
    result.transcript = std::move(transcript);
    return result;
}

} // namespace skele::agent
