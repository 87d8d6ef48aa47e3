#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skele/agent/client.hpp"
#include "skele/agent/protocol.hpp"
#include "skele/agent/sandbox.hpp"

namespace skele::agent {

struct SessionLimits {
    int max_turns = 40;
    int client_retries = 2;
    std::chrono::milliseconds retry_backoff{500};  // doubled per retry
};

enum class SessionMode {
    Codegen,  // a turn without a command is answered with a nudge
    Chat,     // a turn without a command hands control back to the user
};

enum class Outcome { Completed, TurnLimit, Aborted, AwaitingUser };

std::string_view to_string(Outcome outcome);

enum class ApprovalDecision { Approve, Deny, ApproveAll };

// Asked before any file-mutating block runs. Implementations may block.
class ApprovalGate {
public:
    virtual ~ApprovalGate() = default;
    virtual ApprovalDecision decide(const CommandBlock& block) = 0;
};

struct SessionEvent {
    enum class Kind { UserMessage, BlockResult, ApprovalRequested, ApprovalResolved, Diagnostic };
    Kind kind;
    std::string text;
    std::optional<CommandBlock> block;
    std::optional<BlockStatus> status;
};

struct SessionConfig {
    std::string system_prompt;
    std::vector<fs::path> roots;
    fs::path workspace;
    SessionLimits limits;
    SessionMode mode = SessionMode::Codegen;
    BlockMarkerSet markers;
    ExecOptions exec;
    LlmClient* reviewer = nullptr;     // defaults to the agent client
    ApprovalGate* approval = nullptr;  // none: mutations run without asking
    std::function<void(const SessionEvent&)> on_event;
    // When set, writes and deletes of this file require that the agent read it
    // after its last modification (tandem editing with the UI).
    std::optional<fs::path> guarded_file;
    // Modification time of guarded_file as of the agent's last read (carried across chat turns).
    std::optional<fs::file_time_type> guarded_seen;
    // When set, the transcript is appended to <workspace>/.chat_agent_logs/<log_name>.jsonl.
    std::optional<std::string> log_name;
};

struct SessionResult {
    Outcome outcome = Outcome::TurnLimit;
    int turns_used = 0;
    std::vector<Message> transcript;
    std::vector<std::string> user_messages;
    std::string error;  // set when Aborted
    std::optional<fs::file_time_type> guarded_seen;
};

inline constexpr std::string_view kDeniedObservation = "user denied permission for this action";
inline constexpr std::string_view kLogDir = ".chat_agent_logs";

// Drives one agent conversation. `transcript` holds prior turns (for chat
// continuity) and receives every new message.
SessionResult run_session(const SessionConfig& config, LlmClient& client, std::vector<Message> transcript = {});

} // namespace skele::agent
