#pragma once

#include <string>

namespace skele::agent {

// Literal delimiters shared by the rendered prompts and the turn parser.
// Each start marker and the end marker must appear on a line of its own.
struct BlockMarkerSet {
    std::string shell_start = "```run_shell";
    std::string read_start = "```read_file";
    std::string write_start = "```write_file";
    std::string delete_start = "```delete_file";
    std::string block_end = "```";
    std::string task_completed = "TASK_COMPLETED";
    std::string message_start = "**MESSAGE TO USER**";
    std::string message_end = "**END MESSAGE TO USER**";
};

} // namespace skele::agent
