#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skele/agent/markers.hpp"
#include "skele/error.hpp"

namespace skele::agent {

enum class BlockKind { Shell, FileRead, FileWrite, FileDelete };

std::string_view to_string(BlockKind kind);

// One parsed command. Shell uses `command_line`; the file kinds use `path`,
// and FileWrite also carries `contents`.
struct CommandBlock {
    BlockKind kind = BlockKind::Shell;
    std::string command_line;
    std::string path;
    std::string contents;

    static CommandBlock shell(std::string command);
    static CommandBlock read(std::string path);
    static CommandBlock write(std::string path, std::string contents);
    static CommandBlock remove(std::string path);

    // Write, delete and shell can all change files.
    bool mutates() const { return kind != BlockKind::FileRead; }
    bool operator==(const CommandBlock&) const = default;
};

struct ParsedTurn {
    std::vector<std::string> user_messages;
    std::optional<CommandBlock> block;
    bool completed = false;
    std::vector<std::string> diagnostics;
};

struct ProtocolError : Error {
    ProtocolError(std::string code, const std::string& msg) : Error(std::move(code), msg) {}
};

// Codes: "multiple_blocks", "multi_line_shell", "unterminated_block".
// Marker lines are compared after trimming surrounding whitespace. Message
// segments and the completion marker are looked for outside command bodies.
ParsedTurn parse_turn(std::string_view response, const BlockMarkerSet& markers = {});

// Inverse of parse_turn for a single block. Throws ProtocolError when the block
// cannot be represented (multi-line shell, contents containing an end-marker line).
std::string render_block(const CommandBlock& block, const BlockMarkerSet& markers = {});

} // namespace skele::agent
