#include "skele/agent/protocol.hpp"

namespace skele::agent {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::optional<BlockKind> start_kind(std::string_view line, const BlockMarkerSet& m) {
    auto t = trim(line);
    if (t == m.shell_start) return BlockKind::Shell;
    if (t == m.read_start) return BlockKind::FileRead;
    if (t == m.write_start) return BlockKind::FileWrite;
    if (t == m.delete_start) return BlockKind::FileDelete;
    return std::nullopt;
}

const std::string& start_marker(BlockKind kind, const BlockMarkerSet& m) {
    switch (kind) {
    case BlockKind::Shell: return m.shell_start;
    case BlockKind::FileRead: return m.read_start;
    case BlockKind::FileWrite: return m.write_start;
    case BlockKind::FileDelete: return m.delete_start;
    }
    return m.shell_start;
}

CommandBlock build_block(BlockKind kind, const std::vector<std::string_view>& body) {
    std::vector<std::string_view> nonempty;
    for (auto line : body)
        if (!trim(line).empty()) nonempty.push_back(line);

    switch (kind) {
    case BlockKind::Shell:
        if (nonempty.size() > 1)
            throw ProtocolError("multi_line_shell", "shell blocks must contain a single line command (got " +
                                                        std::to_string(nonempty.size()) + " lines)");
        return CommandBlock::shell(nonempty.empty() ? "" : std::string(trim(nonempty.front())));
    case BlockKind::FileRead:
        return CommandBlock::read(nonempty.empty() ? "" : std::string(trim(nonempty.front())));
    case BlockKind::FileDelete:
        return CommandBlock::remove(nonempty.empty() ? "" : std::string(trim(nonempty.front())));
    case BlockKind::FileWrite: {
        if (body.empty()) return CommandBlock::write("", "");
        std::string contents;
        for (std::size_t i = 1; i < body.size(); ++i) {
            if (i > 1) contents += '\n';
            contents.append(body[i]);
        }
        return CommandBlock::write(std::string(trim(body.front())), std::move(contents));
    }
    }
    throw ProtocolError("unknown_block", "unknown block kind");
}

void collect_messages(std::string_view text, const BlockMarkerSet& m, std::vector<std::string>& out) {
    std::size_t pos = 0;
    while ((pos = text.find(m.message_start, pos)) != std::string_view::npos) {
        const auto begin = pos + m.message_start.size();
        auto end = text.find(m.message_end, begin);
        auto segment = trim(text.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin));
        if (!segment.empty()) out.emplace_back(segment);
        if (end == std::string_view::npos) break;
        pos = end + m.message_end.size();
    }
}

} // namespace

std::string_view to_string(BlockKind kind) {
    switch (kind) {
    case BlockKind::Shell: return "shell";
    case BlockKind::FileRead: return "read_file";
    case BlockKind::FileWrite: return "write_file";
    case BlockKind::FileDelete: return "delete_file";
    }
    return "unknown";
}

CommandBlock CommandBlock::shell(std::string command) { return {BlockKind::Shell, std::move(command), {}, {}}; }
CommandBlock CommandBlock::read(std::string path) { return {BlockKind::FileRead, {}, std::move(path), {}}; }
CommandBlock CommandBlock::write(std::string path, std::string contents) {
    return {BlockKind::FileWrite, {}, std::move(path), std::move(contents)};
}
CommandBlock CommandBlock::remove(std::string path) { return {BlockKind::FileDelete, {}, std::move(path), {}}; }

ParsedTurn parse_turn(std::string_view response, const BlockMarkerSet& markers) {
    ParsedTurn turn;
    std::string outside;  // response text with command bodies removed
    std::vector<CommandBlock> blocks;

    std::optional<BlockKind> open;
    std::vector<std::string_view> body;
    for (auto line : split_lines(response)) {
        if (open) {
            if (trim(line) == markers.block_end) {
                blocks.push_back(build_block(*open, body));
                open.reset();
                body.clear();
            } else {
                // Keep a trailing '\r' only inside bodies, where it is content.
                body.push_back(line);
            }
            continue;
        }
        if (auto kind = start_kind(line, markers)) {
            open = kind;
            continue;
        }
        outside.append(line);
        outside += '\n';
    }
    if (open) throw ProtocolError("unterminated_block", "command block opened with " +
                                                            start_marker(*open, markers) + " was never closed with " +
                                                            markers.block_end);
    if (blocks.size() > 1)
        throw ProtocolError("multiple_blocks", "only ONE command block per response is allowed (got " +
                                                   std::to_string(blocks.size()) + ")");

    collect_messages(outside, markers, turn.user_messages);
    turn.completed = outside.find(markers.task_completed) != std::string::npos;
    if (!blocks.empty()) {
        if (turn.completed) {
            turn.diagnostics.push_back("completion marker and a " + std::string(to_string(blocks.front().kind)) +
                                       " block in one response; the block was ignored");
        } else {
            turn.block = std::move(blocks.front());
        }
    }
    return turn;
}

std::string render_block(const CommandBlock& block, const BlockMarkerSet& markers) {
    std::string out = start_marker(block.kind, markers) + "\n";
    switch (block.kind) {
    case BlockKind::Shell:
        if (block.command_line.find('\n') != std::string::npos)
            throw ProtocolError("multi_line_shell", "shell command contains a newline");
        out += block.command_line + "\n";
        break;
    case BlockKind::FileRead:
    case BlockKind::FileDelete:
        out += block.path + "\n";
        break;
    case BlockKind::FileWrite:
        for (auto line : split_lines(block.contents))
            if (trim(line) == markers.block_end)
                throw ProtocolError("unrepresentable_block", "file contents contain a line equal to the end marker");
        out += block.path + "\n" + block.contents + "\n";
        break;
    }
    return out + markers.block_end + "\n";
}

} // namespace skele::agent
