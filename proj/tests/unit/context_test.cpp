#include <gtest/gtest.h>

#include "skele/context/context.hpp"
#include "skele/context/prompts.hpp"
#include "support.hpp"

namespace ctx = skele::context;
namespace wf = skele::workflow;
using skele::testing::Mag7Workspace;

namespace {

std::string replace(std::string s, const std::string& from, const std::string& to) {
    auto pos = s.find(from);
    if (pos != std::string::npos) s.replace(pos, from.size(), to);
    return s;
}

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

std::set<std::string> neighbor_ids(const ctx::ContextBundle& b) {
    std::set<std::string> out;
    for (const auto& n : b.neighbors) out.insert(n.node_id);
    return out;
}

} // namespace

TEST(Assemble, PriorScriptIncludedNonNeighborsAbsent) {
    Mag7Workspace ws;
    skele::util::write_file(ws.dir / "download_mag7" / "download_mag7.py", "print('one')\n");
    const auto b = ctx::assemble_context(ws.project(), "3", ws.dir);
    EXPECT_EQ(neighbor_ids(b), (std::set<std::string>{"1", "4"}));
    ASSERT_NE(b.neighbor("1"), nullptr);
    EXPECT_EQ(b.neighbor("1")->role, ctx::NeighborRole::Prior);
    EXPECT_EQ(b.neighbor("1")->script_text, "print('one')\n");
    EXPECT_EQ(b.neighbor("4")->role, ctx::NeighborRole::Successor);
    EXPECT_FALSE(b.neighbor("4")->script_text.has_value());
    EXPECT_EQ(b.folder_name, "compute_20day_ma");
    EXPECT_EQ(b.neighbor("1")->json["node_name_key"], "1");
}

TEST(Assemble, SourceNodeEmptyWorkspace) {
    Mag7Workspace ws;
    const auto b = ctx::assemble_context(ws.project(), "1", ws.dir);
    EXPECT_EQ(neighbor_ids(b), (std::set<std::string>{"2", "3"}));
    for (const auto& n : b.neighbors) {
        EXPECT_EQ(n.role, ctx::NeighborRole::Successor);
        EXPECT_FALSE(n.script_text.has_value());
    }
}

TEST(Assemble, TwoGeneratedPriorsByteIdentical) {
    Mag7Workspace ws;
    auto p = ws.project();
    p.at("4").priors = {"2", "3"};
    const std::string a = "x = 1\r\n\x01binary-ish\n", b = "y = '\xc3\xa9'\n";
    skele::util::write_file(ws.dir / "plot_prices" / "plot_prices.py", a);
    skele::util::write_file(ws.dir / "compute_20day_ma" / "compute_20day_ma.py", b);
    const auto bundle = ctx::assemble_context(p, "4", ws.dir);
    EXPECT_EQ(bundle.neighbor("2")->script_text, a);
    EXPECT_EQ(bundle.neighbor("3")->script_text, b);
}

TEST(Assemble, Errors) {
    Mag7Workspace ws;
    EXPECT_THROW(ctx::assemble_context(ws.project(), "9", ws.dir), wf::UnknownNode);
    EXPECT_THROW(ctx::assemble_context(ws.project(), "1", ws.dir / "missing"), ctx::WorkspaceMissing);
}

TEST(Assemble, ChainNeverIncludesTwoHops) {
    skele::util::TempDir tmp;
    wf::Project p = wf::parse_project(R"({"nodes": {"a": {"name": "a"}, "b": {"name": "b", "priors": ["a"]},
        "c": {"name": "c", "priors": ["b"]}, "d": {"name": "d", "priors": ["c"]}}})");
    EXPECT_EQ(neighbor_ids(ctx::assemble_context(p, "c", tmp.path())), (std::set<std::string>{"b", "d"}));
}

TEST(Assemble, RandomDagsMatchBlanket) {
    skele::util::TempDir tmp;
    std::mt19937_64 rng(99);
    for (int i = 0; i < 100; ++i) {
        const auto p = skele::testing::random_project(rng, 10, 0.3, false);
        for (const auto& n : p.nodes) {
            const auto o = skele::testing::oracle_blanket(p, n.id);
            std::set<std::string> expected = o.priors;
            expected.insert(o.successors.begin(), o.successors.end());
            EXPECT_EQ(neighbor_ids(ctx::assemble_context(p, n.id, tmp.path())), expected);
        }
    }
}

TEST(Assemble, AddingNeighborScriptChangesOnlyThatNeighbor) {
    Mag7Workspace ws;
    const auto before = ctx::assemble_context(ws.project(), "3", ws.dir);
    skele::util::write_file(ws.dir / "plot_20day_ma" / "plot_20day_ma.py", "pass\n");
    const auto after = ctx::assemble_context(ws.project(), "3", ws.dir);
    auto jb = before.to_json(), ja = after.to_json();
    ASSERT_EQ(jb.size(), ja.size());
    EXPECT_EQ(before.neighbor("1")->script_text, after.neighbor("1")->script_text);
    EXPECT_FALSE(before.neighbor("4")->script_text);
    EXPECT_EQ(after.neighbor("4")->script_text, "pass\n");
    EXPECT_EQ(before.target_json, after.target_json);
    EXPECT_EQ(before.folder_name, after.folder_name);
}

TEST(NodePrompt, FolderSectionAndTask) {
    Mag7Workspace ws;
    const auto b = ctx::assemble_context(ws.project(), "1", ws.dir);
    const auto prompt = ctx::render_node_prompt(b, "download mag7 prices for the past 100 days", {});
    EXPECT_NE(prompt.find("NODE-SPECIFIC SUBFOLDER (CRITICAL): download_mag7/"), std::string::npos);
    const auto task_pos = prompt.find("# INPUT TASK:");
    ASSERT_NE(task_pos, std::string::npos);
    EXPECT_NE(prompt.find("download mag7 prices for the past 100 days", task_pos), std::string::npos);
    EXPECT_NE(prompt.find("```run_shell"), std::string::npos);
    EXPECT_NE(prompt.find("```write_file"), std::string::npos);
    EXPECT_NE(prompt.find("TASK_COMPLETED"), std::string::npos);
    EXPECT_EQ(prompt.find("{task}"), std::string::npos);
    EXPECT_EQ(prompt, ctx::render_node_prompt(b, "download mag7 prices for the past 100 days", {}));

    // The repeated instructions come after the task.
    const auto suffix = ctx::PromptLibrary::builtin().get("critical_suffix.txt");
    const auto first_line = suffix.substr(0, suffix.find('\n'));
    EXPECT_GT(prompt.rfind(first_line), task_pos);
}

TEST(NodePrompt, TaskVerbatimAfterHeading) {
    Mag7Workspace ws;
    const auto b = ctx::assemble_context(ws.project(), "4", ws.dir);
    const auto prompt = ctx::render_node_prompt(b, "plot the 20 day ma", {});
    const auto pos = prompt.find("# INPUT TASK:");
    const auto next = prompt.find("plot the 20 day ma", pos);
    ASSERT_NE(next, std::string::npos);
    // Only the review instruction line sits between the heading and the task.
    EXPECT_NE(prompt.find("Complete the task below:\n\nplot the 20 day ma\n", pos), std::string::npos);
    EXPECT_EQ(std::count(prompt.begin() + pos, prompt.begin() + next, '\n'), 3);
}

TEST(NodePrompt, NoFolderNoSection) {
    Mag7Workspace ws;
    auto b = ctx::assemble_context(ws.project(), "1", ws.dir);
    b.folder_name.clear();
    const auto prompt = ctx::render_node_prompt(b, "t", {});
    EXPECT_EQ(prompt.find("NODE-SPECIFIC SUBFOLDER"), std::string::npos);
}

TEST(NodePrompt, LanguageAndMarkersConfigurable) {
    Mag7Workspace ws;
    ctx::PromptConfig cfg;
    cfg.language = "R";
    cfg.script_extension = "R";
    cfg.fence_language = "r";
    cfg.markers.shell_start = "<<shell>>";
    const auto b = ctx::assemble_context(ws.project(), "1", ws.dir, "R");
    const auto prompt = ctx::render_node_prompt(b, "t", cfg);
    EXPECT_NE(prompt.find("<<shell>>"), std::string::npos);
    EXPECT_EQ(prompt.find("```run_shell"), std::string::npos);
    EXPECT_NE(prompt.find("download_mag7.R"), std::string::npos);
}

TEST(ChatPrompt, RequiredRules) {
    skele::util::TempDir tmp;
    const auto prompt = ctx::render_chat_prompt(tmp.path(), {});
    EXPECT_NE(prompt.find("Priors must be a flat list"), std::string::npos);
    EXPECT_NE(prompt.find("Do NOT read inside the folder .chat_agent_logs"), std::string::npos);
    EXPECT_NE(prompt.find("temp_"), std::string::npos);
    EXPECT_NE(prompt.find("process.json last edited timestamp has changed"), std::string::npos);
    EXPECT_NE(prompt.find(tmp.path().string()), std::string::npos);
    EXPECT_THROW(ctx::render_chat_prompt(tmp.path() / "nope", {}), ctx::WorkspaceMissing);
}

TEST(SecurityPrompt, MatchesReferenceText) {
    const std::string reference = skele::testing::read_fixture("security_prompt_reference.txt");
    const auto expected = replace(replace(reference, "{folders_list}", "  - /ws/p"), "{command}", "ls");
    const auto prompt = ctx::render_security_prompt("ls", {"/ws/p"});
    EXPECT_EQ(prompt, expected);
    EXPECT_EQ(count(prompt, "\n  - "), 1u);
    EXPECT_EQ(count(prompt, "=== COMMAND TO EVALUATE ===\nls\n"), 1u);
}

TEST(SecurityPrompt, FolderBullets) {
    const auto none = ctx::render_security_prompt("ls", {});
    EXPECT_EQ(count(none, "\n  - "), 0u);
    EXPECT_NE(none.find("VERDICT: UNSAFE - <short reason>"), std::string::npos);
    const auto two = ctx::render_security_prompt("ls", {"/b", "/a"});
    EXPECT_NE(two.find("  - /b\n  - /a\n"), std::string::npos);
}

TEST(SecurityPrompt, CommandWithBracesIsVerbatim) {
    const std::string cmd = "echo {command} {folders_list} }{";
    const auto prompt = ctx::render_security_prompt(cmd, {"/x"});
    EXPECT_NE(prompt.find("=== COMMAND TO EVALUATE ===\n" + cmd + "\n"), std::string::npos);
}

TEST(RenderTemplate, SinglePassOnlyKnownNames) {
    EXPECT_EQ(ctx::render_template("{a} {b} {A} {a", {{"a", "{b}"}}), "{b} {b} {A} {a");
}

TEST(Attachments, EmptyListUnchanged) { EXPECT_EQ(ctx::append_file_context("P", {}), "P"); }

TEST(Attachments, ExactTruncation) {
    const std::vector<ctx::Attachment> files{ctx::Attachment::make("a.txt", "text/plain", std::string(5001, 'a'))};
    const auto out = ctx::append_file_context("P", files);
    const std::string expected = "P\n\n============================\n# ATTACHED FILES:\n\n## File: a.txt\n```\n" +
                                 std::string(5000, 'a') + "\n... (content truncated)" + "\n```\n";
    EXPECT_EQ(out, expected);
}

TEST(Attachments, ExactlyLimitNotTruncated) {
    const std::vector<ctx::Attachment> files{ctx::Attachment::make("a.json", "application/json", std::string(5000, 'b'))};
    const auto out = ctx::append_file_context("", files);
    EXPECT_EQ(out.find("(content truncated)"), std::string::npos);
    EXPECT_NE(out.find(std::string(5000, 'b') + "\n```\n"), std::string::npos);
}

TEST(Attachments, CountsCharactersNotBytes) {
    std::string text;
    for (int i = 0; i < 5001; ++i) text += "\xc3\xa9";  // U+00E9
    const std::vector<ctx::Attachment> files{ctx::Attachment::make("e.txt", "text/plain", text)};
    const auto out = ctx::append_file_context("", files);
    EXPECT_NE(out.find("```\n" + text.substr(0, 10000) + "\n... (content truncated)\n```\n"), std::string::npos);
}

TEST(Attachments, BinaryAndUndecodable) {
    const std::vector<ctx::Attachment> files{
        ctx::Attachment::make("chart.png", "image/png", "\x89PNG"),
        ctx::Attachment::make("bad.txt", "text/plain", std::string(6000, 'a') + "\xff"),
    };
    const auto out = ctx::append_file_context("", files);
    EXPECT_NE(out.find("## File: chart.png: [Binary file attached - image/png]"), std::string::npos);
    EXPECT_NE(out.find("## File: bad.txt: [Error reading file:"), std::string::npos);
    EXPECT_THROW(ctx::Attachment::make("a/b.txt", "text/plain", ""), ctx::AttachmentError);
}

TEST(Attachments, PrefixPreservedProperty) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const std::size_t len = rng() % 10000;
        std::string s(len, ' ');
        for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
        const std::vector<ctx::Attachment> files{ctx::Attachment::make("f.txt", "text/plain", s)};
        const auto out = ctx::append_file_context("", files);
        const auto start = out.find("```\n") + 4;
        const auto end = out.rfind("\n```\n");
        const auto content = out.substr(start, end - start);
        EXPECT_LE(content.size(), ctx::kAttachmentPreviewChars + ctx::kTruncationMarker.size());
        EXPECT_EQ(content.substr(0, std::min<std::size_t>(len, 5000)), s.substr(0, 5000));
    }
}

TEST(Attachments, LoadedFromNodeFolder) {
    Mag7Workspace ws;
    auto p = ws.project();
    p.at("1").input.files = {"tickers.csv", "missing.txt"};
    skele::util::write_file(ws.dir / "download_mag7" / "tickers.csv", "AAPL\n");
    const auto files = ctx::load_input_attachments(p.at("1"), ws.dir / "download_mag7");
    ASSERT_EQ(files.size(), 1u);
    EXPECT_EQ(files[0].file_name, "tickers.csv");
    EXPECT_EQ(files[0].bytes, "AAPL\n");
    EXPECT_EQ(files[0].mime_type, "text/csv");
}

TEST(Repair, SectionCarriesFailureDetails) {
    ctx::RepairDetails d;
    d.script_path = "/p/x/x.py";
    d.attempt = 2;
    d.max_attempts = 2;
    d.exit_status = "exit code 1";
    d.error_log = "no input data";
    d.summary_tail = "Task failed: no input data";
    d.stderr_text = "Traceback: boom";
    const auto s = ctx::render_repair_section(d);
    for (const auto* needle : {"/p/x/x.py", "no input data", "Traceback: boom", "exit code 1"})
        EXPECT_NE(s.find(needle), std::string::npos) << needle;
}
