#include <gtest/gtest.h>

#include "skele/contract/node_contract.hpp"
#include "support.hpp"

namespace ct = skele::contract;
namespace fs = std::filesystem;
using skele::util::write_file;

namespace {

std::string contract_error(const std::string& text) {
    try {
        ct::parse_state(text);
    } catch (const skele::Error& e) {
        return e.code();
    }
    return "";
}

struct Folder {
    skele::util::TempDir tmp;
    ct::NodeFolder folder;
    Folder() : folder{tmp.path(), "plot_prices"} { fs::create_directories(folder.root()); }
};

} // namespace

TEST(State, ParsesSuccessWithValues) {
    const auto s = ct::parse_state(R"({"task_status":"success","rows":35,"file":"prices.png"})");
    EXPECT_TRUE(s.success());
    EXPECT_FALSE(s.error_log);
    EXPECT_EQ(s.values["rows"], 35);
    EXPECT_EQ(s.values.begin().key(), "rows");
}

TEST(State, FailedNeedsErrorLog) {
    EXPECT_EQ(contract_error(R"({"task_status":"failed"})"), "contract_violation");
    const auto s = ct::parse_state(R"({"task_status":"failed","error_log":"no data"})");
    EXPECT_FALSE(s.success());
    EXPECT_EQ(*s.error_log, "no data");
}

TEST(State, Violations) {
    EXPECT_EQ(contract_error("{"), "syntax_error");
    EXPECT_EQ(contract_error("[]"), "contract_violation");
    EXPECT_EQ(contract_error("{}"), "contract_violation");
    EXPECT_EQ(contract_error(R"({"task_status":"done"})"), "contract_violation");
    EXPECT_EQ(contract_error(R"({"task_status":true})"), "contract_violation");
}

TEST(State, RoundTrip) {
    Folder f;
    auto s = ct::NodeState::failed("boom");
    s.values["partial"] = skele::workflow::Json::array({1, 2});
    ct::write_state(f.folder.state_file(), s);
    EXPECT_EQ(ct::read_state(f.folder.state_file()), s);
    EXPECT_THROW(ct::read_state(f.folder.root() / "nope.state.json"), ct::StateMissing);
}

TEST(Layout, Paths) {
    skele::workflow::Node node;
    node.id = "2";
    node.name = "Plot Prices";
    const auto f = ct::NodeFolder::of("/p", node);
    EXPECT_EQ(f.script(), fs::path("/p/plot_prices/plot_prices.py"));
    EXPECT_EQ(f.state_file(), fs::path("/p/plot_prices/plot_prices.state.json"));
    EXPECT_EQ(f.summary_file(), fs::path("/p/plot_prices/plot_prices_summary.txt"));
    EXPECT_EQ(f.test_script(), fs::path("/p/plot_prices/test/test_plot_prices.py"));
}

TEST(Outputs, NewAndModifiedFilesOnly) {
    Folder f;
    const auto root = f.folder.root();
    write_file(root / "old.csv", "a");
    write_file(root / "changed.csv", "a");
    write_file(f.folder.script(), "print()");
    const auto before = ct::snapshot(f.folder);

    write_file(root / "changed.csv", "abc");
    write_file(root / "out" / "prices.png", "png");
    write_file(root / "temp_plot_prices_stdout.txt", "x");
    write_file(root / ".chat_agent_logs" / "codegen.jsonl", "x");
    write_file(f.folder.state_file(), R"({"task_status":"success"})");
    write_file(f.folder.summary_file(), "Plot\nTask completed successfully\n");

    const auto out = ct::collect_outputs(f.folder, before);
    EXPECT_EQ(out.new_files, (std::vector<std::string>{"plot_prices/changed.csv", "plot_prices/out/prices.png"}));
    EXPECT_EQ(out.summary_text, "Plot\nTask completed successfully\n");
    EXPECT_TRUE(out.warnings.empty());
}

TEST(Outputs, MissingSummaryWarns) {
    Folder f;
    const auto out = ct::collect_outputs(f.folder, {});
    EXPECT_TRUE(out.new_files.empty());
    ASSERT_EQ(out.warnings.size(), 1u);
}

TEST(Conformance, FullNodePasses) {
    Folder f;
    write_file(f.folder.script(), "x");
    write_file(f.folder.test_script(), "x");
    write_file(f.folder.state_file(), R"({"task_status":"success"})");
    write_file(f.folder.summary_file(), "Plot the closing prices.\nsaved prices.png\nTask completed successfully\n");
    const auto r = ct::conformance_check(f.folder);
    for (const auto& c : r.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
    EXPECT_EQ(r.checks.size(), 7u);
}

TEST(Conformance, Failures) {
    Folder f;
    const auto pre = ct::conformance_check(f.folder, false);
    EXPECT_EQ(pre.checks.size(), 2u);
    EXPECT_FALSE(pre.all_passed());

    write_file(f.folder.state_file(), R"({"task_status":"failed","error_log":"x"})");
    write_file(f.folder.summary_file(), "Task completed successfully\n");
    const auto r = ct::conformance_check(f.folder);
    EXPECT_TRUE(r.find("state_contract")->passed);
    EXPECT_FALSE(r.find("summary_task_description")->passed);
    EXPECT_FALSE(r.find("outcome_message")->passed);
}

TEST(TailLines, Examples) {
    EXPECT_EQ(ct::tail_lines("a\nb\nc\n", 2), "b\nc\n");
    EXPECT_EQ(ct::tail_lines("a\nb\nc", 2), "b\nc");
    EXPECT_EQ(ct::tail_lines("a\nb", 5), "a\nb");
    EXPECT_EQ(ct::tail_lines("abc", 0), "");
    EXPECT_EQ(ct::tail_lines("", 3), "");
}

TEST(TailLines, MatchesSplitOracle) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 500; ++i) {
        std::string text;
        const int len = static_cast<int>(rng() % 30);
        for (int k = 0; k < len; ++k) text += "ab\n"[rng() % 3];
        const std::size_t n = 1 + rng() % 6;
        // Oracle: drop a trailing newline, split, keep the last n pieces.
        std::string body = text;
        const bool trailing = !body.empty() && body.back() == '\n';
        if (trailing) body.pop_back();
        std::vector<std::string> lines{""};
        for (char c : body) {
            if (c == '\n') lines.emplace_back();
            else lines.back().push_back(c);
        }
        std::string expected;
        const std::size_t from = lines.size() > n ? lines.size() - n : 0;
        for (std::size_t k = from; k < lines.size(); ++k) expected += (k > from ? "\n" : "") + lines[k];
        if (trailing) expected += "\n";
        EXPECT_EQ(ct::tail_lines(text, n), expected) << text;
    }
}
