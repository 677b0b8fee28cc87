#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <sqlab/game.hpp>

using namespace sqlab;
namespace fs = std::filesystem;

namespace {

const std::string kGameDir = std::string(SQLAB_TEST_DATA_DIR) + "/company_game";

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sqlab_adv_" + std::to_string(Catch::rngSeed()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

/// A game directory whose adventure.md is replaced by the given script.
struct ScriptedGame {
    TempDir dir;
    ScriptedGame(const std::string& script) {
        fs::copy(kGameDir, dir.path, fs::copy_options::recursive);
        std::ofstream out(dir.path / "adventure.md", std::ios::binary);
        out << script;
    }
};

std::string sample_script() { return read_all(fs::path(kGameDir) / "adventure.md"); }

}  // namespace

TEST_CASE("markdown styling maps spans to mathematical characters") {
    CHECK(style_markdown("**A**") == "\xf0\x9d\x90\x80");          // bold capital a
    CHECK(style_markdown("**z**") == "\xf0\x9d\x90\xb3");          // bold small z
    CHECK(style_markdown("**7**") == "\xf0\x9d\x9f\x95");          // bold digit seven
    CHECK(style_markdown("*A*") == "\xf0\x9d\x90\xb4");            // italic capital a
    CHECK(style_markdown("*h*") == "\xe2\x84\x8e");                // legacy italic h
    CHECK(style_markdown("*7*") == "7");                           // italic digits do not exist
    CHECK(style_markdown("`A0`") == "\xf0\x9d\x99\xb0\xf0\x9d\x9f\xb6");  // monospace
    CHECK(style_markdown("plain, (x)!") == "plain, (x)!");
    CHECK(style_markdown("a ** unterminated") == "a ** unterminated");
    CHECK(style_markdown("**a** and `b`") ==
          "\xf0\x9d\x90\x9a and \xf0\x9d\x9a\x8b");
}

TEST_CASE("the sample script parses into ordered task records") {
    auto records = parse_adventure(sample_script());
    REQUIRE(records.size() == 6);
    std::vector<int> numbers;
    for (const auto& r : records) numbers.push_back(r.number);
    CHECK(numbers == std::vector<int>{292, 108, 205, 316, 427, 501});

    const TaskRecord& fair = records[0];
    CHECK(fair.is_episode);
    CHECK(fair.title == "A fair wage");
    CHECK(fair.context.find("harbormaster") != std::string::npos);
    CHECK(fair.statement.find("**25000**") != std::string::npos);
    CHECK_FALSE(fair.control.has_value());
    REQUIRE(fair.solutions.size() == 1);
    CHECK(fair.primary().formula == "salt_292(sum(nn(A.hash)) OVER ()) AS token");
    CHECK(fair.primary().target == "108");
    REQUIRE(fair.primary().assertions.size() == 2);
    CHECK(fair.primary().assertions[0].kind == Assertion::Kind::count_eq);
    CHECK(fair.primary().assertions[1].kind == Assertion::Kind::list_eq);
    CHECK(fair.primary().assertions[1].literals.size() == 3);
    REQUIRE(fair.variants.size() == 1);
    CHECK(fair.variants[0].text == "an equivalent predicate on the same rows");
    CHECK(fair.variants[0].formula.empty());
    REQUIRE(fair.hints.size() == 1);
    CHECK(fair.hints[0].text.find("high earners") != std::string::npos);

    const TaskRecord& houston = records[1];
    REQUIRE(houston.control.has_value());
    CHECK(std::get<std::int64_t>(houston.control->value) == 1);
    CHECK(houston.control->instruction == "the first value of the employee_count column");

    const TaskRecord& riddle = records[4];
    CHECK_FALSE(riddle.is_episode);
    REQUIRE(riddle.control.has_value());
    CHECK(std::get<std::int64_t>(riddle.control->value) == 4);

    CHECK(records[5].primary().target == "exit");
}

TEST_CASE("string control values and negative indices parse") {
    std::string script =
        "## Exercise [100]\n### Statement\nPick.\nx = \"Research\" # the department name\n"
        "```sql\nSELECT dpt_name FROM department A\n"
        "-- Formula: salt_100((0.0) + sum(nn(A.hash)) OVER ()) AS token\n--> exit\n```\n"
        "assert col(\"dpt_name\")[-1] == \"Research\"\n";
    auto records = parse_adventure(script);
    REQUIRE(records.size() == 1);
    REQUIRE(records[0].control.has_value());
    CHECK(std::get<std::string>(records[0].control->value) == "Research");
    REQUIRE(records[0].primary().assertions.size() == 1);
    const Assertion& a = records[0].primary().assertions[0];
    CHECK(a.kind == Assertion::Kind::index_eq);
    CHECK(a.index == -1);
    CHECK(a.literals.at(0).canonical() == "\"Research\"");
}

TEST_CASE("conformity violations are reported with line numbers") {
    auto line_of = [](const std::string& script) {
        try {
            parse_adventure(script);
        } catch (const ConformityError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    std::string sol =
        "```sql\nSELECT 1 FROM employee A\n"
        "-- Formula: salt_100(sum(nn(A.hash)) OVER ()) AS token\n--> exit\n```\n";

    CHECK_THAT(line_of("## Episode [100]\n### Context\nOnly context.\n"),
               Catch::Matchers::ContainsSubstring("no statement"));
    CHECK_THAT(line_of("## Episode [100]\n" + sol),
               Catch::Matchers::ContainsSubstring("before the statement"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n"),
               Catch::Matchers::ContainsSubstring("no solution"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n### Context\nLate.\n" + sol),
               Catch::Matchers::ContainsSubstring("context must come right after"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n"
                       "```sql\n-- Variant\nSELECT 1\n```\n" + sol),
               Catch::Matchers::ContainsSubstring("variant before any solution"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n" + sol +
                       "```sql\n-- Hint: no\nSELECT 1 FROM employee A\n```\n" + sol),
               Catch::Matchers::ContainsSubstring("solutions must precede"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n" + sol +
                       "## Episode [100]\n### Statement\nGo.\n" + sol),
               Catch::Matchers::ContainsSubstring("duplicate task number"));
    CHECK_THAT(line_of("## Chapter [100]\n### Statement\nGo.\n" + sol),
               Catch::Matchers::ContainsSubstring("expected 'Episode' or 'Exercise'"));
    CHECK_THAT(line_of("## Episode [1]\n### Statement\nGo.\n" + sol),
               Catch::Matchers::ContainsSubstring("three digits"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n```sql\nSELECT 1\n"),
               Catch::Matchers::ContainsSubstring("unterminated"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n```sql\n```\n" + sol),
               Catch::Matchers::ContainsSubstring("empty query cell"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\nx = 1 # a\ny = 2 # b\n" + sol),
               Catch::Matchers::ContainsSubstring("only one control value"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\nx = oops # a\n" + sol),
               Catch::Matchers::ContainsSubstring("number or a quoted string"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n```python\nprint(1)\n```\n" + sol),
               Catch::Matchers::ContainsSubstring("only ```sql"));
    CHECK_THAT(line_of("stray text\n## Episode [100]\n### Statement\nGo.\n" + sol),
               Catch::Matchers::ContainsSubstring("unexpected text"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n"
                       "```sql\nSELECT 1 FROM employee A\n--> exit\n```\n"),
               Catch::Matchers::ContainsSubstring("needs a formula"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n"
                       "```sql\nSELECT 1 FROM employee A\n"
                       "-- Formula: salt_100(sum(nn(A.hash)) OVER ()) AS token\n```\n"),
               Catch::Matchers::ContainsSubstring("--> target"));
    CHECK_THAT(line_of("## Episode [100]\n### Statement\nGo.\n" + sol +
                       "assert col(\"x\") == oops\n"),
               Catch::Matchers::ContainsSubstring("literal"));
    CHECK_THAT(line_of("assert col(\"x\") == [1]\n"),
               Catch::Matchers::ContainsSubstring("without a preceding query"));
    CHECK_THAT(line_of(""), Catch::Matchers::ContainsSubstring("no task"));

    // errors carry the offending line number
    try {
        parse_adventure("## Episode [100]\n### Statement\nGo.\n### Oops\n" + sol);
        FAIL("expected a conformity error");
    } catch (const ConformityError& e) {
        CHECK(e.line() == 4);
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("line 4:"));
    }
}

TEST_CASE("building the sample game passes every check") {
    BuildResult result = build_game(kGameDir);
    INFO(result.report.summary());
    CHECK(result.ok());
    CHECK(result.report.checks.size() == 7);
    CHECK(result.attempts == 1);
    CHECK(result.row_counts.at("employee") == 8);
    CHECK(result.row_counts.at("works_on") == 16);

    for (const auto& task : result.records) {
        INFO("task " << task.number);
        CHECK(task.errors.empty());
        for (const auto& s : task.solutions) CHECK(s.token.has_value());
        for (const auto& h : task.hints) CHECK(h.token.has_value());
    }

    // the variant of 292 is row-equivalent to its solution: same token
    const TaskRecord& fair = result.records[0];
    REQUIRE(fair.variants[0].token.has_value());
    CHECK(fair.variants[0].token == fair.primary().token);

    // tokens are far above any literal task number
    for (const auto& task : result.records)
        CHECK(*task.primary().token >= (std::uint64_t{1} << 46) - 1);

    // one entry question, one success message per task, one hint message per hint
    int questions = 0, successes = 0, hints = 0;
    for (const auto& m : result.verify.messages) {
        if (m.kind == MessageRecord::Kind::question) ++questions;
        if (m.kind == MessageRecord::Kind::success) ++successes;
        if (m.kind == MessageRecord::Kind::hint) ++hints;
    }
    CHECK(questions == 1);
    CHECK(successes == 6);
    CHECK(hints == 3);

    // the activity map carries the color code
    CHECK_THAT(result.dot, Catch::Matchers::ContainsSubstring("\"292\" [style=filled, fillcolor=green]"));
    CHECK_THAT(result.dot, Catch::Matchers::ContainsSubstring("\"108\" [style=filled, fillcolor=red]"));
    CHECK_THAT(result.dot, Catch::Matchers::ContainsSubstring("shape=star"));
    CHECK_THAT(result.dot, Catch::Matchers::ContainsSubstring("shape=point"));
    CHECK_THAT(result.dot, Catch::Matchers::ContainsSubstring("\"292\" -> \"108\""));
    CHECK_THAT(result.dot, Catch::Matchers::ContainsSubstring("-> \"exit_501\""));
}

TEST_CASE("a full play-through works against the written artifacts") {
    TempDir out;
    BuildResult result = build_game(kGameDir, out.path.string());
    REQUIRE(result.ok());
    CHECK(fs::exists(out.path / "game.db"));
    CHECK(fs::exists(out.path / "game.dump.sql"));
    CHECK(fs::exists(out.path / "manifest.json"));
    CHECK(fs::exists(out.path / "activity_map.dot"));

    Database db = open_game((out.path / "game.db").string(),
                            (out.path / "manifest.json").string(),
                            result.config.fallback_text);

    auto decrypt = [&](const std::string& token) {
        Table t = db.query("SELECT decrypt(" + token + ")");
        REQUIRE(t.rows.size() == 1);
        return t.rows[0][0].as_text();
    };

    // the entry question opens with the literal task number
    std::string question = decrypt("292");
    CHECK(question.find(style_markdown("**25000**")) != std::string::npos);
    CHECK(question.find("employees who earn") != std::string::npos);
    CHECK(question.find("salt_292") != std::string::npos);

    // a wrong query falls back
    CHECK(decrypt("12345") == result.config.fallback_text);

    // the gold query produces a constant token whose message presents task 108
    Table gold = db.query(
        "SELECT emp_name, salary, salt_292(sum(nn(A.hash)) OVER ()) AS token "
        "FROM employee A WHERE salary = 25000");
    REQUIRE(gold.rows.size() == 3);
    std::string token = gold.rows[0][2].canonical();
    for (const auto& row : gold.rows) CHECK(row[2].canonical() == token);
    std::string success = decrypt(token);
    CHECK(success.find("Congratulations") != std::string::npos);
    CHECK(success.find("Correction:") != std::string::npos);
    CHECK(success.find("salt_108") != std::string::npos);

    // the hint query unlocks the hint text
    Table wrong = db.query(
        "SELECT emp_name, salary, salt_292(sum(nn(A.hash)) OVER ()) AS token "
        "FROM employee A WHERE salary > 25000");
    REQUIRE(!wrong.rows.empty());
    std::string hint = decrypt(wrong.rows[0][2].canonical());
    CHECK(hint.find("25000") != std::string::npos);
    CHECK(hint != result.config.fallback_text);

    // the two-pass exit episode: substitute the control value by hand
    Table final_step = db.query(
        "SELECT emp_name, salt_501((55000) + sum(nn(A.hash)) OVER ()) AS token "
        "FROM employee A WHERE salary = (SELECT max(salary) FROM employee)");
    REQUIRE(final_step.rows.size() == 1);
    std::string epilogue = decrypt(final_step.rows[0][1].canonical());
    CHECK(epilogue.find("end of this adventure") != std::string::npos);
}

TEST_CASE("rebuilding with the same seed is byte-identical, a new seed is not") {
    TempDir a, b, c;
    build_game(kGameDir, a.path.string());
    build_game(kGameDir, b.path.string());
    CHECK(read_all(a.path / "game.dump.sql") == read_all(b.path / "game.dump.sql"));
    CHECK(read_all(a.path / "manifest.json") == read_all(b.path / "manifest.json"));

    BuildResult other = build_game(kGameDir, c.path.string(), 999);
    CHECK(other.ok());
    CHECK(read_all(a.path / "game.dump.sql") != read_all(c.path / "game.dump.sql"));
    BuildResult base = build_game(kGameDir);
    CHECK(base.records[0].primary().token != other.records[0].primary().token);
}

TEST_CASE("graph assembly rejects dangling targets and cycles") {
    std::string dangling =
        "## Episode [100]\n### Statement\nGo.\n"
        "```sql\nSELECT 1 FROM employee A\n"
        "-- Formula: salt_100(sum(nn(A.hash)) OVER ()) AS token\n--> 999\n```\n";
    auto records = parse_adventure(dangling);
    CHECK_THROWS_MATCHES(build_graph(records), GraphError,
                         Catch::Matchers::Message("task 100 targets unknown task '999'"));

    std::string cyclic =
        "## Episode [100]\n### Statement\nGo.\n"
        "```sql\nSELECT 1 FROM employee A\n"
        "-- Formula: salt_100(sum(nn(A.hash)) OVER ()) AS token\n--> 200\n```\n"
        "## Episode [200]\n### Statement\nBack.\n"
        "```sql\nSELECT 2 FROM employee A\n"
        "-- Formula: salt_200(sum(nn(A.hash)) OVER ()) AS token\n--> 100\n```\n";
    CHECK_THROWS_AS(build_graph(parse_adventure(cyclic)), GraphError);

    // a graph failure downgrades the whole build to a conformity failure
    ScriptedGame bad(dangling);
    BuildResult result = build_game(bad.dir.path.string());
    CHECK_FALSE(result.ok());
    CHECK(result.report.failed_numbers() == std::vector<int>{3});
}

TEST_CASE("script corruption surfaces as the matching check failure") {
    std::string base = sample_script();

    SECTION("a failing SQL cell fails the validity check") {
        std::string broken = base;
        auto pos = broken.find("WHERE salary = 25000\n");
        REQUIRE(pos != std::string::npos);
        broken.replace(pos, 20, "WHERE no_such_column = 25000");
        ScriptedGame game(broken);
        BuildResult result = build_game(game.dir.path.string());
        CHECK(result.report.failed_numbers() == std::vector<int>{2});
    }

    SECTION("a failing assertion also fails the validity check") {
        std::string broken = base;
        auto pos = broken.find("assert len(col(\"emp_name\")) == 3");
        REQUIRE(pos != std::string::npos);
        broken.replace(pos, 32, "assert len(col(\"emp_name\")) == 4");
        ScriptedGame game(broken);
        BuildResult result = build_game(game.dir.path.string());
        CHECK(result.report.failed_numbers() == std::vector<int>{2});
    }

    SECTION("a misordered script fails the conformity check") {
        std::string broken = base;
        auto pos = broken.find("### Context");
        REQUIRE(pos != std::string::npos);
        broken.replace(pos, 11, "### Chapter");
        ScriptedGame game(broken);
        BuildResult result = build_game(game.dir.path.string());
        CHECK(result.report.failed_numbers() == std::vector<int>{3});
    }

    SECTION("a foreign salt fails the consistency check") {
        std::string broken = base;
        auto pos = broken.find("salt_316(");
        REQUIRE(pos != std::string::npos);
        broken.replace(pos, 9, "salt_317(");
        ScriptedGame game(broken);
        BuildResult result = build_game(game.dir.path.string());
        CHECK(result.report.failed_numbers() == std::vector<int>{4});
    }

    SECTION("an empty-result hint fails the usefulness check") {
        std::string broken = base;
        auto pos = broken.find("WHERE salary > 25000");
        REQUIRE(pos != std::string::npos);
        broken.replace(pos, 20, "WHERE salary > 9e9  ");
        ScriptedGame game(broken);
        BuildResult result = build_game(game.dir.path.string());
        CHECK(result.report.failed_numbers() == std::vector<int>{5});
    }

    SECTION("two cells sharing a token fail the uniqueness check") {
        // make the 205 hint identical to its solution
        std::string broken = base;
        auto pos = broken.find("WHERE B.prj_id = 30");
        REQUIRE(pos != std::string::npos);
        broken.replace(pos, 19, "WHERE B.hours = 5 AND B.prj_id = 30");
        ScriptedGame game(broken);
        BuildResult result = build_game(game.dir.path.string());
        CHECK(result.report.failed_numbers() == std::vector<int>{6});
    }
}

TEST_CASE("task presentation styles the header and control instruction") {
    auto records = parse_adventure(sample_script());
    TaskGraph graph;  // presentation does not need the graph
    const TaskRecord& houston = records[1];
    std::string text = detail::present_task(houston);
    CHECK(text.find("Formula: salt_108((0.0) + bit_xor(sum(nn(A.hash) + nn(B.hash))) OVER ()) "
                    "AS token") != std::string::npos);
    CHECK(text.find("replace (0.0) with the first value of the employee_count column") !=
          std::string::npos);
    // the bracketed number keeps three digits and the header is bold
    std::string entry = detail::present_task(records[0]);
    CHECK(entry.find(style_markdown("**Episode [292]. A fair wage**")) != std::string::npos);
    (void)graph;
}
