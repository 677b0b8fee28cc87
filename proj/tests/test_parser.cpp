#include <catch2/catch_amalgamated.hpp>

#include "sqlab/parser.hpp"

using namespace sqlab;

TEST_CASE("select list and distinct") {
    QueryAST q = parse_select("SELECT DISTINCT fname, lname FROM employee;");
    CHECK(q.kind == StatementKind::select);
    CHECK(q.distinct);
    CHECK(q.select_items == std::vector<std::string>{"fname", "lname"});
    REQUIRE(q.from.size() == 1);
    CHECK(q.from[0].table == "employee");
    CHECK(q.from[0].alias == "employee");

    QueryAST plain = parse_select("SELECT * FROM employee E");
    CHECK_FALSE(plain.distinct);
    CHECK(plain.from[0].alias == "E");
}

TEST_CASE("expression-only query has no FROM") {
    QueryAST q = parse_select("SELECT 1 + 1");
    CHECK(q.from.empty());
    CHECK(q.from_keyword_pos == std::string::npos);
    CHECK(q.select_items == std::vector<std::string>{"1 + 1"});
}

TEST_CASE("select items split only on top-level commas") {
    QueryAST q = parse_select("SELECT max(a, b), 'x,y', f(g(1,2)) FROM t");
    REQUIRE(q.select_items.size() == 3);
    CHECK(q.select_items[0] == "max(a, b)");
    CHECK(q.select_items[1] == "'x,y'");
    CHECK(q.select_items[2] == "f(g(1,2))");
}

TEST_CASE("join kinds and conditions") {
    QueryAST q = parse_select(
        "SELECT E.fname FROM employee E JOIN department D ON E.dno = D.dnumber "
        "LEFT JOIN project P ON D.dnumber = P.dnum "
        "RIGHT JOIN works_on W ON P.pnumber = W.pno, dependent X");
    REQUIRE(q.from.size() == 5);
    CHECK(q.from[0].join == JoinKind::none);
    CHECK(q.from[1].join == JoinKind::inner);
    CHECK(q.from[1].condition == "E.dno = D.dnumber");
    CHECK(q.from[2].join == JoinKind::left);
    CHECK(q.from[3].join == JoinKind::right);
    CHECK(q.from[3].condition == "P.pnumber = W.pno");
    CHECK(q.from[4].join == JoinKind::comma);
    CHECK(q.from[4].alias == "X");
    CHECK(q.has_right_join());
    CHECK(q.resolve_alias("W") == &q.from[3]);
    CHECK(q.resolve_alias("nope") == nullptr);
}

TEST_CASE("using joins and cross join") {
    QueryAST q = parse_select("SELECT * FROM a INNER JOIN b USING (id) CROSS JOIN c");
    REQUIRE(q.from.size() == 3);
    CHECK(q.from[1].join_using);
    CHECK(q.from[1].condition == "(id)");
    CHECK(q.from[2].join == JoinKind::comma);
}

TEST_CASE("derived tables stay opaque") {
    QueryAST q = parse_select(
        "SELECT s.total FROM (SELECT dno, sum(salary) AS total FROM employee GROUP BY dno) s");
    REQUIRE(q.from.size() == 1);
    CHECK(q.from[0].is_derived);
    CHECK(q.from[0].alias == "s");
    CHECK(q.from[0].table ==
          "(SELECT dno, sum(salary) AS total FROM employee GROUP BY dno)");
    CHECK_THROWS_AS(parse_select("SELECT * FROM (SELECT 1)"), ParseError);  // alias required
}

TEST_CASE("tail clauses are captured opaquely") {
    QueryAST q = parse_select(
        "SELECT dno, count(*) FROM employee WHERE salary > 30000 "
        "GROUP BY dno HAVING count(*) > 2 ORDER BY dno DESC LIMIT 3");
    CHECK(q.where_text == "salary > 30000");
    CHECK(q.group_by_text == "dno");
    CHECK(q.having_text == "count(*) > 2");
    CHECK(q.order_by_text == "dno DESC");
    CHECK(q.limit_text == "3");
}

TEST_CASE("keywords inside subqueries and strings are not clauses") {
    QueryAST q = parse_select(
        "SELECT name FROM t WHERE id IN (SELECT id FROM u GROUP BY id) AND tag = 'ORDER BY x'");
    CHECK(q.group_by_text.empty());
    CHECK(q.order_by_text.empty());
    CHECK(q.where_text ==
          "id IN (SELECT id FROM u GROUP BY id) AND tag = 'ORDER BY x'");
}

TEST_CASE("comments are skipped") {
    QueryAST q = parse_select("SELECT a -- trailing comment with FROM\nFROM t -- another\nWHERE a > 1");
    CHECK(q.select_items == std::vector<std::string>{"a"});
    CHECK(q.from[0].table == "t");
    CHECK(q.where_text == "a > 1");
}

TEST_CASE("DML statements are routed with their target table") {
    CHECK(parse_select("INSERT INTO project VALUES (1)").kind == StatementKind::insert);
    CHECK(parse_select("INSERT INTO project VALUES (1)").dml_table == "project");
    CHECK(parse_select("UPDATE employee SET salary = 0").kind == StatementKind::update);
    CHECK(parse_select("UPDATE employee SET salary = 0").dml_table == "employee");
    CHECK(parse_select("DELETE FROM works_on WHERE pno = 1").kind == StatementKind::del);
    CHECK(parse_select("DELETE FROM works_on WHERE pno = 1").dml_table == "works_on");
}

TEST_CASE("unsupported sublanguages are rejected with a clear error") {
    CHECK_THROWS_AS(parse_select("CREATE TABLE t (a INT)"), UnsupportedConstruct);
    CHECK_THROWS_AS(parse_select("DROP TABLE t"), UnsupportedConstruct);
    CHECK_THROWS_AS(parse_select("PRAGMA table_info(t)"), UnsupportedConstruct);
    CHECK_THROWS_AS(parse_select("SELECT * FROM a NATURAL JOIN b"), UnsupportedConstruct);
    CHECK_THROWS_AS(parse_select("SELECT * FROM a FULL JOIN b ON 1"), UnsupportedConstruct);
}

TEST_CASE("syntax errors carry a position") {
    try {
        parse_select("SELECT FROM t");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_select("SELECT a FROM t JOIN u"), ParseError);          // missing ON
    CHECK_THROWS_AS(parse_select("SELECT a FROM t t1, u t1"), ParseError);        // duplicate alias
    CHECK_THROWS_AS(parse_select("SELECT a FROM t WHERE (b = 1"), ParseError);    // unbalanced
}

TEST_CASE("offsets support byte-preserving injection") {
    std::string sql = "SELECT  a ,  b   FROM t WHERE a > 1";
    QueryAST q = parse_select(sql);
    CHECK(q.raw == sql);
    CHECK(q.raw.compare(q.from_keyword_pos, 4, "FROM") == 0);
    // select_list_end points at or before FROM, after the last item
    CHECK(q.select_list_end <= q.from_keyword_pos);
    CHECK(q.raw.substr(0, q.select_list_end).find('b') != std::string::npos);
}
