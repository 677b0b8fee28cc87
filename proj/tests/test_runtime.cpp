#include <catch2/catch_amalgamated.hpp>

#include "sqlab/db.hpp"

using namespace sqlab;

namespace {

RuntimeConfig test_config() {
    RuntimeConfig config;
    config.salt_y[42] = 0x0badc0ffeeULL;
    config.salt_y[108] = 0x123456789ULL;
    return config;
}

}  // namespace

TEST_CASE("database wrapper basics") {
    Database db;
    db.exec("CREATE TABLE t (a INT, b TEXT)");
    db.exec("INSERT INTO t VALUES (1, 'x'), (2, NULL)");
    Table result = db.query("SELECT a, b FROM t ORDER BY a");
    REQUIRE(result.columns == std::vector<std::string>{"a", "b"});
    REQUIRE(result.rows.size() == 2);
    CHECK(result.rows[0][0].as_int() == 1);
    CHECK(result.rows[0][1].as_text() == "x");
    CHECK(result.rows[1][1].is_null());
    CHECK(result.column_index("b") == 1);
    CHECK_FALSE(result.column_index("missing").has_value());
    CHECK_THROWS_AS(db.query("SELECT * FROM nope"), EngineError);
    CHECK_THROWS_AS(db.exec("CREATE BOGUS"), EngineError);
}

TEST_CASE("runtime functions agree with the reference implementations") {
    Database db;
    RuntimeConfig config = test_config();
    install_runtime(db, config);

    SECTION("nn") {
        CHECK(db.query("SELECT nn(NULL)").rows[0][0].as_int() == 42);
        CHECK(db.query("SELECT nn(7)").rows[0][0].as_int() == 7);
    }

    SECTION("string_hash") {
        CHECK(from_engine_int(db.query("SELECT string_hash('abc')").rows[0][0].as_int()) ==
              string_hash("abc", config.hash));
        CHECK(from_engine_int(db.query("SELECT string_hash('YYYY-MM-DD')").rows[0][0].as_int()) ==
              51420711421ULL);
        CHECK(db.query("SELECT string_hash(NULL)").rows[0][0].is_null());
    }

    SECTION("salt functions per task") {
        SaltSpec s42{42, config.salt_y[42]};
        CHECK(from_engine_int(db.query("SELECT salt_042(100)").rows[0][0].as_int()) ==
              salt_apply(s42, std::uint64_t{100}, config.hash));
        CHECK(from_engine_int(db.query("SELECT salt_042(NULL)").rows[0][0].as_int()) ==
              salt_apply(s42, std::nullopt, config.hash));
        CHECK(from_engine_int(db.query("SELECT salt_108(0)").rows[0][0].as_int()) ==
              config.salt_y[108]);
        CHECK_THROWS_AS(db.query("SELECT salt_999(1)"), EngineError);  // not in the manifest
    }

    SECTION("row hash matches the oracle byte for byte") {
        std::vector<Value> dept{Value("Research"), Value(std::int64_t{5}), Value("333445555"),
                                Value("1988-05-22")};
        std::uint64_t expected = row_hash("department", dept, config.hash);
        CHECK(expected == 451565520611ULL);
        Table r = db.query(
            "SELECT sqlab_row_hash('department', 'Research', 5, '333445555', '1988-05-22')");
        CHECK(from_engine_int(r.rows[0][0].as_int()) == expected);
        // NULL and real columns participate in the serialization
        std::vector<Value> with_null{Value(std::int64_t{1}), Value::null(), Value(2.5)};
        CHECK(from_engine_int(
                  db.query("SELECT sqlab_row_hash('t', 1, NULL, 2.5)").rows[0][0].as_int()) ==
              row_hash("t", with_null, config.hash));
    }
}

TEST_CASE("combining window functions") {
    Database db;
    install_runtime(db, test_config());
    db.exec("CREATE TABLE v (x INT)");
    db.exec("INSERT INTO v VALUES (5), (3), (NULL), (6)");

    SECTION("bit_xor as aggregate and window") {
        CHECK(from_engine_int(db.query("SELECT bit_xor(x) FROM v").rows[0][0].as_int()) ==
              (5 ^ 3 ^ 6));
        Table w = db.query("SELECT bit_xor(x) OVER () FROM v");
        REQUIRE(w.rows.size() == 4);
        for (const auto& row : w.rows)
            CHECK(from_engine_int(row[0].as_int()) == (5 ^ 3 ^ 6));
    }

    SECTION("checksum_agg matches the reference mix") {
        auto expected = *agg_eval(AggFn::checksum_agg, {5, 3, 6});
        CHECK(from_engine_int(db.query("SELECT checksum_agg(x) FROM v").rows[0][0].as_int()) ==
              expected);
        Table w = db.query("SELECT checksum_agg(x) OVER () FROM v");
        for (const auto& row : w.rows) CHECK(from_engine_int(row[0].as_int()) == expected);
    }

    SECTION("all NULL input yields NULL like the built-ins") {
        db.exec("CREATE TABLE nulls (x INT)");
        db.exec("INSERT INTO nulls VALUES (NULL), (NULL)");
        CHECK(db.query("SELECT bit_xor(x) FROM nulls").rows[0][0].is_null());
        CHECK(db.query("SELECT checksum_agg(x) FROM nulls").rows[0][0].is_null());
        CHECK(db.query("SELECT bit_xor(x) FROM nulls WHERE 0").rows[0][0].is_null());
    }

    SECTION("windowed with moving frames uses the inverse") {
        Table w = db.query(
            "SELECT bit_xor(x) OVER (ORDER BY rowid ROWS BETWEEN 1 PRECEDING AND CURRENT ROW) "
            "FROM v");
        REQUIRE(w.rows.size() == 4);
        CHECK(from_engine_int(w.rows[0][0].as_int()) == 5);
        CHECK(from_engine_int(w.rows[1][0].as_int()) == (5 ^ 3));
        CHECK(from_engine_int(w.rows[2][0].as_int()) == 3);  // NULL skipped
        CHECK(from_engine_int(w.rows[3][0].as_int()) == 6);
    }
}

TEST_CASE("sorted list aggregate canonicalizes order and keeps NULLs") {
    Database db;
    install_runtime(db, test_config());
    db.exec("CREATE TABLE s (g INT, x TEXT)");
    db.exec("INSERT INTO s VALUES (1,'b'), (1,'a'), (1,NULL), (2,'z')");
    Table r = db.query("SELECT g, sqlab_sorted_list(x) FROM s GROUP BY g ORDER BY g");
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0][1].as_text() == "[\"a\",\"b\",null]");
    CHECK(r.rows[1][1].as_text() == "[\"z\"]");
    // order-insensitive: reversed insertion gives the same list
    db.exec("CREATE TABLE s2 (x TEXT)");
    db.exec("INSERT INTO s2 VALUES (NULL), ('a'), ('b')");
    CHECK(db.query("SELECT sqlab_sorted_list(x) FROM s2").rows[0][0].as_text() ==
          "[\"a\",\"b\",null]");
    CHECK(db.query("SELECT sqlab_sorted_list(x) FROM s2 WHERE 0").rows[0][0].as_text() == "[]");
}

TEST_CASE("decrypt function probes the message table") {
    Database db;
    RuntimeConfig config = test_config();
    install_runtime(db, config);
    db.exec("CREATE TABLE sqlab_msg (msg TEXT)");
    NonceStream nonces(7);
    auto env1 = encrypt_message(1111, "first message", nonces);
    auto env2 = encrypt_message(2222, "second message", nonces);
    db.exec("INSERT INTO sqlab_msg VALUES ('" + hex_encode(env1.bytes()) + "'), ('" +
            hex_encode(env2.bytes()) + "')");
    CHECK(db.query("SELECT decrypt(1111)").rows[0][0].as_text() == "first message");
    CHECK(db.query("SELECT decrypt(2222)").rows[0][0].as_text() == "second message");
    CHECK(db.query("SELECT decrypt(3333)").rows[0][0].as_text() == config.fallback_text);
}

TEST_CASE("full token formula runs inside the engine") {
    Database db;
    RuntimeConfig config = test_config();
    install_runtime(db, config);
    db.exec("CREATE TABLE emp (name TEXT, dept INT, hash BIGINT)");
    db.exec("INSERT INTO emp VALUES ('a', 1, 100), ('b', 1, 200), ('c', 2, 400)");
    SaltSpec salt{42, config.salt_y[42]};

    SECTION("basic formula equals the reference oracle") {
        Table r = db.query("SELECT name, salt_042(sum(nn(E.hash)) OVER ()) AS token FROM emp E");
        FormulaClass fc{FormulaClassId::basic, 1, AggFn::sum, std::nullopt};
        std::uint64_t expected = reference_token(fc, salt, {{{100}, {200}, {400}}});
        for (const auto& row : r.rows) CHECK(from_engine_int(row[1].as_int()) == expected);
    }

    SECTION("aggregation formula folds per group") {
        Table r = db.query(
            "SELECT dept, count(*), salt_042(bit_xor(sum(nn(E.hash))) OVER ()) AS token "
            "FROM emp E GROUP BY dept");
        FormulaClass fc{FormulaClassId::agg, 1, AggFn::bit_xor, AggFn::sum};
        std::uint64_t expected = reference_token(fc, salt, {{{100}, {200}}, {{400}}});
        REQUIRE(r.rows.size() == 2);
        for (const auto& row : r.rows) CHECK(from_engine_int(row[2].as_int()) == expected);
    }

    SECTION("empty result produces no token row") {
        Table r = db.query(
            "SELECT name, salt_042(sum(nn(E.hash)) OVER ()) AS token FROM emp E WHERE dept = 9");
        CHECK(r.rows.empty());
    }

    SECTION("NULL hashes from an outer join coalesce through nn") {
        db.exec("CREATE TABLE side (dept INT, hash BIGINT)");
        db.exec("INSERT INTO side VALUES (1, 7000)");
        Table r = db.query(
            "SELECT E.name, salt_042(sum(nn(E.hash) + nn(S.hash)) OVER ()) AS token "
            "FROM emp E LEFT JOIN side S ON E.dept = S.dept");
        FormulaClass fc{FormulaClassId::basic, 2, AggFn::sum, std::nullopt};
        std::uint64_t expected = reference_token(
            fc, salt, {{{100, 7000}, {200, 7000}, {std::uint64_t{400}, std::nullopt}}});
        for (const auto& row : r.rows) CHECK(from_engine_int(row[1].as_int()) == expected);
    }
}
