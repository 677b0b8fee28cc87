#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "db.hpp"
#include "manifest.hpp"
#include "star.hpp"

namespace sqlab {

class BuildError : public std::runtime_error {
public:
    explicit BuildError(const std::string& what) : std::runtime_error(what) {}
};

struct ColumnSpec {
    std::string name;
    std::string type;
    bool not_null = false;
};

/// One core-dataset table as declared by the DDL.
struct TableSpec {
    std::string name;
    std::vector<ColumnSpec> columns;  // in schema order, hash included
    bool has_hash_column = false;

    std::vector<ColumnSpec> data_columns() const {
        std::vector<ColumnSpec> out;
        for (const auto& c : columns)
            if (c.name != "hash") out.push_back(c);
        return out;
    }
};

inline std::string quote_ident(const std::string& name) { return "\"" + name + "\""; }

/// Renders a value as an SQL literal (single quotes doubled for text).
inline std::string sql_literal(const Value& v) {
    if (v.is_null()) return "NULL";
    if (v.is_int()) return std::to_string(v.as_int());
    if (v.is_real()) return Value::render_real(v.as_real());
    std::string out = "'";
    for (char c : v.as_text()) {
        out += c;
        if (c == '\'') out += '\'';
    }
    out += '\'';
    return out;
}

/// Lists the user tables of the connection, in name order, excluding the
/// engine's own tables and the message table.
inline std::vector<TableSpec> introspect_tables(Database& db) {
    std::vector<TableSpec> specs;
    Table names = db.query(
        "SELECT name FROM sqlite_master WHERE type = 'table' "
        "AND name NOT LIKE 'sqlite_%' AND name NOT LIKE 'sqlab_%' ORDER BY name");
    for (const auto& row : names.rows) {
        TableSpec spec;
        spec.name = row[0].as_text();
        Table info = db.query("PRAGMA table_info(" + quote_ident(spec.name) + ")");
        for (const auto& col : info.rows) {
            ColumnSpec c;
            c.name = col[1].as_text();
            c.type = col[2].is_text() ? col[2].as_text() : "";
            c.not_null = col[3].as_int() != 0;
            if (c.name == "hash") spec.has_hash_column = true;
            spec.columns.push_back(std::move(c));
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

/// Executes the DDL, verifies that every table owns a hash column, and
/// installs the triggers that keep hashes current under any DML.
inline std::vector<TableSpec> load_schema(Database& db, const std::string& ddl) {
    // clean recreate: drop leftovers from a previous build on this connection
    for (const auto& spec : introspect_tables(db))
        db.exec("DROP TABLE IF EXISTS " + quote_ident(spec.name));
    db.exec("DROP TABLE IF EXISTS sqlab_msg");
    db.exec(ddl);
    std::vector<TableSpec> specs = introspect_tables(db);
    if (specs.empty()) throw BuildError("the schema defines no table");
    for (const auto& spec : specs) {
        if (!spec.has_hash_column)
            throw BuildError("table '" + spec.name + "' lacks the mandatory hash column");
        std::string args = "'" + spec.name + "'";
        std::string cols;
        for (const auto& c : spec.data_columns()) {
            args += ", NEW." + quote_ident(c.name);
            if (!cols.empty()) cols += ", ";
            cols += quote_ident(c.name);
        }
        std::string body = " BEGIN UPDATE " + quote_ident(spec.name) +
                           " SET hash = sqlab_row_hash(" + args +
                           ") WHERE rowid = NEW.rowid; END";
        db.exec("CREATE TRIGGER " + quote_ident("sqlab_hash_insert_" + spec.name) +
                " AFTER INSERT ON " + quote_ident(spec.name) + body);
        db.exec("CREATE TRIGGER " + quote_ident("sqlab_hash_update_" + spec.name) +
                " AFTER UPDATE OF " + cols + " ON " + quote_ident(spec.name) + body);
    }
    return specs;
}

namespace detail {

inline void bind_value(sqlite3_stmt* stmt, int idx, const Value& v) {
    if (v.is_null())
        sqlite3_bind_null(stmt, idx);
    else if (v.is_int())
        sqlite3_bind_int64(stmt, idx, v.as_int());
    else if (v.is_real())
        sqlite3_bind_double(stmt, idx, v.as_real());
    else
        sqlite3_bind_text(stmt, idx, v.as_text().c_str(), -1, SQLITE_TRANSIENT);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

}  // namespace detail

/// Loads dataset/<table>.tsv for every table. Tab separator, no quoting,
/// empty field = NULL; the triggers populate the hash column.
inline std::map<std::string, int> load_dataset(Database& db, const std::string& dir,
                                               const std::vector<TableSpec>& specs) {
    std::map<std::string, int> counts;
    for (const auto& spec : specs) {
        std::string path = dir + "/" + spec.name + ".tsv";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw BuildError("missing dataset file: " + path);
        auto data_cols = spec.data_columns();
        std::string sql = "INSERT INTO " + quote_ident(spec.name) + " (";
        std::string marks;
        for (std::size_t i = 0; i < data_cols.size(); ++i) {
            if (i) {
                sql += ", ";
                marks += ", ";
            }
            sql += quote_ident(data_cols[i].name);
            marks += "?";
        }
        sql += ") VALUES (" + marks + ")";
        sqlite3_stmt* stmt = nullptr;
        if (sqlite3_prepare_v2(db.handle(), sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK)
            throw BuildError(std::string("cannot prepare insert for ") + spec.name + ": " +
                             sqlite3_errmsg(db.handle()));
        std::string line;
        int line_number = 0;
        int inserted = 0;
        while (std::getline(in, line)) {
            ++line_number;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto cells = detail::split_tabs(line);
            if (cells.size() != data_cols.size()) {
                sqlite3_finalize(stmt);
                throw BuildError(path + ":" + std::to_string(line_number) + ": expected " +
                                 std::to_string(data_cols.size()) + " fields, got " +
                                 std::to_string(cells.size()));
            }
            for (std::size_t i = 0; i < cells.size(); ++i)
                detail::bind_value(stmt, static_cast<int>(i) + 1,
                                   parse_typed_cell(cells[i], data_cols[i].type));
            if (sqlite3_step(stmt) != SQLITE_DONE) {
                std::string msg = sqlite3_errmsg(db.handle());
                sqlite3_finalize(stmt);
                throw BuildError(path + ":" + std::to_string(line_number) + ": " + msg);
            }
            sqlite3_reset(stmt);
            ++inserted;
        }
        sqlite3_finalize(stmt);
        counts[spec.name] = inserted;
    }
    return counts;
}

/// A feedback message and the tokens under which it is encrypted.
struct MessageRecord {
    enum class Kind { question, success, hint };
    int task_number = 0;
    Kind kind = Kind::question;
    std::string body;
    std::vector<std::uint64_t> unlock_tokens;
};

/// Populates sqlab_msg: one envelope per (record, token) pair, rows shuffled
/// with the manifest seed so physical order leaks nothing.
inline void build_message_table(Database& db, const std::vector<MessageRecord>& records,
                                std::uint64_t seed) {
    db.exec("DROP TABLE IF EXISTS sqlab_msg");
    db.exec("CREATE TABLE sqlab_msg (msg TEXT NOT NULL)");
    NonceStream nonces(seed);
    std::vector<std::string> rows;
    for (const auto& record : records) {
        if (record.body.empty())
            throw BuildError("empty message body for task " + std::to_string(record.task_number));
        if (record.unlock_tokens.empty())
            throw BuildError("message of task " + std::to_string(record.task_number) +
                             " has no unlock token");
        for (std::uint64_t token : record.unlock_tokens)
            rows.push_back(hex_encode(encrypt_message(token, record.body, nonces).bytes()));
    }
    std::mt19937_64 shuffle_rng(seed ^ 0x5157414c42ULL);
    std::shuffle(rows.begin(), rows.end(), shuffle_rng);
    for (const auto& row : rows) db.exec("INSERT INTO sqlab_msg VALUES ('" + row + "')");
}

// ---------------------------------------------------------------------------
// Build checks
// ---------------------------------------------------------------------------

enum class CheckStatus { pass, fail, skipped };

struct CheckResult {
    int number = 0;
    std::string name;
    CheckStatus status = CheckStatus::skipped;
    std::vector<std::string> diagnostics;
};

struct CheckReport {
    std::vector<CheckResult> checks;

    bool ok() const {
        for (const auto& c : checks)
            if (c.status == CheckStatus::fail) return false;
        return true;
    }

    std::vector<int> failed_numbers() const {
        std::vector<int> out;
        for (const auto& c : checks)
            if (c.status == CheckStatus::fail) out.push_back(c.number);
        return out;
    }

    std::string summary() const {
        std::string out;
        for (const auto& c : checks) {
            out += "check " + std::to_string(c.number) + " (" + c.name + "): ";
            out += c.status == CheckStatus::pass ? "pass"
                   : c.status == CheckStatus::fail ? "FAIL"
                                                   : "skipped";
            out += "\n";
            for (const auto& d : c.diagnostics) out += "  - " + d + "\n";
        }
        return out;
    }
};

/// What one executed query contributes to the checks.
struct QueryCheckInfo {
    std::string label;                    // e.g. "solution 1", "hint 2"
    std::optional<int> salt_number;       // from the formula, when present
    std::optional<std::uint64_t> token;   // observed token, when any
    bool errored = false;                 // already reported by the validity check
};

struct TaskCheckInfo {
    int number = 0;
    std::vector<QueryCheckInfo> solutions;
    std::vector<QueryCheckInfo> variants;
    std::vector<QueryCheckInfo> hints;
    std::vector<std::string> errors;  // SQL or assertion failures, with coordinates
};

/// Everything the seven-check battery needs besides the database itself.
struct VerifyInput {
    std::vector<TaskCheckInfo> tasks;
    std::vector<MessageRecord> messages;
    bool conformity_ok = true;
    std::vector<std::string> conformity_errors;
};

namespace detail {

/// Outcome of the hash scan: diagnostics plus whether a re-salt could help
/// (true collisions between distinct rows, as opposed to duplicate rows).
struct HashScanResult {
    std::vector<std::string> problems;
    bool retryable_collision = false;
};

inline HashScanResult scan_hashes(Database& db, const HashConfig& cfg) {
    HashScanResult result;
    std::map<std::uint64_t, std::pair<std::string, std::string>> seen;  // hash -> (table, serialization)
    for (const auto& spec : introspect_tables(db)) {
        if (!spec.has_hash_column) continue;
        std::string cols;
        for (const auto& c : spec.data_columns()) {
            if (!cols.empty()) cols += ", ";
            cols += quote_ident(c.name);
        }
        Table rows = db.query("SELECT " + cols + ", hash FROM " + quote_ident(spec.name));
        for (const auto& row : rows.rows) {
            std::vector<Value> data(row.begin(), row.end() - 1);
            const Value& stored = row.back();
            std::string where = "table '" + spec.name + "', row " +
                                canonical_json_array(data);
            if (stored.is_null() || !stored.is_int()) {
                result.problems.push_back(where + ": hash is not an integer");
                continue;
            }
            std::uint64_t h = from_engine_int(stored.as_int());
            if (h > cfg.mask())
                result.problems.push_back(where + ": hash out of range");
            if (h == cfg.coalesce_constant) {
                result.problems.push_back(where + ": hash equals the coalesce constant");
                result.retryable_collision = true;
            }
            std::uint64_t expected = row_hash(spec.name, data, cfg);
            if (h != expected) {
                result.problems.push_back(where + ": stored hash is stale");
                continue;
            }
            std::string serialization = canonical_json_array(data, &spec.name);
            auto [it, inserted] = seen.emplace(h, std::make_pair(spec.name, serialization));
            if (!inserted) {
                if (it->second.second == serialization && it->second.first == spec.name) {
                    result.problems.push_back(where + ": duplicate row (same hash " +
                                              std::to_string(h) + ")");
                } else {
                    result.problems.push_back(where + ": hash collision with table '" +
                                              it->second.first + "'");
                    result.retryable_collision = true;
                }
            }
        }
    }
    return result;
}

/// Structural validation of every stored envelope (no tokens needed).
inline std::vector<std::string> scan_envelopes(Database& db) {
    std::vector<std::string> problems;
    Table rows = db.query("SELECT rowid, msg FROM sqlab_msg ORDER BY rowid");
    for (const auto& row : rows.rows) {
        std::string where = "sqlab_msg row " + row[0].canonical();
        if (!row[1].is_text()) {
            problems.push_back(where + ": not a text cell");
            continue;
        }
        auto raw = hex_decode(row[1].as_text());
        if (!raw) {
            problems.push_back(where + ": not valid hex");
            continue;
        }
        if (!CipherEnvelope::from_bytes(*raw))
            problems.push_back(where + ": envelope too short");
    }
    return problems;
}

}  // namespace detail

/// The standalone subset of the checks: what can be verified from the
/// database alone, without the task records.
inline CheckReport verify_database(Database& db, const HashConfig& cfg) {
    CheckReport report;
    CheckResult hashes{1, "hash uniqueness", CheckStatus::pass, {}};
    auto scan = detail::scan_hashes(db, cfg);
    hashes.diagnostics = scan.problems;
    if (!scan.problems.empty()) hashes.status = CheckStatus::fail;
    report.checks.push_back(std::move(hashes));
    CheckResult envelopes{7, "round-trip", CheckStatus::pass, {}};
    try {
        envelopes.diagnostics = detail::scan_envelopes(db);
    } catch (const EngineError& e) {
        envelopes.diagnostics.push_back(std::string("cannot read sqlab_msg: ") + e.what());
    }
    if (!envelopes.diagnostics.empty()) envelopes.status = CheckStatus::fail;
    report.checks.push_back(std::move(envelopes));
    return report;
}

/// The full seven-check battery over a finished build.
inline CheckReport verify_build(Database& db, const HashConfig& cfg, const VerifyInput& input) {
    CheckReport report;
    auto add = [&](int number, const char* name, std::vector<std::string> problems) {
        CheckResult c{number, name, problems.empty() ? CheckStatus::pass : CheckStatus::fail,
                      std::move(problems)};
        report.checks.push_back(std::move(c));
    };

    // 1. hash uniqueness
    add(1, "hash uniqueness", detail::scan_hashes(db, cfg).problems);

    // 2. validity: no cell raised an error
    std::vector<std::string> validity;
    for (const auto& task : input.tasks)
        for (const auto& e : task.errors)
            validity.push_back("task " + std::to_string(task.number) + ": " + e);
    add(2, "validity", std::move(validity));

    // 3. structural conformity
    add(3, "structural conformity",
        input.conformity_ok ? std::vector<std::string>{} : input.conformity_errors);

    // 4. salt/task consistency
    std::vector<std::string> consistency;
    for (const auto& task : input.tasks) {
        auto check_salt = [&](const QueryCheckInfo& q) {
            if (q.salt_number && *q.salt_number != task.number)
                consistency.push_back("task " + std::to_string(task.number) + ", " + q.label +
                                      ": formula uses " + salt_name(*q.salt_number));
        };
        for (const auto& q : task.solutions) check_salt(q);
        for (const auto& q : task.variants) check_salt(q);
        for (const auto& q : task.hints) check_salt(q);
    }
    add(4, "salt/task consistency", std::move(consistency));

    // 5. usefulness: solutions and hints must produce a token (variants exempt)
    std::vector<std::string> usefulness;
    for (const auto& task : input.tasks) {
        for (const auto& q : task.solutions)
            if (!q.token && !q.errored)
                usefulness.push_back("task " + std::to_string(task.number) + ", " + q.label +
                                     ": no token produced");
        for (const auto& q : task.hints)
            if (!q.token && !q.errored)
                usefulness.push_back("task " + std::to_string(task.number) + ", " + q.label +
                                     ": no token produced");
    }
    add(5, "usefulness", std::move(usefulness));

    // 6. token uniqueness: solution and hint tokens pairwise unique;
    //    variant tokens must not collide with hint tokens
    std::vector<std::string> uniqueness;
    std::map<std::uint64_t, std::string> strict_tokens;  // token -> owner description
    std::set<std::uint64_t> hint_tokens;
    for (const auto& task : input.tasks) {
        auto claim = [&](const QueryCheckInfo& q, bool is_hint) {
            if (!q.token) return;
            std::string owner = "task " + std::to_string(task.number) + ", " + q.label;
            auto [it, inserted] = strict_tokens.emplace(*q.token, owner);
            if (!inserted)
                uniqueness.push_back(owner + " produces the same token as " + it->second);
            if (is_hint) hint_tokens.insert(*q.token);
        };
        for (const auto& q : task.solutions) claim(q, false);
        for (const auto& q : task.hints) claim(q, true);
    }
    for (const auto& task : input.tasks)
        for (const auto& q : task.variants)
            if (q.token && hint_tokens.count(*q.token))
                uniqueness.push_back("task " + std::to_string(task.number) + ", " + q.label +
                                     ": variant token collides with a hint token");
    add(6, "token uniqueness", std::move(uniqueness));

    // 7. round-trip: every (message, token) pair decrypts from the stored table
    std::vector<std::string> roundtrip = detail::scan_envelopes(db);
    std::vector<CipherEnvelope> envelopes;
    try {
        Table rows = db.query("SELECT msg FROM sqlab_msg");
        for (const auto& row : rows.rows)
            if (row[0].is_text())
                if (auto raw = hex_decode(row[0].as_text()))
                    if (auto env = CipherEnvelope::from_bytes(*raw)) envelopes.push_back(*env);
    } catch (const EngineError& e) {
        roundtrip.push_back(std::string("cannot read sqlab_msg: ") + e.what());
    }
    for (const auto& record : input.messages) {
        for (std::uint64_t token : record.unlock_tokens) {
            bool found = false;
            for (const auto& env : envelopes) {
                auto text = decrypt_probe(token, env);
                if (text && *text == record.body) {
                    found = true;
                    break;
                }
            }
            if (!found)
                roundtrip.push_back("task " + std::to_string(record.task_number) +
                                    ": message does not decrypt under its token");
        }
    }
    add(7, "round-trip", std::move(roundtrip));
    return report;
}

// ---------------------------------------------------------------------------
// Dump emission and DML fingerprinting
// ---------------------------------------------------------------------------

/// Deterministic SQL dump: tables, then data in rowid order, then triggers
/// and indexes, so a replay needs no registered functions to load the data.
inline std::string emit_dump(Database& db) {
    std::string out = "-- deterministic dump\nBEGIN;\n";
    Table tables = db.query(
        "SELECT name, sql FROM sqlite_master WHERE type = 'table' "
        "AND name NOT LIKE 'sqlite_%' ORDER BY name");
    for (const auto& row : tables.rows) out += row[1].as_text() + ";\n";
    for (const auto& row : tables.rows) {
        std::string name = row[0].as_text();
        Table data = db.query("SELECT * FROM " + quote_ident(name) + " ORDER BY rowid");
        for (const auto& r : data.rows) {
            out += "INSERT INTO " + quote_ident(name) + " VALUES (";
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) out += ", ";
                out += sql_literal(r[i]);
            }
            out += ");\n";
        }
    }
    Table rest = db.query(
        "SELECT sql FROM sqlite_master WHERE type IN ('index', 'trigger', 'view') "
        "AND sql IS NOT NULL ORDER BY type, name");
    for (const auto& row : rest.rows) out += row[0].as_text() + ";\n";
    out += "COMMIT;\n";
    return out;
}

/// Runs a DML statement, then fingerprints the whole target table: the
/// triggers refresh the hashes first, so the token reflects the new state.
inline std::optional<std::uint64_t> dml_post_token(Database& db, const std::string& dml,
                                                   const std::string& table,
                                                   const FormulaClass& fc, const SaltSpec& salt) {
    db.exec(dml);
    std::string formula = render_formula(fc, salt, {"A"});
    ExecuteOutcome out = execute_token(db, "SELECT " + formula + " FROM " + table + " A");
    return out.token;
}

}  // namespace sqlab
