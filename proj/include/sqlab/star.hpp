#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "db.hpp"
#include "formula.hpp"
#include "parser.hpp"

namespace sqlab {

/// Column lists per table, in schema order (hash column included).
using SchemaColumns = std::map<std::string, std::vector<std::string>>;

class StarError : public std::runtime_error {
public:
    explicit StarError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when the injected token column is not constant over the result.
class NonConstantToken : public std::runtime_error {
public:
    NonConstantToken() : std::runtime_error("non-constant token column: the formula does not fit this query") {}
};

namespace detail {

/// Rebuilds the FROM clause from the AST, rewriting every RIGHT JOIN
/// `X RIGHT JOIN T ON c` into `T LEFT JOIN (X) ON c`, which the embedded
/// engine accepts and which is semantically identical.
inline std::string emit_from_clause(const QueryAST& ast) {
    auto render_ref = [](const TableRef& t) {
        std::string out = t.table;
        if (!t.is_derived && t.alias == t.table) return out;
        return out + " " + t.alias;
    };
    if (ast.from.empty()) return "";
    std::string acc = render_ref(ast.from[0]);
    bool acc_single = true;  // a lone parenthesized table hides its alias in the engine
    for (std::size_t i = 1; i < ast.from.size(); ++i) {
        const TableRef& t = ast.from[i];
        std::string cond;
        if (t.join == JoinKind::inner || t.join == JoinKind::left || t.join == JoinKind::right)
            cond = t.join_using ? " USING " + t.condition : " ON " + t.condition;
        switch (t.join) {
        case JoinKind::comma:
            acc += ", " + render_ref(t);
            break;
        case JoinKind::inner:
            acc += " JOIN " + render_ref(t) + cond;
            break;
        case JoinKind::left:
            acc += " LEFT JOIN " + render_ref(t) + cond;
            break;
        case JoinKind::right:
            if (acc_single)
                acc = render_ref(t) + " LEFT JOIN " + acc + cond;
            else
                acc = render_ref(t) + " LEFT JOIN (" + acc + ")" + cond;
            break;
        case JoinKind::none:
            throw StarError("misplaced table reference");
        }
        acc_single = false;
    }
    return acc;
}

/// Reassembles a full statement from AST parts with a replaced select list.
inline std::string emit_select(const QueryAST& ast, const std::vector<std::string>& select_items,
                               bool keep_distinct, bool keep_post_ops) {
    std::string sql = "SELECT ";
    if (keep_distinct && ast.distinct) sql += "DISTINCT ";
    for (std::size_t i = 0; i < select_items.size(); ++i) {
        if (i) sql += ", ";
        sql += select_items[i];
    }
    if (!ast.from.empty()) sql += " FROM " + emit_from_clause(ast);
    if (!ast.where_text.empty()) sql += " WHERE " + ast.where_text;
    if (!ast.group_by_text.empty()) sql += " GROUP BY " + ast.group_by_text;
    if (!ast.having_text.empty()) sql += " HAVING " + ast.having_text;
    if (keep_post_ops) {
        if (!ast.order_by_text.empty()) sql += " ORDER BY " + ast.order_by_text;
        if (!ast.limit_text.empty()) sql += " LIMIT " + ast.limit_text;
    }
    return sql;
}

/// The aliases a formula of dimension n covers, in canonical projection order:
/// by underlying table name, ties broken by alias.
inline std::vector<const TableRef*> projected_tables(const QueryAST& ast,
                                                     const std::vector<std::string>& aliases) {
    std::vector<const TableRef*> out;
    for (const auto& alias : aliases) {
        const TableRef* ref = ast.resolve_alias(alias);
        if (!ref) throw StarError("formula alias '" + alias + "' is not in the FROM clause");
        out.push_back(ref);
    }
    std::sort(out.begin(), out.end(), [](const TableRef* a, const TableRef* b) {
        if (a->table != b->table) return a->table < b->table;
        return a->alias < b->alias;
    });
    return out;
}

}  // namespace detail

/// Starred form of a query: the diagnostic table whose equality (up to row
/// order and all-NULL columns) the token certifies.
///
/// Basic family: SELECT A.*, B.*, ... with DISTINCT / ORDER BY / LIMIT
/// dropped. Aggregation family: per-column order-canonicalized group lists,
/// with GROUP BY and HAVING retained.
inline std::string star(const QueryAST& ast, const FormulaClass& fc,
                        const std::vector<std::string>& aliases, const SchemaColumns& schema) {
    fc.validate();
    if (fc.class_id == FormulaClassId::expr_only)
        throw StarError("expression-only queries have no starred form");
    if (ast.kind != StatementKind::select) throw StarError("only SELECT statements can be starred");
    auto tables = detail::projected_tables(ast, aliases);
    std::vector<std::string> items;
    if (class_is_agg(fc.class_id)) {
        for (const TableRef* t : tables) {
            auto it = schema.find(t->table);
            if (it == schema.end())
                throw StarError("unknown table '" + t->table + "' in starred projection");
            for (const auto& col : it->second)
                items.push_back("sqlab_sorted_list(" + t->alias + "." + col + ") AS " + t->alias +
                                "_" + col);
        }
    } else {
        if (!ast.group_by_text.empty() || !ast.having_text.empty())
            throw StarError("basic formula on a grouped query");
        for (const TableRef* t : tables) items.push_back(t->alias + ".*");
    }
    bool keep_grouping = class_is_agg(fc.class_id);
    QueryAST trimmed = ast;
    if (!keep_grouping) {
        trimmed.group_by_text.clear();
        trimmed.having_text.clear();
    }
    return detail::emit_select(trimmed, items, /*keep_distinct=*/false, /*keep_post_ops=*/false);
}

/// Appends the formula to the select list, preserving the query's own bytes.
inline std::string inject_formula(const QueryAST& ast, const std::string& formula_text) {
    if (ast.kind != StatementKind::select)
        throw StarError("formulas can only be injected into SELECT statements");
    std::string out = ast.raw;
    std::size_t at = ast.select_list_end;
    // keep trailing whitespace after the last item on the other side of the comma
    while (at > 0 && std::isspace(static_cast<unsigned char>(out[at - 1]))) --at;
    out.insert(at, ", " + formula_text);
    return out;
}

struct ExecuteOutcome {
    Table table;
    std::optional<std::uint64_t> token;  // empty table -> no token
};

/// Runs a formula-bearing query, checks that the token column is constant and
/// strips it from the visible result.
inline ExecuteOutcome execute_token(Database& db, const std::string& sql_with_formula) {
    std::string text = sql_with_formula;
    {
        QueryAST ast = parse_select(sql_with_formula);
        if (ast.kind == StatementKind::select && ast.has_right_join())
            text = detail::emit_select(ast, ast.select_items, true, true);
    }
    Table result = db.query(text);
    ExecuteOutcome out;
    auto token_col = result.column_index("token");
    if (!token_col) {
        out.table = std::move(result);
        return out;
    }
    for (const auto& row : result.rows) {
        const Value& cell = row[*token_col];
        if (!cell.is_int()) throw NonConstantToken();
        std::uint64_t t = from_engine_int(cell.as_int());
        if (out.token && *out.token != t) throw NonConstantToken();
        out.token = t;
    }
    out.table.columns = result.columns;
    out.table.columns.erase(out.table.columns.begin() + static_cast<long>(*token_col));
    for (auto& row : result.rows) {
        row.erase(row.begin() + static_cast<long>(*token_col));
        out.table.rows.push_back(std::move(row));
    }
    return out;
}

/// A starred table in comparable form: all-NULL columns dropped, rows sorted.
struct CanonicalTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // canonical cell renderings

    bool operator==(const CanonicalTable& other) const { return rows == other.rows; }
};

inline CanonicalTable canonicalize_starred(const Table& table) {
    std::vector<bool> keep(table.columns.size(), false);
    for (const auto& row : table.rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            if (!row[i].is_null()) keep[i] = true;
    CanonicalTable out;
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        if (keep[i]) out.columns.push_back(table.columns[i]);
    for (const auto& row : table.rows) {
        std::vector<std::string> cells;
        for (std::size_t i = 0; i < row.size(); ++i)
            if (keep[i]) cells.push_back(row[i].canonical());
        out.rows.push_back(std::move(cells));
    }
    std::sort(out.rows.begin(), out.rows.end());
    return out;
}

/// Do two queries produce the same starred table? This is the ground truth
/// the token equality is measured against.
inline bool starred_match(Database& db, const QueryAST& q1, const QueryAST& q2,
                          const FormulaClass& fc, const std::vector<std::string>& aliases,
                          const SchemaColumns& schema) {
    Table t1 = db.query(star(q1, fc, aliases, schema));
    Table t2 = db.query(star(q2, fc, aliases, schema));
    return canonicalize_starred(t1) == canonicalize_starred(t2);
}

}  // namespace sqlab
