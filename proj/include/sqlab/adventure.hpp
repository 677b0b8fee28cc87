#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "builder.hpp"
#include "star.hpp"

namespace sqlab {

/// A task-script violation of the expected section order or syntax.
class ConformityError : public std::runtime_error {
public:
    ConformityError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class GraphError : public std::runtime_error {
public:
    explicit GraphError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Markdown-to-Unicode styling (bold, italic, monospace spans)
// ---------------------------------------------------------------------------

namespace detail {

inline void append_codepoint(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xc0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xe0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
        out += static_cast<char>(0xf0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    }
}

enum class Style { bold, italic, mono };

inline void append_styled_char(std::string& out, char c, Style style) {
    char32_t cp = 0;
    if (c >= 'A' && c <= 'Z') {
        switch (style) {
        case Style::bold: cp = 0x1d400 + static_cast<char32_t>(c - 'A'); break;
        case Style::italic: cp = 0x1d434 + static_cast<char32_t>(c - 'A'); break;
        case Style::mono: cp = 0x1d670 + static_cast<char32_t>(c - 'A'); break;
        }
    } else if (c >= 'a' && c <= 'z') {
        switch (style) {
        case Style::bold: cp = 0x1d41a + static_cast<char32_t>(c - 'a'); break;
        case Style::italic:
            // the italic h has a legacy codepoint (Planck constant)
            cp = c == 'h' ? 0x210e : 0x1d44e + static_cast<char32_t>(c - 'a');
            break;
        case Style::mono: cp = 0x1d68a + static_cast<char32_t>(c - 'a'); break;
        }
    } else if (c >= '0' && c <= '9') {
        switch (style) {
        case Style::bold: cp = 0x1d7ce + static_cast<char32_t>(c - '0'); break;
        case Style::italic: cp = 0; break;  // no italic digits
        case Style::mono: cp = 0x1d7f6 + static_cast<char32_t>(c - '0'); break;
        }
    }
    if (cp)
        append_codepoint(out, cp);
    else
        out += c;
}

}  // namespace detail

/// Converts **bold**, *italic* and `code` spans to Unicode mathematical
/// characters, so plain-text administration tools still show the emphasis.
inline std::string style_markdown(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    auto emit_span = [&](std::size_t start, std::size_t stop, detail::Style style) {
        for (std::size_t k = start; k < stop; ++k) detail::append_styled_char(out, text[k], style);
    };
    while (i < text.size()) {
        if (text.compare(i, 2, "**") == 0) {
            std::size_t end = text.find("**", i + 2);
            if (end != std::string_view::npos) {
                emit_span(i + 2, end, detail::Style::bold);
                i = end + 2;
                continue;
            }
        }
        if (text[i] == '*' && (i + 1 < text.size() && text[i + 1] != '*')) {
            std::size_t end = text.find('*', i + 1);
            if (end != std::string_view::npos) {
                emit_span(i + 1, end, detail::Style::italic);
                i = end + 1;
                continue;
            }
        }
        if (text[i] == '`') {
            std::size_t end = text.find('`', i + 1);
            if (end != std::string_view::npos) {
                emit_span(i + 1, end, detail::Style::mono);
                i = end + 1;
                continue;
            }
        }
        out += text[i++];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Task records
// ---------------------------------------------------------------------------

/// Result-column assertion of the script's predicate mini-language.
struct Assertion {
    enum class Kind { list_eq, index_eq, count_eq };
    Kind kind = Kind::list_eq;
    std::string column;
    long index = 0;                     // for index_eq; negative counts from the end
    std::vector<Value> literals;        // expected values (one for index_eq/count_eq)
    int line = 0;
    std::string raw;
};

/// One query cell of a task: a solution, a variant or a hint.
struct QuerySpec {
    enum class Role { solution, variant, hint };
    Role role = Role::solution;
    std::string sql;
    std::string formula;   // empty = inherit the primary solution's formula
    std::string target;    // solutions: "ddd" or "exit"; empty = inherit
    std::string text;      // hint text or variant comment
    std::vector<Assertion> assertions;
    int line = 0;

    // filled by execute_records
    std::optional<std::uint64_t> token;
    Table result;
    bool errored = false;
};

struct TaskRecord {
    int number = 0;
    bool is_episode = true;
    std::string title;
    std::string context;
    std::string statement;
    std::optional<ControlBinding> control;
    std::vector<QuerySpec> solutions;
    std::vector<QuerySpec> variants;
    std::vector<QuerySpec> hints;
    int line = 0;

    // filled by execute_records
    std::vector<std::string> errors;

    const QuerySpec& primary() const { return solutions.at(0); }
};

// ---------------------------------------------------------------------------
// Script parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim_copy(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.compare(0, prefix.size(), prefix) == 0;
}

/// Parses one literal of the assertion mini-language: integer, real, or a
/// double-quoted string.
inline Value parse_literal(std::string_view text, int line) {
    std::string t = trim_copy(text);
    if (t.empty()) throw ConformityError(line, "empty literal in assertion");
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"')
            throw ConformityError(line, "unterminated string literal in assertion");
        return Value(t.substr(1, t.size() - 2));
    }
    try {
        std::size_t used = 0;
        if (t.find('.') == std::string::npos && t.find('e') == std::string::npos) {
            std::int64_t v = std::stoll(t, &used);
            if (used == t.size()) return Value(v);
        } else {
            double v = std::stod(t, &used);
            if (used == t.size()) return Value(v);
        }
    } catch (const std::exception&) {
    }
    throw ConformityError(line, "cannot parse literal '" + t + "' in assertion");
}

inline Assertion parse_assertion(const std::string& line_text, int line) {
    Assertion a;
    a.line = line;
    a.raw = trim_copy(line_text);
    std::string s = a.raw;
    auto expect_prefix = [&](std::string_view prefix) {
        if (!starts_with(s, prefix)) throw ConformityError(line, "malformed assertion: " + a.raw);
        s = trim_copy(s.substr(prefix.size()));
    };
    expect_prefix("assert");
    bool counted = false;
    if (starts_with(s, "len(")) {
        counted = true;
        s = trim_copy(s.substr(4));
    }
    expect_prefix("col(\"");
    std::size_t quote = s.find('"');
    if (quote == std::string::npos) throw ConformityError(line, "malformed assertion: " + a.raw);
    a.column = s.substr(0, quote);
    s = trim_copy(s.substr(quote + 1));
    expect_prefix(")");
    if (counted) {
        expect_prefix(")");
        a.kind = Assertion::Kind::count_eq;
    } else if (!s.empty() && s.front() == '[') {
        std::size_t close = s.find(']');
        if (close == std::string::npos) throw ConformityError(line, "malformed assertion: " + a.raw);
        try {
            a.index = std::stol(s.substr(1, close - 1));
        } catch (const std::exception&) {
            throw ConformityError(line, "malformed index in assertion: " + a.raw);
        }
        s = trim_copy(s.substr(close + 1));
        a.kind = Assertion::Kind::index_eq;
    } else {
        a.kind = Assertion::Kind::list_eq;
    }
    expect_prefix("==");
    if (a.kind == Assertion::Kind::list_eq) {
        if (s.empty() || s.front() != '[' || s.back() != ']')
            throw ConformityError(line, "expected a literal list in assertion: " + a.raw);
        std::string inner = s.substr(1, s.size() - 2);
        // split on top-level commas (strings may contain commas)
        std::string current;
        bool in_string = false;
        auto flush = [&] {
            if (!trim_copy(current).empty()) a.literals.push_back(parse_literal(current, line));
            current.clear();
        };
        for (char c : inner) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                flush();
                continue;
            }
            current += c;
        }
        flush();
    } else {
        a.literals.push_back(parse_literal(s, line));
    }
    return a;
}

inline ControlBinding parse_control_line(const std::string& line_text, int line) {
    std::size_t eq = line_text.find('=');
    std::size_t hashmark = line_text.find('#');
    if (eq == std::string::npos || hashmark == std::string::npos || hashmark < eq)
        throw ConformityError(line, "malformed control line: " + trim_copy(line_text));
    ControlBinding binding;
    binding.instruction = trim_copy(line_text.substr(hashmark + 1));
    std::string value = trim_copy(line_text.substr(eq + 1, hashmark - eq - 1));
    if (value.empty()) throw ConformityError(line, "missing control value");
    if (value.front() == '"' || value.front() == '\'') {
        if (value.size() < 2 || value.back() != value.front())
            throw ConformityError(line, "unterminated control string");
        binding.value = value.substr(1, value.size() - 2);
    } else {
        try {
            std::size_t used = 0;
            std::int64_t v = std::stoll(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            binding.value = v;
        } catch (const std::exception&) {
            throw ConformityError(line, "control value must be a number or a quoted string");
        }
    }
    return binding;
}

}  // namespace detail

/// Parses the plain-text adventure script into ordered task records,
/// enforcing the section order: header, context?, statement, control?,
/// solutions, variants*, hints*.
inline std::vector<TaskRecord> parse_adventure(const std::string& text) {
    std::vector<TaskRecord> records;
    enum class Stage { none, context, statement, control, solutions, variants, hints };
    Stage stage = Stage::none;
    TaskRecord* task = nullptr;
    QuerySpec* last_query = nullptr;
    std::string* text_sink = nullptr;

    std::istringstream in(text);
    std::string line;
    int line_number = 0;
    auto next_line = [&](std::string& out) {
        if (!std::getline(in, out)) return false;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        ++line_number;
        return true;
    };

    auto finalize_task = [&](int at_line) {
        if (!task) return;
        if (task->statement.empty())
            throw ConformityError(at_line, "task " + std::to_string(task->number) +
                                               " has no statement section");
        if (task->solutions.empty())
            throw ConformityError(at_line, "task " + std::to_string(task->number) +
                                               " has no solution query");
        if (task->primary().formula.empty())
            throw ConformityError(task->primary().line, "the primary solution needs a formula");
        if (task->primary().target.empty())
            throw ConformityError(task->primary().line,
                                  "the primary solution needs a --> target");
    };

    while (next_line(line)) {
        std::string trimmed = detail::trim_copy(line);
        if (detail::starts_with(trimmed, "## ")) {
            finalize_task(line_number);
            records.emplace_back();
            task = &records.back();
            last_query = nullptr;
            text_sink = nullptr;
            task->line = line_number;
            std::string rest = detail::trim_copy(trimmed.substr(3));
            if (detail::starts_with(rest, "Episode"))
                task->is_episode = true;
            else if (detail::starts_with(rest, "Exercise"))
                task->is_episode = false;
            else
                throw ConformityError(line_number, "expected 'Episode' or 'Exercise' after '##'");
            std::size_t open = rest.find('['), close = rest.find(']');
            if (open == std::string::npos || close == std::string::npos || close < open + 2)
                throw ConformityError(line_number, "task header needs a [ddd] number");
            std::string digits = rest.substr(open + 1, close - open - 1);
            if (digits.size() != 3 ||
                !std::all_of(digits.begin(), digits.end(),
                             [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
                throw ConformityError(line_number, "task number must have three digits");
            task->number = std::stoi(digits);
            task->title = detail::trim_copy(rest.substr(close + 1));
            if (!task->title.empty() && task->title.front() == '.')
                task->title = detail::trim_copy(task->title.substr(1));
            stage = Stage::none;
            continue;
        }
        if (detail::starts_with(trimmed, "### ")) {
            if (!task) throw ConformityError(line_number, "section outside of any task");
            std::string name = detail::trim_copy(trimmed.substr(4));
            if (name == "Context") {
                if (stage != Stage::none)
                    throw ConformityError(line_number, "context must come right after the header");
                stage = Stage::context;
                text_sink = &task->context;
            } else if (name == "Statement") {
                if (stage != Stage::none && stage != Stage::context)
                    throw ConformityError(line_number,
                                          "statement must come before any query cell");
                stage = Stage::statement;
                text_sink = &task->statement;
            } else {
                throw ConformityError(line_number, "unknown section '" + name + "'");
            }
            continue;
        }
        if (detail::starts_with(trimmed, "```")) {
            if (detail::trim_copy(trimmed.substr(3)) != "sql")
                throw ConformityError(line_number, "only ```sql fences are supported");
            if (!task) throw ConformityError(line_number, "query cell outside of any task");
            if (task->statement.empty())
                throw ConformityError(line_number, "query cell before the statement section");
            QuerySpec spec;
            spec.line = line_number + 1;
            bool closed = false;
            std::string body_line;
            while (next_line(body_line)) {
                std::string t = detail::trim_copy(body_line);
                if (t == "```") {
                    closed = true;
                    break;
                }
                if (detail::starts_with(t, "-- Formula:")) {
                    spec.formula = detail::trim_copy(t.substr(11));
                } else if (detail::starts_with(t, "-->")) {
                    spec.target = detail::trim_copy(t.substr(3));
                } else if (detail::starts_with(t, "-- Hint:")) {
                    spec.role = QuerySpec::Role::hint;
                    spec.text = detail::trim_copy(t.substr(8));
                } else if (detail::starts_with(t, "-- Variant")) {
                    spec.role = QuerySpec::Role::variant;
                    std::size_t colon = t.find(':');
                    if (colon != std::string::npos)
                        spec.text = detail::trim_copy(t.substr(colon + 1));
                } else {
                    if (!spec.sql.empty()) spec.sql += "\n";
                    spec.sql += body_line;
                }
            }
            if (!closed) throw ConformityError(line_number, "unterminated ```sql fence");
            spec.sql = detail::trim_copy(spec.sql);
            if (spec.sql.empty()) throw ConformityError(spec.line, "empty query cell");
            switch (spec.role) {
            case QuerySpec::Role::solution:
                if (stage == Stage::variants || stage == Stage::hints)
                    throw ConformityError(spec.line,
                                          "solutions must precede variants and hints");
                stage = Stage::solutions;
                task->solutions.push_back(std::move(spec));
                last_query = &task->solutions.back();
                break;
            case QuerySpec::Role::variant:
                if (stage == Stage::hints)
                    throw ConformityError(spec.line, "variants must precede hints");
                if (task->solutions.empty())
                    throw ConformityError(spec.line, "variant before any solution");
                stage = Stage::variants;
                task->variants.push_back(std::move(spec));
                last_query = &task->variants.back();
                break;
            case QuerySpec::Role::hint:
                if (task->solutions.empty())
                    throw ConformityError(spec.line, "hint before any solution");
                stage = Stage::hints;
                task->hints.push_back(std::move(spec));
                last_query = &task->hints.back();
                break;
            }
            text_sink = nullptr;
            continue;
        }
        if (detail::starts_with(trimmed, "assert ")) {
            if (!last_query)
                throw ConformityError(line_number, "assertion without a preceding query cell");
            last_query->assertions.push_back(detail::parse_assertion(trimmed, line_number));
            continue;
        }
        // control line: <ident> = <value> # <instruction>
        if (task && !trimmed.empty() && (stage == Stage::statement || stage == Stage::control) &&
            trimmed.find('=') != std::string::npos && trimmed.find('#') != std::string::npos &&
            std::isalpha(static_cast<unsigned char>(trimmed.front())) &&
            trimmed.find("==") == std::string::npos) {
            if (task->control)
                throw ConformityError(line_number, "a task may carry only one control value");
            task->control = detail::parse_control_line(trimmed, line_number);
            stage = Stage::control;
            text_sink = nullptr;
            continue;
        }
        if (text_sink) {
            if (!text_sink->empty()) *text_sink += "\n";
            *text_sink += line;
            continue;
        }
        if (!trimmed.empty() && !detail::starts_with(trimmed, "# "))
            throw ConformityError(line_number, "unexpected text: " + trimmed);
    }
    finalize_task(line_number);
    if (records.empty()) throw ConformityError(1, "the script defines no task");
    std::set<int> numbers;
    for (const auto& r : records)
        if (!numbers.insert(r.number).second)
            throw ConformityError(r.line, "duplicate task number " + std::to_string(r.number));
    for (auto& r : records) {
        r.context = detail::trim_copy(r.context);
        r.statement = detail::trim_copy(r.statement);
    }
    return records;
}

// ---------------------------------------------------------------------------
// Record execution
// ---------------------------------------------------------------------------

namespace detail {

inline std::string canonical_literal(const Value& v) { return v.canonical(); }

inline std::optional<std::string> check_assertion(const Assertion& a, const Table& table) {
    auto col = table.column_index(a.column);
    if (!col) return "assertion references unknown column '" + a.column + "'";
    std::vector<std::string> actual;
    for (const auto& row : table.rows) actual.push_back(row[*col].canonical());
    switch (a.kind) {
    case Assertion::Kind::count_eq: {
        std::string expected = a.literals.at(0).canonical();
        if (std::to_string(actual.size()) != expected)
            return "column '" + a.column + "' has " + std::to_string(actual.size()) +
                   " values, expected " + expected;
        return std::nullopt;
    }
    case Assertion::Kind::index_eq: {
        long n = static_cast<long>(actual.size());
        long idx = a.index < 0 ? n + a.index : a.index;
        if (idx < 0 || idx >= n)
            return "index " + std::to_string(a.index) + " out of range for column '" + a.column +
                   "' (" + std::to_string(n) + " values)";
        std::string expected = a.literals.at(0).canonical();
        if (actual[static_cast<std::size_t>(idx)] != expected)
            return "column '" + a.column + "'[" + std::to_string(a.index) + "] is " +
                   actual[static_cast<std::size_t>(idx)] + ", expected " + expected;
        return std::nullopt;
    }
    case Assertion::Kind::list_eq: {
        std::vector<std::string> expected;
        for (const auto& v : a.literals) expected.push_back(v.canonical());
        if (actual != expected) {
            std::string got = "[";
            for (std::size_t i = 0; i < actual.size(); ++i)
                got += (i ? "," : "") + actual[i];
            return "column '" + a.column + "' is " + got + "], expected " + a.raw;
        }
        return std::nullopt;
    }
    }
    return "unreachable";
}

}  // namespace detail

/// Executes every query of every record against the built database:
/// substitutes control values, collects tokens, evaluates assertions.
/// Failures are recorded on the record (for build check 2), never thrown.
inline void execute_records(Database& db, std::vector<TaskRecord>& records,
                            const HashConfig& cfg = {}) {
    for (auto& task : records) {
        std::string primary_formula =
            task.solutions.empty() ? std::string() : task.primary().formula;
        std::string primary_target =
            task.solutions.empty() ? std::string() : task.primary().target;
        auto run = [&](QuerySpec& spec, const char* label, std::size_t ordinal) {
            std::string where = std::string(label) + " " + std::to_string(ordinal + 1);
            std::string formula = spec.formula.empty() ? primary_formula : spec.formula;
            try {
                QueryAST ast = parse_select(spec.sql);
                if (ast.kind != StatementKind::select) {
                    // DML task: apply the change, then fingerprint the whole table
                    if (formula.empty())
                        throw ConformityError(spec.line, "a DML cell needs a formula");
                    if (!spec.assertions.empty())
                        throw ConformityError(spec.assertions[0].line,
                                              "assertions are not supported on DML cells");
                    ParsedFormula parsed = parse_formula(formula);
                    spec.token = dml_post_token(db, spec.sql, ast.dml_table, parsed.cls,
                                                SaltSpec{parsed.salt_number, 0});
                    // dml_post_token salts with Y = 0; redo with the real salt below
                    // is unnecessary because execute_token already used the registered
                    // salt function. (The SaltSpec argument only names the function.)
                    return;
                }
                std::string sql = spec.sql;
                if (!formula.empty()) {
                    std::string substituted = formula;
                    if (formula.find(kControlPlaceholder) != std::string::npos && task.control)
                        substituted = substitute_control(formula, *task.control, cfg);
                    sql = inject_formula(ast, substituted);
                }
                ExecuteOutcome out = execute_token(db, sql);
                spec.token = out.token;
                spec.result = std::move(out.table);
                for (const auto& a : spec.assertions)
                    if (auto failure = detail::check_assertion(a, spec.result))
                        task.errors.push_back(where + ", line " + std::to_string(a.line) + ": " +
                                              *failure);
            } catch (const std::exception& e) {
                spec.errored = true;
                task.errors.push_back(where + ", line " + std::to_string(spec.line) + ": " +
                                      e.what());
            }
        };
        for (std::size_t i = 0; i < task.solutions.size(); ++i)
            run(task.solutions[i], "solution", i);
        for (std::size_t i = 0; i < task.variants.size(); ++i) run(task.variants[i], "variant", i);
        for (std::size_t i = 0; i < task.hints.size(); ++i) run(task.hints[i], "hint", i);
    }
}

/// Derives the check-battery input from executed records.
inline VerifyInput make_verify_input(const std::vector<TaskRecord>& records) {
    VerifyInput input;
    for (const auto& task : records) {
        TaskCheckInfo info;
        info.number = task.number;
        info.errors = task.errors;
        std::string primary_formula =
            task.solutions.empty() ? std::string() : task.primary().formula;
        auto to_check = [&](const QuerySpec& spec, const char* label, std::size_t ordinal) {
            QueryCheckInfo q;
            q.label = std::string(label) + " " + std::to_string(ordinal + 1);
            q.token = spec.token;
            q.errored = spec.errored;
            std::string formula = spec.formula.empty() ? primary_formula : spec.formula;
            if (!formula.empty()) {
                try {
                    q.salt_number = parse_formula(formula).salt_number;
                } catch (const std::exception&) {
                    // malformed formulas surface as check-2 execution errors
                }
            }
            return q;
        };
        for (std::size_t i = 0; i < task.solutions.size(); ++i)
            info.solutions.push_back(to_check(task.solutions[i], "solution", i));
        for (std::size_t i = 0; i < task.variants.size(); ++i)
            info.variants.push_back(to_check(task.variants[i], "variant", i));
        for (std::size_t i = 0; i < task.hints.size(); ++i)
            info.hints.push_back(to_check(task.hints[i], "hint", i));
        input.tasks.push_back(std::move(info));
    }
    return input;
}

// ---------------------------------------------------------------------------
// Task graph
// ---------------------------------------------------------------------------

struct TaskGraph {
    enum class NodeKind { entry, intermediate, hint, exit_star };
    struct Node {
        std::string id;
        NodeKind kind;
        int task_number = 0;  // 0 for hint/exit leaves
    };
    struct Arc {
        std::string from;
        std::string to;
        std::optional<std::uint64_t> token;
    };
    std::vector<Node> nodes;
    std::vector<Arc> arcs;
};

/// Assembles the multigraph: task nodes, hint leaves, exit stars; arcs
/// labeled by tokens. Detects dangling targets, cycles and unreachable tasks.
inline TaskGraph build_graph(const std::vector<TaskRecord>& records) {
    TaskGraph graph;
    std::map<int, const TaskRecord*> by_number;
    for (const auto& r : records) by_number[r.number] = &r;

    std::map<int, std::vector<int>> successors;
    std::set<int> targeted;
    for (const auto& task : records) {
        std::string primary_target = task.primary().target;
        for (std::size_t i = 0; i < task.solutions.size(); ++i) {
            const QuerySpec& s = task.solutions[i];
            std::string target = s.target.empty() ? primary_target : s.target;
            if (target == "exit") {
                std::string id = "exit_" + std::to_string(task.number);
                graph.nodes.push_back({id, TaskGraph::NodeKind::exit_star, 0});
                graph.arcs.push_back({std::to_string(task.number), id, s.token});
            } else {
                int n = -1;
                try {
                    n = std::stoi(target);
                } catch (const std::exception&) {
                }
                if (!by_number.count(n))
                    throw GraphError("task " + std::to_string(task.number) +
                                     " targets unknown task '" + target + "'");
                successors[task.number].push_back(n);
                targeted.insert(n);
                graph.arcs.push_back({std::to_string(task.number), std::to_string(n), s.token});
            }
        }
        for (std::size_t i = 0; i < task.hints.size(); ++i) {
            std::string id = "hint_" + std::to_string(task.number) + "_" + std::to_string(i + 1);
            graph.nodes.push_back({id, TaskGraph::NodeKind::hint, 0});
            graph.arcs.push_back({std::to_string(task.number), id, task.hints[i].token});
        }
    }

    // cycle detection over the task-to-task arcs
    std::map<int, int> state;  // 0 unseen, 1 in progress, 2 done
    std::vector<int> stack;
    for (const auto& [n, _] : by_number) stack.push_back(n);
    std::function<void(int)> visit = [&](int n) {
        if (state[n] == 2) return;
        if (state[n] == 1) throw GraphError("cycle through task " + std::to_string(n));
        state[n] = 1;
        for (int next : successors[n]) visit(next);
        state[n] = 2;
    };
    for (int n : stack) visit(n);

    // entries, reachability
    std::set<int> entries;
    for (const auto& r : records)
        if (!targeted.count(r.number)) entries.insert(r.number);
    if (entries.empty()) throw GraphError("the adventure has no entry point");
    std::set<int> reachable = entries;
    std::vector<int> frontier(entries.begin(), entries.end());
    while (!frontier.empty()) {
        int n = frontier.back();
        frontier.pop_back();
        for (int next : successors[n])
            if (reachable.insert(next).second) frontier.push_back(next);
    }
    for (const auto& r : records)
        if (!reachable.count(r.number))
            throw GraphError("task " + std::to_string(r.number) +
                             " is unreachable from any entry point");

    for (const auto& r : records)
        graph.nodes.push_back({std::to_string(r.number),
                               entries.count(r.number) ? TaskGraph::NodeKind::entry
                                                       : TaskGraph::NodeKind::intermediate,
                               r.number});
    std::sort(graph.nodes.begin(), graph.nodes.end(),
              [](const TaskGraph::Node& a, const TaskGraph::Node& b) { return a.id < b.id; });
    return graph;
}

/// DOT rendering with the activity-map color code: green entries, red
/// intermediates, small blank hint nodes, yellow-star exits.
inline std::string export_map(const TaskGraph& graph) {
    std::string out = "digraph adventure {\n  rankdir=LR;\n  node [shape=circle];\n";
    for (const auto& node : graph.nodes) {
        out += "  \"" + node.id + "\" ";
        switch (node.kind) {
        case TaskGraph::NodeKind::entry:
            out += "[style=filled, fillcolor=green]";
            break;
        case TaskGraph::NodeKind::intermediate:
            out += "[style=filled, fillcolor=red]";
            break;
        case TaskGraph::NodeKind::hint:
            out += "[shape=point, label=\"\"]";
            break;
        case TaskGraph::NodeKind::exit_star:
            out += "[shape=star, style=filled, fillcolor=yellow, label=\"\"]";
            break;
        }
        out += ";\n";
    }
    for (const auto& arc : graph.arcs) {
        out += "  \"" + arc.from + "\" -> \"" + arc.to + "\"";
        if (arc.token) out += " [label=\"" + std::to_string(*arc.token) + "\"]";
        out += ";\n";
    }
    out += "}\n";
    return out;
}

// ---------------------------------------------------------------------------
// Message assembly
// ---------------------------------------------------------------------------

namespace detail {

/// The presentation of a task, as shown in its question or in the success
/// message of its predecessor.
inline std::string present_task(const TaskRecord& task) {
    std::string head = std::string(task.is_episode ? "Episode" : "Exercise") + " [" +
                       (task.number < 100 ? task.number < 10 ? "00" : "0" : "") +
                       std::to_string(task.number) + "]";
    if (!task.title.empty()) head += ". " + task.title;
    std::string out = style_markdown("**" + head + "**") + "\n\n";
    if (!task.context.empty()) out += style_markdown(task.context) + "\n\n";
    out += style_markdown(task.statement) + "\n\n";
    out += "Formula: " + task.primary().formula;
    if (task.control)
        out += "\n" + style_markdown("After the first pass, replace (0.0) with " +
                                     task.control->instruction + ".");
    return out;
}

inline std::string correction_of(const TaskRecord& task) {
    std::string out = "Correction:\n";
    for (const auto& s : task.solutions) out += s.sql + "\n";
    for (const auto& v : task.variants) {
        if (!v.text.empty()) out += "-- " + v.text + "\n";
        out += v.sql + "\n";
    }
    return out;
}

}  // namespace detail

/// Builds every feedback message: entry questions under their literal task
/// number, success messages (congratulation + previous correction + next
/// task) under the solution and variant tokens, and hints under their tokens.
inline std::vector<MessageRecord> assemble_messages(
    const std::vector<TaskRecord>& records, const TaskGraph& graph,
    const std::string& congratulation = "Congratulations, your answer is correct!",
    const std::string& completion = "You have reached the end of this adventure. Well done!") {
    std::map<int, const TaskRecord*> by_number;
    for (const auto& r : records) by_number[r.number] = &r;
    std::set<int> entries;
    for (const auto& node : graph.nodes)
        if (node.kind == TaskGraph::NodeKind::entry) entries.insert(node.task_number);

    std::vector<MessageRecord> messages;
    for (const auto& task : records) {
        if (entries.count(task.number))
            messages.push_back({task.number, MessageRecord::Kind::question,
                                detail::present_task(task),
                                {static_cast<std::uint64_t>(task.number)}});

        // group the success tokens by target so multigraph arcs share a message
        std::map<std::string, std::set<std::uint64_t>> tokens_by_target;
        std::string primary_target = task.primary().target;
        for (const auto& s : task.solutions)
            if (s.token) tokens_by_target[s.target.empty() ? primary_target : s.target].insert(*s.token);
        for (const auto& v : task.variants)
            if (v.token) tokens_by_target[primary_target].insert(*v.token);
        for (const auto& [target, tokens] : tokens_by_target) {
            std::string body = congratulation + "\n\n" + detail::correction_of(task) + "\n";
            if (target == "exit") {
                body += completion;
            } else {
                auto it = by_number.find(std::stoi(target));
                if (it == by_number.end()) continue;  // build_graph already rejected this
                body += detail::present_task(*it->second);
            }
            messages.push_back({task.number, MessageRecord::Kind::success, body,
                                {tokens.begin(), tokens.end()}});
        }

        for (const auto& hint : task.hints)
            if (hint.token)
                messages.push_back({task.number, MessageRecord::Kind::hint,
                                    style_markdown(hint.text.empty() ? "Not quite. Look again."
                                                                     : hint.text),
                                    {*hint.token}});
    }
    return messages;
}

}  // namespace sqlab
