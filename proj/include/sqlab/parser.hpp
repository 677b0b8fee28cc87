#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sqlab {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " (at offset " + std::to_string(position) + ")"),
          position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

class UnsupportedConstruct : public std::runtime_error {
public:
    explicit UnsupportedConstruct(const std::string& what) : std::runtime_error(what) {}
};

enum class JoinKind { none, inner, left, right, comma };

struct TableRef {
    std::string table;      // table name, or full "(...)" text for a derived table
    std::string alias;      // effective alias (defaults to the table name)
    bool is_derived = false;
    JoinKind join = JoinKind::none;
    bool join_using = false;
    std::string condition;  // ON expression or USING column list, opaque
};

enum class StatementKind { select, insert, update, del };

/// AST of the supported single-SELECT subset. Nested subqueries stay opaque.
struct QueryAST {
    std::string raw;
    StatementKind kind = StatementKind::select;
    std::string dml_table;  // for DML statements

    bool distinct = false;
    std::vector<std::string> select_items;
    std::vector<TableRef> from;
    std::string where_text;     // without the WHERE keyword
    std::string group_by_text;  // without GROUP BY
    std::string having_text;
    std::string order_by_text;
    std::string limit_text;

    std::size_t from_keyword_pos = std::string::npos;  // offset of top-level FROM in raw
    std::size_t select_list_end = 0;                   // offset right after the select list

    const TableRef* resolve_alias(std::string_view alias) const {
        for (const auto& t : from)
            if (t.alias == alias) return &t;
        return nullptr;
    }

    bool has_right_join() const {
        for (const auto& t : from)
            if (t.join == JoinKind::right) return true;
        return false;
    }
};

namespace sqltext {

inline bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

/// Scanner over SQL text that understands quotes, parens and -- comments.
class Scanner {
public:
    explicit Scanner(std::string_view text) : text_(text) {}

    std::size_t pos = 0;

    bool eof() const { return pos >= text_.size(); }
    char peek() const { return text_[pos]; }
    std::string_view text() const { return text_; }

    void skip_ws() {
        while (pos < text_.size()) {
            char c = text_[pos];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else if (c == '-' && pos + 1 < text_.size() && text_[pos + 1] == '-') {
                while (pos < text_.size() && text_[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    /// Case-insensitive keyword match at the current position (word-bounded).
    bool at_keyword(std::string_view kw) const {
        if (pos + kw.size() > text_.size()) return false;
        for (std::size_t i = 0; i < kw.size(); ++i)
            if (std::toupper(static_cast<unsigned char>(text_[pos + i])) != kw[i]) return false;
        std::size_t end = pos + kw.size();
        if (end < text_.size() && is_ident_char(text_[end])) return false;
        if (pos > 0 && is_ident_char(text_[pos - 1])) return false;
        return true;
    }

    bool take_keyword(std::string_view kw) {
        skip_ws();
        if (!at_keyword(kw)) return false;
        pos += kw.size();
        return true;
    }

    std::string take_identifier() {
        skip_ws();
        std::size_t start = pos;
        if (pos < text_.size() && (text_[pos] == '"' || text_[pos] == '`')) {
            char quote = text_[pos++];
            while (pos < text_.size() && text_[pos] != quote) ++pos;
            if (pos < text_.size()) ++pos;
            return std::string(text_.substr(start + 1, pos - start - 2));
        }
        while (pos < text_.size() && is_ident_char(text_[pos])) ++pos;
        return std::string(text_.substr(start, pos - start));
    }

    /// Consumes a balanced parenthesized group, returning it with parens.
    std::string take_paren_group() {
        skip_ws();
        if (eof() || peek() != '(') throw ParseError("expected '('", pos);
        std::size_t start = pos;
        int depth = 0;
        while (pos < text_.size()) {
            char c = text_[pos];
            if (c == '\'' || c == '"') skip_string();
            else {
                if (c == '(') ++depth;
                if (c == ')') {
                    --depth;
                    if (depth == 0) {
                        ++pos;
                        return std::string(text_.substr(start, pos - start));
                    }
                }
                ++pos;
            }
        }
        throw ParseError("unbalanced parentheses", start);
    }

    void skip_string() {
        char quote = text_[pos++];
        while (pos < text_.size()) {
            if (text_[pos] == quote) {
                // doubled quote escapes itself
                if (pos + 1 < text_.size() && text_[pos + 1] == quote) pos += 2;
                else { ++pos; return; }
            } else {
                ++pos;
            }
        }
    }

    /// Finds the next top-level (paren-depth 0) occurrence of any keyword in
    /// `kws`, starting at `from`. Returns npos when absent.
    static std::size_t find_top_level_keyword(std::string_view text, std::size_t from,
                                              const std::vector<std::string_view>& kws,
                                              std::string_view* which = nullptr) {
        int depth = 0;
        Scanner s(text);
        s.pos = from;
        while (s.pos < text.size()) {
            char c = text[s.pos];
            if (c == '\'' || c == '"') { s.skip_string(); continue; }
            if (c == '-' && s.pos + 1 < text.size() && text[s.pos + 1] == '-') {
                while (s.pos < text.size() && text[s.pos] != '\n') ++s.pos;
                continue;
            }
            if (c == '(') { ++depth; ++s.pos; continue; }
            if (c == ')') { --depth; ++s.pos; continue; }
            if (depth == 0) {
                for (auto kw : kws) {
                    if (s.at_keyword(kw)) {
                        if (which) *which = kw;
                        return s.pos;
                    }
                }
            }
            ++s.pos;
        }
        return std::string::npos;
    }

    /// Splits a text on top-level commas.
    static std::vector<std::string> split_top_level_commas(std::string_view text) {
        std::vector<std::string> out;
        int depth = 0;
        std::size_t start = 0;
        Scanner s(text);
        while (s.pos < text.size()) {
            char c = text[s.pos];
            if (c == '\'' || c == '"') { s.skip_string(); continue; }
            if (c == '(') ++depth;
            if (c == ')') --depth;
            if (c == ',' && depth == 0) {
                out.push_back(trim(text.substr(start, s.pos - start)));
                start = s.pos + 1;
            }
            ++s.pos;
        }
        out.push_back(trim(text.substr(start)));
        return out;
    }

    static std::string trim(std::string_view sv) {
        std::size_t b = 0, e = sv.size();
        while (b < e && std::isspace(static_cast<unsigned char>(sv[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(sv[e - 1]))) --e;
        return std::string(sv.substr(b, e - b));
    }

    /// Removes -- comments (outside string literals), collapsing to a space.
    static std::string strip_line_comments(std::string_view text) {
        std::string out;
        Scanner s(text);
        while (s.pos < text.size()) {
            char c = text[s.pos];
            if (c == '\'' || c == '"') {
                std::size_t start = s.pos;
                s.skip_string();
                out.append(text.substr(start, s.pos - start));
            } else if (c == '-' && s.pos + 1 < text.size() && text[s.pos + 1] == '-') {
                while (s.pos < text.size() && text[s.pos] != '\n') ++s.pos;
                out += ' ';
            } else {
                out += c;
                ++s.pos;
            }
        }
        return trim(out);
    }

    /// Paren balance over a whole statement; quotes and comments are honored.
    static void check_balanced(std::string_view text) {
        int depth = 0;
        Scanner s(text);
        while (s.pos < text.size()) {
            char c = text[s.pos];
            if (c == '\'' || c == '"') { s.skip_string(); continue; }
            if (c == '-' && s.pos + 1 < text.size() && text[s.pos + 1] == '-') {
                while (s.pos < text.size() && text[s.pos] != '\n') ++s.pos;
                continue;
            }
            if (c == '(') ++depth;
            if (c == ')' && --depth < 0) throw ParseError("unbalanced ')'", s.pos);
            ++s.pos;
        }
        if (depth != 0) throw ParseError("unbalanced '('", text.size());
    }

private:
    std::string_view text_;
};

inline std::string upper(std::string_view sv) {
    std::string out(sv);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

static const std::vector<std::string_view> kReservedAfterTable = {
    "JOIN",  "INNER",  "LEFT",  "RIGHT", "CROSS", "FULL",  "NATURAL", "ON", "USING",
    "WHERE", "GROUP",  "HAVING", "ORDER", "LIMIT", "AS"};

inline bool is_reserved_after_table(std::string_view word) {
    std::string w = upper(word);
    for (auto kw : kReservedAfterTable)
        if (w == kw) return true;
    return false;
}

}  // namespace sqltext

/// Parses a single statement of the supported subset. DML statements are
/// recognized and routed (kind != select); DDL and other sublanguages raise
/// UnsupportedConstruct.
inline QueryAST parse_select(std::string_view sql) {
    using sqltext::Scanner;
    QueryAST ast;
    std::string text = Scanner::trim(sql);
    while (!text.empty() && text.back() == ';') text = Scanner::trim(text.substr(0, text.size() - 1));
    ast.raw = text;
    Scanner::check_balanced(ast.raw);

    Scanner s(ast.raw);
    s.skip_ws();
    if (s.take_keyword("INSERT") || s.take_keyword("REPLACE")) {
        ast.kind = StatementKind::insert;
        s.take_keyword("INTO");
        ast.dml_table = s.take_identifier();
        return ast;
    }
    if (s.take_keyword("UPDATE")) {
        ast.kind = StatementKind::update;
        ast.dml_table = s.take_identifier();
        return ast;
    }
    if (s.take_keyword("DELETE")) {
        ast.kind = StatementKind::del;
        if (!s.take_keyword("FROM")) throw ParseError("expected FROM after DELETE", s.pos);
        ast.dml_table = s.take_identifier();
        return ast;
    }
    if (!s.take_keyword("SELECT")) {
        std::string head = sqltext::upper(Scanner(ast.raw).take_identifier());
        throw UnsupportedConstruct("unsupported construct: statement starting with '" + head +
                                   "' is outside the fingerprinting scope");
    }
    ast.kind = StatementKind::select;
    if (s.take_keyword("DISTINCT")) ast.distinct = true;
    else s.take_keyword("ALL");

    std::size_t list_start = s.pos;
    std::string_view found;
    std::size_t from_pos = Scanner::find_top_level_keyword(ast.raw, list_start,
                                                           {"FROM", "WHERE", "GROUP", "HAVING",
                                                            "ORDER", "LIMIT"},
                                                           &found);
    std::size_t list_end = from_pos == std::string::npos ? ast.raw.size() : from_pos;
    ast.select_list_end = list_end;
    std::string list_text = Scanner::trim(std::string_view(ast.raw).substr(list_start, list_end - list_start));
    if (list_text.empty()) throw ParseError("empty select list", list_start);
    ast.select_items = Scanner::split_top_level_commas(list_text);
    for (auto& item : ast.select_items) item = Scanner::strip_line_comments(item);

    if (from_pos == std::string::npos) return ast;  // expression-only query
    if (found != "FROM") {
        // SELECT ... WHERE without FROM is out of subset
        throw ParseError("expected FROM before '" + std::string(found) + "'", from_pos);
    }
    ast.from_keyword_pos = from_pos;
    s.pos = from_pos + 4;

    // FROM clause: table [alias] ((, | [join kind] JOIN) table [alias] [ON ... | USING (...)])*
    bool first = true;
    for (;;) {
        TableRef ref;
        if (first) {
            ref.join = JoinKind::none;
        } else {
            s.skip_ws();
            if (s.eof()) break;
            if (s.peek() == ',') {
                ++s.pos;
                ref.join = JoinKind::comma;
            } else if (s.take_keyword("CROSS")) {
                if (!s.take_keyword("JOIN")) throw ParseError("expected JOIN after CROSS", s.pos);
                ref.join = JoinKind::comma;
            } else if (s.take_keyword("INNER")) {
                if (!s.take_keyword("JOIN")) throw ParseError("expected JOIN after INNER", s.pos);
                ref.join = JoinKind::inner;
            } else if (s.take_keyword("LEFT")) {
                s.take_keyword("OUTER");
                if (!s.take_keyword("JOIN")) throw ParseError("expected JOIN after LEFT", s.pos);
                ref.join = JoinKind::left;
            } else if (s.take_keyword("RIGHT")) {
                s.take_keyword("OUTER");
                if (!s.take_keyword("JOIN")) throw ParseError("expected JOIN after RIGHT", s.pos);
                ref.join = JoinKind::right;
            } else if (s.take_keyword("FULL")) {
                throw UnsupportedConstruct("unsupported construct: FULL JOIN");
            } else if (s.take_keyword("NATURAL")) {
                throw UnsupportedConstruct("unsupported construct: NATURAL JOIN");
            } else if (s.take_keyword("JOIN")) {
                ref.join = JoinKind::inner;
            } else {
                break;  // end of FROM clause
            }
        }
        s.skip_ws();
        if (s.eof()) throw ParseError("expected table reference", s.pos);
        if (s.peek() == '(') {
            ref.table = s.take_paren_group();
            ref.is_derived = true;
        } else {
            ref.table = s.take_identifier();
            if (ref.table.empty()) throw ParseError("expected table name", s.pos);
        }
        // optional alias
        {
            std::size_t save = s.pos;
            bool explicit_as = s.take_keyword("AS");
            s.skip_ws();
            if (!s.eof() && (sqltext::is_ident_char(s.peek()) || s.peek() == '"' || s.peek() == '`')) {
                std::size_t word_pos = s.pos;
                std::string word = s.take_identifier();
                if (explicit_as || !sqltext::is_reserved_after_table(word)) {
                    ref.alias = word;
                } else {
                    s.pos = word_pos;
                }
            } else if (explicit_as) {
                throw ParseError("expected alias after AS", s.pos);
            }
            if (ref.alias.empty()) {
                if (ref.is_derived) throw ParseError("derived table requires an alias", save);
                ref.alias = ref.table;
            }
        }
        // optional join condition
        if (!first && (ref.join == JoinKind::inner || ref.join == JoinKind::left ||
                       ref.join == JoinKind::right)) {
            if (s.take_keyword("USING")) {
                ref.join_using = true;
                ref.condition = s.take_paren_group();
            } else if (s.take_keyword("ON")) {
                std::size_t cond_start = s.pos;
                std::size_t cond_end = Scanner::find_top_level_keyword(
                    ast.raw, cond_start,
                    {"JOIN", "INNER", "LEFT", "RIGHT", "CROSS", "WHERE", "GROUP", "HAVING", "ORDER",
                     "LIMIT"});
                // a comma also ends the ON condition
                int depth = 0;
                Scanner cs(ast.raw);
                cs.pos = cond_start;
                std::size_t comma = std::string::npos;
                while (cs.pos < ast.raw.size() && cs.pos < (cond_end == std::string::npos ? ast.raw.size() : cond_end)) {
                    char c = ast.raw[cs.pos];
                    if (c == '\'' || c == '"') { cs.skip_string(); continue; }
                    if (c == '(') ++depth;
                    if (c == ')') --depth;
                    if (c == ',' && depth == 0) { comma = cs.pos; break; }
                    ++cs.pos;
                }
                if (comma != std::string::npos && (cond_end == std::string::npos || comma < cond_end))
                    cond_end = comma;
                if (cond_end == std::string::npos) cond_end = ast.raw.size();
                ref.condition = Scanner::strip_line_comments(
                    std::string_view(ast.raw).substr(cond_start, cond_end - cond_start));
                s.pos = cond_end;
            } else {
                throw ParseError("join requires ON or USING", s.pos);
            }
        }
        ast.from.push_back(std::move(ref));
        first = false;
    }

    for (std::size_t i = 0; i < ast.from.size(); ++i)
        for (std::size_t j = i + 1; j < ast.from.size(); ++j)
            if (ast.from[i].alias == ast.from[j].alias)
                throw ParseError("duplicate alias '" + ast.from[i].alias + "'", 0);

    // Tail clauses, in logical order.
    auto clause_text = [&](std::size_t kw_pos, std::size_t kw_len) {
        std::size_t start = kw_pos + kw_len;
        std::size_t end = Scanner::find_top_level_keyword(ast.raw, start,
                                                          {"WHERE", "GROUP", "HAVING", "ORDER",
                                                           "LIMIT"});
        if (end == std::string::npos) end = ast.raw.size();
        return std::pair<std::string, std::size_t>(
            Scanner::strip_line_comments(std::string_view(ast.raw).substr(start, end - start)), end);
    };
    std::size_t cursor = s.pos;
    while (cursor < ast.raw.size()) {
        std::string_view kw;
        std::size_t kw_pos = Scanner::find_top_level_keyword(ast.raw, cursor,
                                                             {"WHERE", "GROUP", "HAVING", "ORDER",
                                                              "LIMIT"},
                                                             &kw);
        if (kw_pos == std::string::npos) break;
        if (kw == "WHERE") {
            auto [text2, end] = clause_text(kw_pos, 5);
            ast.where_text = text2;
            cursor = end;
        } else if (kw == "GROUP") {
            Scanner g(ast.raw);
            g.pos = kw_pos + 5;
            if (!g.take_keyword("BY")) throw ParseError("expected BY after GROUP", g.pos);
            auto [text2, end] = clause_text(g.pos - 2, 2);
            ast.group_by_text = text2;
            cursor = end;
        } else if (kw == "HAVING") {
            auto [text2, end] = clause_text(kw_pos, 6);
            ast.having_text = text2;
            cursor = end;
        } else if (kw == "ORDER") {
            Scanner g(ast.raw);
            g.pos = kw_pos + 5;
            if (!g.take_keyword("BY")) throw ParseError("expected BY after ORDER", g.pos);
            auto [text2, end] = clause_text(g.pos - 2, 2);
            ast.order_by_text = text2;
            cursor = end;
        } else {  // LIMIT
            auto [text2, end] = clause_text(kw_pos, 5);
            ast.limit_text = text2;
            cursor = end;
        }
    }
    return ast;
}

}  // namespace sqlab
