#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sqlab {

/// A typed SQL cell: NULL, integer, real, or text.
/// The canonical JSON rendering below is the single source of truth for
/// value equality and row hashing across the whole toolkit.
class Value {
public:
    Value() : data_(std::monostate{}) {}
    Value(std::int64_t v) : data_(v) {}
    Value(double v) : data_(v) {}
    Value(std::string v) : data_(std::move(v)) {}
    Value(const char* v) : data_(std::string(v)) {}

    static Value null() { return Value(); }

    bool is_null() const { return std::holds_alternative<std::monostate>(data_); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(data_); }
    bool is_real() const { return std::holds_alternative<double>(data_); }
    bool is_text() const { return std::holds_alternative<std::string>(data_); }

    std::int64_t as_int() const { return std::get<std::int64_t>(data_); }
    double as_real() const { return std::get<double>(data_); }
    const std::string& as_text() const { return std::get<std::string>(data_); }

    bool operator==(const Value& other) const { return canonical() == other.canonical(); }
    bool operator<(const Value& other) const { return canonical() < other.canonical(); }

    /// Canonical JSON scalar form: null, integers without leading zeros,
    /// reals via shortest round-trip (always containing '.' or 'e'),
    /// text as a JSON string with minimal escaping.
    std::string canonical() const {
        if (is_null()) return "null";
        if (is_int()) return std::to_string(as_int());
        if (is_real()) return render_real(as_real());
        return render_json_string(as_text());
    }

    static std::string render_real(double v) {
        char buf[32];
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
        std::string s(buf, end);
        if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
            s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
            s += ".0";
        }
        return s;
    }

    static std::string render_json_string(std::string_view s) {
        std::string out;
        out.reserve(s.size() + 2);
        out += '"';
        for (unsigned char c : s) {
            switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
            }
        }
        out += '"';
        return out;
    }

private:
    std::variant<std::monostate, std::int64_t, double, std::string> data_;
};

using Row = std::vector<Value>;

/// Serializes a list of values as a canonical JSON array, with an optional
/// leading text element (used to prepend the table name for row hashing).
inline std::string canonical_json_array(const std::vector<Value>& values,
                                        const std::string* head = nullptr) {
    std::string out = "[";
    bool first = true;
    if (head) {
        out += Value::render_json_string(*head);
        first = false;
    }
    for (const auto& v : values) {
        if (!first) out += ',';
        out += v.canonical();
        first = false;
    }
    out += ']';
    return out;
}

/// Parses a TSV cell according to a declared SQL type. Empty cell means NULL.
inline Value parse_typed_cell(std::string_view cell, std::string_view declared_type) {
    if (cell.empty()) return Value::null();
    std::string ty(declared_type);
    for (auto& c : ty) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    auto contains = [&](const char* s) { return ty.find(s) != std::string::npos; };
    if (contains("INT")) {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec == std::errc() && p == cell.data() + cell.size()) return Value(v);
        return Value(std::string(cell));
    }
    if (contains("REAL") || contains("FLOA") || contains("DOUB") || contains("DECIMAL") ||
        contains("NUMERIC")) {
        double v = 0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec == std::errc() && p == cell.data() + cell.size()) return Value(v);
        return Value(std::string(cell));
    }
    return Value(std::string(cell));
}

}  // namespace sqlab
