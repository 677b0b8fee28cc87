#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hash.hpp"

namespace sqlab {

/// Aggregation functions usable as window combiner f_w or group aggregator f_a.
enum class AggFn { sum, bit_xor, checksum_agg, count, min, max, bit_or, bit_and };

inline const char* agg_name(AggFn fn) {
    switch (fn) {
    case AggFn::sum: return "sum";
    case AggFn::bit_xor: return "bit_xor";
    case AggFn::checksum_agg: return "checksum_agg";
    case AggFn::count: return "count";
    case AggFn::min: return "min";
    case AggFn::max: return "max";
    case AggFn::bit_or: return "bit_or";
    case AggFn::bit_and: return "bit_and";
    }
    return "?";
}

inline std::optional<AggFn> agg_from_name(std::string_view name) {
    for (AggFn fn : {AggFn::sum, AggFn::bit_xor, AggFn::checksum_agg, AggFn::count, AggFn::min,
                     AggFn::max, AggFn::bit_or, AggFn::bit_and})
        if (name == agg_name(fn)) return fn;
    return std::nullopt;
}

inline bool agg_is_associative(AggFn fn) {
    switch (fn) {
    case AggFn::sum:
    case AggFn::bit_xor:
    case AggFn::min:
    case AggFn::max:
    case AggFn::bit_or:
    case AggFn::bit_and: return true;
    default: return false;
    }
}

/// Order-insensitive 64-bit mixing combine, the reference checksum_agg.
inline std::uint64_t checksum_mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Applies one aggregation function to a multiset of 64-bit values,
/// wrapping modulo 2^64. Empty input yields the SQL NULL outcome.
inline std::optional<std::uint64_t> agg_eval(AggFn fn, const std::vector<std::uint64_t>& xs) {
    if (xs.empty()) return std::nullopt;
    std::uint64_t acc;
    switch (fn) {
    case AggFn::sum:
        acc = 0;
        for (auto x : xs) acc += x;
        return acc;
    case AggFn::bit_xor:
        acc = 0;
        for (auto x : xs) acc ^= x;
        return acc;
    case AggFn::checksum_agg:
        acc = 0;
        for (auto x : xs) acc += checksum_mix(x);
        return acc;
    case AggFn::count: return static_cast<std::uint64_t>(xs.size());
    case AggFn::min: return *std::min_element(xs.begin(), xs.end());
    case AggFn::max: return *std::max_element(xs.begin(), xs.end());
    case AggFn::bit_or:
        acc = 0;
        for (auto x : xs) acc |= x;
        return acc;
    case AggFn::bit_and:
        acc = ~std::uint64_t{0};
        for (auto x : xs) acc &= x;
        return acc;
    }
    return std::nullopt;
}

enum class FormulaClassId { basic, agg, basic_ctrl, agg_ctrl, expr_only };

inline bool class_is_agg(FormulaClassId id) {
    return id == FormulaClassId::agg || id == FormulaClassId::agg_ctrl;
}

inline bool class_is_controlled(FormulaClassId id) {
    return id == FormulaClassId::basic_ctrl || id == FormulaClassId::agg_ctrl ||
           id == FormulaClassId::expr_only;
}

/// One of the five token formula classes, with its function choices.
struct FormulaClass {
    FormulaClassId class_id = FormulaClassId::basic;
    int dimension = 1;
    AggFn fw = AggFn::sum;
    std::optional<AggFn> fa;

    void validate() const {
        if (class_id == FormulaClassId::expr_only) {
            if (dimension != 0) throw std::invalid_argument("expression-only formula has dimension 0");
            return;
        }
        if (dimension < 1) throw std::invalid_argument("formula dimension must be >= 1");
        if (class_is_agg(class_id) != fa.has_value())
            throw std::invalid_argument("group aggregator present iff aggregation class");
        if (fa) {
            if (fw == AggFn::sum && *fa == AggFn::count)
                throw std::invalid_argument("(sum, count) pairing is inter-associative");
            if (fw == *fa && agg_is_associative(fw))
                throw std::invalid_argument("identical associative f_w and f_a cause group blindness");
            if (*fa == AggFn::bit_xor)
                throw std::invalid_argument("bit_xor is unsuitable as f_a");
        }
    }
};

static constexpr const char* kControlPlaceholder = "(0.0)";

/// Control value of a two-pass formula. Text values are routed through
/// string_hash before combination.
struct ControlBinding {
    std::variant<std::monostate, std::int64_t, std::string> value;
    std::string instruction;

    bool is_missing() const { return std::holds_alternative<std::monostate>(value); }
};

struct QueryTraits {
    int n_outer_tables = 0;
    bool has_outer_grouping_or_aggregation = false;
    bool post_select_ops = false;
};

/// Maps the observable traits of a gold query to its formula class, with the
/// default embedded-backend function choices: sum for the basic family,
/// bit_xor over sum for the aggregation family.
inline FormulaClass select_formula(const QueryTraits& traits) {
    FormulaClass fc;
    fc.dimension = traits.n_outer_tables;
    if (traits.n_outer_tables == 0) {
        fc.class_id = FormulaClassId::expr_only;
        fc.fa.reset();
        return fc;
    }
    if (traits.has_outer_grouping_or_aggregation) {
        fc.class_id = traits.post_select_ops ? FormulaClassId::agg_ctrl : FormulaClassId::agg;
        fc.fw = AggFn::bit_xor;
        fc.fa = AggFn::sum;
    } else {
        fc.class_id = traits.post_select_ops ? FormulaClassId::basic_ctrl : FormulaClassId::basic;
        fc.fw = AggFn::sum;
        fc.fa.reset();
    }
    fc.validate();
    return fc;
}

/// Renders the formula as copy-pastable SQL text, bit-exact.
inline std::string render_formula(const FormulaClass& fc, const SaltSpec& salt,
                                  const std::vector<std::string>& aliases) {
    fc.validate();
    if (static_cast<int>(aliases.size()) != fc.dimension)
        throw std::invalid_argument("alias count must match formula dimension");
    std::string out = salt_name(salt.task_number) + "(";
    if (class_is_controlled(fc.class_id)) out += std::string(kControlPlaceholder) + (fc.dimension ? " + " : "");
    if (fc.class_id != FormulaClassId::expr_only) {
        std::string fv;
        for (std::size_t i = 0; i < aliases.size(); ++i) {
            if (i) fv += " + ";
            fv += "nn(" + aliases[i] + ".hash)";
        }
        out += std::string(agg_name(fc.fw)) + "(";
        if (fc.fa) out += std::string(agg_name(*fc.fa)) + "(" + fv + ")";
        else out += fv;
        out += ") OVER ()";
    }
    out += ") AS token";
    return out;
}

/// A formula text parsed back into its class, salt number and aliases.
struct ParsedFormula {
    FormulaClass cls;
    int salt_number = 0;
    std::vector<std::string> aliases;
    bool has_placeholder = false;
};

/// Inverse of render_formula, tolerant to keyword case and spacing.
inline ParsedFormula parse_formula(std::string_view text) {
    ParsedFormula out;
    std::size_t pos = 0;
    auto skip_ws = [&] { while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos; };
    auto expect = [&](std::string_view tok) {
        skip_ws();
        if (text.compare(pos, tok.size(), tok) != 0)
            throw std::invalid_argument("malformed formula near '" + std::string(text.substr(pos)) + "'");
        pos += tok.size();
    };
    auto try_take = [&](std::string_view tok) {
        skip_ws();
        if (text.compare(pos, tok.size(), tok) == 0) { pos += tok.size(); return true; }
        return false;
    };
    auto take_ident = [&] {
        skip_ws();
        std::size_t start = pos;
        while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) ++pos;
        return std::string(text.substr(start, pos - start));
    };

    expect("salt_");
    std::string digits = take_ident();
    if (digits.size() != 3 || !std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw std::invalid_argument("salt function needs a three-digit number");
    out.salt_number = std::stoi(digits);
    expect("(");
    out.has_placeholder = try_take(kControlPlaceholder);
    if (out.has_placeholder && try_take(")")) {
        out.cls.class_id = FormulaClassId::expr_only;
        out.cls.dimension = 0;
        out.cls.fa.reset();
    } else {
        if (out.has_placeholder) expect("+");
        std::string fn1 = take_ident();
        auto fw = agg_from_name(fn1);
        if (!fw) throw std::invalid_argument("unknown aggregation function: " + fn1);
        out.cls.fw = *fw;
        expect("(");
        skip_ws();
        // Either f_a(...) or directly the nn(...) terms.
        bool has_fa = false;
        if (text.compare(pos, 3, "nn(") != 0) {
            std::string fn2 = take_ident();
            auto fa = agg_from_name(fn2);
            if (!fa) throw std::invalid_argument("unknown aggregation function: " + fn2);
            out.cls.fa = fa;
            has_fa = true;
            expect("(");
        } else {
            out.cls.fa.reset();
        }
        for (;;) {
            expect("nn(");
            std::string alias = take_ident();
            if (alias.empty()) throw std::invalid_argument("missing alias in formula");
            out.aliases.push_back(alias);
            expect(".");
            expect("hash");
            expect(")");
            if (!try_take("+")) break;
        }
        if (has_fa) expect(")");
        expect(")");
        if (!try_take("OVER") && !try_take("over")) throw std::invalid_argument("missing OVER ()");
        expect("(");
        expect(")");
        expect(")");
        out.cls.dimension = static_cast<int>(out.aliases.size());
        if (out.has_placeholder)
            out.cls.class_id = out.cls.fa ? FormulaClassId::agg_ctrl : FormulaClassId::basic_ctrl;
        else
            out.cls.class_id = out.cls.fa ? FormulaClassId::agg : FormulaClassId::basic;
    }
    if (!(try_take("AS") || try_take("as") || try_take("As"))) throw std::invalid_argument("missing AS token");
    if (!try_take("token")) throw std::invalid_argument("missing AS token");
    out.cls.validate();
    return out;
}

/// Replaces the single (0.0) placeholder by the control literal: the number
/// itself, or string_hash of a text value.
inline std::string substitute_control(std::string_view formula_text, const ControlBinding& binding,
                                      const HashConfig& cfg = {}) {
    std::string placeholder = kControlPlaceholder;
    std::size_t first = formula_text.find(placeholder);
    if (first == std::string_view::npos)
        throw std::invalid_argument("formula has no control placeholder");
    if (formula_text.find(placeholder, first + 1) != std::string_view::npos)
        throw std::invalid_argument("formula has multiple control placeholders");
    std::string literal;
    if (binding.is_missing()) {
        return std::string(formula_text);  // left at its default: the "missing control value" token
    } else if (std::holds_alternative<std::int64_t>(binding.value)) {
        literal = "(" + std::to_string(std::get<std::int64_t>(binding.value)) + ")";
    } else {
        literal = "(" + std::to_string(string_hash(std::get<std::string>(binding.value), cfg)) + ")";
    }
    std::string out(formula_text);
    out.replace(first, placeholder.size(), literal);
    return out;
}

/// One result-table group: for each row, the nullable hash of every alias.
using HashRow = std::vector<std::optional<std::uint64_t>>;
using HashGroup = std::vector<HashRow>;

/// Pure oracle for the token pipeline: f_s(f_c(x, f_w(f_a(f_v({f*(h)}))))),
/// dropping f_a / f_c as the class dictates. All arithmetic wraps mod 2^64.
inline std::uint64_t reference_token(const FormulaClass& fc, const SaltSpec& salt,
                                     const std::vector<HashGroup>& groups,
                                     const ControlBinding& control = {},
                                     const HashConfig& cfg = {}) {
    fc.validate();
    std::optional<std::uint64_t> inner;
    if (fc.class_id != FormulaClassId::expr_only) {
        auto fv_of_row = [&](const HashRow& row) {
            if (static_cast<int>(row.size()) != fc.dimension)
                throw std::invalid_argument("row does not cover all formula aliases");
            std::uint64_t acc = 0;
            for (const auto& h : row) acc += nn(h, cfg);
            return acc;
        };
        if (fc.fa) {
            std::vector<std::uint64_t> group_values;
            for (const auto& group : groups) {
                std::vector<std::uint64_t> fvs;
                fvs.reserve(group.size());
                for (const auto& row : group) fvs.push_back(fv_of_row(row));
                if (auto v = agg_eval(*fc.fa, fvs)) group_values.push_back(*v);
            }
            inner = agg_eval(fc.fw, group_values);
        } else {
            std::vector<std::uint64_t> fvs;
            for (const auto& group : groups)
                for (const auto& row : group) fvs.push_back(fv_of_row(row));
            inner = agg_eval(fc.fw, fvs);
        }
    }
    if (class_is_controlled(fc.class_id)) {
        std::uint64_t x = 0;
        if (std::holds_alternative<std::int64_t>(control.value))
            x = static_cast<std::uint64_t>(std::get<std::int64_t>(control.value));
        else if (std::holds_alternative<std::string>(control.value))
            x = string_hash(std::get<std::string>(control.value), cfg);
        if (fc.class_id == FormulaClassId::expr_only)
            inner = x;
        else if (inner)  // SQL addition propagates NULL, so a NULL window outcome stays NULL
            inner = x + *inner;
    }
    return salt_apply(salt, inner, cfg);
}

}  // namespace sqlab
