#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "formula.hpp"

namespace sqlab {

// ---------------------------------------------------------------------------
// Aggregation roster
// ---------------------------------------------------------------------------

/// Candidate functions for token combination, studied by the collision lab.
enum class SimFn {
    checksum,
    sum,
    modular_sum,
    bit_xor,
    iqr,
    quartile_3,
    quartile_1,
    median,
    avg,
    min,
    max,
    count,
    bit_or,
    bit_and,
};

/// Roster in recommendation order: fewest expected collisions first.
inline const std::vector<SimFn>& sim_roster() {
    static const std::vector<SimFn> roster = {
        SimFn::checksum, SimFn::sum,    SimFn::modular_sum, SimFn::bit_xor,
        SimFn::iqr,      SimFn::quartile_3, SimFn::quartile_1, SimFn::median,
        SimFn::avg,      SimFn::min,    SimFn::max,         SimFn::count,
        SimFn::bit_or,   SimFn::bit_and,
    };
    return roster;
}

inline std::string sim_fn_name(SimFn fn) {
    switch (fn) {
    case SimFn::checksum: return "checksum";
    case SimFn::sum: return "sum";
    case SimFn::modular_sum: return "modular_sum";
    case SimFn::bit_xor: return "bit_xor";
    case SimFn::iqr: return "iqr";
    case SimFn::quartile_3: return "quartile_3";
    case SimFn::quartile_1: return "quartile_1";
    case SimFn::median: return "median";
    case SimFn::avg: return "avg";
    case SimFn::min: return "min";
    case SimFn::max: return "max";
    case SimFn::count: return "count";
    case SimFn::bit_or: return "bit_or";
    case SimFn::bit_and: return "bit_and";
    }
    return "?";
}

namespace detail {

/// Interpolated quantile (the common linear-interpolation definition) over a
/// sorted copy of the values, truncated to an integer.
inline std::uint64_t quantile_trunc(std::vector<std::uint64_t> sorted, double q) {
    std::sort(sorted.begin(), sorted.end());
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    double lo_v = static_cast<double>(sorted[lo]);
    double hi_v = static_cast<double>(sorted[lo + 1 < sorted.size() ? lo + 1 : lo]);
    return static_cast<std::uint64_t>(lo_v + frac * (hi_v - lo_v));
}

}  // namespace detail

/// Applies one roster function to a multiset of values; the outcome is a
/// token, masked to token_bits. Empty input yields no token.
inline std::optional<std::uint64_t> sim_aggregate(SimFn fn, const std::vector<std::uint64_t>& values,
                                                  int token_bits) {
    if (values.empty()) return std::nullopt;
    const std::uint64_t mask =
        token_bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << token_bits) - 1;
    std::uint64_t out = 0;
    switch (fn) {
    case SimFn::checksum: {
        std::vector<std::uint64_t> sorted(values);
        std::sort(sorted.begin(), sorted.end());
        for (std::uint64_t v : sorted) out = checksum_mix(out ^ v);
        break;
    }
    case SimFn::sum:
    case SimFn::modular_sum:
        for (std::uint64_t v : values) out += v;  // wraps mod 2^64, masked below
        break;
    case SimFn::bit_xor:
        for (std::uint64_t v : values) out ^= v;
        break;
    case SimFn::iqr:
        out = detail::quantile_trunc(values, 0.75) - detail::quantile_trunc(values, 0.25);
        break;
    case SimFn::quartile_3: out = detail::quantile_trunc(values, 0.75); break;
    case SimFn::quartile_1: out = detail::quantile_trunc(values, 0.25); break;
    case SimFn::median: out = detail::quantile_trunc(values, 0.5); break;
    case SimFn::avg: {
        unsigned __int128 acc = 0;
        for (std::uint64_t v : values) acc += v;
        out = static_cast<std::uint64_t>(acc / values.size());
        break;
    }
    case SimFn::min: out = *std::min_element(values.begin(), values.end()); break;
    case SimFn::max: out = *std::max_element(values.begin(), values.end()); break;
    case SimFn::count: out = values.size(); break;
    case SimFn::bit_or:
        for (std::uint64_t v : values) out |= v;
        break;
    case SimFn::bit_and:
        out = values[0];
        for (std::uint64_t v : values) out &= v;
        break;
    }
    return out & mask;
}

// ---------------------------------------------------------------------------
// Population generation
// ---------------------------------------------------------------------------

/// Shape of a simulated population: base individuals plus perturbed variants
/// (the near-miss answers a player is likely to produce).
struct PopulationSpec {
    std::string name = "full";
    int base_count = 900;
    int variant_count = 100;  // split evenly across the four perturbation kinds
    int hash_bits = 16;
    int token_bits = 16;
    int min_set = 24;
    int max_set = 100;

    static PopulationSpec full() { return {}; }

    static PopulationSpec reduced() {
        PopulationSpec spec;
        spec.name = "reduced";
        spec.base_count = 450;
        spec.variant_count = 50;
        spec.hash_bits = 10;
        spec.token_bits = 16;
        spec.min_set = 12;
        spec.max_set = 50;
        return spec;
    }

    static PopulationSpec by_name(const std::string& name) {
        if (name == "full") return full();
        if (name == "reduced") return reduced();
        throw std::invalid_argument("unknown simulation plan: " + name);
    }
};

using Individual = std::vector<std::uint64_t>;

/// The four perturbation kinds, 25% of the variants each: one element
/// removed, two removed, one bit flipped, one bit flipped in two elements.
inline std::vector<Individual> generate_population(const PopulationSpec& spec,
                                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint64_t> element(
        0, (std::uint64_t{1} << spec.hash_bits) - 1);
    std::uniform_int_distribution<int> set_size(spec.min_set, spec.max_set);
    std::uniform_int_distribution<int> bit(0, spec.hash_bits - 1);

    std::vector<Individual> population;
    population.reserve(static_cast<std::size_t>(spec.base_count + spec.variant_count));
    for (int i = 0; i < spec.base_count; ++i) {
        Individual ind(static_cast<std::size_t>(set_size(rng)));
        for (auto& v : ind) v = element(rng);
        population.push_back(std::move(ind));
    }
    int per_kind = spec.variant_count / 4;
    for (int k = 0; k < spec.variant_count; ++k) {
        Individual variant = population[static_cast<std::size_t>(k) % population.size()];
        switch (per_kind ? k / per_kind : 0) {
        case 0:
            variant.pop_back();
            break;
        case 1:
            variant.pop_back();
            if (variant.size() > 1) variant.pop_back();
            break;
        case 2:
            variant[0] ^= std::uint64_t{1} << bit(rng);
            break;
        default:
            variant[0] ^= std::uint64_t{1} << bit(rng);
            variant[1 % variant.size()] ^= std::uint64_t{1} << bit(rng);
            break;
        }
        population.push_back(std::move(variant));
    }
    return population;
}

// ---------------------------------------------------------------------------
// Simulation run
// ---------------------------------------------------------------------------

struct FnOutcome {
    SimFn fn = SimFn::sum;
    int distinct = 0;
    int collisions = 0;              // population size minus distinct outcomes
    std::vector<int> histogram;      // outcome density over 16 token-space buckets
};

struct SimulationReport {
    PopulationSpec spec;
    std::uint64_t seed = 0;
    int population = 0;
    std::vector<FnOutcome> outcomes;  // in roster order

    const FnOutcome& of(SimFn fn) const {
        for (const auto& o : outcomes)
            if (o.fn == fn) return o;
        throw std::out_of_range("function missing from the report");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["plan"] = spec.name;
        j["rng"] = "mt19937_64";
        j["seed"] = seed;
        j["population"] = population;
        j["hash_bits"] = spec.hash_bits;
        j["token_bits"] = spec.token_bits;
        nlohmann::json fns = nlohmann::json::array();
        for (const auto& o : outcomes) {
            nlohmann::json f;
            f["fn"] = sim_fn_name(o.fn);
            f["distinct"] = o.distinct;
            f["collisions"] = o.collisions;
            f["histogram"] = o.histogram;
            fns.push_back(std::move(f));
        }
        j["functions"] = std::move(fns);
        return j;
    }
};

inline SimulationReport run_simulation(const PopulationSpec& spec, std::uint64_t seed) {
    auto population = generate_population(spec, seed);
    SimulationReport report;
    report.spec = spec;
    report.seed = seed;
    report.population = static_cast<int>(population.size());
    const int buckets = 16;
    const double span = std::ldexp(1.0, spec.token_bits);
    for (SimFn fn : sim_roster()) {
        FnOutcome outcome;
        outcome.fn = fn;
        outcome.histogram.assign(buckets, 0);
        std::map<std::uint64_t, int> seen;
        for (const auto& ind : population) {
            auto token = sim_aggregate(fn, ind, spec.token_bits);
            if (!token) continue;
            ++seen[*token];
            int bucket = static_cast<int>(static_cast<double>(*token) / span * buckets);
            ++outcome.histogram[std::min(bucket, buckets - 1)];
        }
        outcome.distinct = static_cast<int>(seen.size());
        outcome.collisions = report.population - outcome.distinct;
        report.outcomes.push_back(std::move(outcome));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Associativity and pair recommendation
// ---------------------------------------------------------------------------

/// A split counterexample: aggregating the parts then the partials differs
/// from aggregating the whole.
struct SplitCounterexample {
    std::vector<std::uint64_t> left;
    std::vector<std::uint64_t> right;
};

/// Randomized split check: f is usable as a window combiner only when
/// f(A ++ B) == f({f(A), f(B)}). Returns a counterexample, or nothing after
/// the given number of trials.
inline std::optional<SplitCounterexample> classify_associativity(SimFn fn, int token_bits,
                                                                 std::uint64_t seed,
                                                                 int trials = 200) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint64_t> element(
        0, (std::uint64_t{1} << token_bits) - 1);
    std::uniform_int_distribution<int> size(1, 8);
    for (int t = 0; t < trials; ++t) {
        std::vector<std::uint64_t> left(static_cast<std::size_t>(size(rng)));
        std::vector<std::uint64_t> right(static_cast<std::size_t>(size(rng)));
        for (auto& v : left) v = element(rng);
        for (auto& v : right) v = element(rng);
        std::vector<std::uint64_t> whole(left);
        whole.insert(whole.end(), right.begin(), right.end());
        auto split = sim_aggregate(
            fn, {*sim_aggregate(fn, left, token_bits), *sim_aggregate(fn, right, token_bits)},
            token_bits);
        if (sim_aggregate(fn, whole, token_bits) != split)
            return SplitCounterexample{std::move(left), std::move(right)};
    }
    return std::nullopt;
}

struct PairRecommendation {
    SimFn fw = SimFn::sum;  // window combiner (must pass the split check)
    SimFn fa = SimFn::sum;  // per-group aggregator
};

/// Picks the combination pair from a simulation report: the two lowest-
/// collision split-safe functions, ties broken by roster order. bit_xor, when
/// chosen, always takes the window slot (its self-inverse property makes it
/// the safer outer combiner); modular_sum is skipped as an alias of sum at
/// token width, and count never qualifies (it ignores the values entirely).
inline PairRecommendation recommend_pair(const SimulationReport& report,
                                         std::uint64_t assoc_seed = 1) {
    std::vector<SimFn> candidates;
    for (SimFn fn : sim_roster()) {
        if (fn == SimFn::modular_sum || fn == SimFn::count) continue;
        if (classify_associativity(fn, report.spec.token_bits, assoc_seed)) continue;
        candidates.push_back(fn);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](SimFn a, SimFn b) {
        return report.of(a).collisions < report.of(b).collisions;
    });
    if (candidates.size() < 2) throw std::logic_error("not enough split-safe functions");
    PairRecommendation pair;
    pair.fa = candidates[0];
    pair.fw = candidates[1];
    if (pair.fa == SimFn::bit_xor) std::swap(pair.fa, pair.fw);
    return pair;
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

/// A minimal bar chart of collision counts per function, roster order.
inline std::string emit_svg(const SimulationReport& report) {
    const int bar_w = 48, gap = 8, height = 240, label_h = 70;
    int width = static_cast<int>(report.outcomes.size()) * (bar_w + gap) + gap;
    int peak = 1;
    for (const auto& o : report.outcomes) peak = std::max(peak, o.collisions);
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" +
                      std::to_string(height + label_h) + "\">\n";
    int x = gap;
    for (const auto& o : report.outcomes) {
        int h = o.collisions * height / peak;
        svg += "  <rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(height - h) +
               "\" width=\"" + std::to_string(bar_w) + "\" height=\"" + std::to_string(h) +
               "\" fill=\"steelblue\"/>\n";
        svg += "  <text x=\"" + std::to_string(x + bar_w / 2) + "\" y=\"" +
               std::to_string(height + 14) + "\" font-size=\"9\" text-anchor=\"middle\">" +
               sim_fn_name(o.fn) + "</text>\n";
        svg += "  <text x=\"" + std::to_string(x + bar_w / 2) + "\" y=\"" +
               std::to_string(height + 28) + "\" font-size=\"9\" text-anchor=\"middle\">" +
               std::to_string(o.collisions) + "</text>\n";
        x += bar_w + gap;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace sqlab
