#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "db.hpp"
#include "formula.hpp"
#include "hash.hpp"

namespace sqlab {

/// Everything a rebuild needs to reproduce the same database bit for bit:
/// hashing recipe, per-task salt constants, and the seed feeding nonce and
/// shuffle streams. Serialized as manifest.json next to the dump.
struct BuildManifest {
    HashConfig hash;
    std::uint64_t seed = 0;
    std::map<int, std::uint64_t> salt_y;  // task number -> Y constant

    /// Deterministic Y constant for a task: mixed from the seed, 47 bits wide
    /// with bit 46 forced on, so tokens stay far above any literal entry-point
    /// task number and in a realistic decimal width.
    static std::uint64_t derive_salt_y(std::uint64_t seed, int task_number) {
        std::uint64_t y = checksum_mix(seed ^ checksum_mix(static_cast<std::uint64_t>(task_number)));
        y &= (std::uint64_t{1} << 47) - 1;
        y |= std::uint64_t{1} << 46;
        return y;
    }

    void register_task(int task_number) {
        salt_y.emplace(task_number, derive_salt_y(seed, task_number));
    }

    RuntimeConfig runtime_config(std::string fallback_text) const {
        RuntimeConfig config;
        config.hash = hash;
        config.salt_y = salt_y;
        if (!fallback_text.empty()) config.fallback_text = std::move(fallback_text);
        return config;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["algorithm"] = hash.algorithm_id;
        j["hash_bits"] = hash.hash_bits;
        j["coalesce_constant"] = hash.coalesce_constant;
        j["disambiguator"] = hash.disambiguator;
        j["seed"] = seed;
        nlohmann::json salts = nlohmann::json::object();
        for (const auto& [number, y] : salt_y) salts[salt_name(number)] = y;
        j["salts"] = salts;
        return j;
    }

    static BuildManifest from_json(const nlohmann::json& j) {
        BuildManifest m;
        m.hash.algorithm_id = j.at("algorithm").get<std::string>();
        m.hash.hash_bits = j.at("hash_bits").get<int>();
        m.hash.coalesce_constant = j.at("coalesce_constant").get<std::uint64_t>();
        m.hash.disambiguator = j.at("disambiguator").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& [name, y] : j.at("salts").items()) {
            if (name.size() != 8 || name.compare(0, 5, "salt_") != 0)
                throw std::invalid_argument("malformed salt name in manifest: " + name);
            m.salt_y[std::stoi(name.substr(5))] = y.get<std::uint64_t>();
        }
        m.hash.validate();
        return m;
    }

    /// Canonical text form: sorted keys, two-space indent, trailing newline.
    std::string dump_text() const { return to_json().dump(2) + "\n"; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write manifest: " + path);
        out << dump_text();
    }

    static BuildManifest load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read manifest: " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

/// Per-game configuration, read from game.json in the game directory.
struct GameConfig {
    std::string title = "Untitled game";
    std::string backend = "embedded";
    AggFn default_fw = AggFn::sum;          // basic family window combiner
    AggFn default_agg_fw = AggFn::bit_xor;  // aggregation family window combiner
    AggFn default_agg_fa = AggFn::sum;      // aggregation family group aggregator
    std::string fallback_text;
    std::uint64_t manifest_seed = 0;

    static GameConfig from_json(const nlohmann::json& j) {
        GameConfig c;
        c.title = j.value("title", c.title);
        c.backend = j.value("backend", c.backend);
        if (c.backend != "embedded")
            throw std::invalid_argument("unsupported backend: " + c.backend);
        c.fallback_text = j.value("fallback_text", c.fallback_text);
        c.manifest_seed = j.value("manifest_seed", c.manifest_seed);
        auto fn = [&](const char* key, AggFn fallback) {
            if (!j.contains(key)) return fallback;
            auto parsed = agg_from_name(j.at(key).get<std::string>());
            if (!parsed) throw std::invalid_argument(std::string("unknown aggregation in ") + key);
            return *parsed;
        };
        c.default_fw = fn("formula_fw", c.default_fw);
        c.default_agg_fw = fn("formula_agg_fw", c.default_agg_fw);
        c.default_agg_fa = fn("formula_agg_fa", c.default_agg_fa);
        FormulaClass agg_check{FormulaClassId::agg, 1, c.default_agg_fw, c.default_agg_fa};
        agg_check.validate();
        return c;
    }

    static GameConfig load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read game config: " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

}  // namespace sqlab
