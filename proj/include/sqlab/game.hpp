#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "adventure.hpp"
#include "builder.hpp"
#include "manifest.hpp"

namespace sqlab {

/// Outcome of a full game build: the reproducibility manifest, the executed
/// task records, the check-battery report, and the rendered activity map.
struct BuildResult {
    GameConfig config;
    BuildManifest manifest;
    std::vector<TaskRecord> records;
    VerifyInput verify;
    CheckReport report;
    std::string dot;  // empty when the graph could not be assembled
    std::map<std::string, int> row_counts;
    int attempts = 1;

    bool ok() const { return report.ok(); }
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BuildError("cannot read " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw BuildError("cannot write " + path.string());
    out << content;
}

}  // namespace detail

/// Runs the whole pipeline for a game directory (game.json, schema.sql,
/// adventure.md, dataset/*.tsv): schema, data, task script, messages, checks.
/// On a genuine hash collision the build retries with the next disambiguator.
/// When out_dir is given, writes game.db, game.dump.sql, manifest.json and
/// activity_map.dot there.
inline BuildResult build_game(const std::string& game_dir, const std::string& out_dir = "",
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
    namespace fs = std::filesystem;
    fs::path dir(game_dir);
    BuildResult result;
    result.config = GameConfig::load((dir / "game.json").string());
    std::string ddl = detail::read_file(dir / "schema.sql");
    std::string script = detail::read_file(dir / "adventure.md");

    std::uint64_t seed = result.config.manifest_seed;
    if (const char* env = std::getenv("SQLAB_SEED")) seed = std::stoull(env);
    if (seed_override) seed = *seed_override;

    std::vector<TaskRecord> parsed;
    std::vector<std::string> conformity_errors;
    try {
        parsed = parse_adventure(script);
    } catch (const ConformityError& e) {
        conformity_errors.push_back(e.what());
    }

    fs::path db_path;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        db_path = fs::path(out_dir) / "game.db";
    }

    constexpr int kMaxAttempts = 8;
    std::string dump;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        result.attempts = attempt + 1;
        if (!db_path.empty()) fs::remove(db_path);
        Database db(db_path.empty() ? ":memory:" : db_path.string());

        result.manifest = BuildManifest{};
        result.manifest.seed = seed;
        result.manifest.hash.disambiguator = attempt == 0 ? "" : "#" + std::to_string(attempt);
        for (const auto& task : parsed) {
            result.manifest.register_task(task.number);
            // formulas with a foreign salt still need their function registered,
            // so the run can surface the mismatch as a check-4 failure
            auto register_formula = [&](const QuerySpec& spec) {
                if (spec.formula.empty()) return;
                try {
                    result.manifest.register_task(parse_formula(spec.formula).salt_number);
                } catch (const std::exception&) {
                }
            };
            for (const auto& s : task.solutions) register_formula(s);
            for (const auto& v : task.variants) register_formula(v);
            for (const auto& h : task.hints) register_formula(h);
        }
        install_runtime(db, result.manifest.runtime_config(result.config.fallback_text));

        auto specs = load_schema(db, ddl);
        result.row_counts = load_dataset(db, (dir / "dataset").string(), specs);

        auto scan = detail::scan_hashes(db, result.manifest.hash);
        if (!scan.problems.empty() && scan.retryable_collision && attempt + 1 < kMaxAttempts)
            continue;  // re-salt the rows with the next disambiguator

        result.records = parsed;
        execute_records(db, result.records, result.manifest.hash);
        result.verify = make_verify_input(result.records);
        result.verify.conformity_errors = conformity_errors;
        result.verify.conformity_ok = conformity_errors.empty();

        result.dot.clear();
        result.verify.messages.clear();
        if (result.verify.conformity_ok && !result.records.empty()) {
            try {
                TaskGraph graph = build_graph(result.records);
                result.dot = export_map(graph);
                result.verify.messages = assemble_messages(result.records, graph);
            } catch (const GraphError& e) {
                result.verify.conformity_ok = false;
                result.verify.conformity_errors.push_back(e.what());
            }
        }
        build_message_table(db, result.verify.messages, seed);

        result.report = verify_build(db, result.manifest.hash, result.verify);
        dump = emit_dump(db);
        break;
    }

    if (!out_dir.empty()) {
        fs::path out(out_dir);
        detail::write_file(out / "game.dump.sql", dump);
        detail::write_file(out / "manifest.json", result.manifest.dump_text());
        if (!result.dot.empty()) detail::write_file(out / "activity_map.dot", result.dot);
    }
    return result;
}

/// Reopens a built game database with its manifest, ready to play.
inline Database open_game(const std::string& db_path, const std::string& manifest_path,
                          const std::string& fallback_text = "") {
    BuildManifest manifest = BuildManifest::load(manifest_path);
    Database db(db_path);
    install_runtime(db, manifest.runtime_config(fallback_text));
    return db;
}

}  // namespace sqlab
