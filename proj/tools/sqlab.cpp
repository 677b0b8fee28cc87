#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <sqlab/game.hpp>
#include <sqlab/report.hpp>
#include <sqlab/simulation.hpp>

namespace {

void print_table(const sqlab::Table& table, std::ostream& out) {
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        out << (i ? "\t" : "") << table.columns[i];
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "\t" : "")
                << (row[i].is_null() ? "NULL" : row[i].is_text() ? row[i].as_text() : row[i].canonical());
        out << "\n";
    }
    out << "(" << table.rows.size() << " row" << (table.rows.size() == 1 ? "" : "s") << ")\n";
}

int cmd_build(const std::string& dir, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    sqlab::BuildResult result = sqlab::build_game(dir, out_dir, seed);
    std::cout << result.report.summary();
    std::cout << "tasks: " << result.records.size() << ", attempts: " << result.attempts << "\n";
    if (!out_dir.empty() && result.ok()) std::cout << "artifacts written to " << out_dir << "\n";
    return result.ok() ? 0 : 1;
}

int cmd_check(const std::string& db_path, const std::string& manifest_path) {
    sqlab::BuildManifest manifest = sqlab::BuildManifest::load(manifest_path);
    sqlab::Database db = sqlab::open_game(db_path, manifest_path);
    sqlab::CheckReport report = sqlab::verify_database(db, manifest.hash);
    std::cout << report.summary();
    return report.ok() ? 0 : 1;
}

int cmd_play(const std::string& db_path, const std::string& manifest_path,
             const std::string& log_path, const std::string& session) {
    sqlab::Database db = sqlab::open_game(db_path, manifest_path);
    std::ofstream log;
    if (!log_path.empty()) log.open(log_path, std::ios::app);
    auto append_log = [&](const char* kind, const std::string& sql,
                          std::optional<std::uint64_t> token) {
        if (!log.is_open()) return;
        sqlab::LogEntry entry;
        entry.session = session;
        entry.kind = kind;
        entry.sql = sql;
        entry.token = token;
        log << sqlab::make_log_line(entry) << "\n" << std::flush;
    };

    std::cout << "Enter a token to decrypt, SQL to execute, or 'quit'.\n";
    std::string line;
    while (std::cout << "sqlab> " << std::flush, std::getline(std::cin, line)) {
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t"));
        trimmed.erase(trimmed.find_last_not_of(" \t\r") + 1);
        if (trimmed.empty()) continue;
        if (trimmed == "quit" || trimmed == "exit" || trimmed == ".quit") break;
        try {
            if (trimmed.find_first_not_of("0123456789") == std::string::npos) {
                std::uint64_t token = std::stoull(trimmed);
                sqlab::Table result = db.query("SELECT decrypt(" + trimmed + ")");
                std::cout << result.rows.at(0).at(0).as_text() << "\n";
                append_log("decrypt", "", token);
            } else {
                sqlab::Table result = db.query(trimmed);
                print_table(result, std::cout);
                append_log("query", trimmed, std::nullopt);
            }
        } catch (const std::exception& e) {
            std::cout << "error: " << e.what() << "\n";
        }
    }
    return 0;
}

int cmd_map(const std::string& dir, const std::string& dot_path) {
    sqlab::BuildResult result = sqlab::build_game(dir);
    if (result.dot.empty()) {
        std::cerr << "the adventure graph could not be assembled\n";
        std::cerr << result.report.summary();
        return 1;
    }
    if (dot_path.empty()) {
        std::cout << result.dot;
    } else {
        std::ofstream out(dot_path, std::ios::binary);
        out << result.dot;
        std::cout << "activity map written to " << dot_path << "\n";
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& logs, const std::string& dir) {
    sqlab::BuildResult result = sqlab::build_game(dir);
    if (!result.ok()) {
        std::cerr << "the game does not build cleanly; cannot catalog its tokens\n";
        return 1;
    }
    auto catalog = sqlab::token_catalog(result.records, sqlab::build_graph(result.records));
    sqlab::ActivityReport report;
    for (const auto& path : logs) {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "cannot read log: " << path << "\n";
            return 2;
        }
        sqlab::analyze_log(in, catalog, report);
    }
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

int cmd_simulate(const std::string& plan, std::uint64_t seed, const std::string& svg_path,
                 const std::string& json_path) {
    sqlab::SimulationReport report =
        sqlab::run_simulation(sqlab::PopulationSpec::by_name(plan), seed);
    for (const auto& o : report.outcomes)
        std::cout << sqlab::sim_fn_name(o.fn) << "\t" << o.collisions << " collisions, "
                  << o.distinct << " distinct\n";
    sqlab::PairRecommendation pair = sqlab::recommend_pair(report);
    std::cout << "recommended pair: window " << sqlab::sim_fn_name(pair.fw) << ", aggregate "
              << sqlab::sim_fn_name(pair.fa) << "\n";
    if (!svg_path.empty()) {
        std::ofstream out(svg_path, std::ios::binary);
        out << sqlab::emit_svg(report);
    }
    if (!json_path.empty()) {
        std::ofstream out(json_path, std::ios::binary);
        out << report.to_json().dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sqlab: build, verify, map and play fingerprinted SQL adventures"};
    app.require_subcommand(1);

    std::string game_dir, out_dir, db_path, manifest_path, log_path, dot_path;
    std::string session = "local", plan = "full", svg_path, json_path;
    std::vector<std::string> log_files;
    std::optional<std::uint64_t> seed_override;
    std::uint64_t sim_seed = 42;

    auto* build = app.add_subcommand("build", "compile a game directory into a database");
    build->add_option("dir", game_dir, "game directory")->required();
    build->add_option("--out", out_dir, "output directory for the artifacts");
    std::uint64_t seed_value = 0;
    auto* seed_opt = build->add_option("--seed", seed_value, "override the manifest seed");

    auto* check = app.add_subcommand("check", "run the database-level checks");
    check->add_option("db", db_path, "built game database")->required();
    check->add_option("--manifest", manifest_path, "manifest.json of the build")->required();

    auto* play = app.add_subcommand("play", "interactive session against a built game");
    play->add_option("db", db_path, "built game database")->required();
    play->add_option("--manifest", manifest_path, "manifest.json of the build")->required();
    play->add_option("--log", log_path, "append JSONL activity to this file");
    play->add_option("--session", session, "session label for the log");

    auto* map = app.add_subcommand("map", "emit the activity map of a game directory");
    map->add_option("dir", game_dir, "game directory")->required();
    map->add_option("--dot", dot_path, "write the DOT graph here instead of stdout");

    auto* report = app.add_subcommand("report", "aggregate activity logs");
    report->add_option("logs", log_files, "JSONL activity logs")->required();
    report->add_option("--game", game_dir, "game directory for the token catalog")->required();

    auto* simulate = app.add_subcommand("simulate", "run the collision laboratory");
    simulate->add_option("--plan", plan, "full or reduced")
        ->check(CLI::IsMember({"full", "reduced"}));
    simulate->add_option("--seed", sim_seed, "population seed");
    simulate->add_option("--svg", svg_path, "write a bar chart here");
    simulate->add_option("--json", json_path, "write the raw report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*seed_opt) seed_override = seed_value;
        if (build->parsed()) return cmd_build(game_dir, out_dir, seed_override);
        if (check->parsed()) return cmd_check(db_path, manifest_path);
        if (play->parsed()) return cmd_play(db_path, manifest_path, log_path, session);
        if (map->parsed()) return cmd_map(game_dir, dot_path);
        if (report->parsed()) return cmd_report(log_files, game_dir);
        if (simulate->parsed()) return cmd_simulate(plan, sim_seed, svg_path, json_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
