#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adventure.hpp"

namespace sqlab {

// ---------------------------------------------------------------------------
// Activity log lines
// ---------------------------------------------------------------------------

/// One JSONL activity line, as appended by a play session.
struct LogEntry {
    std::string ts;
    std::string session;
    std::string kind;  // "query" or "decrypt"
    std::string sql;                        // for kind == query
    std::optional<std::uint64_t> token;     // for kind == decrypt
};

inline std::string iso_timestamp(std::chrono::system_clock::time_point when =
                                     std::chrono::system_clock::now()) {
    std::time_t t = std::chrono::system_clock::to_time_t(when);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string make_log_line(const LogEntry& entry) {
    nlohmann::json j;
    j["ts"] = entry.ts.empty() ? iso_timestamp() : entry.ts;
    j["session"] = entry.session;
    j["kind"] = entry.kind;
    if (entry.kind == "decrypt" && entry.token)
        j["payload"] = *entry.token;
    else
        j["payload"] = entry.sql;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Token catalog
// ---------------------------------------------------------------------------

/// What a token unlocks, derived from the executed task records.
struct TokenInfo {
    int task_number = 0;
    enum class Kind { question, solution, variant, hint } kind = Kind::solution;
};

inline std::map<std::uint64_t, TokenInfo> token_catalog(const std::vector<TaskRecord>& records,
                                                        const TaskGraph& graph) {
    std::map<std::uint64_t, TokenInfo> catalog;
    for (const auto& node : graph.nodes)
        if (node.kind == TaskGraph::NodeKind::entry)
            catalog[static_cast<std::uint64_t>(node.task_number)] = {node.task_number,
                                                                     TokenInfo::Kind::question};
    for (const auto& task : records) {
        for (const auto& s : task.solutions)
            if (s.token) catalog.emplace(*s.token, TokenInfo{task.number, TokenInfo::Kind::solution});
        for (const auto& v : task.variants)
            if (v.token) catalog.emplace(*v.token, TokenInfo{task.number, TokenInfo::Kind::variant});
        for (const auto& h : task.hints)
            if (h.token) catalog.emplace(*h.token, TokenInfo{task.number, TokenInfo::Kind::hint});
    }
    return catalog;
}

// ---------------------------------------------------------------------------
// Log analysis
// ---------------------------------------------------------------------------

struct TaskActivity {
    int task_number = 0;
    int successes = 0;  // decrypts of a solution or variant token
    int hints = 0;      // decrypts of a hint token

    double failure_rate() const {
        int total = successes + hints;
        return total ? static_cast<double>(hints) / total : 0.0;
    }
};

struct ActivityReport {
    int lines = 0;
    int malformed = 0;
    int queries = 0;
    int decrypts = 0;
    std::map<std::uint64_t, int> token_frequency;     // every decrypted token
    std::vector<std::uint64_t> unmatched_tokens;      // sorted, deduplicated
    std::map<int, TaskActivity> per_task;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["lines"] = lines;
        j["malformed"] = malformed;
        j["queries"] = queries;
        j["decrypts"] = decrypts;
        nlohmann::json freq = nlohmann::json::object();
        for (const auto& [token, n] : token_frequency) freq[std::to_string(token)] = n;
        j["token_frequency"] = std::move(freq);
        j["unmatched_tokens"] = unmatched_tokens;
        nlohmann::json tasks = nlohmann::json::object();
        for (const auto& [number, activity] : per_task) {
            nlohmann::json t;
            t["successes"] = activity.successes;
            t["hints"] = activity.hints;
            t["failure_rate"] = activity.failure_rate();
            tasks[std::to_string(number)] = std::move(t);
        }
        j["tasks"] = std::move(tasks);
        return j;
    }
};

/// Folds one JSONL stream into the report; call repeatedly to merge several
/// log files. Malformed lines are counted, never fatal.
inline void analyze_log(std::istream& in, const std::map<std::uint64_t, TokenInfo>& catalog,
                        ActivityReport& report) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++report.lines;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("kind") || !j.contains("payload")) {
            ++report.malformed;
            continue;
        }
        std::string kind = j["kind"].is_string() ? j["kind"].get<std::string>() : "";
        if (kind == "query" && j["payload"].is_string()) {
            ++report.queries;
        } else if (kind == "decrypt" && j["payload"].is_number_unsigned()) {
            ++report.decrypts;
            std::uint64_t token = j["payload"].get<std::uint64_t>();
            ++report.token_frequency[token];
            auto it = catalog.find(token);
            if (it == catalog.end()) {
                report.unmatched_tokens.push_back(token);
                continue;
            }
            TaskActivity& activity = report.per_task[it->second.task_number];
            activity.task_number = it->second.task_number;
            switch (it->second.kind) {
            case TokenInfo::Kind::solution:
            case TokenInfo::Kind::variant: ++activity.successes; break;
            case TokenInfo::Kind::hint: ++activity.hints; break;
            case TokenInfo::Kind::question: break;  // opening a task is neutral
            }
        } else {
            ++report.malformed;
        }
    }
    std::sort(report.unmatched_tokens.begin(), report.unmatched_tokens.end());
    report.unmatched_tokens.erase(
        std::unique(report.unmatched_tokens.begin(), report.unmatched_tokens.end()),
        report.unmatched_tokens.end());
}

inline ActivityReport analyze_log(const std::string& text,
                                  const std::map<std::uint64_t, TokenInfo>& catalog) {
    ActivityReport report;
    std::istringstream in(text);
    analyze_log(in, catalog, report);
    return report;
}

}  // namespace sqlab
