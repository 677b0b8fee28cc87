#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <sqlite3.h>

#include "crypto.hpp"
#include "formula.hpp"
#include "hash.hpp"
#include "value.hpp"

namespace sqlab {

class EngineError : public std::runtime_error {
public:
    explicit EngineError(const std::string& what) : std::runtime_error(what) {}
};

struct Table {
    std::vector<std::string> columns;
    std::vector<Row> rows;

    std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        return std::nullopt;
    }
};

inline std::int64_t to_engine_int(std::uint64_t v) { return static_cast<std::int64_t>(v); }
inline std::uint64_t from_engine_int(std::int64_t v) { return static_cast<std::uint64_t>(v); }

/// What install_runtime needs to register every SQL-visible function.
struct RuntimeConfig {
    HashConfig hash;
    std::map<int, std::uint64_t> salt_y;  // task number -> Y constant
    std::string fallback_text = "No message matches this token. Check your query and try again.";
};

/// RAII connection to the embedded engine.
class Database {
public:
    explicit Database(const std::string& path = ":memory:") {
        if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
            std::string msg = db_ ? sqlite3_errmsg(db_) : "cannot open database";
            sqlite3_close(db_);
            throw EngineError(msg);
        }
        sqlite3_extended_result_codes(db_, 1);
    }

    Database(const Database&) = delete;
    Database& operator=(const Database&) = delete;
    Database(Database&& other) noexcept : db_(other.db_) { other.db_ = nullptr; }

    ~Database() {
        if (db_) sqlite3_close_v2(db_);
    }

    sqlite3* handle() const { return db_; }

    void exec(const std::string& sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : sqlite3_errmsg(db_);
            sqlite3_free(err);
            throw EngineError(msg);
        }
    }

    Table query(const std::string& sql) const {
        sqlite3_stmt* stmt = nullptr;
        if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK)
            throw EngineError(sqlite3_errmsg(db_));
        Table out;
        int ncol = sqlite3_column_count(stmt);
        for (int i = 0; i < ncol; ++i) {
            const char* name = sqlite3_column_name(stmt, i);
            out.columns.push_back(name ? name : "");
        }
        int rc;
        while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
            Row row;
            row.reserve(static_cast<std::size_t>(ncol));
            for (int i = 0; i < ncol; ++i) row.push_back(column_value(stmt, i));
            out.rows.push_back(std::move(row));
        }
        if (rc != SQLITE_DONE) {
            std::string msg = sqlite3_errmsg(db_);
            sqlite3_finalize(stmt);
            throw EngineError(msg);
        }
        sqlite3_finalize(stmt);
        return out;
    }

    static Value column_value(sqlite3_stmt* stmt, int i) {
        switch (sqlite3_column_type(stmt, i)) {
        case SQLITE_NULL: return Value::null();
        case SQLITE_INTEGER: return Value(static_cast<std::int64_t>(sqlite3_column_int64(stmt, i)));
        case SQLITE_FLOAT: return Value(sqlite3_column_double(stmt, i));
        default: {
            const unsigned char* text = sqlite3_column_text(stmt, i);
            return Value(std::string(reinterpret_cast<const char*>(text),
                                     static_cast<std::size_t>(sqlite3_column_bytes(stmt, i))));
        }
        }
    }

    static Value argument_value(sqlite3_value* arg) {
        switch (sqlite3_value_type(arg)) {
        case SQLITE_NULL: return Value::null();
        case SQLITE_INTEGER: return Value(static_cast<std::int64_t>(sqlite3_value_int64(arg)));
        case SQLITE_FLOAT: return Value(sqlite3_value_double(arg));
        default: {
            const unsigned char* text = sqlite3_value_text(arg);
            return Value(std::string(reinterpret_cast<const char*>(text),
                                     static_cast<std::size_t>(sqlite3_value_bytes(arg))));
        }
        }
    }

private:
    sqlite3* db_ = nullptr;
};

namespace udf {

struct HashCtx {
    HashConfig cfg;
};

struct SaltCtx {
    std::uint64_t y;
    std::uint64_t coalesce_constant;
};

struct DecryptCtx {
    sqlite3* db;
    std::string fallback;
};

inline void nn_func(sqlite3_context* ctx, int, sqlite3_value** argv) {
    auto* h = static_cast<HashCtx*>(sqlite3_user_data(ctx));
    if (sqlite3_value_type(argv[0]) == SQLITE_NULL)
        sqlite3_result_int64(ctx, to_engine_int(h->cfg.coalesce_constant));
    else
        sqlite3_result_int64(ctx, sqlite3_value_int64(argv[0]));
}

inline void string_hash_func(sqlite3_context* ctx, int, sqlite3_value** argv) {
    auto* h = static_cast<HashCtx*>(sqlite3_user_data(ctx));
    if (sqlite3_value_type(argv[0]) == SQLITE_NULL) {
        sqlite3_result_null(ctx);
        return;
    }
    const unsigned char* text = sqlite3_value_text(argv[0]);
    std::string_view sv(reinterpret_cast<const char*>(text),
                        static_cast<std::size_t>(sqlite3_value_bytes(argv[0])));
    sqlite3_result_int64(ctx, to_engine_int(string_hash(sv, h->cfg)));
}

inline void salt_func(sqlite3_context* ctx, int, sqlite3_value** argv) {
    auto* s = static_cast<SaltCtx*>(sqlite3_user_data(ctx));
    std::uint64_t x = sqlite3_value_type(argv[0]) == SQLITE_NULL
                          ? s->coalesce_constant
                          : from_engine_int(sqlite3_value_int64(argv[0]));
    sqlite3_result_int64(ctx, to_engine_int(x ^ s->y));
}

/// Row hash over raw column values: the canonical serialization lives in C++
/// so triggers, the builder and the oracles agree byte for byte.
inline void row_hash_func(sqlite3_context* ctx, int argc, sqlite3_value** argv) {
    auto* h = static_cast<HashCtx*>(sqlite3_user_data(ctx));
    if (argc < 1 || sqlite3_value_type(argv[0]) != SQLITE_TEXT) {
        sqlite3_result_error(ctx, "sqlab_row_hash: first argument must be the table name", -1);
        return;
    }
    std::string table(reinterpret_cast<const char*>(sqlite3_value_text(argv[0])));
    std::vector<Value> values;
    values.reserve(static_cast<std::size_t>(argc - 1));
    for (int i = 1; i < argc; ++i) values.push_back(Database::argument_value(argv[i]));
    sqlite3_result_int64(ctx, to_engine_int(row_hash(table, values, h->cfg)));
}

inline void decrypt_func(sqlite3_context* ctx, int, sqlite3_value** argv) {
    auto* d = static_cast<DecryptCtx*>(sqlite3_user_data(ctx));
    std::uint64_t token = from_engine_int(sqlite3_value_int64(argv[0]));
    sqlite3_stmt* stmt = nullptr;
    std::string found;
    bool has_found = false;
    if (sqlite3_prepare_v2(d->db, "SELECT msg FROM sqlab_msg", -1, &stmt, nullptr) == SQLITE_OK) {
        while (sqlite3_step(stmt) == SQLITE_ROW) {
            const unsigned char* hex = sqlite3_column_text(stmt, 0);
            if (!hex) continue;
            auto raw = hex_decode(reinterpret_cast<const char*>(hex));
            if (!raw) continue;
            auto env = CipherEnvelope::from_bytes(*raw);
            if (!env) continue;
            if (auto msg = decrypt_probe(token, *env)) {
                found = *msg;
                has_found = true;
                break;
            }
        }
    }
    sqlite3_finalize(stmt);
    if (has_found)
        sqlite3_result_text(ctx, found.c_str(), -1, SQLITE_TRANSIENT);
    else
        sqlite3_result_text(ctx, d->fallback.c_str(), -1, SQLITE_TRANSIENT);
}

// Invertible combining aggregates, registered both as group aggregates and as
// window functions (the inverse makes them usable with any frame).
struct CombineState {
    std::uint64_t acc = 0;
    std::int64_t n = 0;  // count of non-NULL inputs; all-NULL yields NULL like built-ins
};

template <bool kMix>
inline void combine_step(sqlite3_context* ctx, int, sqlite3_value** argv) {
    if (sqlite3_value_type(argv[0]) == SQLITE_NULL) return;
    auto* st = static_cast<CombineState*>(sqlite3_aggregate_context(ctx, sizeof(CombineState)));
    std::uint64_t x = from_engine_int(sqlite3_value_int64(argv[0]));
    if constexpr (kMix)
        st->acc += checksum_mix(x);
    else
        st->acc ^= x;
    ++st->n;
}

template <bool kMix>
inline void combine_inverse(sqlite3_context* ctx, int, sqlite3_value** argv) {
    if (sqlite3_value_type(argv[0]) == SQLITE_NULL) return;
    auto* st = static_cast<CombineState*>(sqlite3_aggregate_context(ctx, sizeof(CombineState)));
    std::uint64_t x = from_engine_int(sqlite3_value_int64(argv[0]));
    if constexpr (kMix)
        st->acc -= checksum_mix(x);
    else
        st->acc ^= x;
    --st->n;
}

inline void combine_value(sqlite3_context* ctx) {
    auto* st = static_cast<CombineState*>(sqlite3_aggregate_context(ctx, sizeof(CombineState)));
    if (st->n == 0)
        sqlite3_result_null(ctx);
    else
        sqlite3_result_int64(ctx, to_engine_int(st->acc));
}

// Order-canonicalized per-group serialization used by the starring of
// aggregation queries (the vectorized null-preserving concatenation).
struct SortedListState {
    std::vector<std::string>* items = nullptr;
};

inline void sorted_list_step(sqlite3_context* ctx, int, sqlite3_value** argv) {
    auto* st = static_cast<SortedListState*>(sqlite3_aggregate_context(ctx, sizeof(SortedListState)));
    if (!st->items) st->items = new std::vector<std::string>();
    st->items->push_back(Database::argument_value(argv[0]).canonical());
}

inline void sorted_list_final(sqlite3_context* ctx) {
    auto* st = static_cast<SortedListState*>(sqlite3_aggregate_context(ctx, sizeof(SortedListState)));
    std::string out = "[";
    if (st && st->items) {
        std::sort(st->items->begin(), st->items->end());
        for (std::size_t i = 0; i < st->items->size(); ++i) {
            if (i) out += ',';
            out += (*st->items)[i];
        }
        delete st->items;
        st->items = nullptr;
    }
    out += ']';
    sqlite3_result_text(ctx, out.c_str(), -1, SQLITE_TRANSIENT);
}

}  // namespace udf

/// Registers nn, string_hash, sqlab_row_hash, every salt_ddd of the manifest,
/// decrypt, and the combining aggregates, on this connection.
inline void install_runtime(Database& db, const RuntimeConfig& config) {
    config.hash.validate();
    sqlite3* h = db.handle();
    auto check = [&](int rc) {
        if (rc != SQLITE_OK) throw EngineError(sqlite3_errmsg(h));
    };
    auto* hash_ctx = new udf::HashCtx{config.hash};
    auto destroy_hash = [](void* p) { delete static_cast<udf::HashCtx*>(p); };
    // One owner for the shared hash context; the other registrations borrow it.
    check(sqlite3_create_function_v2(h, "nn", 1, SQLITE_UTF8 | SQLITE_DETERMINISTIC, hash_ctx,
                                     udf::nn_func, nullptr, nullptr, destroy_hash));
    check(sqlite3_create_function_v2(h, "string_hash", 1, SQLITE_UTF8 | SQLITE_DETERMINISTIC,
                                     hash_ctx, udf::string_hash_func, nullptr, nullptr, nullptr));
    check(sqlite3_create_function_v2(h, "sqlab_row_hash", -1, SQLITE_UTF8 | SQLITE_DETERMINISTIC,
                                     hash_ctx, udf::row_hash_func, nullptr, nullptr, nullptr));
    for (const auto& [number, y] : config.salt_y) {
        auto* salt_ctx = new udf::SaltCtx{y, config.hash.coalesce_constant};
        check(sqlite3_create_function_v2(
            h, salt_name(number).c_str(), 1, SQLITE_UTF8 | SQLITE_DETERMINISTIC, salt_ctx,
            udf::salt_func, nullptr, nullptr, [](void* p) { delete static_cast<udf::SaltCtx*>(p); }));
    }
    auto* decrypt_ctx = new udf::DecryptCtx{h, config.fallback_text};
    check(sqlite3_create_function_v2(h, "decrypt", 1, SQLITE_UTF8, decrypt_ctx, udf::decrypt_func,
                                     nullptr, nullptr,
                                     [](void* p) { delete static_cast<udf::DecryptCtx*>(p); }));
    check(sqlite3_create_window_function(h, "bit_xor", 1, SQLITE_UTF8, nullptr,
                                         udf::combine_step<false>, udf::combine_value,
                                         udf::combine_value, udf::combine_inverse<false>, nullptr));
    check(sqlite3_create_window_function(h, "checksum_agg", 1, SQLITE_UTF8, nullptr,
                                         udf::combine_step<true>, udf::combine_value,
                                         udf::combine_value, udf::combine_inverse<true>, nullptr));
    check(sqlite3_create_function_v2(h, "sqlab_sorted_list", 1, SQLITE_UTF8, nullptr, nullptr,
                                     udf::sorted_list_step, udf::sorted_list_final, nullptr));
}

}  // namespace sqlab
