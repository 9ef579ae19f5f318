#pragma once

#include <sqlite3.h>

#include <string>
#include <utility>

#include "nl2sql/errors.hpp"

namespace nl2sql::detail {

// Thin RAII wrapper around a sqlite3 connection. One wrapper per call site;
// connections are never shared between threads.
class SqliteDb {
 public:
  SqliteDb() = default;

  static SqliteDb open_readonly(const std::string& path) {
    sqlite3* raw = nullptr;
    int rc = sqlite3_open_v2(path.c_str(), &raw, SQLITE_OPEN_READONLY, nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc);
      sqlite3_close(raw);
      throw UnreadableDatabase("cannot open database '" + path + "': " + msg);
    }
    return SqliteDb(raw);
  }

  static SqliteDb open_readwrite_create(const std::string& path) {
    sqlite3* raw = nullptr;
    int rc = sqlite3_open_v2(path.c_str(), &raw,
                             SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc);
      sqlite3_close(raw);
      throw UnreadableDatabase("cannot open database '" + path + "': " + msg);
    }
    return SqliteDb(raw);
  }

  SqliteDb(SqliteDb&& other) noexcept : db_(std::exchange(other.db_, nullptr)) {}
  SqliteDb& operator=(SqliteDb&& other) noexcept {
    if (this != &other) {
      close();
      db_ = std::exchange(other.db_, nullptr);
    }
    return *this;
  }
  SqliteDb(const SqliteDb&) = delete;
  SqliteDb& operator=(const SqliteDb&) = delete;

  ~SqliteDb() { close(); }

  sqlite3* raw() const { return db_; }
  std::string errmsg() const { return db_ ? sqlite3_errmsg(db_) : "no connection"; }

  // Executes a multi-statement script. Used for fixture setup and DDL round-trips.
  void exec_script(const std::string& script) {
    char* err = nullptr;
    int rc = sqlite3_exec(db_, script.c_str(), nullptr, nullptr, &err);
    if (rc != SQLITE_OK) {
      std::string msg = err ? err : sqlite3_errstr(rc);
      sqlite3_free(err);
      throw Error("sqlite exec failed: " + msg);
    }
  }

 private:
  explicit SqliteDb(sqlite3* db) : db_(db) {}

  void close() {
    if (db_ != nullptr) {
      sqlite3_close(db_);
      db_ = nullptr;
    }
  }

  sqlite3* db_ = nullptr;
};

class SqliteStmt {
 public:
  SqliteStmt(sqlite3* db, const std::string& sql) {
    const char* tail = nullptr;
    int rc = sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, &tail);
    if (rc != SQLITE_OK) {
      throw Error(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db));
    }
  }

  SqliteStmt(const SqliteStmt&) = delete;
  SqliteStmt& operator=(const SqliteStmt&) = delete;
  ~SqliteStmt() { sqlite3_finalize(stmt_); }

  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(std::string("sqlite step failed: ") +
                sqlite3_errstr(rc));
  }

  void bind_text(int index, const std::string& value) {
    sqlite3_bind_text(stmt_, index, value.c_str(), -1, SQLITE_TRANSIENT);
  }

  bool is_null(int col) const {
    return sqlite3_column_type(stmt_, col) == SQLITE_NULL;
  }
  long long column_int(int col) const { return sqlite3_column_int64(stmt_, col); }
  std::string column_text(int col) const {
    const unsigned char* text = sqlite3_column_text(stmt_, col);
    return text ? reinterpret_cast<const char*>(text) : "";
  }

  sqlite3_stmt* raw() const { return stmt_; }

 private:
  sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace nl2sql::detail
