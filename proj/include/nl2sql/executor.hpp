#pragma once

#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "nl2sql/detail/sqlite.hpp"
#include "nl2sql/detail/strings.hpp"
#include "nl2sql/errors.hpp"

namespace nl2sql {

enum class OutcomeKind { RESULT, ERROR, TIMEOUT };
enum class ExecErrorKind { SYNTAX, NO_SUCH_TABLE, NO_SUCH_COLUMN, NON_READONLY, OTHER };

inline const char* to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::RESULT: return "RESULT";
    case OutcomeKind::ERROR: return "ERROR";
    case OutcomeKind::TIMEOUT: return "TIMEOUT";
  }
  return "ERROR";
}

inline const char* to_string(ExecErrorKind kind) {
  switch (kind) {
    case ExecErrorKind::SYNTAX: return "SYNTAX";
    case ExecErrorKind::NO_SUCH_TABLE: return "NO_SUCH_TABLE";
    case ExecErrorKind::NO_SUCH_COLUMN: return "NO_SUCH_COLUMN";
    case ExecErrorKind::NON_READONLY: return "NON_READONLY";
    case ExecErrorKind::OTHER: return "OTHER";
  }
  return "OTHER";
}

// A result cell: null, integer, real, text or blob.
using CellValue =
    std::variant<std::monostate, std::int64_t, double, std::string, std::vector<std::uint8_t>>;

struct ExecutionOutcome {
  OutcomeKind kind = OutcomeKind::ERROR;
  std::vector<std::vector<CellValue>> rows;     // RESULT only
  std::vector<std::string> column_names;        // RESULT only
  ExecErrorKind error_kind = ExecErrorKind::OTHER;  // ERROR only
  std::string message;                          // ERROR only
  std::int64_t elapsed_ms = 0;

  static ExecutionOutcome result(std::vector<std::vector<CellValue>> rows,
                                 std::vector<std::string> column_names,
                                 std::int64_t elapsed_ms) {
    ExecutionOutcome out;
    out.kind = OutcomeKind::RESULT;
    out.rows = std::move(rows);
    out.column_names = std::move(column_names);
    out.elapsed_ms = elapsed_ms;
    return out;
  }

  static ExecutionOutcome error(ExecErrorKind error_kind, std::string message,
                                std::int64_t elapsed_ms = 0) {
    ExecutionOutcome out;
    out.kind = OutcomeKind::ERROR;
    out.error_kind = error_kind;
    out.message = std::move(message);
    out.elapsed_ms = elapsed_ms;
    return out;
  }

  static ExecutionOutcome timeout(std::int64_t elapsed_ms) {
    ExecutionOutcome out;
    out.kind = OutcomeKind::TIMEOUT;
    out.elapsed_ms = elapsed_ms;
    return out;
  }
};

namespace detail {

// First SQL keyword, skipping whitespace and -- / /* */ comments.
inline std::string first_keyword(std::string_view sql) {
  std::size_t i = 0;
  while (i < sql.size()) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {
      std::size_t eol = sql.find('\n', i);
      i = eol == std::string_view::npos ? sql.size() : eol + 1;
    } else if (c == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
      std::size_t close = sql.find("*/", i + 2);
      i = close == std::string_view::npos ? sql.size() : close + 2;
    } else {
      break;
    }
  }
  std::size_t start = i;
  while (i < sql.size() && (std::isalnum(static_cast<unsigned char>(sql[i])) || sql[i] == '_')) {
    ++i;
  }
  return std::string(sql.substr(start, i - start));
}

inline ExecErrorKind classify_sqlite_error(const std::string& message) {
  if (icontains(message, "syntax error")) return ExecErrorKind::SYNTAX;
  if (icontains(message, "no such table")) return ExecErrorKind::NO_SUCH_TABLE;
  if (icontains(message, "no such column")) return ExecErrorKind::NO_SUCH_COLUMN;
  return ExecErrorKind::OTHER;
}

struct TimeoutState {
  std::chrono::steady_clock::time_point deadline;
};

inline CellValue read_cell(sqlite3_stmt* stmt, int col) {
  switch (sqlite3_column_type(stmt, col)) {
    case SQLITE_NULL:
      return std::monostate{};
    case SQLITE_INTEGER:
      return static_cast<std::int64_t>(sqlite3_column_int64(stmt, col));
    case SQLITE_FLOAT:
      return sqlite3_column_double(stmt, col);
    case SQLITE_BLOB: {
      const auto* bytes = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt, col));
      int size = sqlite3_column_bytes(stmt, col);
      return std::vector<std::uint8_t>(bytes, bytes + size);
    }
    default: {
      const unsigned char* text = sqlite3_column_text(stmt, col);
      int size = sqlite3_column_bytes(stmt, col);
      return std::string(reinterpret_cast<const char*>(text), size);
    }
  }
}

}  // namespace detail

// Runs one SELECT/WITH query on its own read-only connection. Every failure
// is encoded in the outcome; only an unreadable database file throws. The
// database bytes are never modified: anything that is not a single read-only
// SELECT/WITH statement is rejected as NON_READONLY before execution, and the
// connection itself is opened read-only as a second line of defense.
inline ExecutionOutcome execute_readonly(const std::string& db_path, const std::string& sql,
                                         std::int64_t timeout_ms = 5000) {
  auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
  };

  std::string keyword = detail::to_lower(detail::first_keyword(sql));
  if (keyword != "select" && keyword != "with") {
    return ExecutionOutcome::error(ExecErrorKind::NON_READONLY,
                                   "only SELECT/WITH queries are allowed, got '" + keyword + "'",
                                   elapsed());
  }

  detail::SqliteDb db = detail::SqliteDb::open_readonly(db_path);

  sqlite3_stmt* stmt = nullptr;
  const char* tail = nullptr;
  int rc = sqlite3_prepare_v2(db.raw(), sql.c_str(), -1, &stmt, &tail);
  if (rc != SQLITE_OK) {
    std::string message = db.errmsg();
    sqlite3_finalize(stmt);
    return ExecutionOutcome::error(detail::classify_sqlite_error(message), message, elapsed());
  }
  if (stmt == nullptr) {
    return ExecutionOutcome::error(ExecErrorKind::OTHER, "empty statement", elapsed());
  }

  std::string rest = tail ? detail::first_keyword(tail) : "";
  if (!rest.empty()) {
    sqlite3_finalize(stmt);
    return ExecutionOutcome::error(ExecErrorKind::NON_READONLY,
                                   "multi-statement input rejected", elapsed());
  }
  if (sqlite3_stmt_readonly(stmt) == 0) {
    sqlite3_finalize(stmt);
    return ExecutionOutcome::error(ExecErrorKind::NON_READONLY,
                                   "statement would modify the database", elapsed());
  }

  detail::TimeoutState timeout_state{start + std::chrono::milliseconds(timeout_ms)};
  sqlite3_progress_handler(
      db.raw(), 500,
      [](void* opaque) -> int {
        auto* state = static_cast<detail::TimeoutState*>(opaque);
        return std::chrono::steady_clock::now() > state->deadline ? 1 : 0;
      },
      &timeout_state);

  int column_count = sqlite3_column_count(stmt);
  std::vector<std::string> column_names;
  column_names.reserve(column_count);
  for (int i = 0; i < column_count; ++i) {
    const char* name = sqlite3_column_name(stmt, i);
    column_names.emplace_back(name ? name : "");
  }

  std::vector<std::vector<CellValue>> rows;
  while (true) {
    rc = sqlite3_step(stmt);
    if (rc == SQLITE_ROW) {
      std::vector<CellValue> row;
      row.reserve(column_count);
      for (int i = 0; i < column_count; ++i) row.push_back(detail::read_cell(stmt, i));
      rows.push_back(std::move(row));
      continue;
    }
    if (rc == SQLITE_DONE) break;
    std::string message = db.errmsg();
    sqlite3_finalize(stmt);
    if (rc == SQLITE_INTERRUPT || icontains(message, "interrupted")) {
      return ExecutionOutcome::timeout(elapsed());
    }
    return ExecutionOutcome::error(detail::classify_sqlite_error(message), message, elapsed());
  }
  sqlite3_finalize(stmt);
  return ExecutionOutcome::result(std::move(rows), std::move(column_names), elapsed());
}

namespace detail {

inline bool numeric_cell(const CellValue& value, double& out) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) {
    out = static_cast<double>(*i);
    return true;
  }
  if (const auto* d = std::get_if<double>(&value)) {
    out = *d;
    return true;
  }
  return false;
}

// Numeric values compare by value at 1e-6 relative tolerance (with a small
// absolute floor near zero), so integer 3 equals real 3.0.
inline bool cells_equal(const CellValue& a, const CellValue& b) {
  double x = 0, y = 0;
  if (numeric_cell(a, x) && numeric_cell(b, y)) {
    double scale = std::max(std::abs(x), std::abs(y));
    return std::abs(x - y) <= std::max(1e-6 * scale, 1e-12);
  }
  return a == b;
}

inline bool rows_equal(const std::vector<CellValue>& a, const std::vector<CellValue>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!cells_equal(a[i], b[i])) return false;
  }
  return true;
}

// Total order used to canonicalize row multisets before pairwise comparison:
// null < numeric < text < blob, numerics by value.
inline bool cell_less(const CellValue& a, const CellValue& b) {
  auto rank = [](const CellValue& v) {
    if (std::holds_alternative<std::monostate>(v)) return 0;
    if (std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v)) return 1;
    if (std::holds_alternative<std::string>(v)) return 2;
    return 3;
  };
  int ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb;
  switch (ra) {
    case 1: {
      double x = 0, y = 0;
      numeric_cell(a, x);
      numeric_cell(b, y);
      return x < y;
    }
    case 2:
      return std::get<std::string>(a) < std::get<std::string>(b);
    case 3:
      return std::get<std::vector<std::uint8_t>>(a) < std::get<std::vector<std::uint8_t>>(b);
    default:
      return false;
  }
}

inline bool row_less(const std::vector<CellValue>& a, const std::vector<CellValue>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), cell_less);
}

}  // namespace detail

// Execution-accuracy comparison of two RESULT outcomes. Column names are
// ignored; arity must match. Row order matters only when order_sensitive.
inline bool compare_results(const ExecutionOutcome& predicted, const ExecutionOutcome& gold,
                            bool order_sensitive) {
  if (predicted.kind != OutcomeKind::RESULT || gold.kind != OutcomeKind::RESULT) return false;
  if (predicted.column_names.size() != gold.column_names.size()) return false;
  if (predicted.rows.size() != gold.rows.size()) return false;

  if (order_sensitive) {
    for (std::size_t i = 0; i < predicted.rows.size(); ++i) {
      if (!detail::rows_equal(predicted.rows[i], gold.rows[i])) return false;
    }
    return true;
  }

  auto lhs = predicted.rows;
  auto rhs = gold.rows;
  std::sort(lhs.begin(), lhs.end(), detail::row_less);
  std::sort(rhs.begin(), rhs.end(), detail::row_less);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (!detail::rows_equal(lhs[i], rhs[i])) return false;
  }
  return true;
}

}  // namespace nl2sql
