#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nl2sql/detail/sqlite.hpp"
#include "nl2sql/detail/strings.hpp"
#include "nl2sql/errors.hpp"

namespace nl2sql {

enum class ColumnType { INTEGER, REAL, TEXT, BLOB, UNKNOWN };

inline const char* to_string(ColumnType type) {
  switch (type) {
    case ColumnType::INTEGER: return "INTEGER";
    case ColumnType::REAL: return "REAL";
    case ColumnType::TEXT: return "TEXT";
    case ColumnType::BLOB: return "BLOB";
    case ColumnType::UNKNOWN: return "UNKNOWN";
  }
  return "UNKNOWN";
}

struct ColumnDef {
  std::string name;
  ColumnType data_type = ColumnType::UNKNOWN;
  bool not_null = false;
  bool is_primary_key = false;

  bool operator==(const ColumnDef&) const = default;
};

struct ForeignKeyDef {
  std::vector<std::string> local_columns;
  std::string referenced_table;
  std::vector<std::string> referenced_columns;

  bool operator==(const ForeignKeyDef&) const = default;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;
  std::vector<std::string> primary_key;
  std::vector<ForeignKeyDef> foreign_keys;

  bool operator==(const TableDef&) const = default;

  const ColumnDef* find_column(std::string_view column_name) const {
    for (const auto& col : columns) {
      if (detail::iequals(col.name, column_name)) return &col;
    }
    return nullptr;
  }
};

struct DatabaseSchema {
  std::string db_id;
  std::vector<TableDef> tables;

  bool operator==(const DatabaseSchema&) const = default;

  const TableDef* find_table(std::string_view table_name) const {
    for (const auto& table : tables) {
      if (detail::iequals(table.name, table_name)) return &table;
    }
    return nullptr;
  }
};

// Collapses a declared type string to the five-value enum following SQLite's
// affinity rules; anything the rules leave as NUMERIC (or empty) is UNKNOWN.
inline ColumnType column_type_from_declared(std::string_view declared) {
  if (declared.empty()) return ColumnType::UNKNOWN;
  if (detail::icontains(declared, "INT")) return ColumnType::INTEGER;
  if (detail::icontains(declared, "CHAR") || detail::icontains(declared, "CLOB") ||
      detail::icontains(declared, "TEXT")) {
    return ColumnType::TEXT;
  }
  if (detail::icontains(declared, "BLOB")) return ColumnType::BLOB;
  if (detail::icontains(declared, "REAL") || detail::icontains(declared, "FLOA") ||
      detail::icontains(declared, "DOUB")) {
    return ColumnType::REAL;
  }
  return ColumnType::UNKNOWN;
}

inline DatabaseSchema introspect_schema(const std::string& db_path,
                                        const std::string& db_id) {
  detail::SqliteDb db = detail::SqliteDb::open_readonly(db_path);
  DatabaseSchema schema;
  schema.db_id = db_id;

  try {
    // sqlite_master rowid order is creation order; views and internal tables
    // are excluded.
    detail::SqliteStmt tables(db.raw(),
                              "SELECT name FROM sqlite_master WHERE type = 'table' "
                              "AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' ORDER BY rowid");
    std::vector<std::string> names;
    while (tables.step()) names.push_back(tables.column_text(0));

    for (const auto& table_name : names) {
      TableDef table;
      table.name = table_name;

      std::map<int, std::string> pk_order;
      {
        detail::SqliteStmt info(db.raw(), "PRAGMA table_info(\"" + table_name + "\")");
        while (info.step()) {
          ColumnDef col;
          col.name = info.column_text(1);
          col.data_type = column_type_from_declared(info.column_text(2));
          col.not_null = info.column_int(3) != 0;
          int pk_index = static_cast<int>(info.column_int(5));
          col.is_primary_key = pk_index > 0;
          if (pk_index > 0) pk_order[pk_index] = col.name;
          table.columns.push_back(std::move(col));
        }
      }
      for (const auto& [index, name] : pk_order) table.primary_key.push_back(name);

      {
        detail::SqliteStmt fks(db.raw(),
                               "PRAGMA foreign_key_list(\"" + table_name + "\")");
        // foreign_key_list reports constraints newest-first; collect by id and
        // emit in declaration order.
        std::map<int, ForeignKeyDef> by_id;
        while (fks.step()) {
          int id = static_cast<int>(fks.column_int(0));
          ForeignKeyDef& fk = by_id[id];
          fk.referenced_table = fks.column_text(2);
          fk.local_columns.push_back(fks.column_text(3));
          fk.referenced_columns.push_back(fks.is_null(4) ? "" : fks.column_text(4));
        }
        for (auto& [id, fk] : by_id) table.foreign_keys.push_back(std::move(fk));
      }
      schema.tables.push_back(std::move(table));
    }
  } catch (const Error& e) {
    throw CorruptCatalog("catalog introspection failed for '" + db_path +
                         "': " + e.what());
  }

  // A foreign key referencing an implicit primary key leaves the target column
  // blank; resolve it against the referenced table's primary key.
  for (auto& table : schema.tables) {
    for (auto& fk : table.foreign_keys) {
      const TableDef* ref = schema.find_table(fk.referenced_table);
      if (ref == nullptr) continue;
      for (std::size_t i = 0; i < fk.referenced_columns.size(); ++i) {
        if (fk.referenced_columns[i].empty() && i < ref->primary_key.size()) {
          fk.referenced_columns[i] = ref->primary_key[i];
        }
      }
    }
  }
  return schema;
}

namespace detail {

// Spider's tables.json uses a coarse type vocabulary; anything else goes
// through the affinity collapse.
inline ColumnType column_type_from_spider(const std::string& type) {
  std::string lower = to_lower(type);
  if (lower == "text") return ColumnType::TEXT;
  if (lower == "number") return ColumnType::REAL;
  if (lower == "boolean" || lower == "time" || lower == "others") {
    return ColumnType::UNKNOWN;
  }
  return column_type_from_declared(type);
}

}  // namespace detail

inline DatabaseSchema schema_from_tables_json(const nlohmann::json& entry) {
  const char* required[] = {"db_id", "table_names_original", "column_names_original",
                            "column_types", "primary_keys", "foreign_keys"};
  for (const char* key : required) {
    if (!entry.contains(key)) {
      throw MalformedTablesJson(std::string("tables.json entry missing key '") +
                                key + "'");
    }
  }

  DatabaseSchema schema;
  schema.db_id = entry.at("db_id").get<std::string>();
  const auto& table_names = entry.at("table_names_original");
  const auto& column_names = entry.at("column_names_original");
  const auto& column_types = entry.at("column_types");
  if (column_names.size() != column_types.size()) {
    throw MalformedTablesJson("column_names_original and column_types lengths differ");
  }

  for (const auto& name : table_names) {
    TableDef table;
    table.name = name.get<std::string>();
    schema.tables.push_back(std::move(table));
  }

  // Column index -> (table index, column name); index 0 is Spider's ( -1, "*" ).
  std::vector<std::pair<int, std::string>> columns;
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    const auto& pair = column_names.at(i);
    if (!pair.is_array() || pair.size() != 2) {
      throw MalformedTablesJson("column_names_original[" + std::to_string(i) +
                                "] is not a [table_index, name] pair");
    }
    int table_index = pair.at(0).get<int>();
    std::string column_name = pair.at(1).get<std::string>();
    columns.emplace_back(table_index, column_name);
    if (table_index < 0) continue;  // the "*" pseudo-column
    if (table_index >= static_cast<int>(schema.tables.size())) {
      throw MalformedTablesJson("column_names_original[" + std::to_string(i) +
                                "] table index out of range");
    }
    ColumnDef col;
    col.name = column_name;
    col.data_type = detail::column_type_from_spider(column_types.at(i).get<std::string>());
    schema.tables[table_index].columns.push_back(std::move(col));
  }

  auto locate = [&](int column_index) -> std::pair<int, std::string> {
    if (column_index <= 0 || column_index >= static_cast<int>(columns.size())) {
      throw MalformedTablesJson("column index " + std::to_string(column_index) +
                                " out of range");
    }
    return columns[column_index];
  };

  for (const auto& pk : entry.at("primary_keys")) {
    auto [table_index, column_name] = locate(pk.get<int>());
    TableDef& table = schema.tables[table_index];
    table.primary_key.push_back(column_name);
    for (auto& col : table.columns) {
      if (detail::iequals(col.name, column_name)) col.is_primary_key = true;
    }
  }

  for (const auto& fk : entry.at("foreign_keys")) {
    if (!fk.is_array() || fk.size() != 2) {
      throw MalformedTablesJson("foreign_keys entries must be [local, referenced] pairs");
    }
    auto [local_table, local_column] = locate(fk.at(0).get<int>());
    auto [ref_table, ref_column] = locate(fk.at(1).get<int>());
    ForeignKeyDef def;
    def.local_columns.push_back(local_column);
    def.referenced_table = schema.tables[ref_table].name;
    def.referenced_columns.push_back(ref_column);
    schema.tables[local_table].foreign_keys.push_back(std::move(def));
  }
  return schema;
}

inline std::vector<std::string> validate_schema(const DatabaseSchema& schema) {
  std::vector<std::string> violations;
  std::map<std::string, int> table_seen;
  for (const auto& table : schema.tables) {
    std::string lower = detail::to_lower(table.name);
    if (++table_seen[lower] == 2) {
      violations.push_back("duplicate table name '" + lower + "'");
    }
    if (table.name.empty()) violations.push_back("table with empty name");

    std::map<std::string, int> column_seen;
    for (const auto& col : table.columns) {
      if (col.name.empty()) {
        violations.push_back("table '" + table.name + "' has a column with empty name");
        continue;
      }
      if (++column_seen[detail::to_lower(col.name)] == 2) {
        violations.push_back("table '" + table.name + "' duplicate column '" +
                             detail::to_lower(col.name) + "'");
      }
    }
    for (const auto& pk : table.primary_key) {
      if (table.find_column(pk) == nullptr) {
        violations.push_back("table '" + table.name + "' primary key names missing column '" +
                             pk + "'");
      }
    }
    for (const auto& fk : table.foreign_keys) {
      for (const auto& local : fk.local_columns) {
        if (table.find_column(local) == nullptr) {
          violations.push_back("table '" + table.name + "' foreign key names missing column '" +
                               local + "'");
        }
      }
      const TableDef* ref = schema.find_table(fk.referenced_table);
      if (ref == nullptr) {
        violations.push_back("table '" + table.name + "' foreign key references missing table '" +
                             fk.referenced_table + "'");
        continue;
      }
      for (const auto& ref_col : fk.referenced_columns) {
        if (ref->find_column(ref_col) == nullptr) {
          violations.push_back("table '" + table.name + "' foreign key references missing column '" +
                               fk.referenced_table + "." + ref_col + "'");
        }
      }
      if (fk.local_columns.size() != fk.referenced_columns.size()) {
        violations.push_back("table '" + table.name + "' foreign key arity mismatch");
      }
    }
  }
  return violations;
}

}  // namespace nl2sql
