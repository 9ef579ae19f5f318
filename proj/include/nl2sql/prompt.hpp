#pragma once

#include <string>
#include <vector>

#include "nl2sql/errors.hpp"
#include "nl2sql/schema.hpp"

namespace nl2sql {

enum class SchemaStyle { DDL, COMPACT };

inline constexpr const char* kTaskPreamble =
    "Write a SQL query that answers the question using only the schema below. "
    "Output SQL only.";

struct PromptAttempt {
  std::string sql;
  std::string error_message;

  bool operator==(const PromptAttempt&) const = default;
};

// A structured prompt. `rendered` is always the byte-exact function of the
// other fields; re-rendering reproduces it.
struct PromptEnvelope {
  std::string preamble;
  std::string schema_block;
  std::string question;
  std::vector<PromptAttempt> attempts;
  std::string rendered;

  bool operator==(const PromptEnvelope&) const = default;
};

namespace detail {

inline bool needs_quoting(const std::string& identifier) {
  if (identifier.empty()) return true;
  if (!std::isalpha(static_cast<unsigned char>(identifier[0])) && identifier[0] != '_') {
    return true;
  }
  for (char c : identifier) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return true;
  }
  return false;
}

inline std::string quote_identifier(const std::string& identifier) {
  if (!needs_quoting(identifier)) return identifier;
  std::string quoted = "\"";
  for (char c : identifier) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace detail

// DDL style: one CREATE TABLE statement per line, columns in declaration
// order. COMPACT style: `table(col1, col2, ...)` per line. No trailing
// newline; the prompt template supplies it.
inline std::string serialize_schema(const DatabaseSchema& schema, SchemaStyle style) {
  auto violations = validate_schema(schema);
  if (!violations.empty()) {
    throw InvalidSchema("schema '" + schema.db_id + "' is invalid: " + violations.front());
  }

  std::vector<std::string> lines;
  for (const auto& table : schema.tables) {
    if (style == SchemaStyle::COMPACT) {
      std::vector<std::string> cols;
      for (const auto& col : table.columns) cols.push_back(col.name);
      lines.push_back(table.name + "(" + detail::join(cols, ", ") + ")");
      continue;
    }

    bool inline_pk = table.primary_key.size() == 1;
    std::vector<std::string> parts;
    for (const auto& col : table.columns) {
      std::string part = detail::quote_identifier(col.name);
      if (col.data_type != ColumnType::UNKNOWN) {
        part += std::string(" ") + to_string(col.data_type);
      }
      if (inline_pk && col.is_primary_key) part += " PRIMARY KEY";
      if (col.not_null) part += " NOT NULL";
      parts.push_back(std::move(part));
    }
    if (table.primary_key.size() > 1) {
      std::vector<std::string> pk;
      for (const auto& name : table.primary_key) pk.push_back(detail::quote_identifier(name));
      parts.push_back("PRIMARY KEY (" + detail::join(pk, ", ") + ")");
    }
    for (const auto& fk : table.foreign_keys) {
      std::vector<std::string> local, referenced;
      for (const auto& name : fk.local_columns) local.push_back(detail::quote_identifier(name));
      for (const auto& name : fk.referenced_columns) {
        referenced.push_back(detail::quote_identifier(name));
      }
      parts.push_back("FOREIGN KEY (" + detail::join(local, ", ") + ") REFERENCES " +
                      detail::quote_identifier(fk.referenced_table) + "(" +
                      detail::join(referenced, ", ") + ")");
    }
    lines.push_back("CREATE TABLE " + detail::quote_identifier(table.name) + " (" +
                    detail::join(parts, ", ") + ");");
  }
  return detail::join(lines, "\n");
}

inline std::string render_prompt(const std::string& preamble,
                                 const std::string& schema_block,
                                 const std::string& question,
                                 const std::vector<PromptAttempt>& attempts) {
  std::string out;
  out += "### Task\n";
  out += preamble;
  out += "\n### Schema\n";
  out += schema_block;
  out += "\n### Question\n";
  out += question;
  out += "\n";
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    out += "### Previous attempt " + std::to_string(i + 1) + "\n";
    out += attempts[i].sql;
    out += "\n### Error\n";
    out += attempts[i].error_message;
    out += "\n";
  }
  if (!attempts.empty()) {
    out += "### Instructions\nRevise the SQL to fix the error. Output SQL only.\n";
  }
  out += "### SQL\n";
  return out;
}

inline PromptEnvelope build_initial_prompt(const DatabaseSchema& schema,
                                           const std::string& question,
                                           SchemaStyle style = SchemaStyle::DDL) {
  if (question.empty()) throw Error("question must be non-empty");
  PromptEnvelope envelope;
  envelope.preamble = kTaskPreamble;
  envelope.schema_block = serialize_schema(schema, style);
  envelope.question = question;
  envelope.rendered = render_prompt(envelope.preamble, envelope.schema_block,
                                    envelope.question, envelope.attempts);
  return envelope;
}

inline PromptEnvelope build_repair_prompt(const PromptEnvelope& base,
                                          const std::string& failed_sql,
                                          const std::string& error_message) {
  if (failed_sql.empty() || error_message.empty()) {
    throw EmptyFeedback("repair prompts need a failed SQL and an error message");
  }
  PromptEnvelope envelope = base;
  envelope.attempts.push_back({failed_sql, error_message});
  envelope.rendered = render_prompt(envelope.preamble, envelope.schema_block,
                                    envelope.question, envelope.attempts);
  return envelope;
}

}  // namespace nl2sql
