#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nl2sql/detail/strings.hpp"
#include "nl2sql/errors.hpp"
#include "nl2sql/schema.hpp"

// Canonical clause-component decomposition of a SELECT query, the structure
// Exact Set Match compares. The grammar covers the Spider-style subset:
// aggregates and DISTINCT in the select list, inner joins (explicit JOIN..ON
// and comma+WHERE equality), WHERE / GROUP BY / HAVING / ORDER BY / LIMIT,
// UNION / INTERSECT / EXCEPT, and scalar / IN / EXISTS subqueries. Aliases
// are resolved back to original table names and every column ref ends up
// fully qualified, so the components are invariant under aliasing and
// clause-order permutation.

namespace nl2sql {

enum class Aggregate { NONE, COUNT, SUM, AVG, MIN, MAX };
enum class ValueMode { EXACT, IGNORE };
enum class SetOperator { UNION, INTERSECT, EXCEPT };
enum class Difficulty { EASY, MEDIUM, HARD };

inline const char* to_string(Aggregate agg) {
  switch (agg) {
    case Aggregate::NONE: return "none";
    case Aggregate::COUNT: return "count";
    case Aggregate::SUM: return "sum";
    case Aggregate::AVG: return "avg";
    case Aggregate::MIN: return "min";
    case Aggregate::MAX: return "max";
  }
  return "none";
}

inline const char* to_string(SetOperator op) {
  switch (op) {
    case SetOperator::UNION: return "union";
    case SetOperator::INTERSECT: return "intersect";
    case SetOperator::EXCEPT: return "except";
  }
  return "union";
}

inline const char* to_string(Difficulty level) {
  switch (level) {
    case Difficulty::EASY: return "easy";
    case Difficulty::MEDIUM: return "medium";
    case Difficulty::HARD: return "hard";
  }
  return "easy";
}

struct ColumnRef {
  std::string table;   // resolved original table name, lowercase
  std::string column;  // lowercase; "*" for star units

  bool operator==(const ColumnRef&) const = default;
};

struct SelectUnit {
  Aggregate agg = Aggregate::NONE;
  bool star = false;
  ColumnRef col;

  bool operator==(const SelectUnit&) const = default;
};

struct QueryComponents;

struct Operand {
  enum class Kind { COLUMN, VALUE, LITERAL, SUBQUERY };
  Kind kind = Kind::VALUE;
  ColumnRef col;                                   // COLUMN
  std::string text;                                // LITERAL
  std::shared_ptr<const QueryComponents> subquery;  // SUBQUERY
};

struct Predicate {
  std::optional<SelectUnit> lhs;  // absent for EXISTS
  std::string op;                 // =, !=, <, >, <=, >=, like, in, between, exists
  bool negated = false;
  std::vector<Operand> operands;  // one; two for between
};

struct JoinCondition {
  ColumnRef left, right;  // normalized so left <= right

  bool operator==(const JoinCondition&) const = default;
};

struct OrderItem {
  SelectUnit unit;
  bool ascending = true;

  bool operator==(const OrderItem&) const = default;
};

struct QueryComponents {
  bool select_distinct = false;
  std::vector<SelectUnit> select_units;         // set
  std::vector<std::string> from_tables;         // set
  std::vector<JoinCondition> join_conditions;   // set
  std::vector<Predicate> where;                 // set
  std::vector<std::string> where_connectives;   // multiset of and/or
  std::vector<ColumnRef> group_by;              // set
  std::vector<Predicate> having;                // set
  std::vector<std::string> having_connectives;  // multiset
  std::vector<OrderItem> order_by;              // ordered list
  std::optional<std::string> limit;             // digits, or "value" under IGNORE
  std::optional<SetOperator> set_op;
  std::shared_ptr<const QueryComponents> set_operand;

  int subquery_count() const {
    int count = 0;
    for (const auto* clause : {&where, &having}) {
      for (const auto& pred : *clause) {
        for (const auto& operand : pred.operands) {
          if (operand.kind == Operand::Kind::SUBQUERY) ++count;
        }
      }
    }
    return count;
  }

  int select_aggregate_count() const {
    int count = 0;
    for (const auto& unit : select_units) {
      if (unit.agg != Aggregate::NONE) ++count;
    }
    return count;
  }
};

// ---------------------------------------------------------------------------
// Structural equality (recursive through subqueries and set operands).

inline bool components_equal(const QueryComponents& a, const QueryComponents& b);

inline bool operand_equal(const Operand& a, const Operand& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Operand::Kind::COLUMN: return a.col == b.col;
    case Operand::Kind::VALUE: return true;
    case Operand::Kind::LITERAL: return a.text == b.text;
    case Operand::Kind::SUBQUERY: return components_equal(*a.subquery, *b.subquery);
  }
  return false;
}

inline bool predicate_equal(const Predicate& a, const Predicate& b) {
  if (a.lhs != b.lhs || a.op != b.op || a.negated != b.negated) return false;
  if (a.operands.size() != b.operands.size()) return false;
  for (std::size_t i = 0; i < a.operands.size(); ++i) {
    if (!operand_equal(a.operands[i], b.operands[i])) return false;
  }
  return true;
}

inline bool predicates_equal(const std::vector<Predicate>& a, const std::vector<Predicate>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!predicate_equal(a[i], b[i])) return false;
  }
  return true;
}

inline bool components_equal(const QueryComponents& a, const QueryComponents& b) {
  if (a.select_distinct != b.select_distinct) return false;
  if (a.select_units != b.select_units) return false;
  if (a.from_tables != b.from_tables) return false;
  if (a.join_conditions != b.join_conditions) return false;
  if (!predicates_equal(a.where, b.where)) return false;
  if (a.where_connectives != b.where_connectives) return false;
  if (a.group_by != b.group_by) return false;
  if (!predicates_equal(a.having, b.having)) return false;
  if (a.having_connectives != b.having_connectives) return false;
  if (a.order_by != b.order_by) return false;
  if (a.limit != b.limit) return false;
  if (a.set_op != b.set_op) return false;
  if (a.set_op.has_value()) return components_equal(*a.set_operand, *b.set_operand);
  return true;
}

// True iff every clause field matches: sets as sets, order_by as an ordered
// list, set operands and subqueries recursively.
inline bool exact_set_match(const QueryComponents& pred, const QueryComponents& gold) {
  return components_equal(pred, gold);
}

// ---------------------------------------------------------------------------
// Canonical ordering keys. Used only to sort the set-valued clauses into a
// stable order at construction time; equality stays structural.

namespace detail {

inline std::string key_of(const ColumnRef& col) { return col.table + "." + col.column; }

inline std::string key_of(const SelectUnit& unit) {
  std::string inner = unit.star
                          ? (unit.col.table.empty() ? "*" : unit.col.table + ".*")
                          : key_of(unit.col);
  if (unit.agg == Aggregate::NONE) return inner;
  return std::string(to_string(unit.agg)) + "(" + inner + ")";
}

inline std::string key_of(const QueryComponents& q);

inline std::string key_of(const Operand& operand) {
  switch (operand.kind) {
    case Operand::Kind::COLUMN: return "c:" + key_of(operand.col);
    case Operand::Kind::VALUE: return "v:?";
    case Operand::Kind::LITERAL: return "l:" + operand.text;
    case Operand::Kind::SUBQUERY: return "q:{" + key_of(*operand.subquery) + "}";
  }
  return "v:?";
}

inline std::string key_of(const Predicate& pred) {
  std::string key = pred.negated ? "not " : "";
  key += pred.lhs.has_value() ? key_of(*pred.lhs) : "";
  key += " " + pred.op;
  for (const auto& operand : pred.operands) key += " " + key_of(operand);
  return key;
}

inline std::string key_of(const JoinCondition& join) {
  return key_of(join.left) + "=" + key_of(join.right);
}

inline std::string key_of(const OrderItem& item) {
  return key_of(item.unit) + (item.ascending ? " asc" : " desc");
}

inline std::string key_of(const std::string& s) { return s; }

inline std::string key_of(const QueryComponents& q) {
  std::string key = q.select_distinct ? "distinct|" : "|";
  auto append = [&key](const auto& vec) {
    for (const auto& element : vec) key += key_of(element) + ",";
    key += "|";
  };
  append(q.select_units);
  append(q.from_tables);
  append(q.join_conditions);
  append(q.where);
  append(q.where_connectives);
  append(q.group_by);
  append(q.having);
  append(q.having_connectives);
  append(q.order_by);
  key += q.limit.value_or("") + "|";
  if (q.set_op.has_value()) {
    key += std::string(to_string(*q.set_op)) + "{" + key_of(*q.set_operand) + "}";
  }
  return key;
}

template <typename T>
void sort_unique_by_key(std::vector<T>& vec) {
  std::sort(vec.begin(), vec.end(),
            [](const T& a, const T& b) { return key_of(a) < key_of(b); });
  vec.erase(std::unique(vec.begin(), vec.end(),
                        [](const T& a, const T& b) { return key_of(a) == key_of(b); }),
            vec.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Difficulty stratification. Structural score over the top-level components.

inline int difficulty_score(const QueryComponents& q) {
  int score = static_cast<int>(q.join_conditions.size());
  if (q.where.size() > 1) ++score;
  if (!q.group_by.empty()) ++score;
  if (!q.having.empty()) ++score;
  if (!q.order_by.empty()) ++score;
  score += q.subquery_count();
  if (q.set_op.has_value()) score += 2;
  if (q.select_aggregate_count() > 1) ++score;
  return score;
}

inline Difficulty classify_difficulty(const QueryComponents& q) {
  int score = difficulty_score(q);
  if (score <= 1) return Difficulty::EASY;
  if (score <= 3) return Difficulty::MEDIUM;
  return Difficulty::HARD;
}

// ---------------------------------------------------------------------------
// Lexer.

namespace detail {

enum class TokKind { IDENT, NUMBER, STRING, PUNCT, END };

struct Token {
  TokKind kind = TokKind::END;
  std::string text;   // raw text (unquoted content for quoted identifiers/strings)
  std::string lower;  // lowercase of text, for keyword checks
  std::size_t pos = 0;
  bool quoted = false;
};

inline std::vector<Token> lex_sql(std::string_view sql) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  auto push = [&](TokKind kind, std::string text, std::size_t pos, bool quoted = false) {
    Token token;
    token.kind = kind;
    token.lower = to_lower(text);
    token.text = std::move(text);
    token.pos = pos;
    token.quoted = quoted;
    tokens.push_back(std::move(token));
  };

  while (i < sql.size()) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {
      std::size_t eol = sql.find('\n', i);
      i = eol == std::string_view::npos ? sql.size() : eol + 1;
      continue;
    }
    if (c == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
      std::size_t close = sql.find("*/", i + 2);
      if (close == std::string_view::npos) throw ParseFailure("unterminated comment", i);
      i = close + 2;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = i;
      while (i < sql.size() &&
             (std::isalnum(static_cast<unsigned char>(sql[i])) || sql[i] == '_')) {
        ++i;
      }
      push(TokKind::IDENT, std::string(sql.substr(start, i - start)), start);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      std::size_t start = i;
      bool seen_dot = false;
      while (i < sql.size() &&
             (std::isdigit(static_cast<unsigned char>(sql[i])) || (sql[i] == '.' && !seen_dot))) {
        if (sql[i] == '.') seen_dot = true;
        ++i;
      }
      push(TokKind::NUMBER, std::string(sql.substr(start, i - start)), start);
      continue;
    }
    if (c == '\'') {
      std::size_t start = i++;
      std::string content;
      while (true) {
        if (i >= sql.size()) throw ParseFailure("unterminated string literal", start);
        if (sql[i] == '\'') {
          if (i + 1 < sql.size() && sql[i + 1] == '\'') {
            content += '\'';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        content += sql[i++];
      }
      push(TokKind::STRING, std::move(content), start);
      continue;
    }
    if (c == '"' || c == '`' || c == '[') {
      char closer = c == '[' ? ']' : c;
      std::size_t start = i++;
      std::string content;
      while (true) {
        if (i >= sql.size()) throw ParseFailure("unterminated quoted identifier", start);
        if (sql[i] == closer) {
          if (closer != ']' && i + 1 < sql.size() && sql[i + 1] == closer) {
            content += closer;
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        content += sql[i++];
      }
      push(TokKind::IDENT, std::move(content), start, /*quoted=*/true);
      continue;
    }

    std::size_t start = i;
    auto two = sql.substr(i, 2);
    if (two == "!=" || two == "<>" || two == "<=" || two == ">=" || two == "==") {
      push(TokKind::PUNCT, std::string(two), start);
      i += 2;
      continue;
    }
    if (std::string_view("(),.*;=<>+-").find(c) != std::string_view::npos) {
      push(TokKind::PUNCT, std::string(1, c), start);
      ++i;
      continue;
    }
    throw ParseFailure(std::string("unexpected character '") + c + "'", i);
  }
  push(TokKind::END, "", sql.size());
  return tokens;
}

inline bool is_reserved(const std::string& lower) {
  static const std::set<std::string> kReserved = {
      "select", "distinct", "all",   "from",  "where",     "group", "by",
      "having", "order",    "limit", "union", "intersect", "except", "join",
      "inner",  "on",       "as",    "and",   "or",        "not",    "in",
      "like",   "between",  "exists", "asc",  "desc",      "is",     "null",
      "with"};
  return kReserved.count(lower) > 0;
}

inline std::optional<Aggregate> aggregate_from(const std::string& lower) {
  if (lower == "count") return Aggregate::COUNT;
  if (lower == "sum") return Aggregate::SUM;
  if (lower == "avg") return Aggregate::AVG;
  if (lower == "min") return Aggregate::MIN;
  if (lower == "max") return Aggregate::MAX;
  return std::nullopt;
}

// Recursive-descent parser producing canonical QueryComponents.
class SqlParser {
 public:
  SqlParser(std::string_view sql, const DatabaseSchema& schema, ValueMode mode)
      : tokens_(lex_sql(sql)), schema_(schema), mode_(mode) {}

  QueryComponents parse() {
    QueryComponents q = parse_query(nullptr);
    if (peek().kind == TokKind::PUNCT && peek().text == ";") advance();
    if (peek().kind != TokKind::END) {
      throw ParseFailure("trailing input after query", peek().pos);
    }
    return q;
  }

 private:
  struct Scope {
    std::vector<std::string> tables;             // resolved table names, lowercase
    std::map<std::string, std::string> aliases;  // alias (lowercase) -> table
    const Scope* parent = nullptr;
  };

  // Raw (pre-resolution) select unit; the FROM clause is parsed afterwards.
  struct RawUnit {
    Aggregate agg = Aggregate::NONE;
    bool star = false;
    std::string qualifier;  // raw, possibly an alias
    std::string column;
    std::size_t pos = 0;
  };

  struct OperandEx {
    enum class Kind { COLUMN, AGG, LITERAL, SUBQUERY } kind = Kind::LITERAL;
    ColumnRef col;
    SelectUnit agg_unit;
    std::string literal;
    std::shared_ptr<const QueryComponents> subquery;
    std::size_t pos = 0;
  };

  struct ConditionSet {
    std::vector<Predicate> predicates;
    std::vector<std::string> connectives;
    bool pure_conjunction = true;
  };

  const Token& peek(std::size_t ahead = 0) const {
    std::size_t index = std::min(pos_ + ahead, tokens_.size() - 1);
    return tokens_[index];
  }
  const Token& advance() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }

  bool at_keyword(std::string_view word, std::size_t ahead = 0) const {
    const Token& token = peek(ahead);
    return token.kind == TokKind::IDENT && !token.quoted && token.lower == word;
  }
  bool take_keyword(std::string_view word) {
    if (!at_keyword(word)) return false;
    advance();
    return true;
  }
  void expect_keyword(std::string_view word) {
    if (!take_keyword(word)) {
      throw ParseFailure("expected '" + std::string(word) + "'", peek().pos);
    }
  }
  bool at_punct(std::string_view text, std::size_t ahead = 0) const {
    const Token& token = peek(ahead);
    return token.kind == TokKind::PUNCT && token.text == text;
  }
  bool take_punct(std::string_view text) {
    if (!at_punct(text)) return false;
    advance();
    return true;
  }
  void expect_punct(std::string_view text) {
    if (!take_punct(text)) {
      throw ParseFailure("expected '" + std::string(text) + "'", peek().pos);
    }
  }

  bool at_query_start(std::size_t ahead = 0) const {
    return at_keyword("select", ahead) || at_keyword("with", ahead);
  }

  QueryComponents parse_query(const Scope* outer) {
    if (at_keyword("with")) {
      throw ParseFailure("WITH clauses are out of grammar", peek().pos);
    }
    Scope scope;
    scope.parent = outer;
    QueryComponents q = parse_select_core(scope);

    if (at_keyword("union") || at_keyword("intersect") || at_keyword("except")) {
      std::string op = advance().lower;
      take_keyword("all");
      QueryComponents rhs = parse_query(outer);
      q.set_op = op == "union" ? SetOperator::UNION
                               : (op == "intersect" ? SetOperator::INTERSECT
                                                    : SetOperator::EXCEPT);
      q.set_operand = std::make_shared<QueryComponents>(std::move(rhs));
    } else {
      if (take_keyword("order")) {
        expect_keyword("by");
        while (true) {
          OrderItem item;
          item.unit = parse_unit_in_scope(scope);
          if (take_keyword("desc")) {
            item.ascending = false;
          } else {
            take_keyword("asc");
          }
          q.order_by.push_back(std::move(item));
          if (!take_punct(",")) break;
        }
      }
      if (take_keyword("limit")) {
        const Token& token = peek();
        if (token.kind != TokKind::NUMBER || token.text.find('.') != std::string::npos) {
          throw ParseFailure("LIMIT expects a non-negative integer", token.pos);
        }
        q.limit = mode_ == ValueMode::IGNORE ? "value" : token.text;
        advance();
      }
    }

    finalize(q);
    return q;
  }

  QueryComponents parse_select_core(Scope& scope) {
    QueryComponents q;
    expect_keyword("select");
    if (take_keyword("distinct")) {
      q.select_distinct = true;
    } else {
      take_keyword("all");
    }

    std::vector<RawUnit> raw_units;
    while (true) {
      raw_units.push_back(parse_raw_unit());
      // Optional select alias: AS ident, or a bare non-keyword ident.
      if (take_keyword("as")) {
        if (peek().kind != TokKind::IDENT) {
          throw ParseFailure("expected alias after AS", peek().pos);
        }
        advance();
      } else if (peek().kind == TokKind::IDENT && !is_reserved(peek().lower)) {
        advance();
      }
      if (!take_punct(",")) break;
    }

    if (take_keyword("from")) {
      parse_table_ref(scope);
      while (true) {
        if (take_punct(",")) {
          parse_table_ref(scope);
          continue;
        }
        bool inner = at_keyword("inner");
        if (inner || at_keyword("join")) {
          if (inner) {
            advance();
            if (!at_keyword("join")) throw ParseFailure("expected JOIN after INNER", peek().pos);
          }
          expect_keyword("join");
          parse_table_ref(scope);
          expect_keyword("on");
          parse_join_on(scope, q);
          continue;
        }
        break;
      }
    }

    for (const auto& table : scope.tables) q.from_tables.push_back(table);

    for (const auto& raw : raw_units) q.select_units.push_back(resolve_unit(raw, scope));

    if (take_keyword("where")) {
      ConditionSet cond = parse_condition(scope, /*allow_aggregates=*/false);
      extract_join_predicates(cond, q);
      q.where = std::move(cond.predicates);
      q.where_connectives = std::move(cond.connectives);
      rebuild_connectives(q.where, cond.pure_conjunction, q.where_connectives);
    }

    if (take_keyword("group")) {
      expect_keyword("by");
      while (true) {
        RawUnit raw = parse_raw_unit();
        if (raw.agg != Aggregate::NONE || raw.star) {
          throw ParseFailure("GROUP BY expects plain columns", raw.pos);
        }
        q.group_by.push_back(resolve_unit(raw, scope).col);
        if (!take_punct(",")) break;
      }
    }

    if (take_keyword("having")) {
      ConditionSet cond = parse_condition(scope, /*allow_aggregates=*/true);
      q.having = std::move(cond.predicates);
      q.having_connectives = std::move(cond.connectives);
      rebuild_connectives(q.having, cond.pure_conjunction, q.having_connectives);
    }

    return q;
  }

  SelectUnit parse_unit_in_scope(const Scope& scope) {
    RawUnit raw = parse_raw_unit();
    return resolve_unit(raw, scope);
  }

  RawUnit parse_raw_unit() {
    RawUnit raw;
    raw.pos = peek().pos;
    if (take_punct("*")) {
      raw.star = true;
      return raw;
    }
    if (peek().kind == TokKind::IDENT && !peek().quoted) {
      if (auto agg = aggregate_from(peek().lower); agg.has_value() && at_punct("(", 1)) {
        advance();
        advance();
        raw.agg = *agg;
        take_keyword("distinct");  // accepted; the unit keeps (aggregate, column)
        if (take_punct("*")) {
          raw.star = true;
        } else {
          parse_column_path(raw);
        }
        expect_punct(")");
        return raw;
      }
    }
    if (peek().kind != TokKind::IDENT) {
      throw ParseFailure("expected a column reference", peek().pos);
    }
    parse_column_path(raw);
    return raw;
  }

  void parse_column_path(RawUnit& raw) {
    raw.column = advance().text;
    if (take_punct(".")) {
      raw.qualifier = raw.column;
      if (take_punct("*")) {
        raw.star = true;
        raw.column.clear();
        return;
      }
      if (peek().kind != TokKind::IDENT) {
        throw ParseFailure("expected column name after '.'", peek().pos);
      }
      raw.column = advance().text;
    }
  }

  void parse_table_ref(Scope& scope) {
    if (peek().kind != TokKind::IDENT || (!peek().quoted && is_reserved(peek().lower))) {
      throw ParseFailure("expected table name", peek().pos);
    }
    std::string table = to_lower(advance().text);
    scope.tables.push_back(table);

    if (take_keyword("as")) {
      if (peek().kind != TokKind::IDENT) {
        throw ParseFailure("expected alias after AS", peek().pos);
      }
      scope.aliases[to_lower(advance().text)] = table;
    } else if (peek().kind == TokKind::IDENT && !is_reserved(peek().lower)) {
      scope.aliases[to_lower(advance().text)] = table;
    }
  }

  void parse_join_on(Scope& scope, QueryComponents& q) {
    while (true) {
      bool parenthesized = take_punct("(");
      ColumnRef left = parse_column_operand_strict(scope);
      expect_punct("=");
      ColumnRef right = parse_column_operand_strict(scope);
      if (parenthesized) expect_punct(")");
      q.join_conditions.push_back(normalize_join(left, right));
      if (!take_keyword("and")) break;
    }
  }

  ColumnRef parse_column_operand_strict(const Scope& scope) {
    RawUnit raw;
    raw.pos = peek().pos;
    if (peek().kind != TokKind::IDENT) {
      throw ParseFailure("JOIN conditions must be column = column", peek().pos);
    }
    parse_column_path(raw);
    if (raw.star) throw ParseFailure("'*' is not valid in a JOIN condition", raw.pos);
    return resolve_column(raw.qualifier, raw.column, scope, raw.pos);
  }

  static JoinCondition normalize_join(ColumnRef a, ColumnRef b) {
    if (key_of(b) < key_of(a)) std::swap(a, b);
    return {std::move(a), std::move(b)};
  }

  ConditionSet parse_condition(const Scope& scope, bool allow_aggregates) {
    ConditionSet out;
    parse_or(scope, allow_aggregates, out);
    return out;
  }

  void parse_or(const Scope& scope, bool allow_aggregates, ConditionSet& out) {
    parse_and(scope, allow_aggregates, out);
    while (take_keyword("or")) {
      out.connectives.push_back("or");
      out.pure_conjunction = false;
      parse_and(scope, allow_aggregates, out);
    }
  }

  void parse_and(const Scope& scope, bool allow_aggregates, ConditionSet& out) {
    parse_condition_factor(scope, allow_aggregates, out);
    while (take_keyword("and")) {
      out.connectives.push_back("and");
      parse_condition_factor(scope, allow_aggregates, out);
    }
  }

  void parse_condition_factor(const Scope& scope, bool allow_aggregates, ConditionSet& out) {
    if (at_punct("(") && !at_query_start(1)) {
      advance();
      parse_or(scope, allow_aggregates, out);
      expect_punct(")");
      return;
    }
    out.predicates.push_back(parse_predicate(scope, allow_aggregates));
  }

  Predicate parse_predicate(const Scope& scope, bool allow_aggregates) {
    bool negated = false;
    while (take_keyword("not")) negated = !negated;

    if (take_keyword("exists")) {
      expect_punct("(");
      Predicate pred;
      pred.op = "exists";
      pred.negated = negated;
      Operand operand;
      operand.kind = Operand::Kind::SUBQUERY;
      operand.subquery = parse_subquery(scope);
      expect_punct(")");
      pred.operands.push_back(std::move(operand));
      return pred;
    }

    OperandEx lhs = parse_operand(scope, allow_aggregates);
    if (take_keyword("not")) negated = !negated;

    Predicate pred;
    pred.negated = negated;
    if (take_keyword("like")) {
      pred.op = "like";
      pred.operands.push_back(lower_operand(parse_operand(scope, false)));
    } else if (take_keyword("in")) {
      pred.op = "in";
      expect_punct("(");
      if (at_query_start()) {
        Operand operand;
        operand.kind = Operand::Kind::SUBQUERY;
        operand.subquery = parse_subquery(scope);
        pred.operands.push_back(std::move(operand));
      } else {
        pred.operands.push_back(parse_literal_list());
      }
      expect_punct(")");
    } else if (take_keyword("between")) {
      pred.op = "between";
      pred.operands.push_back(lower_operand(parse_operand(scope, false)));
      expect_keyword("and");
      pred.operands.push_back(lower_operand(parse_operand(scope, false)));
    } else if (peek().kind == TokKind::PUNCT) {
      std::string op = peek().text;
      if (op == "==") op = "=";
      if (op == "<>") op = "!=";
      if (op != "=" && op != "!=" && op != "<" && op != ">" && op != "<=" && op != ">=") {
        throw ParseFailure("expected a comparison operator", peek().pos);
      }
      advance();
      pred.op = op;
      OperandEx rhs = parse_operand(scope, allow_aggregates);
      // Keep the column (or aggregate) on the left, mirroring the operator.
      bool lhs_unit = lhs.kind == OperandEx::Kind::COLUMN || lhs.kind == OperandEx::Kind::AGG;
      bool rhs_unit = rhs.kind == OperandEx::Kind::COLUMN || rhs.kind == OperandEx::Kind::AGG;
      if (!lhs_unit && rhs_unit) {
        std::swap(lhs, rhs);
        if (pred.op == "<") pred.op = ">";
        else if (pred.op == ">") pred.op = "<";
        else if (pred.op == "<=") pred.op = ">=";
        else if (pred.op == ">=") pred.op = "<=";
      }
      pred.operands.push_back(lower_operand(std::move(rhs)));
    } else {
      throw ParseFailure("expected a predicate", peek().pos);
    }

    if (lhs.kind == OperandEx::Kind::COLUMN) {
      pred.lhs = SelectUnit{Aggregate::NONE, false, lhs.col};
    } else if (lhs.kind == OperandEx::Kind::AGG) {
      if (!allow_aggregates) {
        throw ParseFailure("aggregates are only allowed in HAVING", lhs.pos);
      }
      pred.lhs = lhs.agg_unit;
    } else {
      throw ParseFailure("predicate needs a column on one side", lhs.pos);
    }
    return pred;
  }

  Operand lower_operand(OperandEx raw) {
    Operand operand;
    switch (raw.kind) {
      case OperandEx::Kind::COLUMN:
        operand.kind = Operand::Kind::COLUMN;
        operand.col = std::move(raw.col);
        break;
      case OperandEx::Kind::AGG:
        throw ParseFailure("aggregate is not a valid predicate operand", raw.pos);
      case OperandEx::Kind::LITERAL:
        if (mode_ == ValueMode::IGNORE) {
          operand.kind = Operand::Kind::VALUE;
        } else {
          operand.kind = Operand::Kind::LITERAL;
          operand.text = std::move(raw.literal);
        }
        break;
      case OperandEx::Kind::SUBQUERY:
        operand.kind = Operand::Kind::SUBQUERY;
        operand.subquery = std::move(raw.subquery);
        break;
    }
    return operand;
  }

  OperandEx parse_operand(const Scope& scope, bool allow_aggregates) {
    OperandEx out;
    out.pos = peek().pos;

    if (at_punct("(") && at_query_start(1)) {
      advance();
      out.kind = OperandEx::Kind::SUBQUERY;
      out.subquery = parse_subquery(scope);
      expect_punct(")");
      return out;
    }
    if (at_punct("-") || at_punct("+")) {
      bool negative = peek().text == "-";
      advance();
      if (peek().kind != TokKind::NUMBER) {
        throw ParseFailure("expected a number after sign", peek().pos);
      }
      out.kind = OperandEx::Kind::LITERAL;
      out.literal = (negative ? "-" : "") + advance().text;
      return out;
    }
    if (peek().kind == TokKind::NUMBER) {
      out.kind = OperandEx::Kind::LITERAL;
      out.literal = advance().text;
      return out;
    }
    if (peek().kind == TokKind::STRING) {
      out.kind = OperandEx::Kind::LITERAL;
      out.literal = quote_string(advance().text);
      return out;
    }
    if (peek().kind == TokKind::IDENT) {
      if (!peek().quoted && at_keyword("null")) {
        advance();
        out.kind = OperandEx::Kind::LITERAL;
        out.literal = "null";
        return out;
      }
      if (!peek().quoted && aggregate_from(peek().lower).has_value() && at_punct("(", 1)) {
        RawUnit raw = parse_raw_unit();
        out.kind = OperandEx::Kind::AGG;
        out.agg_unit = resolve_unit(raw, scope);
        if (!allow_aggregates) {
          // Position is reported at the aggregate itself.
          out.pos = raw.pos;
        }
        return out;
      }
      RawUnit raw;
      raw.pos = peek().pos;
      parse_column_path(raw);
      if (raw.star) throw ParseFailure("'*' is not valid here", raw.pos);
      out.kind = OperandEx::Kind::COLUMN;
      out.col = resolve_column(raw.qualifier, raw.column, scope, raw.pos);
      return out;
    }
    throw ParseFailure("expected an operand", peek().pos);
  }

  Operand parse_literal_list() {
    std::vector<std::string> literals;
    while (true) {
      if (peek().kind == TokKind::NUMBER) {
        literals.push_back(advance().text);
      } else if (peek().kind == TokKind::STRING) {
        literals.push_back(quote_string(advance().text));
      } else if (at_punct("-") || at_punct("+")) {
        bool negative = peek().text == "-";
        advance();
        if (peek().kind != TokKind::NUMBER) {
          throw ParseFailure("expected a number after sign", peek().pos);
        }
        literals.push_back((negative ? "-" : "") + advance().text);
      } else {
        throw ParseFailure("expected a literal in IN list", peek().pos);
      }
      if (!take_punct(",")) break;
    }
    Operand operand;
    if (mode_ == ValueMode::IGNORE) {
      operand.kind = Operand::Kind::VALUE;
    } else {
      operand.kind = Operand::Kind::LITERAL;
      std::string joined;
      for (std::size_t i = 0; i < literals.size(); ++i) {
        if (i > 0) joined += ",";
        joined += literals[i];
      }
      operand.text = joined;
    }
    return operand;
  }

  std::shared_ptr<const QueryComponents> parse_subquery(const Scope& scope) {
    QueryComponents sub = parse_query(&scope);
    return std::make_shared<QueryComponents>(std::move(sub));
  }

  static std::string quote_string(const std::string& content) {
    std::string out = "'";
    for (char c : content) {
      if (c == '\'') out += "''";
      out += c;
    }
    out += "'";
    return out;
  }

  SelectUnit resolve_unit(const RawUnit& raw, const Scope& scope) {
    SelectUnit unit;
    unit.agg = raw.agg;
    if (raw.star) {
      unit.star = true;
      if (!raw.qualifier.empty()) {
        unit.col.table = resolve_table(raw.qualifier, scope, raw.pos);
      }
      unit.col.column = "*";
      return unit;
    }
    unit.col = resolve_column(raw.qualifier, raw.column, scope, raw.pos);
    return unit;
  }

  std::string resolve_table(const std::string& qualifier, const Scope& scope,
                            std::size_t pos) const {
    std::string lower = to_lower(qualifier);
    for (const Scope* s = &scope; s != nullptr; s = s->parent) {
      auto alias = s->aliases.find(lower);
      if (alias != s->aliases.end()) return alias->second;
      for (const auto& table : s->tables) {
        if (table == lower) return table;
      }
    }
    throw ParseFailure("unknown table or alias '" + qualifier + "'", pos);
  }

  ColumnRef resolve_column(const std::string& qualifier, const std::string& column,
                           const Scope& scope, std::size_t pos) const {
    std::string column_lower = to_lower(column);
    if (!qualifier.empty()) {
      return {resolve_table(qualifier, scope, pos), column_lower};
    }
    for (const Scope* s = &scope; s != nullptr; s = s->parent) {
      std::vector<std::string> matches;
      for (const auto& table : s->tables) {
        const TableDef* def = schema_.find_table(table);
        if (def != nullptr && def->find_column(column_lower) != nullptr) {
          matches.push_back(table);
        }
      }
      if (matches.size() > 1) {
        std::string list;
        for (const auto& m : matches) list += (list.empty() ? "" : ", ") + m;
        throw AmbiguousColumn("column '" + column + "' matches multiple FROM tables: " + list);
      }
      if (matches.size() == 1) return {matches.front(), column_lower};
    }
    // Unknown to the schema: with a single FROM table there is only one
    // possible owner; otherwise give up.
    if (scope.tables.size() == 1) return {scope.tables.front(), column_lower};
    throw ParseFailure("column '" + column + "' does not match any FROM table", pos);
  }

  // Comma-join equalities: a pure conjunction's column=column predicates over
  // two distinct tables are join conditions, not filters.
  void extract_join_predicates(ConditionSet& cond, QueryComponents& q) {
    if (!cond.pure_conjunction) return;
    std::vector<Predicate> rest;
    for (auto& pred : cond.predicates) {
      bool joinish = pred.op == "=" && !pred.negated && pred.lhs.has_value() &&
                     pred.lhs->agg == Aggregate::NONE && !pred.lhs->star &&
                     pred.operands.size() == 1 &&
                     pred.operands[0].kind == Operand::Kind::COLUMN &&
                     pred.operands[0].col.table != pred.lhs->col.table;
      if (joinish) {
        q.join_conditions.push_back(normalize_join(pred.lhs->col, pred.operands[0].col));
      } else {
        rest.push_back(std::move(pred));
      }
    }
    cond.predicates = std::move(rest);
  }

  // For pure conjunctions the connective multiset is implied by the final
  // predicate count (extraction and dedup change it); mixed trees keep the
  // connectives as parsed.
  static void rebuild_connectives(std::vector<Predicate>& predicates, bool pure_conjunction,
                                  std::vector<std::string>& connectives) {
    sort_unique_by_key(predicates);
    if (pure_conjunction) {
      connectives.assign(predicates.empty() ? 0 : predicates.size() - 1, "and");
    } else {
      std::sort(connectives.begin(), connectives.end());
    }
  }

  void finalize(QueryComponents& q) {
    sort_unique_by_key(q.select_units);
    sort_unique_by_key(q.from_tables);
    sort_unique_by_key(q.join_conditions);
    sort_unique_by_key(q.group_by);
    // where/having were sorted in rebuild_connectives.
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  const DatabaseSchema& schema_;
  ValueMode mode_;
};

}  // namespace detail

inline QueryComponents parse_sql(const std::string& sql, const DatabaseSchema& schema,
                                 ValueMode value_mode = ValueMode::IGNORE) {
  if (detail::trim_view(sql).empty()) throw ParseFailure("empty SQL text", 0);
  detail::SqlParser parser(sql, schema, value_mode);
  return parser.parse();
}

// Lexical check for a top-level ORDER BY; used to decide order-sensitive
// execution comparison from the gold query alone.
inline bool has_top_level_order_by(const std::string& sql) {
  try {
    auto tokens = detail::lex_sql(sql);
    int depth = 0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      const auto& token = tokens[i];
      if (token.kind == detail::TokKind::PUNCT) {
        if (token.text == "(") ++depth;
        if (token.text == ")") --depth;
        continue;
      }
      if (depth == 0 && token.kind == detail::TokKind::IDENT && !token.quoted &&
          token.lower == "order" && tokens[i + 1].kind == detail::TokKind::IDENT &&
          tokens[i + 1].lower == "by") {
        return true;
      }
    }
    return false;
  } catch (const ParseFailure&) {
    return detail::icontains(sql, "order by");
  }
}

}  // namespace nl2sql
