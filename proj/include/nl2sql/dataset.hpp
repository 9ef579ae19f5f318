#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nl2sql/errors.hpp"

namespace nl2sql {

struct TaskItem {
  std::string item_id;
  std::string db_id;
  std::string question;
  std::optional<std::string> gold_sql;

  bool operator==(const TaskItem&) const = default;
};

// Spider layout: <db_root>/<db_id>/<db_id>.sqlite
inline std::string database_path_for(const std::string& db_root, const std::string& db_id) {
  return (std::filesystem::path(db_root) / db_id / (db_id + ".sqlite")).string();
}

namespace detail {

inline std::string trim_copy(const std::string& text) {
  std::size_t begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = text.find_last_not_of(" \t\r\n");
  return text.substr(begin, end - begin + 1);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace detail

inline std::vector<TaskItem> load_dataset(
    const std::string& path, const std::optional<std::string>& db_root = std::nullopt) {
  std::string bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const Error& e) {
    throw MalformedDataset(e.what());
  }

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedDataset("dataset '" + path + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_array()) {
    throw MalformedDataset("dataset '" + path + "' is not a JSON array");
  }

  std::vector<TaskItem> items;
  std::set<std::string> seen_ids;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& obj = doc.at(i);
    auto fail = [&](const std::string& what) {
      throw MalformedDataset("dataset item " + std::to_string(i) + ": " + what);
    };
    if (!obj.is_object()) fail("not an object");

    TaskItem item;
    if (obj.contains("id")) {
      const auto& id = obj.at("id");
      if (id.is_string()) {
        item.item_id = id.get<std::string>();
      } else if (id.is_number_integer()) {
        item.item_id = std::to_string(id.get<long long>());
      } else {
        fail("'id' must be a string or integer");
      }
    } else {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%04zu", i);
      item.item_id = buf;
    }

    if (!obj.contains("db_id")) fail("missing required key 'db_id'");
    if (!obj.at("db_id").is_string()) fail("'db_id' must be a string");
    item.db_id = obj.at("db_id").get<std::string>();

    if (!obj.contains("question")) fail("missing required key 'question'");
    if (!obj.at("question").is_string()) fail("'question' must be a string");
    item.question = obj.at("question").get<std::string>();
    if (detail::trim_copy(item.question).empty()) fail("'question' is empty");

    if (obj.contains("query")) {
      if (!obj.at("query").is_string()) fail("'query' must be a string");
      item.gold_sql = obj.at("query").get<std::string>();
    }

    if (!seen_ids.insert(item.item_id).second) {
      fail("duplicate item_id '" + item.item_id + "'");
    }
    items.push_back(std::move(item));
  }

  if (db_root.has_value()) {
    std::set<std::string> checked;
    for (const auto& item : items) {
      if (!checked.insert(item.db_id).second) continue;
      std::string db_path = database_path_for(*db_root, item.db_id);
      if (!std::filesystem::exists(db_path)) {
        throw MissingDatabase("database for db_id '" + item.db_id + "' not found at '" +
                                  db_path + "'",
                              item.db_id);
      }
    }
  }
  return items;
}

}  // namespace nl2sql
