#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nl2sql {

// Base class for every error the harness throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedDataset : public Error {
 public:
  using Error::Error;
};

class MissingDatabase : public Error {
 public:
  MissingDatabase(const std::string& message, std::string db_id)
      : Error(message), db_id_(std::move(db_id)) {}
  const std::string& db_id() const { return db_id_; }

 private:
  std::string db_id_;
};

class UnreadableDatabase : public Error {
 public:
  using Error::Error;
};

class CorruptCatalog : public Error {
 public:
  using Error::Error;
};

class MalformedTablesJson : public Error {
 public:
  using Error::Error;
};

class InvalidSchema : public Error {
 public:
  using Error::Error;
};

class EmptyFeedback : public Error {
 public:
  using Error::Error;
};

class NetworkFailure : public Error {
 public:
  using Error::Error;
};

class RateLimited : public Error {
 public:
  using Error::Error;
};

class MissingFixture : public Error {
 public:
  MissingFixture(const std::string& message, std::string digest)
      : Error(message), digest_(std::move(digest)) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

class ScriptExhausted : public Error {
 public:
  using Error::Error;
};

class FixtureWriteFailure : public Error {
 public:
  using Error::Error;
};

class NoSqlFound : public Error {
 public:
  using Error::Error;
};

class ParseFailure : public Error {
 public:
  ParseFailure(const std::string& message, std::size_t position)
      : Error(message), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_ = 0;
};

class AmbiguousColumn : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace nl2sql
