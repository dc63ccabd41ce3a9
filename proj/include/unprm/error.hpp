#pragma once

#include <stdexcept>
#include <string>

namespace unprm {

// Error categories map onto CLI exit codes (usage=1, provider=2, data=3).
enum class ErrorKind { usage = 1, provider = 2, data = 3 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

class UsageError : public Error {
public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class ProviderError : public Error {
public:
  explicit ProviderError(const std::string& what) : Error(ErrorKind::provider, what) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

}  // namespace unprm
