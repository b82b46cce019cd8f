#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hetcoef {

/// Exception carrying a stable machine-parsable code. what() is always
/// "<CODE>: <detail>" so callers (and the CLI) can grep on the code.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace hetcoef
