#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tnd {

enum class errc {
  io = 1,
  parse = 2,
  invalid_input = 3,
  invalid_state = 4,
  internal = 5,
};

class error : public std::runtime_error {
 public:
  error(errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw error(code, msg); }

}  // namespace tnd
