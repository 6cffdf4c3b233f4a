#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace detadv {

// Configuration/usage errors vs. failures at run time. The CLI maps the
// former to exit code 1 and the latter to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

#define DETADV_CHECK(cond, ...)                                        \
  do {                                                                 \
    if (!(cond))                                                       \
      throw ::detadv::RuntimeError(::detadv::detail::concat(__VA_ARGS__)); \
  } while (0)

#define DETADV_CONFIG_CHECK(cond, ...)                                 \
  do {                                                                 \
    if (!(cond))                                                       \
      throw ::detadv::ConfigError(::detadv::detail::concat(__VA_ARGS__)); \
  } while (0)

inline bool is_finite(double x) { return std::isfinite(x); }

}  // namespace detadv
