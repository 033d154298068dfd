#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace conad {

/// Error type thrown by every operation in the library. Messages name the
/// offending input (file, row, column, flag) so CLI diagnostics stay one line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

template <class... Args>
std::string strformat(const char* fmt, Args... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string out(static_cast<std::size_t>(n), '\0');
  std::snprintf(out.data(), out.size() + 1, fmt, args...);
  return out;
}

}  // namespace detail

[[noreturn]] inline void fail(const char* message) { throw Error(message); }

template <class... Args>
[[noreturn]] void fail(const char* fmt, Args... args) {
  throw Error(detail::strformat(fmt, args...));
}

/// Doubles serialized with 17 significant digits round-trip exactly.
inline std::string format_g17(double v) { return detail::strformat("%.17g", v); }

/// FNV-1a, used for the artifact checksums recorded in run manifests.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace conad
