#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pxl {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// Error taxonomy. Every failure mode the library reports maps onto one of
// these so callers (and tests) can match on the category, not the message.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct CorruptionError : Error { using Error::Error; };

// Resource errors carry the scalar count that was requested so callers can
// report "needed X, budget Y" without re-deriving it.
struct ResourceError : Error {
  ResourceError(const std::string& msg, i64 required)
      : Error(msg), required_scalars(required) {}
  i64 required_scalars;
};

template <class... A>
std::string cat(A&&... a) {
  std::ostringstream os;
  (os << ... << a);
  return os.str();
}

#define PXL_CHECK(cond, Exc, ...) \
  do { if (!(cond)) throw Exc(::pxl::cat(__VA_ARGS__)); } while (0)

using Shape = std::vector<i64>;

inline i64 numel(const Shape& s) {
  i64 n = 1;
  for (i64 d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace pxl
