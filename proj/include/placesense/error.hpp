#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace placesense {

// All validation and I/O failures surface as this type; the CLI turns it
// into a one-line "error: ..." message and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void concat_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void concat_into(std::ostringstream& oss, const T& head, const Rest&... rest) {
  oss << head;
  concat_into(oss, rest...);
}

}  // namespace detail

template <typename... Parts>
std::string concat(const Parts&... parts) {
  std::ostringstream oss;
  detail::concat_into(oss, parts...);
  return oss.str();
}

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  throw Error(concat(parts...));
}

template <typename... Parts>
void require(bool cond, const Parts&... parts) {
  if (!cond) fail(parts...);
}

}  // namespace placesense
