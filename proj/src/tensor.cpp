#include "sshd/tensor.hpp"

namespace sshd {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool shapes_equal(const Shape& a, const Shape& b) { return a == b; }

}  // namespace sshd
