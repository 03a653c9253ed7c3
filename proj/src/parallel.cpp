#include "sshd/parallel.hpp"

#include <cstdlib>
#include <string>

namespace sshd {

int max_threads() {
  static const int cached = [] {
    if (const char* env = std::getenv("SSHD_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
  }();
  return cached;
}

}  // namespace sshd
