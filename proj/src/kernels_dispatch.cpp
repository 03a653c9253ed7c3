#include "sshd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace sshd::kern {
namespace {

Isa resolve_isa() {
  if (const char* env = std::getenv("SSHD_ISA")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::avx2;
    // any other value (including "auto") falls through to detection
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

Isa g_isa = resolve_isa();

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return g_isa; }

void set_isa(Isa isa) {
  g_isa = (isa == Isa::avx2 && !cpu_has_avx2()) ? Isa::scalar : isa;
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

template <typename T>
const Ops<T>& ops() {
  return g_isa == Isa::avx2 ? avx2_ops<T>() : scalar_ops<T>();
}

template const Ops<float>& ops<float>();
template const Ops<double>& ops<double>();

}  // namespace sshd::kern
