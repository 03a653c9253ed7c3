#include "sshd/dcfm_hmrm.hpp"

namespace sshd {

template <typename T>
DcfmParams<T> make_dcfm(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, int od_k, int od_n, int r_od,
                        int r_ca, bool use_odblock, bool use_ca, bool ca_literal_wnorm,
                        bool ca_gates_one, double eps, double momentum, Rng& rng) {
  DcfmParams<T> p;
  p.specs = specs;
  p.use_odblock = use_odblock;
  p.use_ca = use_ca;
  const size_t J = specs.size();
  if (use_odblock)
    for (size_t j = 0; j < J; ++j)
      p.odblocks.push_back(make_odblock(table, prefix + ".od" + std::to_string(j + 1),
                                        specs[j].channels, od_k, od_n, r_od, eps, momentum, rng));
  p.fusion.resize(J);
  for (size_t k = 0; k < J; ++k) {
    p.fusion[k].resize(J);
    for (size_t j = 0; j < J; ++j) {
      if (k == j) {
        p.fusion[k][j].src = specs[k];  // identity by convention
        p.fusion[k][j].dst = specs[j];
        continue;
      }
      p.fusion[k][j] =
          make_align(table, prefix + ".fuse" + std::to_string(k + 1) + "to" + std::to_string(j + 1),
                     specs[k], specs[j], eps, momentum, rng);
    }
  }
  if (use_ca)
    for (size_t j = 0; j < J; ++j) {
      CaParams<T> ca = make_ca(table, prefix + ".ca" + std::to_string(j + 1), specs[j].channels,
                               r_ca, eps, momentum, rng);
      ca.literal_wnorm = ca_literal_wnorm;
      ca.gates_one = ca_gates_one;
      p.ca.push_back(ca);
    }
  return p;
}

template <typename T>
std::vector<Var> dcfm_forward(Tape<T>& tape, const std::vector<Var>& features,
                              const DcfmParams<T>& p, BnMode mode, bool force_unit_attention) {
  const size_t J = p.specs.size();
  if (features.size() != J)
    throw ConfigError("dcfm_forward: expected " + std::to_string(J) + " branches, got " +
                      std::to_string(features.size()));
  std::vector<Var> l2 = features;
  if (p.use_odblock)
    for (size_t j = 0; j < J; ++j)
      l2[j] = odblock(tape, features[j], p.odblocks[j], mode, force_unit_attention);
  std::vector<Var> l3;
  l3.reserve(J);
  for (size_t j = 0; j < J; ++j) {
    Var acc = l2[j];  // self-alignment is the identity
    for (size_t k = 0; k < J; ++k) {
      if (k == j) continue;
      acc = tape.add(acc, align_forward(tape, l2[k], p.fusion[k][j], mode));
    }
    l3.push_back(acc);
  }
  if (!p.use_ca) return l3;
  std::vector<Var> l4;
  l4.reserve(J);
  for (size_t j = 0; j < J; ++j) l4.push_back(coordinate_attention(tape, l3[j], p.ca[j], mode));
  return l4;
}

// ---------------------------------------------------------------------------

template <typename T>
HmrmParams<T> make_hmrm(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, double eps, double momentum,
                        Rng& rng) {
  HmrmParams<T> p;
  p.specs = specs;
  for (size_t j = 0; j < specs.size(); ++j) {
    const std::string base = prefix + ".b" + std::to_string(j + 1);
    const int64_t c = specs[j].channels;
    HmrmBranchParams<T> br;
    br.conv1a = make_conv(table, base + ".conv1a", c, c, 3, 1, 1, false, rng);
    br.bn1a = make_bn(table, base + ".bn1a", c, eps, momentum);
    br.conv1b = make_conv(table, base + ".conv1b", c, c, 3, 1, 1, false, rng);
    br.bn1b = make_bn(table, base + ".bn1b", c, eps, momentum);
    br.conv2a = make_conv(table, base + ".conv2a", c, c, 3, 1, 1, false, rng);
    br.bn2a = make_bn(table, base + ".bn2a", c, eps, momentum);
    br.conv2b = make_conv(table, base + ".conv2b", c, c, 3, 1, 1, false, rng);
    br.bn2b = make_bn(table, base + ".bn2b", c, eps, momentum);
    p.branches.push_back(br);
  }
  return p;
}

template <typename T>
std::vector<Var> hmrm_forward(Tape<T>& tape, const std::vector<Var>& features,
                              const HmrmParams<T>& p, BnMode mode) {
  const size_t J = p.specs.size();
  if (features.size() != J)
    throw ConfigError("hmrm_forward: expected " + std::to_string(J) + " branches, got " +
                      std::to_string(features.size()));
  std::vector<Var> out;
  out.reserve(J);
  for (size_t j = 0; j < J; ++j) {
    const auto& br = p.branches[j];
    Var l4 = features[j];
    if (tape.value(l4).extent(1) != p.specs[j].channels)
      throw ConfigError("hmrm_forward: channel mismatch on branch " + std::to_string(j + 1));
    Var h = tape.relu(apply_bn(tape, apply_conv(tape, l4, br.conv1a), br.bn1a, mode));
    Var h1 = tape.add(l4, apply_bn(tape, apply_conv(tape, h, br.conv1b), br.bn1b, mode));
    Var inner = tape.add(l4, h1);
    Var h2 = tape.relu(apply_bn(tape, apply_conv(tape, inner, br.conv2a), br.bn2a, mode));
    h2 = tape.add(l4, apply_bn(tape, apply_conv(tape, h2, br.conv2b), br.bn2b, mode));
    out.push_back(h2);
  }
  return out;
}

#define SSHD_INSTANTIATE(T)                                                                       \
  template DcfmParams<T> make_dcfm<T>(ParamTable<T>&, const std::string&,                        \
                                      const std::vector<BranchSpec>&, int, int, int, int, bool,  \
                                      bool, bool, bool, double, double, Rng&);                    \
  template std::vector<Var> dcfm_forward<T>(Tape<T>&, const std::vector<Var>&,                   \
                                            const DcfmParams<T>&, BnMode, bool);                 \
  template HmrmParams<T> make_hmrm<T>(ParamTable<T>&, const std::string&,                        \
                                      const std::vector<BranchSpec>&, double, double, Rng&);     \
  template std::vector<Var> hmrm_forward<T>(Tape<T>&, const std::vector<Var>&,                   \
                                            const HmrmParams<T>&, BnMode);

SSHD_INSTANTIATE(float)
SSHD_INSTANTIATE(double)

#undef SSHD_INSTANTIATE

}  // namespace sshd
