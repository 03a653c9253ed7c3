#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "sshd/rng.hpp"
#include "sshd/tape.hpp"

using namespace sshd;
using gradcheck::random_tensor;

namespace {
struct FiniteGuard {
  FiniteGuard() { set_finite_checks(true); }
} guard;
}  // namespace

// -------------------------------------------------------------------- conv2d

TEST_CASE("conv2d: 1x1 identity kernel") {
  Tape<double> t;
  Var x = t.constant(Tensor<double>({1, 1, 1, 1}, {5.0}));
  Var k = t.constant(Tensor<double>({1, 1, 1, 1}, {1.0}));
  Var y = t.conv2d(x, k, Var{}, 1, 0);
  CHECK(t.value(y)[0] == doctest::Approx(5.0));
}

TEST_CASE("conv2d: 2x2 full-overlap dot product") {
  // direct evaluation: 1*1 + 2*1 + 3*1 + 4*1 = 10
  Tape<double> t;
  Var x = t.constant(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var k = t.constant(Tensor<double>({1, 1, 2, 2}, {1, 1, 1, 1}));
  Var y = t.conv2d(x, k, Var{}, 1, 0);
  CHECK(t.value(y).shape() == Shape{1, 1, 1, 1});
  CHECK(t.value(y)[0] == doctest::Approx(10.0));
}

TEST_CASE("conv2d: output shape formula") {
  Tape<double> t;
  Var x = t.constant(Tensor<double>({1, 1, 4, 4}));
  Var k = t.constant(Tensor<double>({1, 1, 3, 3}));
  Var y = t.conv2d(x, k, Var{}, 2, 1);
  CHECK(t.value(y).shape() == Shape{1, 1, 2, 2});
}

TEST_CASE("conv2d: shape mismatch raises ConfigError naming the dimension") {
  Tape<double> t;
  Var x = t.constant(Tensor<double>({1, 3, 4, 4}));
  Var k = t.constant(Tensor<double>({2, 4, 3, 3}));
  CHECK_THROWS_AS(t.conv2d(x, k, Var{}, 1, 1), ConfigError);
  try {
    t.conv2d(x, k, Var{}, 1, 1);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("channels") != std::string::npos);
  }
}

TEST_CASE("conv2d: gradients match finite differences") {
  Rng rng(11);
  auto x = random_tensor(rng, {2, 2, 4, 4});
  auto k = random_tensor(rng, {3, 2, 3, 3});
  auto b = random_tensor(rng, {3});
  const double err = gradcheck::max_rel_err_graph(
      [](Tape<double>& t, const std::vector<Var>& v) {
        return t.mean_all(t.conv2d(v[0], v[1], v[2], 1, 1));
      },
      {x, k, b});
  CHECK(err < 1e-4);
}

TEST_CASE("conv2d: strided gradcheck") {
  Rng rng(12);
  auto x = random_tensor(rng, {1, 2, 5, 5});
  auto k = random_tensor(rng, {2, 2, 3, 3});
  const double err = gradcheck::max_rel_err_graph(
      [](Tape<double>& t, const std::vector<Var>& v) {
        return t.mean_all(t.conv2d(v[0], v[1], Var{}, 2, 1));
      },
      {x, k});
  CHECK(err < 1e-4);
}

// ---------------------------------------------------------------- batch_norm

TEST_CASE("batch_norm: constant input in train mode yields beta") {
  Tape<double> t;
  Tensor<double> x({2, 3, 2, 2});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t s = 0; s < 4; ++s) x[(n * 3 + c) * 4 + s] = 1.5 * static_cast<double>(c + 1);
  Var xv = t.constant(x);
  Var g = t.constant(Tensor<double>({3}, {2.0, 3.0, 4.0}));
  Var b = t.constant(Tensor<double>({3}, {0.5, -0.5, 1.25}));
  Tensor<double> rm({3}), rv = Tensor<double>::full({3}, 1.0);
  Var y = t.batch_norm(xv, g, b, &rm, &rv, BnMode::train, 1e-5, 0.1);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t s = 0; s < 4; ++s)
        CHECK(t.value(y)[(n * 3 + c) * 4 + s] ==
              doctest::Approx(t.value(b)[c]).epsilon(1e-9));
}

TEST_CASE("batch_norm: near-identity on standardized input") {
  Rng rng(5);
  Tensor<double> x({1, 1, 1, 64});
  double mean = 0, var = 0;
  for (int64_t i = 0; i < 64; ++i) x[i] = rng.uniform(-1, 1);
  for (int64_t i = 0; i < 64; ++i) mean += x[i];
  mean /= 64;
  for (int64_t i = 0; i < 64; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= 64;
  for (int64_t i = 0; i < 64; ++i) x[i] = (x[i] - mean) / std::sqrt(var);
  Tape<double> t;
  Var xv = t.constant(x);
  Var g = t.constant(Tensor<double>::full({1}, 1.0));
  Var b = t.constant(Tensor<double>({1}));
  Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
  Var y = t.batch_norm(xv, g, b, &rm, &rv, BnMode::train, 1e-12, 0.1);
  for (int64_t i = 0; i < 64; ++i)
    CHECK(std::abs(t.value(y)[i] - x[i]) < 1e-5);
}

TEST_CASE("batch_norm: gradients vs finite differences (train and eval)") {
  Rng rng(21);
  auto x = random_tensor(rng, {2, 2, 3, 3});
  auto g = random_tensor(rng, {2}, 0.5, 1.5);
  auto b = random_tensor(rng, {2});
  for (BnMode mode : {BnMode::train, BnMode::eval}) {
    const double err = gradcheck::max_rel_err_graph(
        [mode](Tape<double>& t, const std::vector<Var>& v) {
          Tensor<double> rm = Tensor<double>::full({2}, 0.25);
          Tensor<double> rv = Tensor<double>::full({2}, 1.5);
          return t.mean_all(t.batch_norm(v[0], v[1], v[2], &rm, &rv, mode, 1e-5, 0.1));
        },
        {x, g, b});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("batch_norm: running stats update with momentum") {
  Tape<double> t;
  Tensor<double> x({1, 1, 1, 4}, {1, 2, 3, 4});  // mean 2.5, biased var 1.25
  Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
  Var y = t.batch_norm(t.constant(x), t.constant(Tensor<double>::full({1}, 1.0)),
                       t.constant(Tensor<double>({1})), &rm, &rv, BnMode::train, 1e-5, 0.1);
  (void)y;
  CHECK(rm[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5));
  CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * (1.25 * 4.0 / 3.0)));
}

// --------------------------------------------------------------- activations

TEST_CASE("activations: trivial values") {
  Tape<double> t;
  Var r = t.relu(t.constant(Tensor<double>({3}, {-1, 0, 2})));
  CHECK(t.value(r)[0] == 0.0);
  CHECK(t.value(r)[1] == 0.0);
  CHECK(t.value(r)[2] == 2.0);

  Var s = t.sigmoid(t.constant(Tensor<double>({1}, {0.0})));
  CHECK(t.value(s)[0] == doctest::Approx(0.5));

  Var sm = t.softmax(t.constant(Tensor<double>({1, 4}, {1, 1, 1, 1})), 1);
  for (int i = 0; i < 4; ++i) CHECK(t.value(sm)[i] == doctest::Approx(0.25));
}

TEST_CASE("activations: gradcheck") {
  Rng rng(31);
  auto x = random_tensor(rng, {2, 5});
  CHECK(gradcheck::max_rel_err_graph(
            [](Tape<double>& t, const std::vector<Var>& v) {
              return t.mean_all(t.sigmoid(v[0]));
            },
            {x}) < 1e-4);
  CHECK(gradcheck::max_rel_err_graph(
            [](Tape<double>& t, const std::vector<Var>& v) {
              // weighted sum distinguishes softmax columns
              Tensor<double> w({2, 5});
              for (int64_t i = 0; i < 10; ++i) w[i] = 0.1 * static_cast<double>(i) - 0.4;
              return t.sum_all(t.mul(t.softmax(v[0], 1), t.constant(w)));
            },
            {x}) < 1e-4);
  // relu away from the kink
  Tensor<double> xr({7}, {-2, -1, -0.5, 0.3, 0.9, 1.5, 2.2});
  CHECK(gradcheck::max_rel_err_graph(
            [](Tape<double>& t, const std::vector<Var>& v) {
              return t.mean_all(t.relu(v[0]));
            },
            {xr}) < 1e-4);
}

// --------------------------------------------------------------------- pool

namespace {
// Independent enumeration oracle for pooling.
double pool_oracle_at(const Tensor<double>& x, bool is_max, int k, int s, int p, int64_t oy,
                      int64_t ox) {
  const int64_t H = x.extent(2), W = x.extent(3);
  double best = -1e300, acc = 0;
  int cnt = 0;
  for (int64_t iy = oy * s - p; iy < oy * s - p + k; ++iy)
    for (int64_t ix = ox * s - p; ix < ox * s - p + k; ++ix) {
      if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
      const double v = x[iy * W + ix];
      best = std::max(best, v);
      acc += v;
      cnt++;
    }
  return is_max ? best : acc / cnt;
}
}  // namespace

TEST_CASE("pool: max 3x3 stride 1 pad 1 over single peak") {
  Tensor<double> x({1, 1, 3, 3}, {0, 0, 0, 0, 5, 0, 0, 0, 0});
  Tape<double> t;
  Var y = t.pool(t.constant(x), PoolKind::max, 3, 1, 1);
  CHECK(t.value(y).shape() == Shape{1, 1, 3, 3});
  for (int64_t i = 0; i < 9; ++i) {
    CHECK(t.value(y)[i] == 5.0);
    CHECK(t.value(y)[i] == pool_oracle_at(x, true, 3, 1, 1, i / 3, i % 3));
  }
}

TEST_CASE("pool: global average") {
  Tape<double> t;
  Var y = t.pool(t.constant(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4})), PoolKind::avg, 2, 1, 0);
  CHECK(t.value(y).numel() == 1);
  CHECK(t.value(y)[0] == doctest::Approx(2.5));
}

TEST_CASE("pool: k=1 is the identity") {
  Rng rng(3);
  auto x = random_tensor(rng, {1, 2, 3, 3});
  Tape<double> t;
  Var y = t.pool(t.constant(x), PoolKind::max, 1, 1, 0);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(t.value(y)[i] == x[i]);
}

TEST_CASE("pool: avg padding excluded from divisor") {
  // corner window of a 2x2 avg pool with pad 1 sees exactly one valid pixel
  Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tape<double> t;
  Var y = t.pool(t.constant(x), PoolKind::avg, 2, 1, 1);
  CHECK(t.value(y).shape() == Shape{1, 1, 3, 3});
  CHECK(t.value(y)[0] == doctest::Approx(1.0));  // only pixel (0,0) in window
  CHECK(t.value(y)[4] == doctest::Approx(2.5));  // full window
}

TEST_CASE("pool: kernel larger than padded input raises") {
  Tape<double> t;
  Var x = t.constant(Tensor<double>({1, 1, 2, 2}));
  CHECK_THROWS_AS(t.pool(x, PoolKind::max, 5, 1, 1), ConfigError);
}

TEST_CASE("pool: gradcheck, max routes to first argmax") {
  Rng rng(41);
  auto x = random_tensor(rng, {1, 2, 4, 4});
  for (PoolKind kind : {PoolKind::max, PoolKind::avg}) {
    const double err = gradcheck::max_rel_err_graph(
        [kind](Tape<double>& t, const std::vector<Var>& v) {
          return t.mean_all(t.pool(v[0], kind, 3, 1, 1));
        },
        {x});
    CHECK(err < 1e-4);
  }
  // tie: plateau of equal values, gradient goes to first in scan order
  Tensor<double> flat = Tensor<double>::full({1, 1, 2, 2}, 7.0);
  Tape<double> t;
  Var xv = t.leaf(flat, true);
  Var y = t.pool(xv, PoolKind::max, 2, 1, 0);
  t.backward(t.sum_all(y));
  Tensor<double> g = t.grad(xv);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
}

// ------------------------------------------------------------------- resize

namespace {
// Direct align_corners=false interpolation formula, written independently.
double bilinear_oracle(const Tensor<double>& x, int64_t oh, int64_t ow, int64_t oy, int64_t ox) {
  const int64_t H = x.extent(2), W = x.extent(3);
  auto sample = [&](double sy, double sx) {
    const double fy = std::floor(sy), fx = std::floor(sx);
    auto cl = [](int64_t v, int64_t hi) { return std::max<int64_t>(0, std::min(v, hi)); };
    const int64_t y0 = cl(static_cast<int64_t>(fy), H - 1), y1 = cl(static_cast<int64_t>(fy) + 1, H - 1);
    const int64_t x0 = cl(static_cast<int64_t>(fx), W - 1), x1 = cl(static_cast<int64_t>(fx) + 1, W - 1);
    double wy = sy - fy, wx = sx - fx;
    if (sy < 0) wy = 0;
    if (sy > H - 1) wy = 0;
    if (sx < 0) wx = 0;
    if (sx > W - 1) wx = 0;
    return (1 - wy) * ((1 - wx) * x[y0 * W + x0] + wx * x[y0 * W + x1]) +
           wy * ((1 - wx) * x[y1 * W + x0] + wx * x[y1 * W + x1]);
  };
  const double sy = (oy + 0.5) * static_cast<double>(H) / oh - 0.5;
  const double sx = (ox + 0.5) * static_cast<double>(W) / ow - 0.5;
  return sample(sy, sx);
}
}  // namespace

TEST_CASE("resize: same size is the identity") {
  Rng rng(6);
  auto x = random_tensor(rng, {1, 2, 3, 4});
  for (ResizeKind kind : {ResizeKind::bilinear, ResizeKind::nearest}) {
    Tape<double> t;
    Var y = t.resize(t.constant(x), 3, 4, kind);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(t.value(y)[i] == doctest::Approx(x[i]));
  }
}

TEST_CASE("resize: 1x1 upsample preserves the constant") {
  Tape<double> t;
  Var y = t.resize(t.constant(Tensor<double>({1, 1, 1, 1}, {0.7})), 5, 5, ResizeKind::bilinear);
  for (int64_t i = 0; i < 25; ++i) CHECK(t.value(y)[i] == doctest::Approx(0.7));
}

TEST_CASE("resize: bilinear 2x upsample matches the direct formula cell by cell") {
  Tensor<double> x({1, 1, 2, 2}, {0, 2, 2, 4});
  Tape<double> t;
  Var y = t.resize(t.constant(x), 4, 4, ResizeKind::bilinear);
  for (int64_t oy = 0; oy < 4; ++oy)
    for (int64_t ox = 0; ox < 4; ++ox)
      CHECK(t.value(y)[oy * 4 + ox] == doctest::Approx(bilinear_oracle(x, 4, 4, oy, ox)));
  // corner-mapped centers keep the corner values
  CHECK(t.value(y)[0] == doctest::Approx(0.0));
  CHECK(t.value(y)[15] == doctest::Approx(4.0));
}

TEST_CASE("resize: gradcheck both kinds, up and down") {
  Rng rng(51);
  auto x = random_tensor(rng, {1, 2, 4, 4});
  for (ResizeKind kind : {ResizeKind::bilinear, ResizeKind::nearest}) {
    CHECK(gradcheck::max_rel_err_graph(
              [kind](Tape<double>& t, const std::vector<Var>& v) {
                return t.mean_all(t.resize(v[0], 7, 5, kind));
              },
              {x}) < 1e-4);
    CHECK(gradcheck::max_rel_err_graph(
              [kind](Tape<double>& t, const std::vector<Var>& v) {
                return t.mean_all(t.resize(v[0], 2, 3, kind));
              },
              {x}) < 1e-4);
  }
}

// --------------------------------------------------------- fully_connected

TEST_CASE("fully_connected: identity weight, zero bias") {
  Tape<double> t;
  Tensor<double> w({3, 3});
  for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  Var x = t.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var y = t.fully_connected(x, t.constant(w), t.constant(Tensor<double>({3})));
  for (int64_t i = 0; i < 6; ++i) CHECK(t.value(y)[i] == doctest::Approx(t.value(x)[i]));
}

TEST_CASE("fully_connected: arithmetic example") {
  Tape<double> t;
  Var y = t.fully_connected(t.constant(Tensor<double>({1, 2}, {2, 3})),
                            t.constant(Tensor<double>({1, 2}, {1, 1})),
                            t.constant(Tensor<double>({1}, {1})));
  CHECK(t.value(y)[0] == doctest::Approx(6.0));
}

TEST_CASE("fully_connected: gradcheck") {
  Rng rng(61);
  auto x = random_tensor(rng, {3, 4});
  auto w = random_tensor(rng, {2, 4});
  auto b = random_tensor(rng, {2});
  CHECK(gradcheck::max_rel_err_graph(
            [](Tape<double>& t, const std::vector<Var>& v) {
              return t.mean_all(t.fully_connected(v[0], v[1], v[2]));
            },
            {x, w, b}) < 1e-4);
}

TEST_CASE("matmul_xw: value and gradcheck") {
  Tape<double> t;
  Var y = t.matmul_xw(t.constant(Tensor<double>({1, 2}, {2, 3})),
                      t.constant(Tensor<double>({2, 2}, {1, 10, 100, 1000})));
  CHECK(t.value(y)[0] == doctest::Approx(302));
  CHECK(t.value(y)[1] == doctest::Approx(3020));
  Rng rng(62);
  auto x = random_tensor(rng, {2, 3});
  auto w = random_tensor(rng, {3, 4});
  CHECK(gradcheck::max_rel_err_graph(
            [](Tape<double>& t2, const std::vector<Var>& v) {
              return t2.mean_all(t2.matmul_xw(v[0], v[1]));
            },
            {x, w}) < 1e-4);
}

// -------------------------------------------------------------- elementwise

TEST_CASE("elementwise: add zero and broadcast identities") {
  Rng rng(71);
  auto x = random_tensor(rng, {2, 3});
  Tape<double> t;
  Var xv = t.constant(x);
  Var y = t.add(xv, t.constant(Tensor<double>({2, 3})));
  for (int64_t i = 0; i < 6; ++i) CHECK(t.value(y)[i] == x[i]);

  auto m = random_tensor(rng, {1, 1, 4, 4});
  Var mv = t.constant(m);
  Var ones = t.constant(Tensor<double>::full({1, 1, 4, 1}, 1.0));
  Var my = t.mul(mv, ones);
  for (int64_t i = 0; i < 16; ++i) CHECK(t.value(my)[i] == m[i]);
}

TEST_CASE("elementwise: row-broadcast multiply hand value") {
  Tape<double> t;
  Var y = t.mul(t.constant(Tensor<double>({2, 2}, {1, 2, 3, 4})),
                t.constant(Tensor<double>({2, 1}, {2, 3})));
  CHECK(t.value(y)[0] == 2.0);
  CHECK(t.value(y)[1] == 4.0);
  CHECK(t.value(y)[2] == 9.0);
  CHECK(t.value(y)[3] == 12.0);
}

TEST_CASE("elementwise: non-broadcastable shapes raise") {
  Tape<double> t;
  Var a = t.constant(Tensor<double>({2, 3}));
  Var b = t.constant(Tensor<double>({2, 2}));
  CHECK_THROWS_AS(t.add(a, b), ConfigError);
}

TEST_CASE("elementwise: broadcast gradcheck sums over broadcast axes") {
  Rng rng(81);
  auto a = random_tensor(rng, {2, 3, 4});
  auto b = random_tensor(rng, {2, 1, 4});
  auto c = random_tensor(rng, {1, 3, 1});
  CHECK(gradcheck::max_rel_err_graph(
            [](Tape<double>& t, const std::vector<Var>& v) {
              return t.mean_all(t.mul(t.add(v[0], v[1]), v[2]));
            },
            {a, b, c}) < 1e-4);
}

// ------------------------------------------------------- shape/reduction ops

TEST_CASE("reshape, transpose_hw, concat, slice, mean_axis: gradcheck") {
  Rng rng(91);
  auto a = random_tensor(rng, {2, 2, 3, 4});
  auto b = random_tensor(rng, {2, 2, 2, 4});
  CHECK(gradcheck::max_rel_err_graph(
            [](Tape<double>& t, const std::vector<Var>& v) {
              Var c = t.concat({v[0], v[1]}, 2);                  // [2,2,5,4]
              Var s = t.slice(c, 2, 1, 3);                        // [2,2,3,4]
              Var tr = t.transpose_hw(s);                         // [2,2,4,3]
              Var m = t.mean_axis(tr, 3);                         // [2,2,4,1]
              Var r = t.reshape(m, {2, 8});
              return t.mean_all(t.mul(r, r));
            },
            {a, b}) < 1e-4);
}

TEST_CASE("mean_axis values") {
  Tape<double> t;
  Var y = t.mean_axis(t.constant(Tensor<double>({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6})), 3);
  CHECK(t.value(y).shape() == Shape{1, 1, 2, 1});
  CHECK(t.value(y)[0] == doctest::Approx(2.0));
  CHECK(t.value(y)[1] == doctest::Approx(5.0));
}

// ----------------------------------------------------------------- backward

TEST_CASE("backward: d(sum x^2) = 2x") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({3}, {1, 2, 3}), true);
  t.backward(t.sum_all(t.mul(x, x)));
  Tensor<double> g = t.grad(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(4.0));
  CHECK(g[2] == doctest::Approx(6.0));
}

TEST_CASE("backward: two passes without reset exactly double the gradients") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({3}, {1, 2, 3}), true);
  Var loss = t.sum_all(t.mul(x, x));
  t.backward(loss);
  const Tensor<double> g1 = t.grad(x);
  t.backward(loss);
  const Tensor<double> g2 = t.grad(x);
  for (int64_t i = 0; i < 3; ++i) CHECK(g2[i] == 2.0 * g1[i]);
}

TEST_CASE("backward: usage errors") {
  Tape<double> t1;
  CHECK_THROWS_AS(t1.backward(Var{}), UsageError);
  Var x = t1.leaf(Tensor<double>({3}, {1, 2, 3}), true);
  CHECK_THROWS_AS(t1.backward(x), UsageError);  // empty tape (no ops)
  Var y = t1.mul(x, x);
  CHECK_THROWS_AS(t1.backward(y), UsageError);  // non-scalar loss
}

TEST_CASE("determinism: identical graphs produce bit-identical outputs") {
  auto run = [] {
    Rng rng(1234);
    Tensor<float> x({1, 2, 8, 8});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> k({2, 2, 3, 3});
    for (int64_t i = 0; i < k.numel(); ++i) k[i] = static_cast<float>(rng.uniform(-1, 1));
    Tape<float> t;
    Var y = t.pool(t.relu(t.conv2d(t.constant(x), t.constant(k), Var{}, 1, 1)), PoolKind::max, 3,
                   2, 1);
    return t.value(t.sum_all(y))[0];
  };
  CHECK(run() == run());
}

TEST_CASE("shape algebra: conv/pool/resize extents match closed forms") {
  for (int H : {5, 8, 13})
    for (int K : {1, 2, 3, 5})
      for (int s : {1, 2, 3})
        for (int p : {0, 1, 2}) {
          if (p >= K) continue;
          const int expect = (H + 2 * p - K) / s + 1;
          if (expect < 1) continue;
          Tape<double> t;
          Var x = t.constant(Tensor<double>({1, 1, H, H}));
          Var k = t.constant(Tensor<double>({1, 1, K, K}));
          CHECK(t.value(t.conv2d(x, k, Var{}, s, p)).extent(2) == expect);
          CHECK(t.value(t.pool(x, PoolKind::max, K, s, p)).extent(2) == expect);
        }
  Tape<double> t;
  Var x = t.constant(Tensor<double>({1, 1, 5, 7}));
  CHECK(t.value(t.resize(x, 9, 3, ResizeKind::bilinear)).shape() == Shape{1, 1, 9, 3});
}
