// Tensor-core operation tests: worked examples, shape errors, and the
// randomized conv-vs-naive oracle sweep.

#include <doctest.h>

#include "oracles.hpp"
#include "sndcnn/ops.hpp"

#include <random>

using namespace sndcnn;

TEST_CASE("tensor invariants") {
  TensorD t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 0.0);
  t.at(1, 2) = 5.0;
  CHECK(t.data()[5] == 5.0);
  // round-trip of the row-major index map
  int next = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(t.offset(i, j) == std::size_t(next++));
  CHECK_THROWS_AS(TensorD({0, 3}), DimensionError);
  CHECK_THROWS_AS(TensorD({2, 2}, {1.0, 2.0}), DimensionError);
  CHECK_THROWS_AS(t.at(2, 0), IndexError);
  CHECK_THROWS_AS(t.reshape({4, 2}), DimensionError);
}

TEST_CASE("matmul worked examples") {
  TensorD eye({2, 2}, {1, 0, 0, 1});
  TensorD b({2, 2}, {5, 6, 7, 8});
  auto r = matmul(eye, b);
  CHECK(r.at(0, 0) == 5.0);
  CHECK(r.at(0, 1) == 6.0);
  CHECK(r.at(1, 0) == 7.0);
  CHECK(r.at(1, 1) == 8.0);

  TensorD a({2, 2}, {1, 2, 3, 4});
  auto c = matmul(a, b);
  CHECK(c.at(0, 0) == 19.0);
  CHECK(c.at(0, 1) == 22.0);
  CHECK(c.at(1, 0) == 43.0);
  CHECK(c.at(1, 1) == 50.0);

  TensorD row({1, 3}, {1, 2, 3});
  TensorD ones({3, 1}, {1, 1, 1});
  CHECK(matmul(row, ones).at(0, 0) == 6.0);

  // identity on both sides, exact
  auto left = matmul(eye, a);
  auto right = matmul(a, eye);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(left.data()[i] == a.data()[i]);
    CHECK(right.data()[i] == a.data()[i]);
  }
}

TEST_CASE("matmul dimension errors name both shapes") {
  TensorD a({2, 3}), b({4, 5});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("conv2d worked examples") {
  // 1x1 unit kernel is the identity map, exact
  TensorD x({2, 3, 4});
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = double(rng() % 17) - 8;
  TensorD k1({2, 2, 1, 1}, {1, 0, 0, 1}); // unit kernels on the diagonal
  // build per-channel identity kernels: out0 <- in0, out1 <- in1
  auto y = conv2d(x, k1, 1, 0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);

  // all-ones 3x3 input with a 3x3 ones kernel, no padding: sum of nine ones
  TensorD ones({1, 3, 3}, std::vector<double>(9, 1.0));
  TensorD k9({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto s = conv2d(ones, k9, 1, 0);
  CHECK(s.dim(1) == 1);
  CHECK(s.at(0, 0, 0) == 9.0);

  // 4x4 ones, 3x3 ones kernel, stride 1, pad 1: corners 4, edges 6, center 9
  TensorD ones4({1, 4, 4}, std::vector<double>(16, 1.0));
  auto p = conv2d(ones4, k9, 1, 1);
  CHECK(p.at(0, 0, 0) == 4.0);
  CHECK(p.at(0, 0, 1) == 6.0);
  CHECK(p.at(0, 1, 0) == 6.0);
  CHECK(p.at(0, 1, 1) == 9.0);
  CHECK(p.at(0, 3, 3) == 4.0);

  // non-integral output extent
  TensorD bad({1, 4, 4});
  TensorD kb({1, 1, 3, 3});
  CHECK_THROWS_AS(conv2d(bad, kb, 2, 0), DimensionError);
}

TEST_CASE("conv2d equals the naive five-loop oracle on randomized shapes") {
  std::mt19937_64 rng(42);
  for (int iter = 0; iter < 50; ++iter) {
    const int c_in = 1 + int(rng() % 4);
    const int c_out = 1 + int(rng() % 5);
    const int kh = 1 + int(rng() % 3);
    const int kw = 1 + int(rng() % 3);
    const int pad = int(rng() % 2);
    int h = kh + int(rng() % 6);
    int w = kw + int(rng() % 6);
    int stride = 1 + int(rng() % 2);
    // keep the output extents integral per the contract
    while ((h + 2 * pad - kh) % stride != 0) ++h;
    while ((w + 2 * pad - kw) % stride != 0) ++w;
    auto x = oracle::random_tensor<double>({c_in, h, w}, rng);
    auto k = oracle::random_tensor<double>({c_out, c_in, kh, kw}, rng);
    auto want = oracle::naive_conv2d(x, k, stride, pad);
    auto got = conv2d(x, k, stride, pad);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      REQUIRE(oracle::rel_err(got.data()[i], want.data()[i]) < 1e-12);
  }
}

TEST_CASE("reduce_mean_var worked examples and shift property") {
  TensorD x({3, 1}, {2, 4, 6});
  auto [m, v] = reduce_mean_var(x);
  CHECK(m.at(0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(v.at(0) == doctest::Approx(8.0 / 3.0).epsilon(1e-15));

  TensorD c({4, 2}, {3, 7, 3, 7, 3, 7, 3, 7});
  auto [mc, vc] = reduce_mean_var(c);
  CHECK(mc.at(0) == 3.0);
  CHECK(mc.at(1) == 7.0);
  CHECK(vc.at(0) == 0.0);
  CHECK(vc.at(1) == 0.0);

  TensorD two({2, 2}, {1, 0, -1, 0});
  auto [m2, v2] = reduce_mean_var(two);
  CHECK(m2.at(0) == 0.0);
  CHECK(m2.at(1) == 0.0);
  CHECK(v2.at(0) == 1.0);
  CHECK(v2.at(1) == 0.0);

  // shifting by a constant moves the mean and leaves the variance
  std::mt19937_64 rng(17);
  auto base = oracle::random_tensor<double>({32, 9}, rng);
  auto shifted = base;
  const double shift = 3.25;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += shift;
  auto [mb, vb] = reduce_mean_var(base);
  auto [ms, vs] = reduce_mean_var(shifted);
  for (int j = 0; j < 9; ++j) {
    CHECK(std::abs(ms.at(j) - mb.at(j) - shift) < 1e-10);
    CHECK(std::abs(vs.at(j) - vb.at(j)) < 1e-10);
  }
}
