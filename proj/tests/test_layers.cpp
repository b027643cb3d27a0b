// Layer tests: frozen activation values, batchnorm identities, softmax
// cross-entropy, initializer statistics, and per-layer finite-difference
// gradient checks in double precision.

#include <doctest.h>

#include "oracles.hpp"
#include "sndcnn/layers.hpp"

#include <random>

using namespace sndcnn;

namespace {
TensorD scalar_tensor(double v) { return TensorD({1}, {v}); }
} // namespace

TEST_CASE("selu forward frozen values") {
  SeluParams<double> p;
  CHECK(selu_forward(scalar_tensor(0.0), p).at(0) == 0.0);
  CHECK(selu_forward(scalar_tensor(2.0), p).at(0) ==
        doctest::Approx(2.1014019747109610).epsilon(1e-15));
  // lambda*alpha*(e^-1 - 1), checked against independent high-precision eval
  CHECK(selu_forward(scalar_tensor(-1.0), p).at(0) ==
        doctest::Approx(-1.1113307378125627).epsilon(1e-14));
  CHECK(selu_forward(scalar_tensor(-0.5), p).at(0) ==
        doctest::Approx(-0.6917581878028714).epsilon(1e-14));
}

TEST_CASE("selu backward slopes and saturation") {
  SeluParams<double> p;
  TensorD g({1}, {1.0});
  // linear branch slope is lambda
  CHECK(selu_backward(scalar_tensor(3.0), g, p).at(0) ==
        doctest::Approx(1.0507009873554805).epsilon(1e-15));
  // saturating branch: lambda*alpha*e^x, vanishing as x -> -inf
  CHECK(selu_backward(scalar_tensor(-1.0), g, p).at(0) ==
        doctest::Approx(0.6467686030348141).epsilon(1e-14));
  CHECK(selu_backward(scalar_tensor(-60.0), g, p).at(0) < 1e-20);
  // at exactly 0 the saturating-branch derivative lambda*alpha applies
  CHECK(selu_backward(scalar_tensor(0.0), g, p).at(0) ==
        doctest::Approx(1.0507009873554805 * 1.6732632423543772).epsilon(1e-15));
  CHECK_THROWS_AS(selu_backward(TensorD({2}), TensorD({3})), DimensionError);
}

TEST_CASE("selu derivative matches central finite differences") {
  SeluParams<double> p;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng);
    const double h = 1e-6;
    const double fd = (selu_forward(scalar_tensor(x + h), p).at(0) -
                       selu_forward(scalar_tensor(x - h), p).at(0)) /
                      (2 * h);
    const double an = selu_backward(scalar_tensor(x), TensorD({1}, {1.0}), p).at(0);
    CHECK(oracle::rel_err(an, fd) < 1e-7);
  }
}

TEST_CASE("selu monotonicity and continuity near zero") {
  SeluParams<double> p;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-6, 6);
  double prev_x = -1e9, prev_y = -1e9;
  std::vector<double> xs;
  for (int i = 0; i < 500; ++i) xs.push_back(u(rng));
  std::sort(xs.begin(), xs.end());
  for (double x : xs) {
    const double y = selu_forward(scalar_tensor(x), p).at(0);
    CHECK(y >= prev_y);
    if (prev_x > -1e8) {
      // Lipschitz bound lambda*alpha near zero and branch agreement at 0
      CHECK(std::abs(y - prev_y) <=
            1.0507009873554805 * 1.6732632423543772 * (x - prev_x) + 1e-12);
    }
    prev_x = x;
    prev_y = y;
  }
  const double eps = 1e-9;
  const double below = selu_forward(scalar_tensor(-eps), p).at(0);
  const double above = selu_forward(scalar_tensor(eps), p).at(0);
  CHECK(std::abs(above - below) < 1e-8);
}

TEST_CASE("relu forward and backward") {
  CHECK(relu_forward(scalar_tensor(-5.0)).at(0) == 0.0);
  CHECK(relu_forward(scalar_tensor(5.0)).at(0) == 5.0);
  TensorD g({1}, {2.5});
  CHECK(relu_backward(scalar_tensor(0.0), g).at(0) == 0.0); // subgradient 0 at 0
  CHECK(relu_backward(scalar_tensor(1.0), g).at(0) == 2.5);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int i = 0; i < 50; ++i) {
    const double x = (i % 2 ? 1 : -1) * u(rng);
    const double h = 1e-6;
    const double fd = (relu_forward(scalar_tensor(x + h)).at(0) -
                       relu_forward(scalar_tensor(x - h)).at(0)) /
                      (2 * h);
    const double an = relu_backward(scalar_tensor(x), TensorD({1}, {1.0})).at(0);
    CHECK(oracle::rel_err(an, fd) < 1e-7);
  }
}

TEST_CASE("bn forward worked examples") {
  // column [2,4,6] with gamma=1, beta=0, tiny epsilon
  BnParams<double> p(1);
  p.epsilon = 1e-12;
  TensorD x({3, 1}, {2, 4, 6});
  auto y = bn_forward(x, p);
  CHECK(y.at(0, 0) == doctest::Approx(-1.2247448713915890).epsilon(1e-9));
  CHECK(y.at(1, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(y.at(2, 0) == doctest::Approx(1.2247448713915890).epsilon(1e-9));

  // gamma = sqrt(var + eps), beta = mean represents the identity transform
  std::mt19937_64 rng(8);
  auto data = oracle::random_tensor<double>({16, 5}, rng, 2.0);
  BnParams<double> q(5);
  q.epsilon = 1e-5;
  std::vector<double> mean, var;
  oracle::naive_col_stats(data, mean, var);
  for (int j = 0; j < 5; ++j) {
    q.gamma.at(j) = std::sqrt(var[std::size_t(j)] + q.epsilon);
    q.beta.at(j) = mean[std::size_t(j)];
  }
  auto id = bn_forward(data, q);
  for (std::size_t i = 0; i < data.size(); ++i)
    CHECK(std::abs(id.data()[i] - data.data()[i]) < 1e-10);

  // constant column maps to beta
  BnParams<double> r(1);
  r.beta.at(0) = 4.5;
  r.gamma.at(0) = 3.0;
  TensorD cc({4, 1}, {2, 2, 2, 2});
  auto yc = bn_forward(cc, r);
  for (int i = 0; i < 4; ++i) CHECK(yc.at(i, 0) == doctest::Approx(4.5).epsilon(1e-12));

  // normalized output has near-zero mean, near-unit variance
  BnParams<double> s(5);
  auto norm = bn_forward(data, s);
  std::vector<double> nm, nv;
  oracle::naive_col_stats(norm, nm, nv);
  for (int j = 0; j < 5; ++j) {
    CHECK(std::abs(nm[std::size_t(j)]) < 1e-8);
    CHECK(std::abs(nv[std::size_t(j)] - 1.0) < 1e-4); // eps-limited
  }
}

TEST_CASE("bn errors") {
  BnParams<double> p(3);
  CHECK_THROWS_AS(bn_forward(TensorD({1, 3}), p), BatchError);
  BnParams<double> fresh(3);
  CHECK_THROWS_AS(bn_backward(TensorD({4, 3}), fresh), StateError);
}

TEST_CASE("bn backward: beta gradient is the column sum, zero grad_out") {
  std::mt19937_64 rng(14);
  auto x = oracle::random_tensor<double>({8, 4}, rng);
  BnParams<double> p(4);
  bn_forward(x, p);
  auto zero = TensorD({8, 4});
  auto g0 = bn_backward(zero, p);
  for (int j = 0; j < 4; ++j) CHECK(g0.dgamma.at(j) == 0.0);

  bn_forward(x, p);
  auto go = oracle::random_tensor<double>({8, 4}, rng);
  auto g = bn_backward(go, p);
  for (int j = 0; j < 4; ++j) {
    double want = 0;
    for (int i = 0; i < 8; ++i) want += go.at(i, j);
    CHECK(g.dbeta.at(j) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("bn backward matches finite differences on random batches") {
  std::mt19937_64 rng(21);
  for (int iter = 0; iter < 5; ++iter) {
    auto x = oracle::random_tensor<double>({8, 4}, rng);
    BnParams<double> p(4);
    for (int j = 0; j < 4; ++j) {
      p.gamma.at(j) = 0.5 + 0.25 * double(j);
      p.beta.at(j) = -0.3 + 0.2 * double(j);
    }
    auto go = oracle::random_tensor<double>({8, 4}, rng);
    auto loss_of = [&](TensorD& xin) {
      BnParams<double> q(4);
      q.gamma = p.gamma;
      q.beta = p.beta;
      auto y = bn_forward(xin, q);
      double acc = 0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * go.data()[i];
      return acc;
    };
    bn_forward(x, p);
    auto grads = bn_backward(go, p);
    auto loss_x = [&]() { return loss_of(x); };
    CHECK(oracle::fd_check(x, grads.dx, loss_x, 1e-5) < 1e-6);
    auto loss_gamma = [&]() {
      BnParams<double> q(4);
      q.gamma = p.gamma;
      q.beta = p.beta;
      auto y = bn_forward(x, q);
      double acc = 0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * go.data()[i];
      return acc;
    };
    CHECK(oracle::fd_check(p.gamma, grads.dgamma, loss_gamma, 1e-5) < 1e-6);
    CHECK(oracle::fd_check(p.beta, grads.dbeta, loss_gamma, 1e-5) < 1e-6);
  }
}

TEST_CASE("softmax cross-entropy worked examples") {
  TensorD uniform({1, 4});
  auto r = softmax_xent(uniform, {2});
  CHECK(r.loss == doctest::Approx(1.3862943611198906).epsilon(1e-12));

  TensorD dominant({1, 3}, {500.0, 0.0, 0.0});
  auto d = softmax_xent(dominant, {0});
  CHECK(d.loss < 1e-12);

  CHECK_THROWS_AS(softmax_xent(uniform, {4}), IndexError);
  CHECK_THROWS_AS(softmax_xent(uniform, {-1}), IndexError);
}

TEST_CASE("softmax gradient matches finite differences") {
  std::mt19937_64 rng(33);
  auto logits = oracle::random_tensor<double>({4, 5}, rng, 2.0);
  std::vector<int> labels{1, 0, 4, 2};
  auto res = softmax_xent(logits, labels);
  auto loss = [&]() { return softmax_xent(logits, labels).loss; };
  CHECK(oracle::fd_check(logits, res.grad_logits, loss, 1e-6) < 1e-6);
}

TEST_CASE("dense and conv backward match finite differences") {
  std::mt19937_64 rng(44);
  // dense
  for (int iter = 0; iter < 3; ++iter) {
    auto x = oracle::random_tensor<double>({5, 7}, rng);
    DenseParams<double> p(7, 6);
    p.weights = oracle::random_tensor<double>({7, 6}, rng, 0.4);
    p.bias = oracle::random_tensor<double>({6}, rng, 0.2);
    auto go = oracle::random_tensor<double>({5, 6}, rng);
    auto dot = [&](const TensorD& y) {
      double acc = 0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * go.data()[i];
      return acc;
    };
    auto grads = dense_backward(x, go, p);
    auto lw = [&]() { return dot(dense_forward(x, p)); };
    CHECK(oracle::fd_check(p.weights, grads.dweights, lw, 1e-5) < 1e-7);
    CHECK(oracle::fd_check(p.bias, grads.dbias, lw, 1e-5) < 1e-7);
    CHECK(oracle::fd_check(x, grads.dx, lw, 1e-5) < 1e-7);
  }
  // conv, including stride and padding
  for (int iter = 0; iter < 3; ++iter) {
    auto x4 = oracle::random_tensor<double>({2, 2, 5, 5}, rng);
    ConvParams<double> cp(3, 2, 3, 3, 2, 1, true);
    cp.kernels = oracle::random_tensor<double>({3, 2, 3, 3}, rng, 0.3);
    cp.bias = oracle::random_tensor<double>({3}, rng, 0.2);
    auto y0 = conv_forward(x4, cp);
    auto go = oracle::random_tensor<double>(y0.shape(), rng);
    auto dot = [&](const Tensor<double>& y) {
      double acc = 0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * go.data()[i];
      return acc;
    };
    auto grads = conv_backward(x4, go, cp);
    auto lw = [&]() { return dot(conv_forward(x4, cp)); };
    CHECK(oracle::fd_check(cp.kernels, grads.dkernels, lw, 1e-5) < 1e-6);
    CHECK(oracle::fd_check(cp.bias, grads.dbias, lw, 1e-5) < 1e-6);
    CHECK(oracle::fd_check(x4, grads.dx, lw, 1e-5) < 1e-6);
  }
}

TEST_CASE("init_weights statistics and determinism") {
  auto a = init_weights<double>({400, 100}, InitScheme::lecun_normal, 99);
  auto b = init_weights<double>({400, 100}, InitScheme::lecun_normal, 99);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.data()[i] == b.data()[i]);

  // lecun fan_in 400 -> std 0.05; he fan_in 2 -> std 1; 1e6 draws within 2%
  auto big = init_weights<double>({400, 2500}, InitScheme::lecun_normal, 123);
  double sq = 0;
  for (std::size_t i = 0; i < big.size(); ++i) sq += big.data()[i] * big.data()[i];
  const double std_lecun = std::sqrt(sq / double(big.size()));
  CHECK(std_lecun == doctest::Approx(0.05).epsilon(0.02));

  auto he = init_weights<double>({2, 500000}, InitScheme::he_normal, 321);
  sq = 0;
  for (std::size_t i = 0; i < he.size(); ++i) sq += he.data()[i] * he.data()[i];
  CHECK(std::sqrt(sq / double(he.size())) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("selu fixed point: dense + selu keeps standard-normal inputs standard") {
  // width >= 256, lecun weights, zero bias, N(0,1) inputs, 20 seeds
  const int d = 256, b = 512;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + std::uint64_t(seed));
    Tensor<double> x({b, d});
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.next_normal();
    DenseParams<double> p(d, d);
    p.weights = init_weights<double>({d, d}, InitScheme::lecun_normal,
                                     2000 + std::uint64_t(seed));
    auto h = selu_forward(dense_forward(x, p));
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < h.size(); ++i) sum += h.data()[i];
    const double mean = sum / double(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double dd = h.data()[i] - mean;
      sq += dd * dd;
    }
    const double var = sq / double(h.size());
    CHECK(mean >= -0.1);
    CHECK(mean <= 0.1);
    CHECK(var >= 0.8);
    CHECK(var <= 1.25);
  }
}
