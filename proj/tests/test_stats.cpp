// selfnorm-stats tests: the measurement protocol, csv export, and bound
// checks.

#include <doctest.h>

#include "oracles.hpp"
#include "sndcnn/stats.hpp"

#include <random>
#include <sstream>

using namespace sndcnn;

TEST_CASE("layer_stats worked examples") {
  TensorD zeros({4, 3});
  auto s = layer_stats(1, 0, zeros);
  CHECK(s.mean == 0.0);
  CHECK(s.variance == 0.0);

  // unit j constant j over the batch: unit means 0..3 average to 1.5, var 0
  TensorD units({5, 4});
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) units.at(i, j) = double(j);
  auto u = layer_stats(2, 7, units);
  CHECK(u.mean == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(u.variance == 0.0);
  CHECK(u.layer == 2);
  CHECK(u.step == 7);

  CHECK_THROWS_AS(layer_stats(1, 0, TensorD({1, 4})), BatchError);
}

TEST_CASE("layer_stats on a seeded normal sample hits the large-sample moments") {
  Rng rng(555);
  TensorD x({256, 512});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.next_normal();
  auto s = layer_stats(1, 0, x);
  CHECK(std::abs(s.mean) < 0.02);
  CHECK(s.variance > 0.95);
  CHECK(s.variance < 1.05);
}

TEST_CASE("record equals the reduce_mean_var composition and ignores unit order") {
  std::mt19937_64 rng(66);
  auto x = oracle::random_tensor<double>({32, 17}, rng);
  StatsRecorder rec(1);
  auto s = rec.record(3, 10, x);
  auto [m, v] = reduce_mean_var(x);
  double msum = 0, vsum = 0;
  for (int j = 0; j < 17; ++j) {
    msum += m.at(j);
    vsum += v.at(j);
  }
  CHECK(std::abs(s.mean - msum / 17) < 1e-12);
  CHECK(std::abs(s.variance - vsum / 17) < 1e-12);

  // permuting units leaves the record unchanged up to summation order
  TensorD perm({32, 17});
  std::vector<int> order(17);
  for (int j = 0; j < 17; ++j) order[std::size_t(j)] = (j * 5 + 3) % 17;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 17; ++j) perm.at(i, j) = x.at(i, order[std::size_t(j)]);
  auto sp = rec.record(3, 11, perm);
  CHECK(sp.mean == doctest::Approx(s.mean).epsilon(1e-12));
  CHECK(sp.variance == doctest::Approx(s.variance).epsilon(1e-12));

  // conv-shaped activations flatten to c*h*w units
  Tensor<double> conv({4, 3, 2, 2});
  std::mt19937_64 rng2(5);
  for (std::size_t i = 0; i < conv.size(); ++i) conv.data()[i] = double(rng2() % 7);
  auto sc = rec.record(1, 0, conv);
  Tensor<double> flat = conv;
  flat.reshape({4, 12});
  auto sf = layer_stats(1, 0, flat);
  CHECK(sc.mean == sf.mean);
  CHECK(sc.variance == sf.variance);
}

TEST_CASE("export_csv formatting and ordering") {
  std::ostringstream empty;
  export_csv({}, empty);
  CHECK(empty.str() == "step,layer,mean,variance\n");

  std::ostringstream one;
  export_csv({{23, 5, 0.1, 1.2}}, one);
  CHECK(one.str() == "step,layer,mean,variance\n5,23,0.1,1.2\n");

  // rows come out sorted by (step, layer) regardless of insertion order
  std::vector<LayerStats> recs{{2, 10, 0.5, 1.0}, {1, 0, 0.25, 2.0},  {3, 0, 0.0, 0.5},
                               {1, 10, -0.125, 1.5}, {2, 0, 0.75, 3.0}};
  std::ostringstream out;
  export_csv(recs, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  long prev_step = -1;
  int prev_layer = -1;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    long step;
    int layer;
    char c;
    std::istringstream ls(line);
    ls >> step >> c >> layer;
    CHECK((step > prev_step || (step == prev_step && layer > prev_layer)));
    prev_step = step;
    prev_layer = layer;
  }
  CHECK(rows == 5);

  // >= 9 significant digits survive the round trip
  std::ostringstream prec;
  export_csv({{1, 1, 0.123456789012345, 1.23456789012345}}, prec);
  CHECK(prec.str().find("0.123456789") != std::string::npos);
  CHECK(prec.str().find("1.23456789") != std::string::npos);
}

TEST_CASE("check_bounds pass, violation, and empty selection") {
  std::vector<LayerStats> recs;
  for (int layer = 1; layer <= 4; ++layer)
    for (long step = 0; step < 3; ++step) recs.push_back({layer, step, 0.0, 1.0});
  auto all = check_bounds(recs, 1, 4, 0.8, 9.0);
  CHECK(all.size() == 4);
  for (const auto& r : all) CHECK(r.pass);

  recs.push_back({2, 3, 0.85, 1.0}); // |mean| over the 0.8 bound
  auto rep = check_bounds(recs, 1, 4, 0.8, 9.0);
  for (const auto& r : rep) {
    if (r.layer == 2) {
      CHECK_FALSE(r.pass);
      CHECK(r.worst_abs_mean == doctest::Approx(0.85));
    } else {
      CHECK(r.pass);
    }
  }

  CHECK_THROWS_AS(check_bounds(recs, 9, 12, 0.8, 9.0), EmptyReportError);
  CHECK_THROWS_AS(check_bounds(recs, 1, 4, -1.0, 9.0), ConfigError);
}
