// Inference-runtime tests: context stacking, skip schedules, active sets,
// exact laziness, and pipeline equivalence with the single-threaded
// reference.

#include <doctest.h>

#include "oracles.hpp"
#include "sndcnn/runtime.hpp"

#include <random>

using namespace sndcnn;

namespace {

template <class S>
FrameStream<S> make_stream(long total, int dim, std::uint64_t seed) {
  Tensor<S> frames({int(total), dim});
  Rng rng(seed);
  for (std::size_t i = 0; i < frames.size(); ++i)
    frames.data()[i] = S(rng.next_normal());
  return FrameStream<S>{std::move(frames)};
}

} // namespace

TEST_CASE("stack_context replicate padding and interior slices") {
  // T = 1: all 41 slots equal frame 0
  auto one = make_stream<double>(1, 3, 4);
  auto s1 = stack_context(one, 0);
  CHECK(s1.size() == 41u * 3u);
  for (int slot = 0; slot < 41; ++slot)
    for (int j = 0; j < 3; ++j)
      CHECK(s1.at(slot * 3 + j) == one.frames.at(0, j));

  // interior frame in a long stream: an exact slice, no padding
  auto big = make_stream<double>(60, 3, 5);
  auto sm = stack_context(big, 25);
  for (int slot = 0; slot < 41; ++slot)
    for (int j = 0; j < 3; ++j)
      CHECK(sm.at(slot * 3 + j) == big.frames.at(25 - 20 + slot, j));

  // t = 0 with T = 5: the index map is clamp(t + k, 0, T-1)
  auto small = make_stream<double>(5, 2, 6);
  auto s0 = stack_context(small, 0);
  for (int slot = 0; slot < 41; ++slot) {
    long src = slot - 20;
    if (src < 0) src = 0;
    if (src > 4) src = 4;
    for (int j = 0; j < 2; ++j) CHECK(s0.at(slot * 2 + j) == small.frames.at(src, j));
  }

  CHECK_THROWS_AS(stack_context(small, -1), IndexError);
  CHECK_THROWS_AS(stack_context(small, 5), IndexError);
}

TEST_CASE("skip schedule: computed sets and duplication map") {
  auto s = SkipSchedule::make(9, 3);
  CHECK(s.computed_count() == 3);
  CHECK(s.computed_frames() == std::vector<long>{0, 3, 6});
  for (long t : {1, 2}) CHECK(s.source_of(t) == 0);
  for (long t : {4, 5}) CHECK(s.source_of(t) == 3);
  for (long t : {7, 8}) CHECK(s.source_of(t) == 6);

  auto identity = SkipSchedule::make(5, 1);
  CHECK(identity.computed_count() == 5);
  auto vals = expand(identity, std::vector<int>{10, 11, 12, 13, 14});
  CHECK(vals == std::vector<int>{10, 11, 12, 13, 14});

  auto s7 = SkipSchedule::make(7, 3);
  CHECK(s7.computed_frames() == std::vector<long>{0, 3, 6});
  auto out = expand(s7, std::vector<int>{1, 2, 3});
  CHECK(out == std::vector<int>{1, 1, 1, 2, 2, 2, 3}); // frame 6 never duplicated
  CHECK(out.size() == 7u); // output length is always T

  CHECK_THROWS_AS(SkipSchedule::make(0, 3), ConfigError);
  CHECK_THROWS_AS(SkipSchedule::make(5, 0), ConfigError);
  CHECK_THROWS_AS(expand(s7, std::vector<int>{1, 2}), DimensionError);
}

TEST_CASE("active sets: ordering, bounds, seeded fractions") {
  auto a = ActiveSet::from_indices({7, 3, 3, 0}, 10);
  CHECK(a.indices() == std::vector<std::uint32_t>{0, 3, 7});
  CHECK_THROWS_AS(ActiveSet::from_indices({10}, 10), IndexError);

  auto all = ActiveSet::all(5);
  CHECK(all.indices() == std::vector<std::uint32_t>{0, 1, 2, 3, 4});

  Rng rng(9);
  auto frac = ActiveSet::fraction(10000, 0.05, rng);
  CHECK(frac.size() == 500u);
  for (std::size_t i = 1; i < frac.indices().size(); ++i)
    CHECK(frac.indices()[i - 1] < frac.indices()[i]);
  Rng rng2(9);
  auto frac2 = ActiveSet::fraction(10000, 0.05, rng2);
  CHECK(frac.indices() == frac2.indices()); // seeded determinism
}

TEST_CASE("lazy_output: exactness, emptiness, and the multiply counter") {
  std::mt19937_64 rng(12);
  const int d = 128, n = 10000;
  DenseParams<double> out_layer(d, n);
  out_layer.weights = oracle::random_tensor<double>({d, n}, rng, 0.1);
  out_layer.bias = oracle::random_tensor<double>({n}, rng, 0.1);
  Tensor<double> hidden({d});
  for (int i = 0; i < d; ++i) hidden.at(i) = double(i % 7) * 0.25 - 0.5;

  // empty active set: no result entries, zero multiplies
  kern::reset_multiplies();
  auto empty = lazy_output(hidden, out_layer, ActiveSet::from_indices({}, n));
  CHECK(empty.units.empty());
  CHECK(kern::multiplies() == 0);

  // full active set equals the dense forward exactly
  Tensor<double> hrow = hidden;
  hrow.reshape({1, d});
  auto full = dense_forward(hrow, out_layer);
  auto lazy_all = lazy_output(hidden, out_layer, ActiveSet::all(n));
  for (int j = 0; j < n; ++j) REQUIRE(lazy_all.values[std::size_t(j)] == full.at(0, j));

  // {3, 17} equals rows 3 and 17 of the full product; 2 * 128 multiplies
  kern::reset_multiplies();
  auto two = lazy_output(hidden, out_layer, ActiveSet::from_indices({3, 17}, n));
  CHECK(kern::multiplies() == 2u * 128u);
  CHECK(two.values[0] == full.at(0, 3));
  CHECK(two.values[1] == full.at(0, 17));

  // bounds
  DenseParams<double> tiny(4, 6);
  Tensor<double> h4({4});
  CHECK_THROWS_AS(lazy_output(h4, tiny, ActiveSet::all(9)), IndexError);
}

namespace {

template <class S>
ModelConfig pipeline_model(int output_dim) {
  ModelConfig cfg;
  cfg.stack = StackKind::dnn;
  cfg.depth = 3;
  cfg.widths = {64};
  cfg.input_dim = 41 * 40;
  cfg.output_dim = output_dim;
  cfg.activation = Activation::selu;
  return cfg;
}

template <class S>
bool same_scores(const PipelineResult<S>& a, const PipelineResult<S>& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    if (a.frames[i].frame != b.frames[i].frame) return false;
    if (a.frames[i].units != b.frames[i].units) return false;
    if (a.frames[i].values.size() != b.frames[i].values.size()) return false;
    for (std::size_t j = 0; j < a.frames[i].values.size(); ++j)
      if (a.frames[i].values[j] != b.frames[i].values[j]) return false;
  }
  return true;
}

} // namespace

TEST_CASE("pipeline equals the single-threaded reference bitwise") {
  Network<float> net(pipeline_model<float>(300), 21);
  auto stream = make_stream<float>(100, 40, 31);

  // single frame, all outputs: equals the plain full forward
  {
    auto one = make_stream<float>(1, 40, 32);
    auto sched = SkipSchedule::make(1, 1);
    auto all = ActiveSet::all(300);
    auto res = pipeline_run(net, one, sched, [&](long) { return all; }, {4, 1});
    Tensor<float> x = stack_context_rows(one, std::vector<long>{0}.data(), 1);
    auto logits = net.forward(x, RunMode::infer);
    REQUIRE(res.frames.size() == 1);
    for (int j = 0; j < 300; ++j)
      REQUIRE(res.frames[0].values[std::size_t(j)] == logits.at(0, j));
  }

  // 100-frame stream, k = 3, seeded random active sets, several capacities
  auto active_fn = [&](long t) {
    Rng rng(1000 + std::uint64_t(t));
    return ActiveSet::fraction(300, 0.2, rng);
  };
  auto sched = SkipSchedule::make(100, 3);
  auto ref = reference_run(net, stream, sched, active_fn, {4, 1});
  CHECK(ref.frames.size() == 100);
  for (int cap : {1, 4, 64}) {
    auto piped = pipeline_run(net, stream, sched, active_fn, {cap, 1});
    REQUIRE(same_scores(piped, ref));
  }
  // front batching preserves results for batch-stat-free models
  auto batched = pipeline_run(net, stream, sched, active_fn, {2, 8});
  REQUIRE(same_scores(batched, ref));

  // duplicated frames carry the source frame's scores with their own index
  CHECK(ref.frames[4].frame == 4);
  CHECK(ref.frames[4].units == ref.frames[3].units);
  for (std::size_t j = 0; j < ref.frames[4].values.size(); ++j)
    CHECK(ref.frames[4].values[j] == ref.frames[3].values[j]);
}

TEST_CASE("pipeline counters: lazy and skip accounting") {
  Network<float> net(pipeline_model<float>(10000), 2);
  auto stream = make_stream<float>(30, 40, 3);
  const int hidden_dim = net.hidden_dim();

  auto frac_fn = [&](long t) {
    Rng rng(55 + std::uint64_t(t));
    return ActiveSet::fraction(10000, 0.05, rng);
  };
  auto sched1 = SkipSchedule::make(30, 1);
  auto r1 = pipeline_run(net, stream, sched1, frac_fn, {4, 1});
  CHECK(r1.counters.frames_scored == 30);
  CHECK(r1.counters.output_multiplies == 30u * 500u * std::uint64_t(hidden_dim));

  auto sched3 = SkipSchedule::make(30, 3);
  auto r3 = pipeline_run(net, stream, sched3, frac_fn, {4, 1});
  CHECK(r3.counters.frames_scored == 10);
  // hidden-path multiplies drop to exactly one third
  CHECK(r3.counters.hidden_multiplies * 3 == r1.counters.hidden_multiplies);
  CHECK(r3.frames.size() == 30);
}

TEST_CASE("pipeline propagates worker failures with frame context") {
  Network<float> net(pipeline_model<float>(50), 4);
  auto stream = make_stream<float>(10, 40, 5);
  auto sched = SkipSchedule::make(10, 1);
  auto bad_fn = [&](long t) -> ActiveSet {
    if (t == 6) throw IndexError("synthetic decoder fault");
    return ActiveSet::all(50);
  };
  try {
    pipeline_run(net, stream, sched, bad_fn, {2, 1});
    FAIL("expected PipelineError");
  } catch (const PipelineError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("frame 6") != std::string::npos);
    CHECK(msg.find("synthetic decoder fault") != std::string::npos);
  }
}

TEST_CASE("batchnorm models require a batched front") {
  ModelConfig cfg = pipeline_model<float>(20);
  cfg.batchnorm = true;
  Network<float> net(cfg, 6);
  auto stream = make_stream<float>(8, 40, 7);
  auto sched = SkipSchedule::make(8, 1);
  auto all = ActiveSet::all(20);
  CHECK_THROWS_AS(pipeline_run(net, stream, sched, [&](long) { return all; }, {2, 1}),
                  ConfigError);
  auto ok = pipeline_run(net, stream, sched, [&](long) { return all; }, {2, 4});
  CHECK(ok.frames.size() == 8);
}
