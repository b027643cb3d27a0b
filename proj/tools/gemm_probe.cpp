// Quick throughput probe for the GEMM variants; not part of the test suite.
#include "sndcnn/kern/kernels.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

using namespace sndcnn;

template <class S>
void probe(const char* tag, int m, int n, int k, int reps) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<S> d(-1, 1);
  std::vector<S> a(std::size_t(m) * k), b(std::size_t(k) * n), c(std::size_t(m) * n);
  for (auto& v : a) v = d(rng);
  for (auto& v : b) v = d(rng);
  kern::gemm(m, n, k, a.data(), k, false, b.data(), n, false, c.data(), n, false);
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r)
    kern::gemm(m, n, k, a.data(), k, false, b.data(), n, false, c.data(), n, false);
  auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double gmul = double(m) * n * k * reps / dt / 1e9;
  std::printf("%-8s %-7s m=%-5d n=%-5d k=%-5d %7.2f Gmul/s (%.3fs)\n", tag,
              kern::isa_name(kern::active_isa()), m, n, k, gmul, dt);
}

int main() {
  for (auto isa : {kern::Isa::avx512, kern::Isa::avx2, kern::Isa::scalar}) {
    kern::set_isa_limit(isa);
    probe<float>("f32", 256, 256, 256, isa == kern::Isa::scalar ? 2 : 400);
    probe<float>("f32", 256, 1640, 256, isa == kern::Isa::scalar ? 1 : 100);
    probe<float>("f32", 512, 16, 144, isa == kern::Isa::scalar ? 20 : 2000);
    probe<double>("f64", 256, 256, 256, isa == kern::Isa::scalar ? 2 : 200);
  }
  kern::set_isa_limit(kern::Isa::avx512);
  probe<float>("f32-big", 1024, 1024, 1024, 30);
  return 0;
}
