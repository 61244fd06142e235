#include <doctest.h>

#include <cmath>

#include "envpred/rng.hpp"
#include "envpred/tensor.hpp"

using namespace envpred;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({3, 4, 2});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  t.at3(2, 3, 1) = 5.0;
  CHECK(t.v.back() == 5.0);
  CHECK(t.all_finite());
  t.at(0) = std::nan("");
  CHECK(!t.all_finite());
  CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and fork independently") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng c = a.fork(1), d = b.fork(1), e = a.fork(2);
  CHECK(c.next() == d.next());
  CHECK(c.next() != e.next());
}

TEST_CASE("rng uniform and normal are sane") {
  Rng rng(7);
  double mean = 0.0, var = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    mean += x;
    var += x * x;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(std::fabs(mean) < 0.05);
  CHECK(std::fabs(var - 1.0) < 0.05);

  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int64_t k = rng.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
}
