#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "envpred/adam.hpp"
#include "envpred/rng.hpp"
#include "test_util.hpp"

using namespace envpred;
using testutil::random_tensor;

TEST_CASE("effective learning rate follows the per-update decay") {
  AdamState st;
  st.init({});
  CHECK(st.lr() == 5e-4);

  // repeated-multiplication oracle for the closed form
  double lr = 5e-4;
  for (int i = 0; i < 100000; ++i) lr *= (1.0 - 1e-5);
  st.step = 100000;
  CHECK(st.lr() == doctest::Approx(lr).epsilon(1e-10));
  CHECK(st.lr() == doctest::Approx(1.8394e-4).epsilon(1e-4));
}

TEST_CASE("effective learning rate strictly decreases") {
  AdamState st;
  st.init({});
  double prev = st.lr();
  for (int i = 1; i < 200; ++i) {
    st.step = i;
    CHECK(st.lr() < prev);
    prev = st.lr();
  }
}

TEST_CASE("first update on a scalar matches the closed form") {
  // p = 0, g = 1: mhat = 1, vhat = 1, so the step is -lr / (1 + eps)
  std::vector<ad::Var> params = {ad::leaf(Tensor({1}), true)};
  params[0].node()->ensure_grad().v[0] = 1.0;
  AdamState st;
  st.init(params);
  adam_step(params, st);
  CHECK(st.step == 1);
  CHECK(params[0].value().v[0] == doctest::Approx(-5e-4).epsilon(1e-7));
  const double closed = -5e-4 * 1.0 / (1.0 + 1e-8);
  CHECK(params[0].value().v[0] == doctest::Approx(closed).epsilon(1e-15));
}

TEST_CASE("identical seeds give bit-identical parameter trajectories") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    std::vector<ad::Var> params = {ad::leaf(random_tensor({4, 3}, rng), true),
                                   ad::leaf(random_tensor({5}, rng), true)};
    AdamState st;
    st.init(params);
    Rng grad_rng(seed ^ 0xabcd);
    for (int step = 0; step < 50; ++step) {
      for (auto& p : params) {
        Tensor& g = p.node()->ensure_grad();
        for (double& x : g.v) x = grad_rng.uniform(-1.0, 1.0);
      }
      adam_step(params, st);
      for (auto& p : params) p.zero_grad();
    }
    std::vector<double> flat;
    for (auto& p : params) flat.insert(flat.end(), p.value().v.begin(), p.value().v.end());
    return flat;
  };
  const auto a = run(11), b = run(11);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite gradients reject the update") {
  std::vector<ad::Var> params = {ad::leaf(Tensor({2}), true)};
  params[0].node()->ensure_grad().v[0] = std::nan("");
  AdamState st;
  st.init(params);
  CHECK_THROWS_WITH_AS(adam_step(params, st), doctest::Contains("non-finite gradient"),
                       std::runtime_error);
  CHECK(st.step == 0);
  CHECK(params[0].value().v[0] == 0.0);
}

TEST_CASE("bias correction pulls early steps toward the raw gradient direction") {
  // two updates with constant gradient keep moving the parameter down
  std::vector<ad::Var> params = {ad::leaf(Tensor({1}), true)};
  AdamState st;
  st.init(params);
  double prev = 0.0;
  for (int i = 0; i < 5; ++i) {
    params[0].node()->ensure_grad().v[0] = 2.0;
    adam_step(params, st);
    params[0].zero_grad();
    CHECK(params[0].value().v[0] < prev);
    prev = params[0].value().v[0];
  }
}
