#include <cmath>

#include "doctest.h"
#include "flexmuse/error.hpp"
#include "flexmuse/numerics.hpp"
#include "flexmuse/rng.hpp"

using namespace flexmuse;

TEST_CASE("vec_dot basics") {
  CHECK(vec_dot({1, 0}, {1, 0}) == 1.0);
  CHECK(vec_dot({1, 0}, {0, 1}) == 0.0);
  CHECK(vec_dot({1, 2, 3}, {4, 5, 6}) == 32.0);
  CHECK_THROWS_AS(vec_dot({1, 2}, {1, 2, 3}), UsageError);
}

TEST_CASE("softmax closed forms") {
  CHECK(softmax({0.0}) == Vec{1.0});

  const Vec tied = softmax({7.0, 7.0, 7.0});
  for (double p : tied) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const Vec two = softmax({0.0, std::log(3.0)});
  CHECK(two[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(0.75).epsilon(1e-14));

  CHECK_THROWS_AS(softmax({}), UsageError);
}

TEST_CASE("softmax is a probability vector on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    Vec x(n);
    for (auto& v : x) v = (rng.uniform() * 2.0 - 1.0) * 50.0;
    const Vec p = softmax(x);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax shift invariance") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    Vec x(4);
    for (auto& v : x) v = (rng.uniform() * 2.0 - 1.0) * 40.0;
    Vec shifted = x;
    const double c = (rng.uniform() * 2.0 - 1.0) * 30.0;
    for (auto& v : shifted) v += c;
    const Vec a = softmax(x);
    const Vec b = softmax(shifted);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("sigmoid values") {
  const Vec z = sigmoid_vec({0.0, 0.0});
  CHECK(z[0] == 0.5);
  CHECK(z[1] == 0.5);
  CHECK(std::abs(sigmoid(40.0) - 1.0) < 1e-12);
  CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(sigmoid(-745.0) > 0.0);
  CHECK(sigmoid(745.0) < 1.0 + 1e-15);
}

TEST_CASE("finite_diff_grad on known functions") {
  const double h = 1e-5;

  const auto sqnorm = [](const Vec& v) { return vec_dot(v, v); };
  const Vec g1 = finite_diff_grad(sqnorm, {1.0, 2.0}, h);
  CHECK(std::abs(g1[0] - 2.0) < 1e-6);
  CHECK(std::abs(g1[1] - 4.0) < 1e-6);

  const Vec w = {3.0, 5.0};
  const auto lin = [&](const Vec& v) { return vec_dot(v, w); };
  const Vec g2 = finite_diff_grad(lin, {0.7, -0.2}, h);
  CHECK(std::abs(g2[0] - 3.0) < 1e-8);
  CHECK(std::abs(g2[1] - 5.0) < 1e-8);

  const auto sig0 = [](const Vec& v) { return sigmoid(v[0]); };
  const Vec g3 = finite_diff_grad(sig0, {0.0}, h);
  CHECK(std::abs(g3[0] - 0.25) < 1e-8);
}

TEST_CASE("max_rel_err and GradReport") {
  CHECK(max_rel_err({1.0, 2.0}, {1.0, 2.0}) == 0.0);
  CHECK(max_rel_err({2.0}, {1.0}) == doctest::Approx(0.5));
  const GradReport r = make_grad_report("blk", {1.0, 0.0}, {1.0, 1e-9});
  CHECK(r.param_name == "blk");
  CHECK(r.max_rel_err < 1.0);
  CHECK_THROWS_AS(max_rel_err({1.0}, {1.0, 2.0}), UsageError);
}

TEST_CASE("check_finite rejects NaN") {
  CHECK_NOTHROW(check_finite({0.0, -3.5}, "ok"));
  CHECK_THROWS_AS(check_finite({0.0, std::nan("")}, "bad"), NumericError);
}
