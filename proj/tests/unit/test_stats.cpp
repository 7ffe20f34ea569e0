#include <doctest.h>

#include <cmath>

#include "nppo/error.hpp"
#include "nppo/rng.hpp"
#include "nppo/stats.hpp"

using namespace nppo;
using doctest::Approx;

// Reference values from scipy.stats.

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(stats::mean(x) == 2.5);
  CHECK(stats::stddev(x) == Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  const std::vector<double> one{7};
  CHECK(stats::stddev(one) == 0.0);
}

TEST_CASE("pearson and spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7};
  const std::vector<double> y{2, 1, 4, 3, 7, 5, 6};
  CHECK(*stats::pearson(x, y) == Approx(0.8214285714285714).epsilon(1e-13));
  CHECK(*stats::spearman(x, y) == Approx(0.8214285714285715).epsilon(1e-13));
  const std::vector<double> a{1, 2, 2, 3}, b{1, 3, 2, 4};
  CHECK(*stats::spearman(a, b) == Approx(0.9486832980505139).epsilon(1e-13));
  const std::vector<double> flat{1, 1, 1, 1};
  CHECK_FALSE(stats::pearson(flat, b).has_value());
  CHECK_FALSE(stats::spearman(a, flat).has_value());
  CHECK_THROWS_AS(stats::pearson(x, a), ShapeError);
}

TEST_CASE("average ranks with ties") {
  const std::vector<double> x{3, 1, 2, 2, 5};
  CHECK(stats::ranks(x) == std::vector<double>{4, 1, 2.5, 2.5, 5});
}

TEST_CASE("paired t-test") {
  const std::vector<double> a{1.2, 2.3, 3.1, 4.8, 5.0, 6.7};
  const std::vector<double> b{0.9, 2.5, 2.9, 4.1, 5.5, 6.0};
  const auto r = stats::paired_t_test(a, b);
  CHECK(r.t == Approx(1.0170952554312154).epsilon(1e-12));
  CHECK(r.dof == 5);
  CHECK(r.p_two_sided == Approx(0.3557705793784105).epsilon(1e-10));
  CHECK(r.p_one_sided == Approx(0.17788528968920525).epsilon(1e-10));
  const auto flipped = stats::paired_t_test(b, a);
  CHECK(flipped.p_one_sided == Approx(1 - r.p_one_sided).epsilon(1e-12));
}

TEST_CASE("paired t-test degenerate cases") {
  const std::vector<double> a{2, 3, 4}, b{1, 2, 3};
  const auto r = stats::paired_t_test(a, b);
  CHECK(std::isinf(r.t));
  CHECK(r.p_one_sided == 0.0);
  const auto same = stats::paired_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p_two_sided == 1.0);
  const std::vector<double> one{1};
  CHECK_THROWS_AS(stats::paired_t_test(one, one), DomainError);
  CHECK_THROWS_AS(stats::paired_t_test(a, one), ShapeError);
}

TEST_CASE("kolmogorov survival function") {
  CHECK(stats::kolmogorov_q(0.5) == Approx(0.9639452436648751).epsilon(1e-9));
  CHECK(stats::kolmogorov_q(1.0) == Approx(0.26999967167735456).epsilon(1e-12));
  CHECK(stats::kolmogorov_q(1.36) == Approx(0.049485876755377876).epsilon(1e-12));
  CHECK(stats::kolmogorov_q(0.0) == 1.0);
}

TEST_CASE("KS test against the standard normal") {
  const std::vector<double> s{-1.5, -0.3, 0.2, 0.9, 1.1, -0.7, 0.05, 2.2, -2.0, 0.4};
  const auto r = stats::ks_test_standard_normal(s);
  CHECK(r.statistic == Approx(0.13319279873114193).epsilon(1e-12));
  CHECK(r.p_value > 0.9);

  Rng rng(1);
  std::vector<double> normal(10000), shifted(10000);
  for (std::size_t i = 0; i < normal.size(); ++i) {
    normal[i] = rng.normal();
    shifted[i] = normal[i] + 0.1;
  }
  CHECK(stats::ks_test_standard_normal(normal).p_value > 0.01);
  CHECK(stats::ks_test_standard_normal(shifted).p_value < 1e-6);
  CHECK_THROWS_AS(stats::ks_test_standard_normal(std::vector<double>{}), DomainError);
}

TEST_CASE("correlation of a series constant up to rounding is undefined") {
  const std::vector<double> near{1.0, 1.0 + 2.2e-16, 1.0 - 1.1e-16, 1.0};
  const std::vector<double> y{1, 2, 3, 4};
  CHECK_FALSE(stats::pearson(near, y).has_value());
  CHECK_FALSE(stats::spearman(near, y).has_value());
  const std::vector<double> tiny{1e-9, 2e-9, 3e-9, 4e-9};
  CHECK(*stats::pearson(tiny, y) == doctest::Approx(1.0));
}
