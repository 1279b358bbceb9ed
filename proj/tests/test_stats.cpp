#include "wirefield/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace wirefield;

TEST_CASE("average ranks share ties") {
  const std::vector<double> v{3.0, 1.0, 3.0, 2.0};
  const auto r = average_ranks(v);
  CHECK(r == std::vector<double>{2.5, 0.0, 2.5, 1.0});
}

TEST_CASE("pearson on known data") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, z{5, 4, 3, 2, 1};
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  CHECK(pearson(x, z) == doctest::Approx(-1.0));
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
  CHECK(pearson(a, b) == doctest::Approx(0.8));
  const std::vector<double> flat{1, 1, 1, 1};
  CHECK(std::isnan(pearson(a, flat)));
  CHECK_THROWS(pearson(a, x));
}

TEST_CASE("spearman sees any monotone relation as perfect") {
  std::vector<double> x, y;
  for (int i = 1; i <= 20; ++i) {
    x.push_back(i);
    y.push_back(std::exp(0.3 * i));
  }
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  CHECK(pearson(x, y) < 0.99);
}

TEST_CASE("median") {
  CHECK(median({5, 1, 3}) == 3.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("power law fit recovers exact parameters") {
  std::vector<double> x, y;
  for (double v = 1.0; v < 100.0; v *= 1.7) {
    x.push_back(v);
    y.push_back(2.0 * std::pow(v, 1.5));
  }
  x.push_back(-1.0);
  y.push_back(3.0);
  const PowerFit f = fit_power_law(x, y);
  CHECK(f.a == doctest::Approx(2.0));
  CHECK(f.b == doctest::Approx(1.5));
  CHECK(f.r_squared == doctest::Approx(1.0));
  CHECK(f.points == x.size() - 1);
}

TEST_CASE("power law fit of noisy data has r squared below one") {
  std::mt19937_64 rng(1);
  std::lognormal_distribution<double> noise(0.0, 0.3);
  std::vector<double> x, y;
  for (int i = 1; i <= 50; ++i) {
    x.push_back(i);
    y.push_back(0.5 * std::pow(i, 0.8) * noise(rng));
  }
  const PowerFit f = fit_power_law(x, y);
  CHECK(f.b == doctest::Approx(0.8).epsilon(0.2));
  CHECK(f.r_squared < 1.0);
  CHECK(f.r_squared > 0.6);
}

TEST_CASE("windowed variance") {
  const std::vector<double> x{0.0, 0.1, 0.2, 1.0, 1.1, 1.2, 5.0};
  const std::vector<double> y{1.0, 2.0, 3.0, 10.0, 10.0, 10.0, 7.0};
  const auto w = windowed_variance(x, y, 0.5, 0.5);
  REQUIRE(w.size() == 2);
  CHECK(w[0].center == doctest::Approx(0.25));
  CHECK(w[0].count == 3);
  CHECK(w[0].variance == doctest::Approx(1.0));
  CHECK(w[1].center == doctest::Approx(1.25));
  CHECK(w[1].variance == doctest::Approx(0.0));
  CHECK_THROWS(windowed_variance(x, y, 0.0, 0.5));
}
