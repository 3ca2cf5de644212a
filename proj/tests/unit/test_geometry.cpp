#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rolealign/errors.hpp"
#include "rolealign/geometry.hpp"

using namespace rolealign;

namespace {

Mat2 cov(double a, double b, double c) {
  Mat2 m;
  m << a, b, b, c;
  return m;
}

// Midpoint rule over a box wide enough for both densities.
template <class F>
double integrate(F f, double lo, double hi, int n = 600) {
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) s += f(Vec2(lo + (i + 0.5) * h, lo + (j + 0.5) * h));
  }
  return s * h * h;
}

}  // namespace

TEST_CASE("eigenvalues of a symmetric 2x2") {
  const auto e = symmetric_eigenvalues(cov(2, 1, 2));
  CHECK(e.major == doctest::Approx(3));
  CHECK(e.minor == doctest::Approx(1));
  CHECK(e.ratio() == doctest::Approx(3));
  const auto d = symmetric_eigenvalues(cov(4, 0, 4));
  CHECK(d.major == doctest::Approx(4));
  CHECK(d.minor == doctest::Approx(4));
}

TEST_CASE("eigenvalue floor lifts only degenerate matrices") {
  const Mat2 ok = cov(1, 0.2, 2);
  CHECK(floor_eigenvalues(ok, 1e-6) == ok);
  const Mat2 flat = floor_eigenvalues(cov(1, 1, 1), 1e-3);
  CHECK(symmetric_eigenvalues(flat).minor == doctest::Approx(1e-3));
}

TEST_CASE("constructor rejects invalid parameters") {
  CHECK_THROWS_AS(Gaussian2D(Vec2::Zero(), cov(1, 2, 1)), InputError);
  CHECK_THROWS_AS(Gaussian2D(Vec2::Zero(), cov(-1, 0, 1)), InputError);
  Mat2 asym;
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(Gaussian2D(Vec2::Zero(), asym), InputError);
  CHECK_THROWS_AS(Gaussian2D(Vec2::Zero(), Mat2::Identity(), 1.5), InputError);
  CHECK_THROWS_AS(Gaussian2D(Vec2(NAN, 0), Mat2::Identity()), InputError);
}

TEST_CASE("log density of the standard normal") {
  const Gaussian2D g(Vec2::Zero(), Mat2::Identity());
  CHECK(g.log_density(Vec2::Zero()) == doctest::Approx(-std::log(2 * std::numbers::pi)));
  CHECK(gaussian_log_pdf(g, Vec2(1, 1)) == doctest::Approx(-std::log(2 * std::numbers::pi) - 1));
  CHECK(g.mahalanobis2(Vec2(3, 4)) == doctest::Approx(25));
}

TEST_CASE("divergences vanish for identical distributions") {
  const Gaussian2D g(Vec2(1, -2), cov(2, 0.3, 1));
  CHECK(kl_divergence(g, g) == doctest::Approx(0).epsilon(1e-12));
  CHECK(bhattacharyya_distance(g, g) == doctest::Approx(0).epsilon(1e-12));
  CHECK(mahalanobis_between_means(g, g) == doctest::Approx(0));
}

TEST_CASE("Bhattacharyya distance is symmetric, KL is not") {
  const Gaussian2D p(Vec2(0, 0), cov(1, 0, 3));
  const Gaussian2D q(Vec2(1, 1), cov(2, -0.4, 1));
  CHECK(bhattacharyya_distance(p, q) == doctest::Approx(bhattacharyya_distance(q, p)));
  CHECK(kl_divergence(p, q) != doctest::Approx(kl_divergence(q, p)));
}

TEST_CASE("equal covariances reduce to the Mahalanobis term") {
  const Mat2 s = cov(2, 0.5, 1);
  const Gaussian2D p(Vec2(0, 0), s), q(Vec2(2, -1), s);
  const double m2 = std::pow(mahalanobis_between_means(p, q), 2);
  CHECK(bhattacharyya_distance(p, q) == doctest::Approx(m2 / 8));
  CHECK(kl_divergence(p, q) == doctest::Approx(m2 / 2));
}

TEST_CASE("closed forms agree with quadrature") {
  const Gaussian2D p(Vec2(0.3, -0.2), cov(1.2, 0.3, 0.8));
  const Gaussian2D q(Vec2(-0.5, 0.4), cov(0.9, -0.2, 1.5));
  const double kl = integrate(
      [&](const Vec2& x) {
        const double lp = p.log_density(x);
        return std::exp(lp) * (lp - q.log_density(x));
      },
      -10, 10);
  CHECK(kl_divergence(p, q) == doctest::Approx(kl).epsilon(1e-6));

  const double bc = integrate(
      [&](const Vec2& x) { return std::exp(0.5 * (p.log_density(x) + q.log_density(x))); }, -10, 10);
  CHECK(bhattacharyya_distance(p, q) == doctest::Approx(-std::log(bc)).epsilon(1e-6));

  const double h = integrate(
      [&](const Vec2& x) {
        const double lp = p.log_density(x);
        return -std::exp(lp) * lp;
      },
      -10, 10);
  CHECK(differential_entropy(p) == doctest::Approx(h).epsilon(1e-6));
}

TEST_CASE("role area and ellipse area") {
  const Gaussian2D g(Vec2::Zero(), cov(4, 0, 1));
  CHECK(role_area(g) == doctest::Approx(std::numbers::pi / 2));
  CHECK(ellipse_area(g) == doctest::Approx(2 * std::numbers::pi));
  CHECK(covariance_eigenvalues(g).ratio() == doctest::Approx(4));
}

TEST_CASE("json round trip") {
  const Gaussian2D g(Vec2(1.25, -3), cov(2, 0.125, 0.5), 0.25);
  const auto j = to_json(g);
  CHECK(j.at("weight").get<double>() == 0.25);
  CHECK(gaussian_from_json(j) == g);
  CHECK(gaussian_from_json(nlohmann::json::parse(j.dump())) == g);
}
