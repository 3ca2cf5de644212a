#include "rolealign/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rolealign/errors.hpp"

namespace rolealign {

namespace {

constexpr double kSymmetryTol = 1e-12;

double det2(const Mat2& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

}  // namespace

Eigenvalues2 symmetric_eigenvalues(const Mat2& m) {
  const double a = m(0, 0);
  const double b = 0.5 * (m(0, 1) + m(1, 0));
  const double c = m(1, 1);
  const double half_trace = 0.5 * (a + c);
  const double disc = std::hypot(0.5 * (a - c), b);
  const double major = half_trace + disc;
  // det / major avoids cancellation when the matrix is nearly singular.
  const double det = a * c - b * b;
  const double minor = major != 0.0 ? det / major : half_trace - disc;
  return {major, minor};
}

Mat2 floor_eigenvalues(const Mat2& cov, double floor) {
  Mat2 sym = 0.5 * (cov + cov.transpose());
  const auto ev = symmetric_eigenvalues(sym);
  if (!(ev.minor >= floor)) {
    const double shift = floor - ev.minor;
    sym(0, 0) += shift;
    sym(1, 1) += shift;
  }
  return sym;
}

Gaussian2D::Gaussian2D(const Vec2& mean, const Mat2& covariance, double weight)
    : mean_(mean), cov_(covariance), weight_(weight) {
  if (!mean_.allFinite() || !cov_.allFinite()) {
    throw InputError("Gaussian2D: non-finite mean or covariance");
  }
  if (std::abs(cov_(0, 1) - cov_(1, 0)) > kSymmetryTol * (1.0 + std::abs(cov_(0, 1)))) {
    throw InputError("Gaussian2D: covariance is not symmetric");
  }
  if (!(weight_ >= 0.0 && weight_ <= 1.0)) {
    throw InputError("Gaussian2D: weight " + std::to_string(weight_) + " outside [0, 1]");
  }
  cov_(1, 0) = cov_(0, 1);
  const auto ev = symmetric_eigenvalues(cov_);
  if (!(ev.minor > 0.0)) {
    throw InputError("Gaussian2D: covariance is not positive definite");
  }
  det_ = det2(cov_);
  precision_ << cov_(1, 1), -cov_(0, 1), -cov_(0, 1), cov_(0, 0);
  precision_ /= det_;
  log_norm_ = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det_);
}

double gaussian_log_pdf(const Gaussian2D& g, const Vec2& x) { return g.log_density(x); }

double bhattacharyya_distance(const Gaussian2D& p, const Gaussian2D& q) {
  const Mat2 mid = 0.5 * (p.covariance() + q.covariance());
  const double det_mid = det2(mid);
  if (!(det_mid > 0.0)) throw NumericError("bhattacharyya_distance: singular midpoint covariance");
  const Vec2 dm = p.mean() - q.mean();
  Mat2 mid_inv;
  mid_inv << mid(1, 1), -mid(0, 1), -mid(1, 0), mid(0, 0);
  mid_inv /= det_mid;
  const double mean_term = 0.125 * dm.dot(mid_inv * dm);
  const double cov_term =
      0.5 * (std::log(det_mid) - 0.5 * (std::log(p.determinant()) + std::log(q.determinant())));
  // Both terms are non-negative analytically; clamp rounding noise at identity.
  return std::max(0.0, mean_term + cov_term);
}

double mahalanobis_between_means(const Gaussian2D& p, const Gaussian2D& q) {
  const Mat2 mid = 0.5 * (p.covariance() + q.covariance());
  const double det_mid = det2(mid);
  if (!(det_mid > 0.0)) throw NumericError("mahalanobis_between_means: singular covariance");
  Mat2 mid_inv;
  mid_inv << mid(1, 1), -mid(0, 1), -mid(1, 0), mid(0, 0);
  mid_inv /= det_mid;
  const Vec2 dm = p.mean() - q.mean();
  return std::sqrt(dm.dot(mid_inv * dm));
}

double kl_divergence(const Gaussian2D& p, const Gaussian2D& q) {
  const Mat2& q_prec = q.precision();
  const Vec2 dm = q.mean() - p.mean();
  const double trace_term = (q_prec * p.covariance()).trace();
  const double maha = dm.dot(q_prec * dm);
  const double log_det = std::log(q.determinant()) - std::log(p.determinant());
  return std::max(0.0, 0.5 * (trace_term + maha - 2.0 + log_det));
}

double differential_entropy(const Gaussian2D& g) {
  return 1.0 + std::log(2.0 * std::numbers::pi) + 0.5 * std::log(g.determinant());
}

double role_area(const Gaussian2D& g) {
  const auto ev = symmetric_eigenvalues(g.covariance());
  return std::numbers::pi / std::sqrt(ev.major * ev.minor);
}

double ellipse_area(const Gaussian2D& g) {
  const auto ev = symmetric_eigenvalues(g.covariance());
  return std::numbers::pi * std::sqrt(ev.major * ev.minor);
}

Eigenvalues2 covariance_eigenvalues(const Gaussian2D& g) {
  return symmetric_eigenvalues(g.covariance());
}

nlohmann::json to_json(const Gaussian2D& g) {
  const auto& m = g.mean();
  const auto& c = g.covariance();
  return {{"mean", {m.x(), m.y()}},
          {"cov", {{c(0, 0), c(0, 1)}, {c(1, 0), c(1, 1)}}},
          {"weight", g.weight()}};
}

Gaussian2D gaussian_from_json(const nlohmann::json& j) {
  try {
    const auto& m = j.at("mean");
    const auto& c = j.at("cov");
    if (m.size() != 2 || c.size() != 2 || c[0].size() != 2 || c[1].size() != 2) {
      throw InputError("gaussian: expected mean[2] and cov[2][2]");
    }
    Mat2 cov;
    cov << c[0][0].get<double>(), c[0][1].get<double>(), c[1][0].get<double>(),
        c[1][1].get<double>();
    const double w = j.contains("weight") ? j.at("weight").get<double>() : 1.0;
    return {Vec2(m[0].get<double>(), m[1].get<double>()), cov, w};
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("gaussian: ") + e.what());
  }
}

}  // namespace rolealign
