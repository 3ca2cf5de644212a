#pragma once

#include <Eigen/Core>
#include <json.hpp>

namespace rolealign {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Default lower bound on covariance eigenvalues, in m^2.
inline constexpr double kDefaultEigenFloor = 1e-6;

struct Eigenvalues2 {
  double major;  // largest
  double minor;  // smallest
  double ratio() const { return major / minor; }
};

// Closed-form eigenvalues of a symmetric 2x2 matrix.
Eigenvalues2 symmetric_eigenvalues(const Mat2& m);

// Returns cov with floor - minor added to the diagonal when minor < floor.
Mat2 floor_eigenvalues(const Mat2& cov, double floor = kDefaultEigenFloor);

// One role's generating distribution: mean (m), covariance (m^2) and mixture
// weight. Immutable; the constructor rejects asymmetric, non-finite or
// non-positive-definite covariances and weights outside [0, 1].
class Gaussian2D {
 public:
  Gaussian2D(const Vec2& mean, const Mat2& covariance, double weight = 1.0);

  const Vec2& mean() const { return mean_; }
  const Mat2& covariance() const { return cov_; }
  const Mat2& precision() const { return precision_; }
  double weight() const { return weight_; }
  double determinant() const { return det_; }

  Gaussian2D with_weight(double weight) const { return {mean_, cov_, weight}; }

  double log_density(const Vec2& x) const {
    const Vec2 d = x - mean_;
    return log_norm_ - 0.5 * d.dot(precision_ * d);
  }

  // Squared Mahalanobis distance of x from the mean.
  double mahalanobis2(const Vec2& x) const {
    const Vec2 d = x - mean_;
    return d.dot(precision_ * d);
  }

  bool operator==(const Gaussian2D& o) const {
    return mean_ == o.mean_ && cov_ == o.cov_ && weight_ == o.weight_;
  }

 private:
  Vec2 mean_;
  Mat2 cov_;
  double weight_;
  Mat2 precision_;
  double det_;
  double log_norm_;  // -0.5 * ln((2 pi)^2 det)
};

double gaussian_log_pdf(const Gaussian2D& g, const Vec2& x);

// D_B = 1/8 dm' S^-1 dm + 1/2 ln(det S / sqrt(det Sp det Sq)), S = (Sp + Sq) / 2.
double bhattacharyya_distance(const Gaussian2D& p, const Gaussian2D& q);

// Mahalanobis distance between the means under the midpoint covariance.
double mahalanobis_between_means(const Gaussian2D& p, const Gaussian2D& q);

// KL(p || q) in nats.
double kl_divergence(const Gaussian2D& p, const Gaussian2D& q);

// 1/2 ln((2 pi e)^2 det S), nats.
double differential_entropy(const Gaussian2D& g);

// pi / sqrt(l1 l2) with l1, l2 the covariance eigenvalues. This is the role
// "area" as used in the formation comparison reports; see ellipse_area for the
// one-sigma ellipse area pi * sqrt(l1 l2).
double role_area(const Gaussian2D& g);
double ellipse_area(const Gaussian2D& g);

Eigenvalues2 covariance_eigenvalues(const Gaussian2D& g);

// {"mean":[x,y],"cov":[[a,b],[b,c]],"weight":w}
nlohmann::json to_json(const Gaussian2D& g);
Gaussian2D gaussian_from_json(const nlohmann::json& j);

}  // namespace rolealign
