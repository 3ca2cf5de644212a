#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rolealign/geometry.hpp"
#include "rolealign/ingest.hpp"

namespace rolealign {

// Unordered set of K role distributions whose weights sum to one.
class Formation {
 public:
  Formation() = default;
  explicit Formation(std::vector<Gaussian2D> components);

  std::size_t size() const { return components_.size(); }
  const Gaussian2D& operator[](std::size_t k) const { return components_[k]; }
  const std::vector<Gaussian2D>& components() const { return components_; }
  auto begin() const { return components_.begin(); }
  auto end() const { return components_.end(); }

  // Same components with weights 1/K.
  Formation with_uniform_weights() const;

  bool operator==(const Formation&) const = default;

 private:
  std::vector<Gaussian2D> components_;
};

nlohmann::json to_json(const Formation& f);
Formation formation_from_json(const nlohmann::json& j);

enum class UpdateKind { FullGMM, SoftKMeans };
std::string to_string(UpdateKind k);

struct EmIteration {
  int iteration = 0;
  double log_likelihood = 0.0;  // average over points, after this update
  UpdateKind kind = UpdateKind::FullGMM;
  std::vector<double> eig_ratios;  // per component, after this update
  double max_eig_ratio() const;
};

struct EmTrace {
  double initial_log_likelihood = 0.0;
  std::vector<EmIteration> iterations;
  bool converged = false;

  // Largest decrease across FullGMM updates (0 when monotone).
  double worst_full_gmm_drop() const;
  std::size_t soft_kmeans_steps() const;
  // iteration,loglik,update_kind,max_eig_ratio
  void write_csv(std::ostream& out) const;
};

enum class InitMode { PlayerMeans, Random };
InitMode init_mode_from_string(const std::string& s);

// Global: one out-of-band component switches every component to the spherical
// update. PerComponent: only out-of-band components are reset.
enum class GuardScope { Global, PerComponent };

struct DiscoveryConfig {
  int k = 10;
  double eig_ratio_bound = 2.0;  // full update while 1/r < l1/l2 < r for all components
  double em_tol = 1e-6;          // relative average log-likelihood gain
  int max_iters = 500;
  double kmeans_tol = 1e-6;  // max centre movement, m
  int kmeans_max_iters = 300;
  std::uint64_t seed = 0;
  InitMode init = InitMode::PlayerMeans;
  GuardScope guard = GuardScope::Global;
  double eig_floor = kDefaultEigenFloor;
  int threads = 1;

  void validate() const;
};

nlohmann::json to_json(const DiscoveryConfig& c);

// Mean position of each agent over the frames it appears in, in agent_ids order.
std::vector<Vec2> player_mean_init(const Dataset& ds);

// K distinct data points chosen uniformly with the given seed.
std::vector<Vec2> random_init(std::span<const Vec2> points, std::size_t k, std::uint64_t seed);

struct KMeansResult {
  std::vector<Vec2> centers;
  std::vector<int> labels;
  std::vector<double> inertia;  // sum of squared distances, one entry per iteration
  int iterations = 0;
  bool converged = false;
};

// Lloyd iterations until the largest centre movement drops below tol. An empty
// cluster is re-seeded at the point farthest from its own centre.
KMeansResult kmeans(std::span<const Vec2> points, std::vector<Vec2> init, double tol,
                    int max_iters = 300, int threads = 1);

// One EM update with full covariances / with per-component spherical c*I.
Formation em_step_full(const Formation& state, std::span<const Vec2> points,
                       double eig_floor = kDefaultEigenFloor, int threads = 1);
Formation em_step_spherical(const Formation& state, std::span<const Vec2> points,
                            double eig_floor = kDefaultEigenFloor, int threads = 1);

// Mean over points of log sum_k w_k N(x; mu_k, S_k).
double average_log_likelihood(std::span<const Vec2> points, const Formation& f, int threads = 1);

// Per-point, per-component log N(x; mu_k, S_k) (weights excluded), row-major
// points x components, in the dataset's frame-major point order.
struct LogDensityTable {
  std::size_t components = 0;
  std::vector<double> values;
  double at(std::size_t point, std::size_t k) const { return values[point * components + k]; }
};

struct DiscoveryResult {
  Formation formation;
  EmTrace trace;
  KMeansResult kmeans;
  std::size_t training_points = 0;
  LogDensityTable densities;  // final state, for reuse by role assignment
};

// EM with the eigenvalue guard, starting from `init`.
DiscoveryResult fit_mixture(std::span<const Vec2> points, const Formation& init,
                            const DiscoveryConfig& cfg);

// Initial mixture from K-Means output: cluster means, cluster covariances and
// cluster fractions.
Formation formation_from_clusters(std::span<const Vec2> points, const KMeansResult& km,
                                  double eig_floor);

// Player-mean (or random) init -> K-Means -> guarded EM on the prepared dataset.
DiscoveryResult discover_formation(const Dataset& ds, const DiscoveryConfig& cfg);

// K-Means from explicit centres, then guarded EM. Points are processed in a
// canonical order, so any permutation of `points` yields the identical result.
DiscoveryResult discover_from_points(std::span<const Vec2> points, std::vector<Vec2> init,
                                     const DiscoveryConfig& cfg);

}  // namespace rolealign
