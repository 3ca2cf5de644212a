#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "rolealign/alignment.hpp"

namespace rolealign {

// Hard-assignment EM of the identity-initialized method: every iteration runs a
// Hungarian assignment in each frame and refits one Gaussian per role from the
// points it received. Role distributions are Gaussian here (not heat maps) so
// both methods are scored on the same family.

struct HardEmIteration {
  int iteration = 0;
  double total_cost = 0.0;      // sum of per-frame assignment costs
  double log_likelihood = 0.0;  // average, mixture of the refitted roles
  std::size_t frames_changed = 0;
};

struct HardEmTrace {
  std::vector<HardEmIteration> iterations;
  bool converged = false;   // an iteration changed no assignment
  bool oscillated = false;  // an earlier assignment state came back

  // True if the log-likelihood ever decreased between iterations.
  bool non_monotone(double tol = 1e-12) const;
  // iteration,loglik,total_cost,frames_changed
  void write_csv(std::ostream& out) const;
};

struct HardEmResult {
  Template roles;  // same role order as the init template
  AlignedDataset aligned;
  HardEmTrace trace;
  Formation formation() const { return roles.as_formation(); }
};

// One Gaussian per agent over the whole dataset, in agent_ids order, equal weights.
Template player_role_init(const Dataset& ds, double eig_floor = kDefaultEigenFloor);

struct HardEmOptions {
  double eig_floor = kDefaultEigenFloor;
  int threads = 1;
};

// max_iters = 0 returns the init refitted once from its own assignment.
HardEmResult hard_assignment_em(const Dataset& ds, const Template& init, int max_iters = 500,
                                const HardEmOptions& opts = {});

struct OverlapPenalty {
  double value = 0.0;  // V = -H(x) + sum_n w_n H(x|n)
  double std_error = 0.0;
  double mixture_entropy = 0.0;         // Monte-Carlo
  double mean_component_entropy = 0.0;  // closed form, weight-averaged
};

OverlapPenalty overlap_penalty(const Formation& f, std::size_t samples = 100000,
                               std::uint64_t seed = 0);

}  // namespace rolealign
