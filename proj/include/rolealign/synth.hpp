#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rolealign/alignment.hpp"
#include "rolealign/ingest.hpp"

namespace rolealign {

struct FormationSpec {
  int k = 10;
  double separation = 3.0;  // minimum mean distance in units of sigma
  double min_anisotropy = 1.0;  // major/minor eigenvalue ratio range
  double max_anisotropy = 2.0;
  double sigma = 1.0;  // sd along each role's major axis
  double half_length = 26.0;
  double half_width = 17.0;
  std::uint64_t seed = 0;
  int max_attempts = 1000;
};

// K roles with centred means, pairwise mean distance >= separation * sigma,
// random orientations and weights 1/K. k = 1 gives a single role at the origin.
Template generate_formation(const FormationSpec& spec);

// Copy of t with `moved` roles displaced by `distance` m, every pair of means
// staying at least min_distance apart. For moved >= 2 the displacements sum to
// zero, so the other roles stay put. Models a sub-formation of t (a few agents
// take up different positions).
Template vary_formation(const Template& t, int moved, double distance, double min_distance,
                        std::uint64_t seed, int max_attempts = 1000);

struct SampleSpec {
  std::size_t frames = 1500;
  // Per-frame probability that two agents start swapping roles.
  double swap_rate = 0.0;
  double mean_swap_length = 10.0;  // frames, geometric
  double event_rate = 0.1;
  AttackDirection direction = AttackDirection::LeftToRight;
  FrameContext context{"team", "game", "1"};
  std::int64_t first_frame_id = 0;
  std::string agent_prefix = "p";
  std::uint64_t seed = 0;
  // Seed of the initial agent -> role permutation; defaults to `seed`. Samples
  // sharing it give every agent the same starting role.
  std::optional<std::uint64_t> agent_map_seed;
};

struct GroundTruth {
  Template roles;  // generating distributions, before per-frame centring
  std::vector<std::int64_t> frame_ids;
  std::vector<std::string> agent_ids;
  std::vector<std::vector<int>> role_of_agent;  // per frame, indexed like agent_ids
  double swap_rate = 0.0;
  double event_rate = 0.0;
  std::uint64_t seed = 0;

  // {"frame_id":..,"roles":{"<agent>":role,...}} per line.
  void write_jsonl(std::ostream& out) const;
};

struct Sample {
  Dataset data;
  GroundTruth truth;
};

// Draws one point per role each frame, maps roles to agents through the
// current (possibly swapped) permutation and centres the frame.
Sample sample_dataset(const Template& t, const SampleSpec& spec);

// Role distributions of centred frames: mu_k - mean(mu), (1 - 2/K) S_k + sum(S) / K^2.
Template centered_template(const Template& t);

// Frames whose agent-to-role map equals the truth after one global relabeling.
double recovery_score(const AlignedDataset& predicted, const GroundTruth& truth);

// Frames of several datasets in order; frame ids must keep increasing.
Dataset concatenate(const std::vector<Dataset>& parts);

}  // namespace rolealign
