#include "rolealign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "rolealign/assignment.hpp"
#include "rolealign/errors.hpp"
#include "rolealign/random.hpp"

namespace rolealign {

Template generate_formation(const FormationSpec& spec) {
  if (spec.k < 1) throw InputError("generate_formation: k must be >= 1");
  if (!(spec.sigma > 0.0) || !(spec.min_anisotropy >= 1.0) || spec.max_anisotropy < spec.min_anisotropy) {
    throw InputError("generate_formation: sigma must be positive and 1 <= min_anisotropy <= max_anisotropy");
  }
  CounterRng rng(spec.seed, 1);
  const double min_dist = spec.separation * spec.sigma;
  const double weight = 1.0 / spec.k;

  std::vector<Vec2> means;
  for (int attempt = 0; attempt < spec.max_attempts && static_cast<int>(means.size()) < spec.k; ++attempt) {
    means.clear();
    for (int tries = 0; tries < 200 * spec.k && static_cast<int>(means.size()) < spec.k; ++tries) {
      const Vec2 p((2.0 * rng.uniform() - 1.0) * spec.half_length, (2.0 * rng.uniform() - 1.0) * spec.half_width);
      const bool ok = std::all_of(means.begin(), means.end(), [&](const Vec2& q) { return (p - q).norm() >= min_dist; });
      if (ok) means.push_back(p);
    }
  }
  if (static_cast<int>(means.size()) < spec.k) {
    throw InputError("generate_formation: cannot place " + std::to_string(spec.k) + " roles " +
                     std::to_string(min_dist) + " m apart in the pitch box");
  }
  Vec2 centre = Vec2::Zero();
  for (const auto& m : means) centre += m;
  centre /= static_cast<double>(spec.k);

  std::vector<Gaussian2D> roles;
  for (const auto& m : means) {
    const double ratio = spec.min_anisotropy + (spec.max_anisotropy - spec.min_anisotropy) * rng.uniform();
    const double theta = std::numbers::pi * rng.uniform();
    Mat2 rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    const double major = spec.sigma * spec.sigma;
    Mat2 cov = rot * Eigen::Vector2d(major, major / ratio).asDiagonal() * rot.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    roles.emplace_back(spec.k == 1 ? Vec2::Zero() : Vec2(m - centre), cov, weight);
  }
  return Template(std::move(roles));
}

Template vary_formation(const Template& t, int moved, double distance, double min_distance,
                        std::uint64_t seed, int max_attempts) {
  const int k = static_cast<int>(t.size());
  if (moved < 0 || moved > k) throw InputError("vary_formation: moved must lie in [0, k]");
  CounterRng rng(seed, 5);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Vec2> means;
    for (const auto& g : t) means.push_back(g.mean());
    // Directions evenly spread from a random start, so the displacements sum
    // to zero and the untouched roles keep their centred positions.
    const double start = 2.0 * std::numbers::pi * rng.uniform();
    for (int i = 0; i < moved; ++i) {
      const double a = start + (moved > 1 ? 2.0 * std::numbers::pi * i / moved : 0.0);
      means[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] += distance * Vec2(std::cos(a), std::sin(a));
    }
    bool ok = true;
    for (int i = 0; i < k && ok; ++i) {
      for (int j = i + 1; j < k && ok; ++j) ok = (means[static_cast<std::size_t>(i)] - means[static_cast<std::size_t>(j)]).norm() >= min_distance;
    }
    if (!ok) continue;
    Vec2 centre = Vec2::Zero();
    for (const auto& m : means) centre += m;
    centre /= static_cast<double>(k);
    std::vector<Gaussian2D> roles;
    for (int i = 0; i < k; ++i) {
      roles.emplace_back(Vec2(means[static_cast<std::size_t>(i)] - centre), t[static_cast<std::size_t>(i)].covariance(),
                         t[static_cast<std::size_t>(i)].weight());
    }
    return Template(std::move(roles));
  }
  throw InputError("vary_formation: no placement keeps the roles " + std::to_string(min_distance) + " m apart");
}

namespace {

struct SwapRun {
  std::size_t a, b;
  std::size_t end;  // first frame no longer swapped
};

std::size_t geometric_length(CounterRng& rng, double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  return 1 + static_cast<std::size_t>(std::floor(std::log(1.0 - rng.uniform()) / std::log(1.0 - p)));
}

std::string agent_name(const std::string& prefix, std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i + 1);
  const std::size_t width = std::to_string(n).size();
  return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

Sample sample_dataset(const Template& t, const SampleSpec& spec) {
  const std::size_t k = t.size();
  if (k == 0) throw InputError("sample_dataset: empty template");
  if (spec.swap_rate < 0.0 || spec.swap_rate > 1.0 || spec.event_rate < 0.0 || spec.event_rate > 1.0) {
    throw InputError("sample_dataset: rates must lie in [0, 1]");
  }
  CounterRng structure(spec.seed, 2);
  CounterRng points(spec.seed, 3);

  std::vector<Mat2> chol;
  for (const auto& g : t) chol.push_back(Eigen::LLT<Mat2>(g.covariance()).matrixL().toDenseMatrix());

  Sample out;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(agent_name(spec.agent_prefix, i, k));
  out.data.agent_ids = ids;
  out.truth.roles = t;
  out.truth.agent_ids = ids;
  out.truth.swap_rate = spec.swap_rate;
  out.truth.event_rate = spec.event_rate;
  out.truth.seed = spec.seed;

  std::vector<int> base(k);
  std::iota(base.begin(), base.end(), 0);
  CounterRng map_rng(spec.agent_map_seed.value_or(spec.seed), 4);
  std::shuffle(base.begin(), base.end(), map_rng);

  std::vector<SwapRun> runs;
  out.data.frames.reserve(spec.frames);
  for (std::size_t s = 0; s < spec.frames; ++s) {
    std::erase_if(runs, [&](const SwapRun& r) { return r.end <= s; });
    if (k >= 2 && structure.uniform() < spec.swap_rate) {
      const std::size_t a = structure.below(k);
      std::size_t b = structure.below(k - 1);
      if (b >= a) ++b;
      runs.push_back({a, b, s + geometric_length(structure, spec.mean_swap_length)});
    }
    std::vector<int> map = base;
    for (const auto& r : runs) std::swap(map[r.a], map[r.b]);

    Frame f;
    f.frame_id = spec.first_frame_id + static_cast<std::int64_t>(s);
    f.agent_ids = ids;
    f.is_event = structure.uniform() < spec.event_rate;
    f.attack_direction = spec.direction;
    f.context = spec.context;
    std::vector<Vec2> by_role(k);
    for (std::size_t j = 0; j < k; ++j) {
      const Vec2 z(points.normal(), points.normal());
      by_role[j] = t[j].mean() + chol[j] * z;
    }
    Vec2 centre = Vec2::Zero();
    for (const auto& p : by_role) centre += p;
    centre /= static_cast<double>(k);
    const double sign = spec.direction == AttackDirection::RightToLeft ? -1.0 : 1.0;
    f.positions.resize(k);
    for (std::size_t i = 0; i < k; ++i) f.positions[i] = sign * (by_role[static_cast<std::size_t>(map[i])] - centre);

    out.data.frames.push_back(std::move(f));
    out.truth.frame_ids.push_back(spec.first_frame_id + static_cast<std::int64_t>(s));
    out.truth.role_of_agent.push_back(std::move(map));
  }
  return out;
}

void GroundTruth::write_jsonl(std::ostream& out) const {
  for (std::size_t s = 0; s < frame_ids.size(); ++s) {
    nlohmann::ordered_json j;
    j["frame_id"] = frame_ids[s];
    auto& roles_j = j["roles"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < agent_ids.size(); ++i) roles_j[agent_ids[i]] = role_of_agent[s][i];
    out << j.dump() << '\n';
  }
}

Template centered_template(const Template& t) {
  const double k = static_cast<double>(t.size());
  Vec2 mean_sum = Vec2::Zero();
  Mat2 cov_sum = Mat2::Zero();
  for (const auto& g : t) {
    mean_sum += g.mean();
    cov_sum += g.covariance();
  }
  std::vector<Gaussian2D> roles;
  for (const auto& g : t) {
    const Vec2 d = g.mean() - mean_sum / k;
    Mat2 cov = (1.0 - 2.0 / k) * g.covariance() + cov_sum / (k * k);
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    roles.emplace_back(d, cov, g.weight());
  }
  return Template(std::move(roles));
}

double recovery_score(const AlignedDataset& predicted, const GroundTruth& truth) {
  if (predicted.frame_ids != truth.frame_ids) {
    throw InputError("recovery_score: predicted and true frame sets differ");
  }
  const std::size_t k = truth.roles.size();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < truth.frame_ids.size(); ++s) {
    const auto& pred = predicted.permutations[s].mapping;
    const auto& real = truth.role_of_agent[s];
    if (pred.size() != real.size()) throw InputError("recovery_score: agent count mismatch in a frame");
    for (std::size_t i = 0; i < pred.size(); ++i) counts(pred[i], real[i]) += 1.0;
  }
  const Assignment relabel = hungarian(CostMatrix(Eigen::MatrixXd(counts.maxCoeff() - counts.array())));
  std::size_t hits = 0;
  for (std::size_t s = 0; s < truth.frame_ids.size(); ++s) {
    const auto& pred = predicted.permutations[s].mapping;
    const auto& real = truth.role_of_agent[s];
    bool same = true;
    for (std::size_t i = 0; i < pred.size() && same; ++i) same = relabel.mapping[static_cast<std::size_t>(pred[i])] == real[i];
    hits += same ? 1 : 0;
  }
  return truth.frame_ids.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(truth.frame_ids.size());
}

Dataset concatenate(const std::vector<Dataset>& parts) {
  Dataset out;
  for (const auto& p : parts) {
    for (const auto& f : p.frames) {
      if (!out.frames.empty() && f.frame_id <= out.frames.back().frame_id) {
        throw InputError("concatenate: frame ids must increase across parts");
      }
      out.frames.push_back(f);
    }
  }
  out.refresh_agents();
  return out;
}

}  // namespace rolealign
