#include "rolealign/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_set>

#include "rolealign/errors.hpp"
#include "rolealign/parallel.hpp"
#include "rolealign/random.hpp"

namespace rolealign {

bool HardEmTrace::non_monotone(double tol) const {
  for (std::size_t i = 1; i < iterations.size(); ++i) {
    if (iterations[i].log_likelihood < iterations[i - 1].log_likelihood - tol) return true;
  }
  return false;
}

void HardEmTrace::write_csv(std::ostream& out) const {
  out.precision(17);
  out << "iteration,loglik,total_cost,frames_changed\n";
  for (const auto& it : iterations) {
    out << it.iteration << ',' << it.log_likelihood << ',' << it.total_cost << ','
        << it.frames_changed << '\n';
  }
}

namespace {

Gaussian2D fit_gaussian(const std::vector<Vec2>& pts, double weight, double eig_floor) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat2 cov = Mat2::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  return {mean, floor_eigenvalues(cov, eig_floor), weight};
}

// Refit each role from its assigned points; a role that got nothing keeps its
// previous distribution. Weights are the roles' shares of the points.
Template refit(const Dataset& ds, const AlignedDataset& a, const Template& prev, double eig_floor) {
  const std::size_t K = prev.size();
  std::vector<std::vector<Vec2>> members(K);
  for (std::size_t s = 0; s < ds.frames.size(); ++s) {
    const auto& f = ds.frames[s];
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      members[static_cast<std::size_t>(a.permutations[s].mapping[i])].push_back(f.positions[i]);
    }
  }
  std::size_t total = 0;
  for (const auto& m : members) total += m.size();
  std::vector<double> w(K);
  double wsum = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    w[j] = members[j].empty() ? prev[j].weight() * static_cast<double>(total)
                              : static_cast<double>(members[j].size());
    wsum += w[j];
  }
  std::vector<Gaussian2D> roles;
  roles.reserve(K);
  for (std::size_t j = 0; j < K; ++j) {
    roles.push_back(members[j].empty() ? prev[j].with_weight(w[j] / wsum)
                                       : fit_gaussian(members[j], w[j] / wsum, eig_floor));
  }
  return Template(std::move(roles));
}

std::uint64_t state_hash(const AlignedDataset& a) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : a.permutations) {
    for (int j : p.mapping) {
      h ^= static_cast<std::uint64_t>(j) + 1;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t frames_changed(const AlignedDataset& a, const AlignedDataset& b) {
  std::size_t n = 0;
  for (std::size_t s = 0; s < a.permutations.size(); ++s) {
    n += a.permutations[s].mapping != b.permutations[s].mapping ? 1 : 0;
  }
  return n;
}

}  // namespace

Template player_role_init(const Dataset& ds, double eig_floor) {
  std::vector<std::vector<Vec2>> per_agent(ds.agent_count());
  for (const auto& f : ds.frames) {
    for (std::size_t i = 0; i < f.agent_ids.size(); ++i) {
      const auto it = std::lower_bound(ds.agent_ids.begin(), ds.agent_ids.end(), f.agent_ids[i]);
      per_agent[static_cast<std::size_t>(it - ds.agent_ids.begin())].push_back(f.positions[i]);
    }
  }
  std::vector<Gaussian2D> roles;
  for (const auto& pts : per_agent) {
    if (pts.empty()) throw InputError("player_role_init: agent with no positions");
    roles.push_back(fit_gaussian(pts, 1.0 / static_cast<double>(per_agent.size()), eig_floor));
  }
  return Template(std::move(roles));
}

HardEmResult hard_assignment_em(const Dataset& ds, const Template& init, int max_iters,
                                const HardEmOptions& opts) {
  if (max_iters < 0) throw InputError("hard_assignment_em: max_iters must be >= 0");
  // Each role holds one agent per frame, so the role prior is uniform.
  const AssignOptions assign{false, opts.threads};
  const FlatPoints flat = flatten(ds);

  HardEmResult res;
  res.aligned = assign_roles(ds, init, assign);
  res.roles = refit(ds, res.aligned, init, opts.eig_floor);
  std::unordered_set<std::uint64_t> seen{state_hash(res.aligned)};

  for (int it = 1; it <= max_iters; ++it) {
    AlignedDataset next = assign_roles(ds, res.roles, assign);
    const std::size_t changed = frames_changed(res.aligned, next);
    res.aligned = std::move(next);
    res.roles = refit(ds, res.aligned, res.roles, opts.eig_floor);
    res.trace.iterations.push_back({it, res.aligned.total_cost(),
                                    average_log_likelihood(flat.points, res.roles.as_formation(), opts.threads),
                                    changed});
    if (changed == 0) {
      res.trace.converged = true;
      break;
    }
    if (!seen.insert(state_hash(res.aligned)).second) {
      res.trace.oscillated = true;
      break;
    }
  }
  return res;
}

OverlapPenalty overlap_penalty(const Formation& f, std::size_t samples, std::uint64_t seed) {
  if (samples < 2) throw InputError("overlap_penalty: need at least two samples");
  CounterRng rng(seed, 0x6f7665726c6170ULL);
  std::vector<double> cdf(f.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) cdf[k] = (acc += f[k].weight());
  // Cholesky factors for sampling.
  std::vector<Mat2> chol(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Mat2& c = f[k].covariance();
    const double l00 = std::sqrt(c(0, 0));
    const double l10 = c(1, 0) / l00;
    chol[k] << l00, 0.0, l10, std::sqrt(c(1, 1) - l10 * l10);
  }
  std::vector<double> log_w(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) log_w[k] = std::log(f[k].weight());

  double mean = 0.0, m2 = 0.0;  // Welford over -log p(x)
  std::vector<double> lp(f.size());
  for (std::size_t n = 1; n <= samples; ++n) {
    const double u = rng.uniform() * acc;
    const auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const std::size_t comp = std::min(k, f.size() - 1);
    const Vec2 z(rng.normal(), rng.normal());
    const Vec2 x = f[comp].mean() + chol[comp] * z;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < f.size(); ++j) top = std::max(top, lp[j] = f[j].log_density(x) + log_w[j]);
    double s = 0.0;
    for (double v : lp) s += std::exp(v - top);
    const double value = -(top + std::log(s));
    const double delta = value - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (value - mean);
  }
  OverlapPenalty out;
  out.mixture_entropy = mean;
  out.std_error = std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples));
  for (const auto& g : f) out.mean_component_entropy += g.weight() * differential_entropy(g);
  out.value = -out.mixture_entropy + out.mean_component_entropy;
  return out;
}

}  // namespace rolealign
