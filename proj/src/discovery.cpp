#include "rolealign/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "rolealign/errors.hpp"
#include "rolealign/parallel.hpp"
#include "rolealign/random.hpp"

namespace rolealign {

Formation::Formation(std::vector<Gaussian2D> components) : components_(std::move(components)) {
  if (components_.empty()) throw InputError("Formation: no components");
  double total = 0.0;
  for (const auto& g : components_) total += g.weight();
  if (std::abs(total - 1.0) > 1e-9) {
    throw InputError("Formation: weights sum to " + std::to_string(total) + ", expected 1");
  }
}

Formation Formation::with_uniform_weights() const {
  std::vector<Gaussian2D> out;
  out.reserve(size());
  for (const auto& g : components_) out.push_back(g.with_weight(1.0 / static_cast<double>(size())));
  return Formation(std::move(out));
}

nlohmann::json to_json(const Formation& f) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : f) arr.push_back(to_json(g));
  return {{"components", arr}};
}

Formation formation_from_json(const nlohmann::json& j) {
  const auto& arr = j.contains("components") ? j.at("components") : j.at("roles");
  std::vector<Gaussian2D> comps;
  for (const auto& g : arr) comps.push_back(gaussian_from_json(g));
  return Formation(std::move(comps));
}

std::string to_string(UpdateKind k) { return k == UpdateKind::FullGMM ? "FullGMM" : "SoftKMeans"; }

double EmIteration::max_eig_ratio() const {
  return eig_ratios.empty() ? 1.0 : *std::max_element(eig_ratios.begin(), eig_ratios.end());
}

double EmTrace::worst_full_gmm_drop() const {
  double worst = 0.0;
  double prev = initial_log_likelihood;
  for (const auto& it : iterations) {
    if (it.kind == UpdateKind::FullGMM) worst = std::max(worst, prev - it.log_likelihood);
    prev = it.log_likelihood;
  }
  return worst;
}

std::size_t EmTrace::soft_kmeans_steps() const {
  return static_cast<std::size_t>(std::count_if(iterations.begin(), iterations.end(), [](const auto& it) {
    return it.kind == UpdateKind::SoftKMeans;
  }));
}

void EmTrace::write_csv(std::ostream& out) const {
  out.precision(17);
  out << "iteration,loglik,update_kind,max_eig_ratio\n";
  out << 0 << ',' << initial_log_likelihood << ",Init,\n";
  for (const auto& it : iterations) {
    out << it.iteration << ',' << it.log_likelihood << ',' << to_string(it.kind) << ','
        << it.max_eig_ratio() << '\n';
  }
}

InitMode init_mode_from_string(const std::string& s) {
  if (s == "player-means") return InitMode::PlayerMeans;
  if (s == "random") return InitMode::Random;
  throw InputError("unknown init mode '" + s + "' (expected player-means or random)");
}

void DiscoveryConfig::validate() const {
  if (k < 1) throw InputError("k must be >= 1");
  if (!(eig_ratio_bound > 1.0)) throw InputError("eig-ratio bound must exceed 1");
  if (!(em_tol > 0.0) || !(kmeans_tol > 0.0)) throw InputError("tolerances must be positive");
  if (max_iters < 0 || kmeans_max_iters < 1) throw InputError("iteration limits out of range");
  if (!(eig_floor > 0.0)) throw InputError("eigenvalue floor must be positive");
}

nlohmann::json to_json(const DiscoveryConfig& c) {
  return {{"k", c.k},
          {"eig_ratio_bound", c.eig_ratio_bound},
          {"em_tol", c.em_tol},
          {"max_iters", c.max_iters},
          {"kmeans_tol", c.kmeans_tol},
          {"kmeans_max_iters", c.kmeans_max_iters},
          {"seed", c.seed},
          {"init", c.init == InitMode::PlayerMeans ? "player-means" : "random"},
          {"guard", c.guard == GuardScope::Global ? "global" : "per-component"},
          {"eig_floor", c.eig_floor},
          {"threads", c.threads}};
}

namespace {

bool lex_less(const Vec2& a, const Vec2& b) {
  return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
}

// Sum that does not depend on input order.
Vec2 order_free_mean(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), lex_less);
  Vec2 sum = Vec2::Zero();
  for (const auto& p : pts) sum += p;
  return sum / static_cast<double>(pts.size());
}

// Responsibility-weighted sufficient statistics plus the log-likelihood sum.
struct Moments {
  static constexpr std::size_t kStride = 6;  // n, sx, sy, sxx, sxy, syy
  std::vector<double> v;
  double loglik = 0.0;

  explicit Moments(std::size_t k = 0) : v(k * kStride, 0.0) {}
  Moments& operator+=(const Moments& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    loglik += o.loglik;
    return *this;
  }
  double n(std::size_t k) const { return v[k * kStride]; }
};

Moments e_pass(std::span<const Vec2> points, const Formation& f, int threads,
               std::vector<double>* densities) {
  const std::size_t K = f.size();
  std::vector<double> log_w(K);
  for (std::size_t k = 0; k < K; ++k) log_w[k] = std::log(f[k].weight());
  if (densities) densities->resize(points.size() * K);
  std::vector<Moments> parts(chunk_count(points.size()), Moments(K));
  for_each_chunk(points.size(), threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Moments& m = parts[c];
    std::vector<double> lp(K);
    for (std::size_t i = begin; i < end; ++i) {
      const Vec2& x = points[i];
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) {
        const double ld = f[k].log_density(x);
        if (densities) (*densities)[i * K + k] = ld;
        lp[k] = ld + log_w[k];
        top = std::max(top, lp[k]);
      }
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        lp[k] = std::exp(lp[k] - top);
        s += lp[k];
      }
      m.loglik += top + std::log(s);
      const double inv = 1.0 / s;
      for (std::size_t k = 0; k < K; ++k) {
        const double r = lp[k] * inv;
        double* a = &m.v[k * Moments::kStride];
        a[0] += r;
        a[1] += r * x.x();
        a[2] += r * x.y();
        a[3] += r * x.x() * x.x();
        a[4] += r * x.x() * x.y();
        a[5] += r * x.y() * x.y();
      }
    }
  });
  return pairwise_reduce(std::move(parts), Moments(K));
}

enum class Shape { Full, Spherical };

Formation m_step(const Formation& prev, const Moments& m, const std::vector<Shape>& shapes,
                 double eig_floor) {
  const std::size_t K = prev.size();
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) total += m.n(k);
  constexpr double kDead = 1e-300;
  std::vector<double> w(K);
  double wsum = 0.0;
  for (std::size_t k = 0; k < K; ++k) wsum += (w[k] = std::max(m.n(k), kDead));
  std::vector<Gaussian2D> out;
  out.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double weight = w[k] / wsum;
    const double nk = m.n(k);
    if (nk <= 1e-12 * total) {
      // No support: keep the previous shape, let the weight decay.
      out.emplace_back(prev[k].mean(), prev[k].covariance(), weight);
      continue;
    }
    const double* a = &m.v[k * Moments::kStride];
    const Vec2 mean(a[1] / nk, a[2] / nk);
    Mat2 cov;
    cov(0, 0) = a[3] / nk - mean.x() * mean.x();
    cov(0, 1) = cov(1, 0) = a[4] / nk - mean.x() * mean.y();
    cov(1, 1) = a[5] / nk - mean.y() * mean.y();
    if (shapes[k] == Shape::Spherical) {
      const double c = std::max(0.5 * (cov(0, 0) + cov(1, 1)), eig_floor);
      cov = c * Mat2::Identity();
    } else {
      cov = floor_eigenvalues(cov, eig_floor);
    }
    out.emplace_back(mean, cov, weight);
  }
  return Formation(std::move(out));
}

std::vector<double> eig_ratios(const Formation& f) {
  std::vector<double> r;
  r.reserve(f.size());
  for (const auto& g : f) r.push_back(covariance_eigenvalues(g).ratio());
  return r;
}

void check_points(std::span<const Vec2> points, std::size_t k) {
  if (k == 0) throw InputError("need at least one component");
  if (points.size() < k) {
    throw InputError("K = " + std::to_string(k) + " exceeds the " + std::to_string(points.size()) +
                     " available points");
  }
}

}  // namespace

std::vector<Vec2> player_mean_init(const Dataset& ds) {
  std::vector<std::vector<Vec2>> per_agent(ds.agent_count());
  for (const auto& f : ds.frames) {
    for (std::size_t i = 0; i < f.agent_ids.size(); ++i) {
      const auto it = std::lower_bound(ds.agent_ids.begin(), ds.agent_ids.end(), f.agent_ids[i]);
      per_agent[static_cast<std::size_t>(it - ds.agent_ids.begin())].push_back(f.positions[i]);
    }
  }
  std::vector<Vec2> means;
  means.reserve(per_agent.size());
  for (auto& pts : per_agent) {
    if (pts.empty()) throw InputError("player_mean_init: agent with no positions");
    means.push_back(order_free_mean(std::move(pts)));
  }
  return means;
}

std::vector<Vec2> random_init(std::span<const Vec2> points, std::size_t k, std::uint64_t seed) {
  check_points(points, k);
  CounterRng rng(seed, 0x6b6d65616e73ULL);
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<Vec2> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t pick = j + rng.below(idx.size() - j);
    std::swap(idx[j], idx[pick]);
    out.push_back(points[idx[j]]);
  }
  return out;
}

KMeansResult kmeans(std::span<const Vec2> points, std::vector<Vec2> init, double tol,
                    int max_iters, int threads) {
  const std::size_t K = init.size();
  check_points(points, K);
  if (!(tol > 0.0)) throw InputError("kmeans: tolerance must be positive");
  KMeansResult res;
  res.centers = std::move(init);
  res.labels.assign(points.size(), 0);
  std::vector<double> d2(points.size());

  struct Sums {
    std::vector<double> v;  // count, sx, sy per cluster
    double inertia = 0.0;
    Sums& operator+=(const Sums& o) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
      inertia += o.inertia;
      return *this;
    }
  };

  for (int it = 1; it <= max_iters; ++it) {
    std::vector<Sums> parts(chunk_count(points.size()), Sums{std::vector<double>(3 * K, 0.0)});
    for_each_chunk(points.size(), threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
      Sums& s = parts[c];
      for (std::size_t i = begin; i < end; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int label = 0;
        for (std::size_t k = 0; k < K; ++k) {
          const double d = (points[i] - res.centers[k]).squaredNorm();
          if (d < best) {
            best = d;
            label = static_cast<int>(k);
          }
        }
        res.labels[i] = label;
        d2[i] = best;
        s.inertia += best;
        s.v[3 * label] += 1.0;
        s.v[3 * label + 1] += points[i].x();
        s.v[3 * label + 2] += points[i].y();
      }
    });
    Sums total = pairwise_reduce(std::move(parts), Sums{std::vector<double>(3 * K, 0.0)});
    res.inertia.push_back(total.inertia);
    res.iterations = it;

    std::vector<Vec2> next(K);
    std::vector<std::size_t> counts(K);
    for (std::size_t k = 0; k < K; ++k) {
      counts[k] = static_cast<std::size_t>(total.v[3 * k]);
      next[k] = counts[k] > 0 ? Vec2(total.v[3 * k + 1], total.v[3 * k + 2]) / total.v[3 * k]
                              : res.centers[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (counts[k] > 0) continue;
      // Re-seed at the worst-fit point of a cluster that can spare it.
      std::size_t far = points.size();
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (counts[static_cast<std::size_t>(res.labels[i])] < 2) continue;
        if (far == points.size() || d2[i] > d2[far]) far = i;
      }
      if (far == points.size()) break;
      --counts[static_cast<std::size_t>(res.labels[far])];
      res.labels[far] = static_cast<int>(k);
      counts[k] = 1;
      d2[far] = 0.0;
      next[k] = points[far];
    }
    double movement = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      movement = std::max(movement, (next[k] - res.centers[k]).norm());
    }
    res.centers = std::move(next);
    if (movement < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

Formation em_step_full(const Formation& state, std::span<const Vec2> points, double eig_floor,
                       int threads) {
  const Moments m = e_pass(points, state, threads, nullptr);
  return m_step(state, m, std::vector<Shape>(state.size(), Shape::Full), eig_floor);
}

Formation em_step_spherical(const Formation& state, std::span<const Vec2> points,
                            double eig_floor, int threads) {
  const Moments m = e_pass(points, state, threads, nullptr);
  return m_step(state, m, std::vector<Shape>(state.size(), Shape::Spherical), eig_floor);
}

double average_log_likelihood(std::span<const Vec2> points, const Formation& f, int threads) {
  if (points.empty()) throw InputError("average_log_likelihood: no points");
  return e_pass(points, f, threads, nullptr).loglik / static_cast<double>(points.size());
}

Formation formation_from_clusters(std::span<const Vec2> points, const KMeansResult& km,
                                  double eig_floor) {
  const std::size_t K = km.centers.size();
  std::vector<std::vector<Vec2>> members(K);
  for (std::size_t i = 0; i < points.size(); ++i) {
    members[static_cast<std::size_t>(km.labels[i])].push_back(points[i]);
  }
  std::vector<Gaussian2D> comps;
  comps.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& pts = members[k];
    const double weight = static_cast<double>(pts.size()) / static_cast<double>(points.size());
    if (pts.empty()) {
      comps.emplace_back(km.centers[k], eig_floor * Mat2::Identity(), weight);
      continue;
    }
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Mat2 cov = Mat2::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    cov /= static_cast<double>(pts.size());
    comps.emplace_back(mean, floor_eigenvalues(cov, eig_floor), weight);
  }
  // Counts are integers, so the weights already sum to one up to rounding.
  double total = 0.0;
  for (const auto& g : comps) total += g.weight();
  for (auto& g : comps) g = g.with_weight(g.weight() / total);
  return Formation(std::move(comps));
}

DiscoveryResult fit_mixture(std::span<const Vec2> points, const Formation& init,
                            const DiscoveryConfig& cfg) {
  cfg.validate();
  check_points(points, init.size());
  const double n = static_cast<double>(points.size());
  DiscoveryResult res;
  res.training_points = points.size();
  res.formation = init;
  std::vector<double> densities;
  Moments m = e_pass(points, res.formation, cfg.threads, &densities);
  double ll_prev = m.loglik / n;
  res.trace.initial_log_likelihood = ll_prev;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    const auto ratios = eig_ratios(res.formation);
    std::vector<Shape> shapes(res.formation.size(), Shape::Full);
    bool reset = false;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
      if (!(ratios[k] < cfg.eig_ratio_bound)) {
        reset = true;
        shapes[k] = Shape::Spherical;
      }
    }
    if (reset && cfg.guard == GuardScope::Global) {
      std::fill(shapes.begin(), shapes.end(), Shape::Spherical);
    }
    const UpdateKind kind = reset ? UpdateKind::SoftKMeans : UpdateKind::FullGMM;
    res.formation = m_step(res.formation, m, shapes, cfg.eig_floor);
    m = e_pass(points, res.formation, cfg.threads, &densities);
    const double ll = m.loglik / n;
    res.trace.iterations.push_back({it, ll, kind, eig_ratios(res.formation)});
    if (kind == UpdateKind::FullGMM && ll - ll_prev < cfg.em_tol * std::max(1.0, std::abs(ll_prev))) {
      res.trace.converged = true;
      break;
    }
    ll_prev = ll;
  }
  res.densities.components = res.formation.size();
  res.densities.values = std::move(densities);
  return res;
}

namespace {

DiscoveryResult discover_sorted(const std::vector<Vec2>& points, const std::vector<std::size_t>& order,
                                std::vector<Vec2> init, const DiscoveryConfig& cfg) {
  std::vector<Vec2> sorted(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = points[order[i]];
  KMeansResult km = kmeans(sorted, std::move(init), cfg.kmeans_tol, cfg.kmeans_max_iters, cfg.threads);
  const Formation start = formation_from_clusters(sorted, km, cfg.eig_floor);
  DiscoveryResult res = fit_mixture(sorted, start, cfg);
  // Back to the caller's point order.
  const std::size_t K = res.densities.components;
  std::vector<double> scattered(res.densities.values.size());
  std::vector<int> labels(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy_n(&res.densities.values[i * K], K, &scattered[order[i] * K]);
    labels[order[i]] = km.labels[i];
  }
  res.densities.values = std::move(scattered);
  km.labels = std::move(labels);
  res.kmeans = std::move(km);
  return res;
}

std::vector<std::size_t> canonical_order(const std::vector<Vec2>& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lex_less(points[a], points[b]); });
  return order;
}

}  // namespace

DiscoveryResult discover_formation(const Dataset& ds, const DiscoveryConfig& cfg) {
  cfg.validate();
  const auto K = static_cast<std::size_t>(cfg.k);
  const FlatPoints flat = flatten(ds);
  check_points(flat.points, K);
  // Work on a canonical ordering so the result cannot depend on sample order.
  const auto order = canonical_order(flat.points);
  std::vector<Vec2> init;
  if (cfg.init == InitMode::PlayerMeans) {
    if (ds.agent_count() != K) {
      throw InputError("player-mean init needs one agent per role: " +
                       std::to_string(ds.agent_count()) + " agents vs K = " + std::to_string(K));
    }
    init = player_mean_init(ds);
  } else {
    std::vector<Vec2> sorted(flat.points.size());
    for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = flat.points[order[i]];
    init = random_init(sorted, K, cfg.seed);
  }
  return discover_sorted(flat.points, order, std::move(init), cfg);
}

DiscoveryResult discover_from_points(std::span<const Vec2> points, std::vector<Vec2> init,
                                     const DiscoveryConfig& cfg) {
  cfg.validate();
  check_points(points, init.size());
  const std::vector<Vec2> copy(points.begin(), points.end());
  return discover_sorted(copy, canonical_order(copy), std::move(init), cfg);
}

}  // namespace rolealign
