#include "rolealign/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "rolealign/errors.hpp"
#include "rolealign/parallel.hpp"
#include "rolealign/random.hpp"

namespace rolealign {

RowMatrix aligned_rows(const AlignedDataset& r) {
  RowMatrix m(static_cast<Eigen::Index>(r.frame_count()), static_cast<Eigen::Index>(r.width()));
  for (std::size_t s = 0; s < r.frame_count(); ++s) {
    const auto row = r.row(s);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (std::isnan(row[c])) {
        throw InputError("aligned_rows: frame " + std::to_string(r.frame_ids[s]) + " has an empty role");
      }
      m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  return m;
}

RowMatrix identity_rows(const Dataset& ds) {
  if (!ds.complete()) throw InputError("identity_rows: dataset has incomplete frames");
  const auto n = static_cast<Eigen::Index>(ds.agent_count());
  RowMatrix m(static_cast<Eigen::Index>(ds.frames.size()), 2 * n);
  for (std::size_t s = 0; s < ds.frames.size(); ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      m(static_cast<Eigen::Index>(s), 2 * i) = ds.frames[s].positions[i].x();
      m(static_cast<Eigen::Index>(s), 2 * i + 1) = ds.frames[s].positions[i].y();
    }
  }
  return m;
}

RowKMeans kmeans_rows(const RowMatrix& rows, RowMatrix init, const RowKMeansOptions& opts) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index k = init.rows();
  if (k < 1 || k > n) throw InputError("kmeans_rows: need 1 <= k <= rows");
  if (init.cols() != rows.cols()) throw InputError("kmeans_rows: centroid width mismatch");
  RowKMeans res;
  ClusterSet& cs = res.clusters;
  cs.centroids = std::move(init);
  cs.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> d2(static_cast<std::size_t>(n));

  for (int it = 1; it <= opts.max_iters; ++it) {
    for_each_chunk(static_cast<std::size_t>(n), opts.threads, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const auto row = rows.row(static_cast<Eigen::Index>(i));
        double best = std::numeric_limits<double>::infinity();
        int label = 0;
        for (Eigen::Index c = 0; c < k; ++c) {
          const double d = (row - cs.centroids.row(c)).squaredNorm();
          if (d < best) {
            best = d;
            label = static_cast<int>(c);
          }
        }
        cs.labels[i] = label;
        d2[i] = best;
      }
    }, 256);
    res.inertia = std::accumulate(d2.begin(), d2.end(), 0.0);
    res.iterations = it;

    RowMatrix next = RowMatrix::Zero(k, rows.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto l = cs.labels[static_cast<std::size_t>(i)];
      next.row(l) += rows.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      std::size_t far = d2.size();
      for (std::size_t i = 0; i < d2.size(); ++i) {
        if (counts[static_cast<std::size_t>(cs.labels[i])] < 2) continue;
        if (far == d2.size() || d2[i] > d2[far]) far = i;
      }
      if (far == d2.size()) {
        next.row(c) = cs.centroids.row(c);
        continue;
      }
      --counts[static_cast<std::size_t>(cs.labels[far])];
      cs.labels[far] = static_cast<int>(c);
      counts[static_cast<std::size_t>(c)] = 1;
      d2[far] = 0.0;
      next.row(c) = rows.row(static_cast<Eigen::Index>(far));
    }
    const double movement = (next - cs.centroids).rowwise().norm().maxCoeff();
    cs.centroids = std::move(next);
    if (movement < opts.tol) {
      res.converged = true;
      break;
    }
  }
  // Labels are brought in line with the final centroids.
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      const double d = (rows.row(i) - cs.centroids.row(c)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    cs.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    ++counts[static_cast<std::size_t>(best)];
  }
  res.inertia = centroid_distortion(rows, cs);
  for (Eigen::Index a = 0; a < k && !res.degenerate; ++a) {
    if (counts[static_cast<std::size_t>(a)] == 0) res.degenerate = true;
    for (Eigen::Index b = a + 1; b < k; ++b) {
      if ((cs.centroids.row(a) - cs.centroids.row(b)).squaredNorm() <= 1e-24) res.degenerate = true;
    }
  }
  return res;
}

RowKMeans kmeans_rows_plusplus(const RowMatrix& rows, std::size_t k, std::uint64_t seed,
                               int restarts, const RowKMeansOptions& opts) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (k < 1 || k > n) throw InputError("kmeans_rows_plusplus: need 1 <= k <= rows");
  RowKMeans best;
  bool have = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    CounterRng rng(seed, static_cast<std::uint64_t>(r) + 1);
    RowMatrix init(static_cast<Eigen::Index>(k), rows.cols());
    init.row(0) = rows.row(static_cast<Eigen::Index>(rng.below(n)));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = (rows.row(static_cast<Eigen::Index>(i)) - init.row(0)).squaredNorm();
    for (std::size_t c = 1; c < k; ++c) {
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      std::size_t pick = 0;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (pick = 0; pick + 1 < n && u >= d2[pick]; ++pick) u -= d2[pick];
      } else {
        pick = rng.below(n);
      }
      init.row(static_cast<Eigen::Index>(c)) = rows.row(static_cast<Eigen::Index>(pick));
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], (rows.row(static_cast<Eigen::Index>(i)) - init.row(static_cast<Eigen::Index>(c))).squaredNorm());
      }
    }
    RowKMeans run = kmeans_rows(rows, std::move(init), opts);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return best;
}

double discriminative_score(const RowMatrix& rows, const ClusterSet& c) {
  if (c.k() < 2) throw InputError("discriminative_score: undefined for a single cluster");
  const Eigen::Index n = rows.rows();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = c.labels[static_cast<std::size_t>(i)];
    const double d_own = (rows.row(i) - c.centroids.row(own)).norm();
    double d_near = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < c.centroids.rows(); ++j) {
      if (j == own) continue;
      d_near = std::min(d_near, (rows.row(i) - c.centroids.row(j)).norm());
    }
    if (d_near > 0.0) sum += (d_near - d_own) / d_near;
  }
  return sum / static_cast<double>(n);
}

WithinClusterError within_cluster_error(const RowMatrix& rows, const ClusterSet& c) {
  if (rows.rows() == 0) throw InputError("within_cluster_error: no rows");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    sum += (rows.row(i) - c.centroids.row(c.labels[static_cast<std::size_t>(i)])).norm();
  }
  WithinClusterError out;
  out.total = sum / static_cast<double>(rows.rows());
  out.per_player = out.total / (static_cast<double>(rows.cols()) / 2.0);
  return out;
}

double centroid_distortion(const RowMatrix& rows, const ClusterSet& c) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    sum += (rows.row(i) - c.centroids.row(c.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return sum;
}

double pairwise_partition_loss(const RowMatrix& rows, const ClusterSet& c) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < rows.rows(); ++j) {
      if (c.labels[static_cast<std::size_t>(i)] != c.labels[static_cast<std::size_t>(j)]) continue;
      sum += (rows.row(i) - rows.row(j)).norm();
    }
  }
  return 2.0 * sum;  // ordered pairs
}

std::vector<double> pca_variance_explained(const RowMatrix& rows) {
  if (rows.rows() < 2) throw InputError("pca_variance_explained: need at least two rows");
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  std::vector<double> ev(solver.eigenvalues().data(),
                         solver.eigenvalues().data() + solver.eigenvalues().size());
  for (double& v : ev) v = std::max(v, 0.0);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  const double total = std::accumulate(ev.begin(), ev.end(), 0.0);
  if (!(total > 0.0)) {
    std::vector<double> out(ev.size(), 0.0);
    out[0] = 1.0;  // every row identical: treat as a point on any line
    return out;
  }
  for (double& v : ev) v /= total;
  return ev;
}

FlatClusterResult flat_cluster(const RowMatrix& rows, const Template& t, const FlatClusterOptions& opts) {
  const auto mean_vec = t.mean_vector();
  if (static_cast<Eigen::Index>(mean_vec.size()) != rows.cols()) {
    throw InputError("flat_cluster: template width does not match the aligned rows");
  }
  const Eigen::Index n = rows.rows();
  const Eigen::RowVectorXd centre = Eigen::Map<const Eigen::RowVectorXd>(mean_vec.data(), rows.cols());
  Eigen::RowVectorXd sd(rows.cols());
  const Eigen::RowVectorXd col_mean = rows.colwise().mean();
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    sd(c) = n > 1 ? std::sqrt((rows.col(c).array() - col_mean(c)).square().sum() / static_cast<double>(n - 1)) : 0.0;
  }

  FlatClusterResult out;
  bool have = false;
  for (int k : opts.k_candidates) {
    CandidateScore cand;
    cand.k = k;
    if (k < 1 || k > n) {
      cand.skipped = true;
      cand.note = "k out of range";
      out.candidates.push_back(cand);
      continue;
    }
    RowKMeans best;
    bool found = false;
    if (k == 1) {
      best.clusters.centroids = col_mean;
      best.clusters.labels.assign(static_cast<std::size_t>(n), 0);
      best.inertia = centroid_distortion(rows, best.clusters);
      found = true;
      cand.score = opts.single_cluster_score;
    } else {
      for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        CounterRng rng(opts.seed, (static_cast<std::uint64_t>(k) << 16) + static_cast<std::uint64_t>(r));
        RowMatrix init(k, rows.cols());
        for (int c = 0; c < k; ++c) {
          for (Eigen::Index d = 0; d < rows.cols(); ++d) {
            init(c, d) = centre(d) + opts.noise_fraction * sd(d) * rng.normal();
          }
        }
        RowKMeans run = kmeans_rows(rows, std::move(init), {300, 1e-9, opts.threads});
        if (run.degenerate) continue;
        if (!found || run.inertia < best.inertia) {
          best = std::move(run);
          found = true;
        }
      }
      if (!found) {
        cand.skipped = true;
        cand.note = "empty or coincident clusters in every restart";
        out.candidates.push_back(cand);
        continue;
      }
      cand.score = discriminative_score(rows, best.clusters);
    }
    cand.inertia = best.inertia;
    out.candidates.push_back(cand);
    if (!have || cand.score > out.score) {
      out.clusters = std::move(best.clusters);
      out.k = k;
      out.score = cand.score;
      have = true;
    }
  }
  if (!have) throw InputError("flat_cluster: no usable k among the candidates");
  return out;
}

int TemplateTree::depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::vector<int> TemplateTree::leaves() const {
  std::vector<int> out;
  for (const auto& n : nodes) {
    if (n.children.empty()) out.push_back(n.id);
  }
  return out;
}

nlohmann::json TemplateTree::to_json() const {
  std::function<nlohmann::json(int)> node_json = [&](int id) {
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    nlohmann::json j;
    j["id"] = n.id;
    j["depth"] = n.depth;
    j["template"] = rolealign::to_json(n.roles);
    j["rows"] = n.rows;
    j["loss"] = n.loss;
    j["split_loss"] = n.split_loss;
    j["pairwise_loss"] = n.pairwise_loss >= 0.0 ? nlohmann::json(n.pairwise_loss) : nlohmann::json();
    j["chosen_k"] = n.chosen_k;
    j["score"] = n.score;
    j["stop_reason"] = n.stop_reason;
    auto& kids = j["children"] = nlohmann::json::array();
    for (int c : n.children) kids.push_back(node_json(c));
    return j;
  };
  return nodes.empty() ? nlohmann::json() : node_json(0);
}

namespace {

constexpr std::size_t kPairwiseLossLimit = 5000;

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.frames.reserve(rows.size());
  for (std::size_t r : rows) out.frames.push_back(ds.frames[r]);
  out.refresh_agents();
  return out;
}

}  // namespace

TemplateTree learn_tree(const Dataset& ds, const Template& root_parent, const TreeOptions& opts) {
  if (opts.max_depth < 1) throw InputError("learn_tree: max_depth must be >= 1");
  TreeOptions o = opts;
  o.discovery.k = static_cast<int>(root_parent.size());

  TemplateTree tree;
  TreeNode root;
  root.rows.resize(ds.frames.size());
  std::iota(root.rows.begin(), root.rows.end(), std::size_t{0});
  tree.nodes.push_back(std::move(root));
  std::vector<Template> parents{root_parent};

  // Breadth-first; every node is a pure function of its rows and parent template.
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const Dataset data = subset(ds, tree.nodes[id].rows);
    const Template parent = parents[id];
    const DiscoveryResult disc = discover_formation(data, o.discovery);
    const TemplateAlignment al = match_template(disc.formation, parent, o.alignment_cost);
    const AlignedDataset aligned = assign_roles(data, al, disc.densities, {true, o.discovery.threads});
    const RowMatrix rows = aligned_rows(aligned);

    TreeNode& node = tree.nodes[id];
    node.roles = al.aligned;
    ClusterSet whole;
    whole.centroids = rows.colwise().mean();
    whole.labels.assign(static_cast<std::size_t>(rows.rows()), 0);
    node.loss = centroid_distortion(rows, whole);
    node.split_loss = node.loss;
    node.pairwise_loss = node.rows.size() <= kPairwiseLossLimit ? pairwise_partition_loss(rows, whole) : -1.0;

    if (node.depth >= o.max_depth) {
      node.stop_reason = "max depth";
      continue;
    }
    if (node.rows.size() < o.min_node_rows) {
      node.stop_reason = "below minimum node size";
      continue;
    }
    FlatClusterOptions split = o.split;
    split.seed = CounterRng::mix(o.split.seed ^ CounterRng::mix(static_cast<std::uint64_t>(id)));
    split.threads = o.discovery.threads;
    const FlatClusterResult fc = flat_cluster(rows, node.roles, split);
    node.chosen_k = fc.k;
    node.score = fc.score;
    if (fc.k == 1) {
      node.stop_reason = "no discriminative split";
      continue;
    }
    node.split_loss = centroid_distortion(rows, fc.clusters);
    if (node.loss <= 0.0 || (node.loss - node.split_loss) / node.loss < o.min_relative_gain) {
      node.stop_reason = "reconstruction gain below threshold";
      node.split_loss = node.loss;
      node.chosen_k = 1;
      continue;
    }
    std::vector<std::vector<std::size_t>> parts(fc.clusters.k());
    for (std::size_t i = 0; i < fc.clusters.labels.size(); ++i) {
      parts[static_cast<std::size_t>(fc.clusters.labels[i])].push_back(node.rows[i]);
    }
    const int depth = node.depth;
    const Template node_roles = node.roles;
    for (auto& part : parts) {
      if (part.empty()) continue;
      TreeNode child;
      child.id = static_cast<int>(tree.nodes.size());
      child.parent = static_cast<int>(id);
      child.depth = depth + 1;
      child.rows = std::move(part);
      tree.nodes[id].children.push_back(child.id);
      tree.nodes.push_back(std::move(child));
      parents.push_back(node_roles);
    }
  }
  return tree;
}

}  // namespace rolealign
