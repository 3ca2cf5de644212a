#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rolealign/alignment.hpp"

namespace rolealign {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Role-ordered rows; rejects frames with empty roles.
RowMatrix aligned_rows(const AlignedDataset& r);
// Agent-id-ordered rows (the unaligned representation); needs a complete dataset.
RowMatrix identity_rows(const Dataset& ds);

struct ClusterSet {
  RowMatrix centroids;      // k x D
  std::vector<int> labels;  // per row, in [0, k)
  std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
};

struct RowKMeans {
  ClusterSet clusters;
  double inertia = 0.0;  // sum of squared distances
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // an empty cluster or two coincident centroids remained
};

struct RowKMeansOptions {
  int max_iters = 300;
  double tol = 1e-9;
  int threads = 1;
};

RowKMeans kmeans_rows(const RowMatrix& rows, RowMatrix init, const RowKMeansOptions& opts = {});

// k-means++ seeding, best of `restarts` by inertia.
RowKMeans kmeans_rows_plusplus(const RowMatrix& rows, std::size_t k, std::uint64_t seed,
                               int restarts = 3, const RowKMeansOptions& opts = {});

// Mean over rows of (|x - mu_n| - |x - mu_own|) / |x - mu_n|, mu_n the nearest
// other centroid of that row. Needs at least two clusters.
double discriminative_score(const RowMatrix& rows, const ClusterSet& c);

struct WithinClusterError {
  double total = 0.0;       // mean L2 distance of a row to its centroid
  double per_player = 0.0;  // total / agents
};

WithinClusterError within_cluster_error(const RowMatrix& rows, const ClusterSet& c);

// Sum of squared distances to the assigned centroid.
double centroid_distortion(const RowMatrix& rows, const ClusterSet& c);
// Sum over clusters of L2 distances over all ordered row pairs within a cluster.
double pairwise_partition_loss(const RowMatrix& rows, const ClusterSet& c);

// Covariance eigenvalues, descending, as fractions of their sum.
std::vector<double> pca_variance_explained(const RowMatrix& rows);

struct FlatClusterOptions {
  std::vector<int> k_candidates = {1, 2, 3, 4, 5, 6};
  double noise_fraction = 0.01;  // seed noise sd as a fraction of each column's sd
  int restarts = 5;
  // Score given to k = 1, for which the discriminative score is undefined: a
  // split has to beat it to be selected.
  double single_cluster_score = 0.2;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct CandidateScore {
  int k = 0;
  double score = 0.0;
  double inertia = 0.0;
  bool skipped = false;
  std::string note;
};

struct FlatClusterResult {
  ClusterSet clusters;
  int k = 0;
  double score = 0.0;
  std::vector<CandidateScore> candidates;
};

// K-Means per candidate k seeded at the template means plus noise; keeps the k
// with the highest discriminative score.
FlatClusterResult flat_cluster(const RowMatrix& rows, const Template& t,
                               const FlatClusterOptions& opts = {});
inline FlatClusterResult flat_cluster(const AlignedDataset& r, const Template& t,
                                      const FlatClusterOptions& opts = {}) {
  return flat_cluster(aligned_rows(r), t, opts);
}

struct TreeOptions {
  int max_depth = 3;  // the root is depth 1
  std::size_t min_node_rows = 200;
  double min_relative_gain = 0.01;  // of the squared-L2 reconstruction loss
  FlatClusterOptions split;
  DiscoveryConfig discovery;
  AlignmentCost alignment_cost = AlignmentCost::Bhattacharyya;
};

struct TreeNode {
  int id = 0;
  int parent = -1;
  int depth = 1;
  Template roles;
  std::vector<std::size_t> rows;  // frame indices into the input dataset
  std::vector<int> children;
  double loss = 0.0;        // squared distance of aligned rows to their mean
  double split_loss = 0.0;  // same, about the chosen cluster centroids (leaf: = loss)
  double pairwise_loss = 0.0;
  int chosen_k = 1;
  double score = 0.0;
  std::string stop_reason;
};

struct TemplateTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root, parents precede children
  int depth() const;
  std::vector<int> leaves() const;
  nlohmann::json to_json() const;
};

// Recursive discover -> align to parent -> assign -> split.
TemplateTree learn_tree(const Dataset& ds, const Template& root_parent, const TreeOptions& opts = {});

}  // namespace rolealign
