#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "rolealign/clustering.hpp"
#include "rolealign/errors.hpp"
#include "rolealign/random.hpp"
#include "support.hpp"

using namespace rolealign;

namespace {

RowMatrix rows_of(std::initializer_list<std::initializer_list<double>> r) {
  RowMatrix m(static_cast<long>(r.size()), static_cast<long>(r.begin()->size()));
  long i = 0;
  for (const auto& row : r) {
    long j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Rows (1,0), (-1,0) around (0,0) and (10,0), (12,0) around (11,0).
ClusterSet two_pairs() {
  ClusterSet c;
  c.centroids = rows_of({{0, 0}, {11, 0}});
  c.labels = {0, 0, 1, 1};
  return c;
}
const RowMatrix kPairs = rows_of({{1, 0}, {-1, 0}, {10, 0}, {12, 0}});

RowMatrix blobs(std::size_t n, const std::vector<Vec2>& centres, double sd, std::uint64_t seed) {
  CounterRng rng(seed);
  RowMatrix m(static_cast<long>(n * centres.size()), 2);
  long r = 0;
  for (const auto& c : centres) {
    for (std::size_t i = 0; i < n; ++i, ++r) {
      m(r, 0) = c.x() + sd * rng.normal();
      m(r, 1) = c.y() + sd * rng.normal();
    }
  }
  return m;
}

Template one_role() { return Template({Gaussian2D(Vec2::Zero(), Mat2::Identity())}); }

}  // namespace

TEST_CASE("discriminative score by hand") {
  const double want = (0.9 + 11.0 / 12.0 + 0.9 + 11.0 / 12.0) / 4.0;
  CHECK(discriminative_score(kPairs, two_pairs()) == doctest::Approx(want));
  ClusterSet one;
  one.centroids = rows_of({{0, 0}});
  one.labels = {0, 0, 0, 0};
  CHECK_THROWS_AS(discriminative_score(kPairs, one), InputError);
}

TEST_CASE("within-cluster error, distortion and pairwise loss by hand") {
  const auto w = within_cluster_error(kPairs, two_pairs());
  CHECK(w.total == doctest::Approx(1.0));
  CHECK(w.per_player == doctest::Approx(1.0));
  CHECK(centroid_distortion(kPairs, two_pairs()) == doctest::Approx(4.0));
  CHECK(pairwise_partition_loss(kPairs, two_pairs()) == doctest::Approx(8.0));

  // Four columns are two agents.
  RowMatrix wide = RowMatrix::Zero(2, 4);
  wide(0, 0) = 3;
  wide(1, 0) = -3;
  ClusterSet c;
  c.centroids = RowMatrix::Zero(1, 4);
  c.labels = {0, 0};
  CHECK(within_cluster_error(wide, c).per_player == doctest::Approx(1.5));
}

TEST_CASE("variance explained") {
  const RowMatrix line = rows_of({{0, 0}, {1, 2}, {2, 4}, {3, 6}});
  const auto v = pca_variance_explained(line);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(0.0).epsilon(1e-12));
  const auto iso = pca_variance_explained(rows_of({{1, 0}, {-1, 0}, {0, 1}, {0, -1}}));
  CHECK(iso[0] == doctest::Approx(0.5));
  CHECK(std::accumulate(iso.begin(), iso.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("row k-means separates blobs and flags degenerate starts") {
  const RowMatrix m = blobs(100, {Vec2(-5, 0), Vec2(5, 0)}, 0.5, 1);
  const auto r = kmeans_rows(m, rows_of({{-1, 0}, {1, 0}}));
  CHECK(r.converged);
  CHECK_FALSE(r.degenerate);
  CHECK(r.inertia == doctest::Approx(centroid_distortion(m, r.clusters)));
  for (long i = 0; i < 200; ++i) CHECK(r.clusters.labels[static_cast<std::size_t>(i)] == (i < 100 ? 0 : 1));

  const auto pp = kmeans_rows_plusplus(m, 2, 7);
  CHECK(pp.inertia == doctest::Approx(r.inertia));

  const RowMatrix same = rows_of({{1, 1}, {1, 1}, {1, 1}});
  CHECK(kmeans_rows(same, rows_of({{0, 0}, {2, 2}})).degenerate);
}

TEST_CASE("flat clustering picks two for two blobs") {
  const RowMatrix m = blobs(200, {Vec2(-4, 0), Vec2(4, 0)}, 0.5, 2);
  FlatClusterOptions o;
  o.k_candidates = {1, 2, 3, 4};
  const auto r = flat_cluster(m, one_role(), o);
  CHECK(r.k == 2);
  CHECK(r.candidates.size() == 4);
  std::set<int> first(r.clusters.labels.begin(), r.clusters.labels.begin() + 200);
  std::set<int> second(r.clusters.labels.begin() + 200, r.clusters.labels.end());
  CHECK(first.size() == 1);
  CHECK(second.size() == 1);
  CHECK(*first.begin() != *second.begin());
}

TEST_CASE("flat clustering keeps one cluster when no split beats the threshold") {
  const RowMatrix m = blobs(300, {Vec2(0, 0)}, 1.0, 3);
  FlatClusterOptions o;
  o.single_cluster_score = 0.9;
  const auto r = flat_cluster(m, one_role(), o);
  CHECK(r.k == 1);
  CHECK(r.score == doctest::Approx(0.9));
  o.k_candidates = {1};
  CHECK(flat_cluster(m, one_role(), o).k == 1);
}

TEST_CASE("flat clustering is reproducible") {
  const RowMatrix m = blobs(100, {Vec2(-3, 1), Vec2(3, 0), Vec2(0, 5)}, 0.7, 4);
  const auto a = flat_cluster(m, one_role());
  const auto b = flat_cluster(m, one_role());
  CHECK(a.k == b.k);
  CHECK(a.clusters.labels == b.clusters.labels);
}

TEST_CASE("aligned rows reject empty roles") {
  AlignedDataset r;
  r.roles = 1;
  r.frame_ids = {0};
  r.matrix = {1.0, NAN};
  CHECK_THROWS_AS(aligned_rows(r), InputError);
}

TEST_CASE("template tree partitions the frames and never increases the loss") {
  FormationSpec fa;
  fa.k = 6;
  fa.seed = 11;
  fa.max_anisotropy = 1.8;
  const Template a = generate_formation(fa);
  const Template b = vary_formation(a, 3, 4.0, 3.0, 12);
  SampleSpec sa;
  sa.frames = 600;
  sa.seed = 13;
  sa.agent_map_seed = 13;
  sa.swap_rate = 0.02;
  SampleSpec sb = sa;
  sb.seed = 14;
  sb.first_frame_id = 600;
  const Dataset ds = prepare(concatenate({sample_dataset(a, sa).data, sample_dataset(b, sb).data}));

  TreeOptions o;
  o.discovery.k = 6;
  o.max_depth = 3;
  const Template root = Template::from_formation(discover_formation(ds, o.discovery).formation);
  const TemplateTree tree = learn_tree(ds, root, o);
  REQUIRE(tree.depth() >= 2);
  CHECK(tree.depth() <= 3);

  std::vector<std::size_t> all;
  for (int leaf : tree.leaves()) {
    const auto& rows = tree.nodes[static_cast<std::size_t>(leaf)].rows;
    all.insert(all.end(), rows.begin(), rows.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> want(ds.frame_count());
  std::iota(want.begin(), want.end(), std::size_t{0});
  CHECK(all == want);

  for (const auto& n : tree.nodes) {
    CHECK(n.split_loss <= n.loss + 1e-9);
    CHECK(n.roles.size() == 6);
    if (!n.children.empty()) CHECK(n.stop_reason.empty());
    if (n.children.empty()) CHECK_FALSE(n.stop_reason.empty());
  }
  std::function<std::size_t(const nlohmann::json&)> count = [&](const nlohmann::json& j) {
    std::size_t n = 1;
    for (const auto& c : j.at("children")) n += count(c);
    return n;
  };
  CHECK(count(tree.to_json()) == tree.nodes.size());
}
