#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "rolealign/alignment.hpp"
#include "rolealign/discovery.hpp"
#include "rolealign/errors.hpp"
#include "rolealign/random.hpp"
#include "support.hpp"

using namespace rolealign;

namespace {

std::vector<Vec2> gaussian_points(std::size_t n, std::uint64_t seed, const Vec2& mean, double sx, double sy) {
  CounterRng rng(seed);
  std::vector<Vec2> p(n);
  for (auto& x : p) x = mean + Vec2(sx * rng.normal(), sy * rng.normal());
  return p;
}

DiscoveryConfig config(int k) {
  DiscoveryConfig c;
  c.k = k;
  c.eig_ratio_bound = 3.0;
  return c;
}

}  // namespace

TEST_CASE("one component is the sample mean and covariance") {
  const auto pts = gaussian_points(2000, 1, Vec2(2, -1), 1.5, 0.5);
  const auto res = discover_from_points(pts, {Vec2::Zero()}, config(1));
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat2 cov = Mat2::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  const auto& g = res.formation[0];
  CHECK((g.mean() - mean).norm() < 1e-9);
  CHECK((g.covariance() - cov).norm() < 1e-9);
  CHECK(g.weight() == doctest::Approx(1));
}

TEST_CASE("config validation") {
  DiscoveryConfig c;
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = DiscoveryConfig{};
  c.eig_ratio_bound = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = DiscoveryConfig{};
  c.em_tol = -1;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("full-covariance EM steps never lower the likelihood") {
  const auto s = testing::sample(testing::formation(6, 11, 2.0), 800, 12, 0.05);
  DiscoveryConfig c = config(6);
  c.eig_ratio_bound = 1e6;
  c.em_tol = 1e-15;
  c.max_iters = 60;
  const auto res = discover_formation(s.data, c);
  CHECK(res.trace.soft_kmeans_steps() == 0);
  CHECK(res.trace.worst_full_gmm_drop() <= 1e-10);
  const auto pts = flatten(prepare(s.data)).points;
  double prev = average_log_likelihood(pts, res.formation);
  Formation f = res.formation;
  for (int i = 0; i < 5; ++i) {
    f = em_step_full(f, pts);
    const double ll = average_log_likelihood(pts, f);
    CHECK(ll >= prev - 1e-12);
    prev = ll;
  }
}

TEST_CASE("a converged fit is a fixed point of the update") {
  const auto s = testing::sample(testing::formation(5, 21), 1500, 22);
  DiscoveryConfig c = config(5);
  c.em_tol = 1e-12;
  c.max_iters = 2000;
  const auto res = discover_formation(s.data, c);
  REQUIRE(res.trace.converged);
  const auto pts = flatten(prepare(s.data)).points;
  const Formation next = em_step_full(res.formation, pts);
  for (std::size_t k = 0; k < next.size(); ++k) {
    CHECK((next[k].mean() - res.formation[k].mean()).norm() < 1e-4);
    CHECK((next[k].covariance() - res.formation[k].covariance()).norm() < 1e-4);
  }
}

TEST_CASE("the spherical update yields isotropic covariances") {
  const auto pts = gaussian_points(500, 4, Vec2::Zero(), 3.0, 0.5);
  const Formation init({Gaussian2D(Vec2(-1, 0), Mat2::Identity(), 0.5),
                        Gaussian2D(Vec2(1, 0), Mat2::Identity(), 0.5)});
  const Formation f = em_step_spherical(init, pts);
  for (const auto& g : f) {
    CHECK(g.covariance()(0, 1) == doctest::Approx(0));
    CHECK(g.covariance()(0, 0) == doctest::Approx(g.covariance()(1, 1)));
  }
}

TEST_CASE("the guard falls back to spherical steps on elongated data") {
  // Two long thin clusters: the unguarded fit exceeds ratio 2 immediately.
  auto a = gaussian_points(600, 5, Vec2(-4, 0), 0.3, 3.0);
  const auto b = gaussian_points(600, 6, Vec2(4, 0), 0.3, 3.0);
  a.insert(a.end(), b.begin(), b.end());
  DiscoveryConfig c = config(2);
  c.eig_ratio_bound = 2.0;
  const auto res = discover_from_points(a, {Vec2(-4, 0), Vec2(4, 0)}, c);
  CHECK(res.trace.soft_kmeans_steps() > 0);
  // A full update only ever starts from an in-band state.
  const auto& its = res.trace.iterations;
  for (std::size_t i = 1; i < its.size(); ++i) {
    if (its[i].kind == UpdateKind::FullGMM) CHECK(its[i - 1].max_eig_ratio() < c.eig_ratio_bound);
    if (its[i - 1].max_eig_ratio() >= c.eig_ratio_bound) CHECK(its[i].kind == UpdateKind::SoftKMeans);
  }
  c.eig_ratio_bound = 1e6;
  const auto free = discover_from_points(a, {Vec2(-4, 0), Vec2(4, 0)}, c);
  CHECK(free.trace.soft_kmeans_steps() == 0);
  CHECK(covariance_eigenvalues(free.formation[0]).ratio() > 50);
}

TEST_CASE("results do not depend on point order or thread count") {
  const auto s = testing::sample(testing::formation(4, 31), 3000, 32, 0.05);
  const auto pts = flatten(prepare(s.data)).points;
  const auto init = player_mean_init(prepare(s.data));
  DiscoveryConfig c = config(4);
  const auto base = discover_from_points(pts, init, c);

  auto shuffled = pts;
  CounterRng rng(99);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto perm = discover_from_points(shuffled, init, c);
  CHECK(perm.formation == base.formation);
  CHECK(perm.trace.iterations.size() == base.trace.iterations.size());

  c.threads = 4;
  const auto threaded = discover_from_points(pts, init, c);
  CHECK(threaded.formation == base.formation);
  CHECK(threaded.trace.iterations.back().log_likelihood == base.trace.iterations.back().log_likelihood);
}

TEST_CASE("player-mean init is each agent's average position") {
  Dataset ds;
  for (int s = 0; s < 4; ++s) {
    Frame f;
    f.frame_id = s;
    f.agent_ids = {"a", "b"};
    f.positions = {Vec2(s, 0), Vec2(0, 2 * s)};
    ds.frames.push_back(f);
  }
  ds.refresh_agents();
  const auto m = player_mean_init(ds);
  CHECK(m[0] == Vec2(1.5, 0));
  CHECK(m[1] == Vec2(0, 3));
}

TEST_CASE("random init picks distinct data points reproducibly") {
  const auto pts = gaussian_points(50, 8, Vec2::Zero(), 1, 1);
  const auto a = random_init(pts, 10, 5);
  CHECK(a == random_init(pts, 10, 5));
  CHECK(a != random_init(pts, 10, 6));
  for (const auto& c : a) CHECK(std::find(pts.begin(), pts.end(), c) != pts.end());
  CHECK_THROWS_AS(random_init(pts, 51, 0), InputError);
}

TEST_CASE("k-means on separated blobs") {
  auto a = gaussian_points(300, 1, Vec2(-5, 0), 0.5, 0.5);
  const auto b = gaussian_points(300, 2, Vec2(5, 0), 0.5, 0.5);
  a.insert(a.end(), b.begin(), b.end());
  const auto km = kmeans(a, {Vec2(-1, 0), Vec2(1, 0)}, 1e-9);
  CHECK(km.converged);
  CHECK((km.centers[0] - Vec2(-5, 0)).norm() < 0.2);
  CHECK((km.centers[1] - Vec2(5, 0)).norm() < 0.2);
  for (std::size_t i = 1; i < km.inertia.size(); ++i) CHECK(km.inertia[i] <= km.inertia[i - 1] + 1e-9);
}

TEST_CASE("recovers generating means within 0.1 m") {
  const Template t = testing::formation(10, 41);
  const auto s = testing::sample(t, 5000, 42);
  const auto res = discover_formation(prepare(s.data), config(10));
  const Template truth = centered_template(t);
  const auto al = match_template(res.formation, truth);
  double worst = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) worst = std::max(worst, (al.aligned[j].mean() - truth[j].mean()).norm());
  CHECK(worst < 0.1);
}

TEST_CASE("trace csv") {
  const auto s = testing::sample(testing::formation(3, 51), 200, 52);
  const auto res = discover_formation(prepare(s.data), config(3));
  std::ostringstream out;
  res.trace.write_csv(out);
  CHECK(out.str().rfind("iteration,loglik,update_kind,max_eig_ratio\n", 0) == 0);
}
