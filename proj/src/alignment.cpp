#include "rolealign/alignment.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "rolealign/errors.hpp"
#include "rolealign/parallel.hpp"

namespace rolealign {

Template::Template(std::vector<Gaussian2D> roles) : roles_(std::move(roles)) {
  if (roles_.empty()) throw InputError("Template: no roles");
}

std::vector<double> Template::mean_vector() const {
  std::vector<double> out;
  out.reserve(2 * roles_.size());
  for (const auto& g : roles_) {
    out.push_back(g.mean().x());
    out.push_back(g.mean().y());
  }
  return out;
}

nlohmann::json to_json(const Template& t) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : t) arr.push_back(to_json(g));
  return {{"roles", arr}};
}

Template template_from_json(const nlohmann::json& j) {
  const auto& arr = j.contains("roles") ? j.at("roles") : j.at("components");
  std::vector<Gaussian2D> roles;
  for (const auto& g : arr) roles.push_back(gaussian_from_json(g));
  return Template(std::move(roles));
}

TemplateAlignment match_template(const Formation& f, const Template& parent, AlignmentCost cost) {
  if (f.size() != parent.size()) {
    throw InputError("match_template: formation has " + std::to_string(f.size()) +
                     " components, parent template " + std::to_string(parent.size()));
  }
  const std::size_t K = f.size();
  // Rows are parent roles so the mapping reads role -> component directly.
  CostMatrix c(K, K);
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t i = 0; i < K; ++i) {
      c(j, i) = cost == AlignmentCost::Bhattacharyya ? bhattacharyya_distance(f[i], parent[j])
                                                     : mahalanobis_between_means(f[i], parent[j]);
    }
  }
  const Assignment a = hungarian(c);
  TemplateAlignment out;
  out.component_for_role = a.mapping;
  out.total_cost = a.total_cost;
  std::vector<Gaussian2D> roles;
  roles.reserve(K);
  for (int i : a.mapping) roles.push_back(f[static_cast<std::size_t>(i)]);
  out.aligned = Template(std::move(roles));
  return out;
}

double AlignedDataset::total_cost() const {
  double s = 0.0;
  for (const auto& p : permutations) s += p.total_cost;
  return s;
}

namespace {

void put(std::ostream& out, double v) {
  if (std::isnan(v)) {
    out << "nan";
    return;
  }
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

template <class CostFn>
AlignedDataset assign_frames(const Dataset& ds, std::size_t roles, int threads, CostFn&& cost_of) {
  AlignedDataset out;
  out.roles = roles;
  const std::size_t S = ds.frames.size();
  out.frame_ids.resize(S);
  out.contexts.resize(S);
  out.permutations.resize(S);
  out.matrix.assign(S * 2 * roles, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> offset(S + 1, 0);
  for (std::size_t s = 0; s < S; ++s) offset[s + 1] = offset[s] + ds.frames[s].positions.size();
  for (std::size_t s = 0; s < S; ++s) {
    if (ds.frames[s].positions.size() > roles) {
      throw InputError("frame " + std::to_string(ds.frames[s].frame_id) + " has more agents than the " +
                       std::to_string(roles) + " template roles");
    }
    if (ds.frames[s].positions.empty()) {
      throw InputError("frame " + std::to_string(ds.frames[s].frame_id) + " has no agents");
    }
  }
  // Each frame writes only its own slots, so the result is schedule-independent.
  for_each_chunk(S, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const Frame& f = ds.frames[s];
      const std::size_t n = f.positions.size();
      CostMatrix c(n, roles);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < roles; ++j) c(i, j) = cost_of(offset[s] + i, f.positions[i], j);
      }
      Assignment a = hungarian(c);
      double* row = &out.matrix[s * 2 * roles];
      for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(a.mapping[i]);
        row[2 * j] = f.positions[i].x();
        row[2 * j + 1] = f.positions[i].y();
      }
      out.frame_ids[s] = f.frame_id;
      out.contexts[s] = f.context;
      out.permutations[s] = std::move(a);
    }
  }, 64);
  return out;
}

std::vector<double> log_weights(const Template& t, bool use) {
  std::vector<double> lw(t.size(), 0.0);
  if (use) {
    for (std::size_t j = 0; j < t.size(); ++j) lw[j] = std::log(t[j].weight());
  }
  return lw;
}

}  // namespace

void AlignedDataset::write_csv(std::ostream& out) const {
  out << "frame_id";
  for (std::size_t j = 0; j < roles; ++j) out << ",role_" << j << "_x,role_" << j << "_y";
  out << '\n';
  for (std::size_t s = 0; s < frame_count(); ++s) {
    out << frame_ids[s];
    for (double v : row(s)) {
      out << ',';
      put(out, v);
    }
    out << '\n';
  }
}

void AlignedDataset::write_jsonl(std::ostream& out) const {
  for (std::size_t s = 0; s < frame_count(); ++s) {
    nlohmann::json j;
    j["frame_id"] = frame_ids[s];
    j["permutation"] = permutations[s].mapping;
    j["cost"] = permutations[s].total_cost;
    auto& r = j["roles"] = nlohmann::json::array();
    const auto vals = row(s);
    for (std::size_t k = 0; k < roles; ++k) {
      if (std::isnan(vals[2 * k])) {
        r.push_back(nullptr);
      } else {
        r.push_back({vals[2 * k], vals[2 * k + 1]});
      }
    }
    out << j.dump() << '\n';
  }
}

AlignedDataset assign_roles(const Dataset& ds, const Template& t, const AssignOptions& opts) {
  const auto lw = log_weights(t, opts.use_weights);
  return assign_frames(ds, t.size(), opts.threads,
                       [&](std::size_t, const Vec2& x, std::size_t j) {
                         return -(t[j].log_density(x) + lw[j]);
                       });
}

AlignedDataset assign_roles(const Dataset& ds, const TemplateAlignment& alignment,
                            const LogDensityTable& densities, const AssignOptions& opts) {
  const std::size_t K = alignment.aligned.size();
  if (densities.components != K || densities.values.size() != ds.point_count() * K) {
    throw InputError("assign_roles: cached densities do not match this dataset");
  }
  const auto lw = log_weights(alignment.aligned, opts.use_weights);
  const auto& comp = alignment.component_for_role;
  return assign_frames(ds, K, opts.threads, [&](std::size_t point, const Vec2&, std::size_t j) {
    return -(densities.at(point, static_cast<std::size_t>(comp[j])) + lw[j]);
  });
}

double average_log_likelihood(const Dataset& ds, const Formation& f, int threads) {
  return average_log_likelihood(flatten(ds).points, f, threads);
}

}  // namespace rolealign
