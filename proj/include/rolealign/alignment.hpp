#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "rolealign/assignment.hpp"
#include "rolealign/discovery.hpp"
#include "rolealign/ingest.hpp"

namespace rolealign {

// Ordered roles. Position j is role j; the order never changes once set.
class Template {
 public:
  Template() = default;
  explicit Template(std::vector<Gaussian2D> roles);
  // Adopts a formation's component order as the role order.
  static Template from_formation(const Formation& f) { return Template(f.components()); }

  std::size_t size() const { return roles_.size(); }
  const Gaussian2D& operator[](std::size_t j) const { return roles_[j]; }
  const std::vector<Gaussian2D>& roles() const { return roles_; }
  auto begin() const { return roles_.begin(); }
  auto end() const { return roles_.end(); }
  Formation as_formation() const { return Formation(roles_); }

  // Roles concatenated as [x0, y0, x1, y1, ...].
  std::vector<double> mean_vector() const;

  bool operator==(const Template&) const = default;

 private:
  std::vector<Gaussian2D> roles_;
};

nlohmann::json to_json(const Template& t);
Template template_from_json(const nlohmann::json& j);

enum class AlignmentCost { Bhattacharyya, Mahalanobis };

struct TemplateAlignment {
  Template aligned;                     // role j = component component_for_role[j]
  std::vector<int> component_for_role;  // index into the formation
  double total_cost = 0.0;
};

TemplateAlignment match_template(const Formation& f, const Template& parent,
                                 AlignmentCost cost = AlignmentCost::Bhattacharyya);

inline Template align_template(const Formation& f, const Template& parent,
                               AlignmentCost cost = AlignmentCost::Bhattacharyya) {
  return match_template(f, parent, cost).aligned;
}

struct AssignOptions {
  bool use_weights = true;  // include -log w_j in the per-frame cost
  int threads = 1;
};

// S x (2K) role-ordered positions plus the per-frame agent -> role mapping.
// Roles left empty in a frame (fewer agents than roles) hold NaN.
struct AlignedDataset {
  std::size_t roles = 0;
  std::vector<std::int64_t> frame_ids;
  std::vector<FrameContext> contexts;
  std::vector<Assignment> permutations;  // mapping[agent index] = role
  std::vector<double> matrix;            // row-major, frame_count() x 2*roles

  std::size_t frame_count() const { return frame_ids.size(); }
  std::size_t width() const { return 2 * roles; }
  std::span<const double> row(std::size_t s) const {
    return {matrix.data() + s * width(), width()};
  }
  double total_cost() const;

  // frame_id,role_0_x,role_0_y,...
  void write_csv(std::ostream& out) const;
  // {"frame_id":..,"permutation":[..],"cost":..,"roles":[[x,y],..]}
  void write_jsonl(std::ostream& out) const;
};

// Per frame: cost[i][j] = -(log N(x_i; role j) + log w_j), Hungarian, then the
// positions are written in role order.
AlignedDataset assign_roles(const Dataset& ds, const Template& t, const AssignOptions& opts = {});

// Same, reusing log densities computed during discovery on this very dataset.
AlignedDataset assign_roles(const Dataset& ds, const TemplateAlignment& alignment,
                            const LogDensityTable& densities, const AssignOptions& opts = {});

double average_log_likelihood(const Dataset& ds, const Formation& f, int threads = 1);

}  // namespace rolealign
