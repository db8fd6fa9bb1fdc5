#pragma once

#include <string>

#include "lvr/common.hpp"

namespace lvr {

/// Ordered expert demonstration: (state, action) pairs sampled from a
/// closed-loop trajectory at a fixed control rate.
struct Dataset {
  std::vector<Vec> states;
  std::vector<Vec> actions;
  double dt = 0.02;
  std::string meta;

  std::size_t size() const { return states.size(); }
  std::size_t state_dim() const { return states.empty() ? 0 : states.front().size(); }
  std::size_t action_dim() const { return actions.empty() ? 0 : actions.front().size(); }

  /// Checks equal lengths, consistent dimensions, finite entries.
  void validate() const;

  /// First n samples as a contiguous sub-trajectory.
  Dataset prefix(std::size_t n) const;
};

/// Per-dimension affine normalization fit on the training states. The same
/// statistics drive both kNN distances and policy inputs, and deployment
/// reuses them via the policy checkpoint.
struct Standardizer {
  Vec mean;
  Vec std;

  static Standardizer fit(const std::vector<Vec>& states);
  Vec apply(const Vec& x) const;
  bool empty() const { return mean.empty(); }
};

/// CSV layout: header "t,x0..x{n-1},u0..u{m-1}", one row per sample,
/// doubles in shortest round-trip form so reruns are byte-identical.
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

}  // namespace lvr
