#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mf::train {

struct GradRow {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

constexpr double kGradTolerance = 1e-4;

/// Finite-difference checks of every catalog primitive (for each seed) and of
/// the composite blocks: MBT attention, encoder layer, GRU step, heads, losses.
std::vector<GradRow> run_grad_suite(const std::vector<std::uint64_t>& seeds);

/// Composite block names, in suite order.
std::vector<std::string> composite_names();
double grad_check_composite(const std::string& name, std::uint64_t seed);

std::string grad_rows_to_csv(const std::vector<GradRow>& rows);

}  // namespace mf::train
