#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xld/train.hpp"

namespace xld {

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;  // (epoch, loss)
  bool dashed = false;
};

// Self-contained SVG line chart, loss against epoch.
std::string render_svg(const std::string& title, const std::vector<Series>& series);

// Reads every epoch CSV in run_dir and writes run_dir/charts/: one chart per
// (phase, alpha) group with train and validation curves, a combined chart when
// there is more than one group, and copies of the CSVs. Returns the charts
// written. Throws std::runtime_error when run_dir holds no epoch CSV.
std::vector<std::filesystem::path> emit_loss_curves(const std::filesystem::path& run_dir);

}  // namespace xld
