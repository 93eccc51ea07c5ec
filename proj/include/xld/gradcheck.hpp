#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "xld/model.hpp"

namespace xld {

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  bool skipped = false;  // empty parameter
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double worst() const;
  std::vector<std::string> failures() const;
  std::string to_text() const;
};

using LossFn = std::function<nn::Tensor<double>()>;

// Compares the analytic gradient of `loss` against central differences of
// `numeric` (defaults to `loss`) for every coordinate of every parameter.
// `corrupt` names a parameter whose analytic gradient is deliberately
// damaged (fault injection).
GradCheckReport check_gradients(std::vector<nn::Parameter<double>>& params, const LossFn& loss,
                                double epsilon, double tolerance, const std::string& corrupt = {},
                                const LossFn& numeric = {});

enum class GradObjective { kSupervised, kDistill, kConsistency, kConsistencyBothBranches };
std::string objective_name(GradObjective objective);
std::vector<GradObjective> all_objectives();

struct GradCheckOptions {
  ModelConfig config;
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
  double tolerance = 1e-3;
  GradObjective objective = GradObjective::kSupervised;
  double alpha = 0.5;
  double temperature = 1.0;
  std::size_t sentences = 2;
  std::string corrupt;
};

// One layer, width 8, two heads, small vocabulary.
ModelConfig tiny_config(std::size_t vocab_size = 24, std::size_t k = kNumTags);

// Random batch with padding, continuation pieces and ignored labels.
GradCheckReport grad_check(const GradCheckOptions& options);

// Tiny architecture with randomly drawn depth, widths, heads, vocabulary,
// label count and length.
ModelConfig random_tiny_config(Rng& rng);

struct GradCheckSuite {
  // "config i / objective" -> report
  std::vector<std::pair<std::string, GradCheckReport>> runs;
  // Worst relative error per parameter name over every run.
  std::map<std::string, double> worst_by_parameter;
  double tolerance = 0.0;

  bool passed() const;
  double worst() const;
  std::string summary() const;
};

// Every objective on `configs` random tiny configurations; alpha and
// temperature are drawn per run.
GradCheckSuite grad_check_suite(std::size_t configs, std::uint64_t seed, double epsilon = 1e-5,
                                double tolerance = 1e-3, const std::string& corrupt = {});

}  // namespace xld
