#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xld/augment.hpp"
#include "xld/corpus.hpp"
#include "xld/eval.hpp"
#include "xld/tokenize.hpp"
#include "xld/train.hpp"

namespace xld {

// Sizes and seeds of the synthetic data for one experiment.
struct DataConfig {
  std::uint64_t seed = 7;
  std::size_t source_sentences = 1730;
  std::size_t target_sentences = 30;
  std::size_t target_val_sentences = 100;
  std::size_t target_test_sentences = 200;
  std::size_t min_freq = 2;
  std::size_t max_len = kDefaultMaxLen;

  void validate() const;
  nlohmann::json to_json() const;
  static DataConfig from_json(const nlohmann::json& doc);
};

struct ExperimentData {
  TemplatePack pack;
  DatasetSplits source;
  Dataset target_train;
  Dataset target_val;
  Dataset target_test;
  Vocabulary vocab;
};

// Source corpus split 80/10/10, the labelled target sentences, and
// independently generated target validation and test sets. The vocabulary
// covers the source training split and the labelled target sentences.
ExperimentData build_experiment_data(const DataConfig& config);
Vocabulary build_vocabulary(const Dataset& source_train, const Dataset& target_train,
                            std::size_t min_freq);

std::vector<TokenizedExample> tokenize_dataset(const Dataset& data, const Vocabulary& vocab,
                                               std::size_t max_len);

// Augmented copies of the target training sentences, tokenized without labels.
std::vector<TokenizedExample> augmented_examples(const Dataset& target_train,
                                                 const AugmentConfig& augment,
                                                 const TemplatePack& pack, const Vocabulary& vocab,
                                                 std::size_t max_len);

PhaseData source_phase_data(const ExperimentData& data, std::size_t max_len);
// Labelled target sentences paired with their augmented copies; validation on
// the held-out target set.
PhaseData target_phase_data(const ExperimentData& data, const AugmentConfig& augment,
                            std::size_t max_len);

// Hyperparameters of every training phase in one experiment.
struct ExperimentConfig {
  DataConfig data;
  TrainConfig teacher = TrainConfig::defaults(Phase::kTeacher);
  TrainConfig distill = TrainConfig::defaults(Phase::kDistill);
  TrainConfig consistency = TrainConfig::defaults(Phase::kConsistency);
  // Student-size model trained from scratch on the labelled target sentences.
  TrainConfig naive = TrainConfig::defaults(Phase::kTeacher);
  AugmentConfig augment;

  // Every phase, the data and the augmentation seeded from one value.
  static ExperimentConfig seeded(std::uint64_t seed);
};

struct ExperimentResult {
  // Model init seeds derive from each phase's training seed.
  std::vector<EpochRecord> teacher_log, distill_log, consistency_log, naive_log;
  ComparisonReport report;
};

// Teacher, KD student, KD+CT student and naive baseline, then the comparison
// report. `log` receives one line per finished phase when set; the KD student
// is copied to `student_kd` when given.
template <typename T>
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const std::function<void(const std::string&)>& log = {},
                                std::optional<TransformerTagger<T>>* student_kd = nullptr);

}  // namespace xld
