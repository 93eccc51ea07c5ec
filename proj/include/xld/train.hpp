#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xld/losses.hpp"
#include "xld/model.hpp"

namespace xld {

enum class Phase { kTeacher, kDistill, kConsistency };
std::string phase_name(Phase phase);
Phase parse_phase(std::string_view name);

struct TrainConfig {
  Phase phase = Phase::kTeacher;
  double alpha = 0.8;
  double temperature = 1.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 28;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ConsistencyGradient flow = ConsistencyGradient::kAugmentedOnly;

  // Phase defaults; parity mode uses 2e-5 in every phase.
  static TrainConfig defaults(Phase phase, bool parity = false);
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct EpochRecord {
  Phase phase = Phase::kTeacher;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double ce_part = 0.0;
  double kl_part = 0.0;
  double seconds = 0.0;
};

struct BatchStats {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double total = 0.0;
  double ce = 0.0;
  double kl = 0.0;
};
using BatchCallback = std::function<void(const BatchStats&)>;

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<nn::Parameter<T>>& params, const TrainConfig& config);
  // Throws std::runtime_error naming the first parameter with a NaN gradient.
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<nn::Parameter<T>>* params_;
  double lr_, beta1_, beta2_, eps_, wd_;
  std::size_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct PhaseData {
  std::vector<TokenizedExample> train;
  std::vector<TokenizedExample> val;
  // Consistency phase: augmented[i] pairs with train[i]; labels are ignored.
  std::vector<TokenizedExample> augmented;
};

// Trains `model` in place for exactly config.epochs epochs and returns one
// record per epoch. The distill phase requires `teacher`, which is only read.
template <typename T>
std::vector<EpochRecord> run_phase(TransformerTagger<T>& model, const PhaseData& data,
                                   const TrainConfig& config,
                                   const TransformerTagger<T>* teacher = nullptr,
                                   const BatchCallback& on_batch = {});

// Mean over sentences of the per-sentence word-level CE, eval mode.
template <typename T>
double supervised_loss(const TransformerTagger<T>& model,
                       const std::vector<TokenizedExample>& examples);

// One consistency run per alpha, each from a fresh copy of `student`.
template <typename T>
std::vector<EpochRecord> sweep_alpha(const TransformerTagger<T>& student, const PhaseData& data,
                                     const TrainConfig& base, const std::vector<double>& alphas);

inline constexpr std::string_view kEpochCsvHeader =
    "phase,alpha,seed,epoch,train_loss,val_loss,ce_part,kl_part,seconds";

// Deterministic mode writes 0 for seconds so identical runs give identical bytes.
std::string epoch_csv(const std::vector<EpochRecord>& records, bool deterministic);
void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& records,
                     bool deterministic);
std::vector<EpochRecord> read_epoch_csv(const std::filesystem::path& path);

}  // namespace xld
