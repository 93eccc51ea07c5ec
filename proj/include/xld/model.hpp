#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xld/kernels.hpp"
#include "xld/losses.hpp"
#include "xld/rng.hpp"
#include "xld/tensor.hpp"
#include "xld/tokenize.hpp"

namespace xld {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 0;
  std::size_t k = kNumTags;
  std::size_t max_len = kDefaultMaxLen;
  double dropout = 0.1;

  static ModelConfig teacher(std::size_t vocab_size, std::size_t k = kNumTags);
  static ModelConfig student(std::size_t vocab_size, std::size_t k = kNumTags);
  // Throws std::invalid_argument describing the first broken constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
  bool operator==(const ModelConfig&) const = default;
};

enum class Role { kTeacher, kStudent };
std::string role_name(Role role);
Role parse_role(std::string_view name);

/// Several sentences packed row-wise into one encoder input.
struct Batch {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<std::uint8_t> mask;
  std::vector<kernels::Segment> segments;  // token rows per sentence
  std::vector<std::size_t> word_rows;      // first-subtoken rows, sentence by sentence
  std::vector<int> word_labels;            // gold label at each word row
  std::vector<kernels::Segment> word_segments;  // ranges into word_rows

  std::size_t rows() const { return ids.size(); }
  std::size_t sentences() const { return segments.size(); }

  // `word_limits`, when given, keeps only the first n words of each example.
  static Batch pack(std::span<const TokenizedExample* const> examples,
                    std::span<const std::size_t> word_limits = {});
};

template <typename T>
class TransformerTagger {
 public:
  TransformerTagger(const ModelConfig& config, Role role, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Role role() const { return role_; }
  std::vector<nn::Parameter<T>>& parameters() { return params_; }
  const std::vector<nn::Parameter<T>>& parameters() const { return params_; }
  std::size_t param_count() const;

  // Logits [batch.rows(), k]. Dropout runs only when `rng` is non-null.
  nn::Tensor<T> forward(const Batch& batch, Rng* rng = nullptr) const;

  // Eval-mode probabilities per position; mask=0 rows are marked invalid.
  ProbMatrix predict(const TokenizedExample& example) const;
  // Argmax tag per word, repaired to valid IOB.
  std::vector<Tag> predict_tags(const TokenizedExample& example) const;

  TransformerTagger clone() const;
  void zero_grad();

  void save(const std::filesystem::path& path) const;
  // `expected_k` guards against a label-set mismatch at load time.
  static TransformerTagger load(const std::filesystem::path& path,
                                std::optional<std::size_t> expected_k = std::nullopt);

 private:
  struct LayerIndex {
    std::size_t ln1, q, k, v, out, ln2, ffn_in, ffn_out;
  };

  std::size_t add_param(const std::string& name, nn::Shape shape, Rng& rng, char init);
  const nn::Tensor<T>& p(std::size_t i) const { return params_[i].tensor; }

  ModelConfig config_;
  Role role_;
  std::vector<nn::Parameter<T>> params_;
  std::size_t token_embed_ = 0, position_embed_ = 0, final_ln_ = 0, head_ = 0;
  std::vector<LayerIndex> layers_;
};

// Precision recorded in a checkpoint file (32 or 64).
int checkpoint_precision(const std::filesystem::path& path);

}  // namespace xld
