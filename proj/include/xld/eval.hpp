#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xld/corpus.hpp"
#include "xld/model.hpp"

namespace xld {

struct Chunk {
  EntityType type = EntityType::kAmount;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  friend auto operator<=>(const Chunk&, const Chunk&) = default;
};

// Orphan I-x is repaired to B-x first; a new chunk starts at every B-x and at
// every type change.
std::vector<Chunk> extract_chunks(const std::vector<Tag>& tags);

struct TypeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold chunks
  std::size_t predicted = 0;  // predicted chunks
  std::size_t correct = 0;
};

struct Metrics {
  double token_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t words = 0;
  std::size_t gold_chunks = 0;
  std::size_t predicted_chunks = 0;
  std::size_t correct_chunks = 0;
  std::array<TypeScore, kNumEntityTypes> per_type{};
};

double f1_score(double precision, double recall);

// Micro-averaged exact-match entity scores and word-level tag accuracy.
// Throws std::invalid_argument when a sentence's lengths differ.
Metrics compute_metrics(const std::vector<std::vector<Tag>>& predicted, const Dataset& gold);

// Tags every sentence of `data`; words cut off by truncation are tagged O.
template <typename T>
std::vector<std::vector<Tag>> predict_dataset(const TransformerTagger<T>& model,
                                              const Vocabulary& vocab, const Dataset& data);

template <typename T>
Metrics evaluate_model(const TransformerTagger<T>& model, const Vocabulary& vocab,
                       const Dataset& data) {
  return compute_metrics(predict_dataset(model, vocab, data), data);
}

inline constexpr std::array<std::string_view, 4> kReportRows = {
    "teacher", "student_kd", "student_kd_ct", "naive_baseline"};

struct ReportRow {
  std::string model;
  Metrics source;
  Metrics target;
};

struct ComparisonReport {
  std::vector<ReportRow> rows;  // in kReportRows order
  std::string target_test_label;

  std::string to_csv() const;
  std::string to_text() const;
  std::string per_type_csv() const;
  void write(const std::filesystem::path& dir) const;
};

// Throws std::invalid_argument naming any slot of kReportRows that is absent.
ComparisonReport comparison_report(const std::map<std::string, std::pair<Metrics, Metrics>>& scores,
                                   std::string target_test_label);

}  // namespace xld
