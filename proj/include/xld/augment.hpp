#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xld/corpus.hpp"

namespace xld {

using Words = std::vector<std::string>;

struct TfIdfModel {
  std::size_t documents = 0;
  std::map<std::string, double> idf;
  // Relative frequency over every fitted token, in word order.
  std::vector<std::string> unigram_words;
  std::vector<double> unigram_freqs;

  // Unfitted words get the idf of a zero document frequency.
  double idf_of(const std::string& word) const;
  double frequency(const std::string& word) const;
};

// idf(w) = ln((1 + N) / (1 + df(w))) + 1
TfIdfModel fit_tfidf(std::span<const Words> corpus);

// Word i is replaced with probability magnitude * (1 - score_i / max_score),
// score = in-sentence tf * idf; replacements are drawn from the unigram table.
Words tfidf_replace(const Words& words, const TfIdfModel& model, double magnitude,
                    std::uint64_t seed);

// Target -> source -> target through the lexicon; `probability` is the chance
// that a word is pivoted at all.
Words back_translate(const Words& words, const Lexicon& lexicon, std::uint64_t seed,
                     double probability = 1.0);

struct PerturbResult {
  Words words;
  // One line per operation: "swap i j", "typo i c old new", "case i c".
  std::vector<std::string> log;
};

// ceil(magnitude * 3) operations, each an adjacent swap, a keyboard-neighbour
// typo or a case flip.
PerturbResult rand_perturb_logged(const Words& words, double magnitude, std::uint64_t seed);
Words rand_perturb(const Words& words, double magnitude, std::uint64_t seed);
// Replays an operation log.
Words apply_perturb_log(const Words& words, std::span<const std::string> log);

enum class AugmentOp { kBackTranslate = 0, kRandPerturb = 1, kTfIdfReplace = 2 };
std::string_view augment_op_name(AugmentOp op);
AugmentOp parse_augment_op(std::string_view name);

struct AugmentConfig {
  std::vector<AugmentOp> operators{AugmentOp::kBackTranslate, AugmentOp::kRandPerturb,
                                   AugmentOp::kTfIdfReplace};
  std::array<double, 3> magnitude{0.5, 0.34, 0.3};  // indexed by AugmentOp
  std::uint64_t seed = 0;

  bool uses(AugmentOp op) const;
  double strength(AugmentOp op) const { return magnitude[static_cast<std::size_t>(op)]; }
  void validate() const;
};

struct AugmentedPair {
  Words original;
  Words augmented;
};

// Sentence i uses seed config.seed + i for every selected operator, applied
// in the order back_translate, rand_perturb, tfidf_replace.
std::vector<AugmentedPair> augment_batch(std::span<const TaggedSentence> sentences,
                                         const AugmentConfig& config, const TfIdfModel& tfidf,
                                         const Lexicon& lexicon);

}  // namespace xld
