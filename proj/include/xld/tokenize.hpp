#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "xld/corpus.hpp"

namespace xld {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kNumReserved = 3;
inline constexpr int kIgnoreLabel = -1;
inline constexpr std::size_t kDefaultMaxLen = 64;

// Prefix marking a character piece that continues a word.
inline constexpr std::string_view kContinuationPrefix = "##";

/// Shared word vocabulary plus a character-piece alphabet for fallback.
///
/// Ids 0..2 are reserved ([PAD], [UNK], [BOS]). Whole words come next in
/// frequency-descending, then lexicographic order, followed by character
/// pieces ordered the same way. A character piece is either a bare
/// word-initial character or "##" + a non-initial character.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(std::span<const Dataset> datasets, std::size_t min_freq = 1,
                          std::size_t max_size = 16384);

  int id(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  // Subtoken ids of one word: the whole word when known, else its characters.
  std::vector<int> encode_word(std::string_view word) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_to_token_ == b.id_to_token_;
  }

 private:
  void add(const std::string& token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct TokenizedExample {
  std::vector<int> input_ids;
  std::vector<int> label_ids;  // kIgnoreLabel on continuation pieces
  std::vector<std::uint8_t> attention_mask;
  std::vector<std::uint8_t> word_starts;
  std::size_t word_count = 0;  // words retained after truncation

  std::size_t size() const { return input_ids.size(); }
  // Positions of each retained word's first subtoken.
  std::vector<std::size_t> word_start_positions() const;
};

TokenizedExample encode_and_align(const TaggedSentence& sentence, const Vocabulary& vocab,
                                  std::size_t max_len = kDefaultMaxLen);

// Unlabelled variant for augmented text; every label is kIgnoreLabel.
TokenizedExample encode_words(std::span<const std::string> words, const Vocabulary& vocab,
                              std::size_t max_len = kDefaultMaxLen);

// One tag per retained word from its first subtoken, then IOB repair.
std::vector<Tag> decode_tags(const TokenizedExample& example, std::span<const int> predicted);

}  // namespace xld
