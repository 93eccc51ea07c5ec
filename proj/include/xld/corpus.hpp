#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace xld {

// Order matches the frequency ranking of the English transaction corpus.
enum class EntityType : std::uint8_t {
  kAmount,
  kSupplier,
  kCurrency,
  kNumber,
  kFullDate,
  kCardNumber,
  kFullTime,
  kMerchant,
  kBalance,
  kTime,
  kMonth,
  kDate,
};

inline constexpr std::size_t kNumEntityTypes = 12;
inline constexpr std::size_t kNumTags = 2 * kNumEntityTypes + 1;

inline constexpr std::array<std::string_view, kNumEntityTypes> kEntityNames = {
    "amount",      "supplier",  "currency", "number", "full-date", "card-number",
    "full-time",   "merchant",  "balance",  "time",   "month",     "date"};

std::string_view entity_name(EntityType type);
std::optional<EntityType> parse_entity(std::string_view name);
std::array<EntityType, kNumEntityTypes> all_entity_types();

/// One IOB tag. Ids: O = 0, B-x = 1 + 2x, I-x = 2 + 2x.
struct Tag {
  enum class Kind : std::uint8_t { kOutside, kBegin, kInside };

  Kind kind = Kind::kOutside;
  EntityType type = EntityType::kAmount;

  static Tag outside() { return {}; }
  static Tag begin(EntityType t) { return {Kind::kBegin, t}; }
  static Tag inside(EntityType t) { return {Kind::kInside, t}; }
  static Tag from_id(int id);

  int id() const;
  bool is_outside() const { return kind == Kind::kOutside; }
  std::string str() const;

  friend bool operator==(const Tag& a, const Tag& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::kOutside || a.type == b.type;
  }
};

// Throws std::invalid_argument for anything but O, B-<entity>, I-<entity>.
Tag parse_tag(std::string_view text);

enum class Language : std::uint8_t { kSource, kTarget };
enum class Split : std::uint8_t { kTrain, kVal, kTest };

std::string_view language_name(Language lang);

struct TaggedSentence {
  std::vector<std::string> words;
  std::vector<Tag> tags;
  Language language = Language::kSource;

  friend bool operator==(const TaggedSentence&, const TaggedSentence&) = default;
};

struct Dataset {
  std::vector<TaggedSentence> sentences;
  Split split = Split::kTrain;
  Language language = Language::kSource;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

// Index of the first I-x not preceded by B-x / I-x, if any.
std::optional<std::size_t> find_iob_violation(const std::vector<Tag>& tags);
bool is_iob_valid(const std::vector<Tag>& tags);
// Orphan I-x becomes B-x.
std::vector<Tag> repair_iob(std::vector<Tag> tags);

// ---------------------------------------------------------------------------
// IOB files: "<token>\t<tag>\n" per word, one empty line between sentences.

class IobFormatError : public std::runtime_error {
 public:
  IobFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class IobMode { kStrict, kRepair };

Dataset parse_iob(std::string_view text, Language language, IobMode mode = IobMode::kStrict);
std::string format_iob(const Dataset& dataset);
Dataset read_iob(const std::filesystem::path& path, Language language,
                 IobMode mode = IobMode::kStrict);
void write_iob(const Dataset& dataset, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Template packs and generation.

/// Word-level realization rules for one language.
///
/// Clause templates are space-separated words; a word of the form
/// "{entity-name}" is a typed slot. Filler strings may contain several
/// space-separated words and these digit placeholders: '#' any digit,
/// {DD} day, {MM} month, {YYYY} year, {hh} hour, {mm} minute, {ss} second.
struct LanguagePack {
  std::vector<std::string> openers;
  std::vector<std::string> closers;
  std::vector<std::string> clauses;
  std::map<EntityType, std::vector<std::string>> fillers;
  // Mean entities per sentence used when allocating the entity budget.
  double mean_entities = 5.0;
};

/// Bidirectional word map. source_to_target lists synonym candidates.
struct Lexicon {
  std::map<std::string, std::string> target_to_source;
  std::map<std::string, std::vector<std::string>> source_to_target;
};

struct TemplatePack {
  LanguagePack source;
  LanguagePack target;
  Lexicon lexicon;

  const LanguagePack& side(Language lang) const {
    return lang == Language::kSource ? source : target;
  }
};

// Throws std::invalid_argument describing the first broken invariant.
void validate_pack(const TemplatePack& pack);

TemplatePack default_template_pack();

nlohmann::json pack_to_json(const TemplatePack& pack);
TemplatePack pack_from_json(const nlohmann::json& doc);

using EntityProfile = std::map<std::string, double>;

// Entity counts of the reference transaction corpora, by entity name.
EntityProfile default_profile(Language lang);

Dataset generate_corpus(const TemplatePack& pack, Language language, std::size_t sentence_count,
                        const EntityProfile& profile, std::uint64_t seed);

// Hides all but the last four digits of every card-number span.
TaggedSentence mask_sensitive(const TaggedSentence& sentence);

using EntityCounts = std::array<std::size_t, kNumEntityTypes>;

// Counts entity spans (not tokens). Empty datasets give all zeros.
EntityCounts corpus_stats(const Dataset& dataset);

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// 80/10/10 after a seeded shuffle.
DatasetSplits split_dataset(const Dataset& dataset, std::uint64_t seed);

}  // namespace xld
