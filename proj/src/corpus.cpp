#include "xld/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xld/rng.hpp"
#include "xld/utf8.hpp"

namespace xld {

std::string_view entity_name(EntityType type) {
  return kEntityNames[static_cast<std::size_t>(type)];
}

std::optional<EntityType> parse_entity(std::string_view name) {
  for (std::size_t i = 0; i < kNumEntityTypes; ++i) {
    if (kEntityNames[i] == name) return static_cast<EntityType>(i);
  }
  return std::nullopt;
}

std::array<EntityType, kNumEntityTypes> all_entity_types() {
  std::array<EntityType, kNumEntityTypes> out{};
  for (std::size_t i = 0; i < kNumEntityTypes; ++i) out[i] = static_cast<EntityType>(i);
  return out;
}

Tag Tag::from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kNumTags)) {
    throw std::out_of_range("tag id " + std::to_string(id) + " out of range");
  }
  if (id == 0) return outside();
  const auto type = static_cast<EntityType>((id - 1) / 2);
  return (id % 2 == 1) ? begin(type) : inside(type);
}

int Tag::id() const {
  switch (kind) {
    case Kind::kOutside:
      return 0;
    case Kind::kBegin:
      return 1 + 2 * static_cast<int>(type);
    case Kind::kInside:
      return 2 + 2 * static_cast<int>(type);
  }
  return 0;
}

std::string Tag::str() const {
  switch (kind) {
    case Kind::kOutside:
      return "O";
    case Kind::kBegin:
      return "B-" + std::string(entity_name(type));
    case Kind::kInside:
      return "I-" + std::string(entity_name(type));
  }
  return "O";
}

Tag parse_tag(std::string_view text) {
  if (text == "O") return Tag::outside();
  if (text.size() > 2 && text[1] == '-' && (text[0] == 'B' || text[0] == 'I')) {
    if (auto type = parse_entity(text.substr(2))) {
      return text[0] == 'B' ? Tag::begin(*type) : Tag::inside(*type);
    }
  }
  throw std::invalid_argument("invalid tag '" + std::string(text) + "'");
}

std::string_view language_name(Language lang) {
  return lang == Language::kSource ? "source" : "target";
}

std::optional<std::size_t> find_iob_violation(const std::vector<Tag>& tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].kind != Tag::Kind::kInside) continue;
    if (i == 0 || tags[i - 1].is_outside() || tags[i - 1].type != tags[i].type) return i;
  }
  return std::nullopt;
}

bool is_iob_valid(const std::vector<Tag>& tags) { return !find_iob_violation(tags); }

std::vector<Tag> repair_iob(std::vector<Tag> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].kind != Tag::Kind::kInside) continue;
    if (i == 0 || tags[i - 1].is_outside() || tags[i - 1].type != tags[i].type) {
      tags[i].kind = Tag::Kind::kBegin;
    }
  }
  return tags;
}

// ---------------------------------------------------------------------------
// IOB files

namespace {

void finish_sentence(Dataset& out, TaggedSentence& current, std::size_t first_line,
                     IobMode mode) {
  if (current.words.empty()) return;
  if (auto bad = find_iob_violation(current.tags)) {
    if (mode == IobMode::kStrict) {
      throw IobFormatError(first_line + *bad,
                           "IOB violation: " + current.tags[*bad].str() + " without open chunk");
    }
    current.tags = repair_iob(std::move(current.tags));
  }
  out.sentences.push_back(std::move(current));
  current = TaggedSentence{};
  current.language = out.language;
}

}  // namespace

Dataset parse_iob(std::string_view text, Language language, IobMode mode) {
  Dataset out;
  out.language = language;
  TaggedSentence current;
  current.language = language;
  std::size_t line_no = 0;
  std::size_t sentence_first_line = 1;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    if (line.empty()) {
      finish_sentence(out, current, sentence_first_line, mode);
      continue;
    }
    if (current.words.empty()) sentence_first_line = line_no;
    if (!utf8::is_valid(line)) throw IobFormatError(line_no, "invalid UTF-8");
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos) {
      throw IobFormatError(line_no, "expected exactly two tab-separated fields");
    }
    const std::string_view token = line.substr(0, tab);
    const std::string_view tag = line.substr(tab + 1);
    if (token.empty()) throw IobFormatError(line_no, "empty token");
    try {
      current.tags.push_back(parse_tag(tag));
    } catch (const std::invalid_argument& e) {
      throw IobFormatError(line_no, e.what());
    }
    current.words.emplace_back(token);
  }
  finish_sentence(out, current, sentence_first_line, mode);
  return out;
}

std::string format_iob(const Dataset& dataset) {
  std::string out;
  for (std::size_t s = 0; s < dataset.sentences.size(); ++s) {
    if (s > 0) out += '\n';
    const TaggedSentence& sentence = dataset.sentences[s];
    for (std::size_t i = 0; i < sentence.words.size(); ++i) {
      out += sentence.words[i];
      out += '\t';
      out += sentence.tags[i].str();
      out += '\n';
    }
  }
  return out;
}

Dataset read_iob(const std::filesystem::path& path, Language language, IobMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_iob(buffer.str(), language, mode);
}

void write_iob(const Dataset& dataset, const std::filesystem::path& path) {
  if (dataset.empty()) throw std::invalid_argument("refusing to write an empty dataset");
  for (const auto& s : dataset.sentences) {
    if (s.words.empty() || s.words.size() != s.tags.size()) {
      throw std::invalid_argument("sentence words/tags mismatch");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_iob(dataset);
}

// ---------------------------------------------------------------------------
// Template packs

namespace {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    std::size_t end = text.find(' ', pos);
    if (end == std::string_view::npos) end = text.size();
    if (end > pos) out.emplace_back(text.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::optional<EntityType> slot_type(std::string_view word) {
  if (word.size() < 3 || word.front() != '{' || word.back() != '}') return std::nullopt;
  return parse_entity(word.substr(1, word.size() - 2));
}

bool is_slot_word(std::string_view word) {
  return word.size() >= 3 && word.front() == '{' && word.back() == '}';
}

bool has_placeholders(std::string_view filler) {
  return filler.find('#') != std::string_view::npos || filler.find('{') != std::string_view::npos;
}

std::vector<EntityType> clause_slots(std::string_view clause) {
  std::vector<EntityType> slots;
  for (const auto& word : split_words(clause)) {
    if (auto t = slot_type(word)) slots.push_back(*t);
  }
  return slots;
}

void validate_side(const LanguagePack& side, std::string_view name) {
  const std::string label(name);
  if (side.clauses.empty()) throw std::invalid_argument(label + " pack has no clause templates");
  for (const auto& clause : side.clauses) {
    bool any_slot = false;
    for (const auto& word : split_words(clause)) {
      if (!is_slot_word(word)) continue;
      auto type = slot_type(word);
      if (!type) throw std::invalid_argument(label + " clause has unknown slot " + word);
      auto it = side.fillers.find(*type);
      if (it == side.fillers.end() || it->second.empty()) {
        throw std::invalid_argument(label + " slot " + word + " has no fillers");
      }
      any_slot = true;
    }
    if (!any_slot) throw std::invalid_argument(label + " clause without slot: " + clause);
  }
  if (!(side.mean_entities >= 1.0)) {
    throw std::invalid_argument(label + " mean_entities must be >= 1");
  }
}

}  // namespace

void validate_pack(const TemplatePack& pack) {
  validate_side(pack.source, "source");
  validate_side(pack.target, "target");
  for (const auto& [type, fillers] : pack.source.fillers) {
    for (const auto& filler : fillers) {
      if (has_placeholders(filler)) continue;
      for (const auto& word : split_words(filler)) {
        if (!pack.lexicon.source_to_target.contains(word)) {
          throw std::invalid_argument("lexicon lacks source filler word '" + word + "'");
        }
      }
    }
  }
  for (const auto& [type, fillers] : pack.target.fillers) {
    for (const auto& filler : fillers) {
      if (has_placeholders(filler)) continue;
      for (const auto& word : split_words(filler)) {
        if (!pack.lexicon.target_to_source.contains(word)) {
          throw std::invalid_argument("lexicon lacks target filler word '" + word + "'");
        }
      }
    }
  }
}

namespace {

nlohmann::json side_to_json(const LanguagePack& side) {
  nlohmann::json fillers = nlohmann::json::object();
  for (const auto& [type, values] : side.fillers) fillers[std::string(entity_name(type))] = values;
  return {{"openers", side.openers},
          {"closers", side.closers},
          {"clauses", side.clauses},
          {"fillers", fillers},
          {"mean_entities", side.mean_entities}};
}

LanguagePack side_from_json(const nlohmann::json& doc) {
  LanguagePack side;
  side.openers = doc.value("openers", std::vector<std::string>{});
  side.closers = doc.value("closers", std::vector<std::string>{});
  side.clauses = doc.at("clauses").get<std::vector<std::string>>();
  side.mean_entities = doc.value("mean_entities", 5.0);
  for (const auto& [name, values] : doc.at("fillers").items()) {
    auto type = parse_entity(name);
    if (!type) throw std::invalid_argument("unknown entity type '" + name + "' in pack");
    side.fillers[*type] = values.get<std::vector<std::string>>();
  }
  return side;
}

}  // namespace

nlohmann::json pack_to_json(const TemplatePack& pack) {
  return {{"source", side_to_json(pack.source)},
          {"target", side_to_json(pack.target)},
          {"lexicon",
           {{"target_to_source", pack.lexicon.target_to_source},
            {"source_to_target", pack.lexicon.source_to_target}}}};
}

TemplatePack pack_from_json(const nlohmann::json& doc) {
  TemplatePack pack;
  pack.source = side_from_json(doc.at("source"));
  pack.target = side_from_json(doc.at("target"));
  const auto& lex = doc.at("lexicon");
  pack.lexicon.target_to_source =
      lex.at("target_to_source").get<std::map<std::string, std::string>>();
  pack.lexicon.source_to_target =
      lex.at("source_to_target").get<std::map<std::string, std::vector<std::string>>>();
  return pack;
}

EntityProfile default_profile(Language lang) {
  if (lang == Language::kSource) {
    return {{"amount", 3511},   {"supplier", 2968},    {"currency", 2490},  {"number", 2465},
            {"full-date", 2234}, {"card-number", 1951}, {"full-time", 1938}, {"merchant", 1133},
            {"balance", 494},   {"time", 135},         {"month", 99},       {"date", 10}};
  }
  return {{"amount", 73},     {"supplier", 29},   {"currency", 34}, {"number", 34},
          {"full-date", 0},   {"card-number", 7}, {"full-time", 0}, {"merchant", 7},
          {"balance", 8},     {"time", 8},        {"month", 2},     {"date", 43}};
}

// ---------------------------------------------------------------------------
// Generation

namespace {

std::string two_digits(std::size_t v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

std::string expand_filler(std::string_view filler, Rng& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < filler.size()) {
    const char c = filler[i];
    if (c == '#') {
      out.push_back(static_cast<char>('0' + rng.index(10)));
      ++i;
      continue;
    }
    if (c == '{') {
      const std::size_t close = filler.find('}', i);
      if (close != std::string_view::npos) {
        const std::string_view key = filler.substr(i + 1, close - i - 1);
        bool known = true;
        if (key == "DD") out += two_digits(1 + rng.index(28));
        else if (key == "MM") out += two_digits(1 + rng.index(12));
        else if (key == "YYYY") out += std::to_string(2019 + rng.index(6));
        else if (key == "hh") out += two_digits(rng.index(24));
        else if (key == "mm" || key == "ss") out += two_digits(rng.index(60));
        else known = false;
        if (known) {
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

// Position of each entity type in a typical message layout.
constexpr std::array<int, kNumEntityTypes> kLayoutRank = {
    /*amount*/ 1,   /*supplier*/ 4, /*currency*/ 2,  /*number*/ 11,
    /*full-date*/ 5, /*card*/ 0,    /*full-time*/ 8, /*merchant*/ 3,
    /*balance*/ 10, /*time*/ 9,     /*month*/ 7,     /*date*/ 6};

struct ParsedClause {
  std::vector<std::string> words;
  std::vector<EntityType> slots;
};

std::vector<std::size_t> allocate_counts(const std::array<double, kNumEntityTypes>& weights,
                                         std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(kNumEntityTypes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t t = 0; t < kNumEntityTypes; ++t) {
    const double exact = static_cast<double>(total) * weights[t] / sum;
    counts[t] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[t];
    remainders.emplace_back(exact - std::floor(exact), t);
  }
  // Largest remainder; ties broken toward the heavier weight, then lower index.
  std::stable_sort(remainders.begin(), remainders.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return weights[a.second] > weights[b.second];
  });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
    if (weights[remainders[i].second] <= 0.0) continue;
    ++counts[remainders[i].second];
    ++assigned;
  }
  return counts;
}

}  // namespace

Dataset generate_corpus(const TemplatePack& pack, Language language, std::size_t sentence_count,
                        const EntityProfile& profile, std::uint64_t seed) {
  if (sentence_count == 0) throw std::invalid_argument("sentence_count must be >= 1");
  const LanguagePack& side = pack.side(language);
  if (side.clauses.empty()) throw std::invalid_argument("template pack is empty");
  validate_pack(pack);

  std::array<double, kNumEntityTypes> weights{};
  for (const auto& [name, weight] : profile) {
    auto type = parse_entity(name);
    if (!type) throw std::invalid_argument("profile references unknown entity type '" + name + "'");
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
      throw std::invalid_argument("profile weight for '" + name + "' must be non-negative");
    }
    weights[static_cast<std::size_t>(*type)] = weight;
  }
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
    throw std::invalid_argument("profile weights are all zero");
  }

  std::vector<ParsedClause> clauses;
  for (const auto& text : side.clauses) {
    ParsedClause c{split_words(text), clause_slots(text)};
    clauses.push_back(std::move(c));
  }
  for (std::size_t t = 0; t < kNumEntityTypes; ++t) {
    if (weights[t] <= 0.0) continue;
    const auto type = static_cast<EntityType>(t);
    const bool single = std::any_of(clauses.begin(), clauses.end(), [&](const ParsedClause& c) {
      return c.slots.size() == 1 && c.slots[0] == type;
    });
    if (!single) {
      throw std::invalid_argument("no single-slot clause realizes '" +
                                  std::string(entity_name(type)) + "'");
    }
  }

  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(language)));

  // Entity budget, allocated exactly in proportion to the profile.
  const auto budget = std::max<std::size_t>(
      sentence_count,
      static_cast<std::size_t>(std::llround(side.mean_entities * static_cast<double>(sentence_count))));
  const auto counts = allocate_counts(weights, budget);
  std::vector<EntityType> pool;
  for (std::size_t t = 0; t < kNumEntityTypes; ++t) {
    pool.insert(pool.end(), counts[t], static_cast<EntityType>(t));
  }
  rng.shuffle(pool);

  // Every sentence holds at least one entity; extras land at random, capped.
  const auto cap = static_cast<std::size_t>(std::ceil(1.5 * side.mean_entities));
  std::vector<std::size_t> sizes(sentence_count, 1);
  for (std::size_t extra = pool.size() - sentence_count; extra > 0; --extra) {
    std::size_t s = rng.index(sentence_count);
    while (sizes[s] >= cap) s = (s + 1) % sentence_count;
    ++sizes[s];
  }

  Dataset out;
  out.language = language;
  out.split = Split::kTrain;
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < sentence_count; ++s) {
    std::vector<EntityType> bag(pool.begin() + static_cast<std::ptrdiff_t>(cursor),
                                pool.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[s]));
    cursor += sizes[s];
    std::stable_sort(bag.begin(), bag.end(), [](EntityType a, EntityType b) {
      return kLayoutRank[static_cast<std::size_t>(a)] < kLayoutRank[static_cast<std::size_t>(b)];
    });

    TaggedSentence sentence;
    sentence.language = language;
    auto append_plain = [&](const std::string& text) {
      for (auto& w : split_words(text)) {
        sentence.words.push_back(std::move(w));
        sentence.tags.push_back(Tag::outside());
      }
    };
    if (!side.openers.empty()) append_plain(side.openers[rng.index(side.openers.size())]);

    while (!bag.empty()) {
      const EntityType lead = bag.front();
      std::vector<std::size_t> candidates;
      std::vector<double> cand_weights;
      for (std::size_t c = 0; c < clauses.size(); ++c) {
        const auto& slots = clauses[c].slots;
        if (std::find(slots.begin(), slots.end(), lead) == slots.end()) continue;
        std::vector<EntityType> remaining = bag;
        bool fits = true;
        for (EntityType t : slots) {
          auto it = std::find(remaining.begin(), remaining.end(), t);
          if (it == remaining.end()) {
            fits = false;
            break;
          }
          remaining.erase(it);
        }
        if (!fits) continue;
        candidates.push_back(c);
        cand_weights.push_back(static_cast<double>(slots.size() * slots.size()));
      }
      const ParsedClause& clause = clauses[candidates[rng.weighted(cand_weights)]];
      for (const auto& word : clause.words) {
        auto type = slot_type(word);
        if (!type) {
          sentence.words.push_back(word);
          sentence.tags.push_back(Tag::outside());
          continue;
        }
        bag.erase(std::find(bag.begin(), bag.end(), *type));
        const auto& fillers = side.fillers.at(*type);
        const std::string value = expand_filler(fillers[rng.index(fillers.size())], rng);
        bool first = true;
        for (auto& piece : split_words(value)) {
          sentence.words.push_back(std::move(piece));
          sentence.tags.push_back(first ? Tag::begin(*type) : Tag::inside(*type));
          first = false;
        }
      }
    }
    if (!side.closers.empty() && rng.bernoulli(0.5)) {
      append_plain(side.closers[rng.index(side.closers.size())]);
    }
    out.sentences.push_back(mask_sensitive(sentence));
  }
  return out;
}

TaggedSentence mask_sensitive(const TaggedSentence& sentence) {
  TaggedSentence out = sentence;
  std::size_t i = 0;
  while (i < out.tags.size()) {
    const Tag& tag = out.tags[i];
    if (tag.is_outside() || tag.type != EntityType::kCardNumber) {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < out.tags.size() && out.tags[end].kind == Tag::Kind::kInside &&
           out.tags[end].type == EntityType::kCardNumber) {
      ++end;
    }
    std::size_t digits = 0;
    for (std::size_t w = i; w < end; ++w) {
      digits += static_cast<std::size_t>(
          std::count_if(out.words[w].begin(), out.words[w].end(),
                        [](char c) { return c >= '0' && c <= '9'; }));
    }
    std::size_t to_hide = digits > 4 ? digits - 4 : 0;
    for (std::size_t w = i; w < end && to_hide > 0; ++w) {
      for (char& c : out.words[w]) {
        if (to_hide == 0) break;
        if (c >= '0' && c <= '9') {
          c = 'X';
          --to_hide;
        }
      }
    }
    i = end;
  }
  return out;
}

EntityCounts corpus_stats(const Dataset& dataset) {
  EntityCounts counts{};
  for (const auto& sentence : dataset.sentences) {
    for (std::size_t i = 0; i < sentence.tags.size(); ++i) {
      const Tag& tag = sentence.tags[i];
      if (tag.is_outside()) continue;
      const bool opens = tag.kind == Tag::Kind::kBegin || i == 0 ||
                         sentence.tags[i - 1].is_outside() || sentence.tags[i - 1].type != tag.type;
      if (opens) ++counts[static_cast<std::size_t>(tag.type)];
    }
  }
  return counts;
}

DatasetSplits split_dataset(const Dataset& dataset, std::uint64_t seed) {
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x5911));
  rng.shuffle(order);
  const std::size_t n = order.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  DatasetSplits out;
  for (Dataset* d : {&out.train, &out.val, &out.test}) d->language = dataset.language;
  out.train.split = Split::kTrain;
  out.val.split = Split::kVal;
  out.test.split = Split::kTest;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = dataset.sentences[order[i]];
    if (i < n_train) out.train.sentences.push_back(s);
    else if (i < n_train + n_val) out.val.sentences.push_back(s);
    else out.test.sentences.push_back(s);
  }
  return out;
}

}  // namespace xld
