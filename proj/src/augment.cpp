#include "xld/augment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "xld/rng.hpp"
#include "xld/utf8.hpp"

namespace xld {

double TfIdfModel::idf_of(const std::string& word) const {
  auto it = idf.find(word);
  if (it != idf.end()) return it->second;
  return std::log((1.0 + static_cast<double>(documents)) / 1.0) + 1.0;
}

double TfIdfModel::frequency(const std::string& word) const {
  auto it = std::lower_bound(unigram_words.begin(), unigram_words.end(), word);
  if (it == unigram_words.end() || *it != word) return 0.0;
  return unigram_freqs[static_cast<std::size_t>(it - unigram_words.begin())];
}

TfIdfModel fit_tfidf(std::span<const Words> corpus) {
  if (corpus.empty()) throw std::invalid_argument("fit_tfidf: empty corpus");
  TfIdfModel model;
  model.documents = corpus.size();
  std::map<std::string, std::size_t> df, counts;
  std::size_t tokens = 0;
  for (const auto& doc : corpus) {
    std::vector<std::string> unique(doc.begin(), doc.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (const auto& w : unique) ++df[w];
    for (const auto& w : doc) ++counts[w];
    tokens += doc.size();
  }
  if (tokens == 0) throw std::invalid_argument("fit_tfidf: corpus has no tokens");
  const double n = static_cast<double>(model.documents);
  for (const auto& [w, d] : df) model.idf[w] = std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0;
  for (const auto& [w, c] : counts) {
    model.unigram_words.push_back(w);
    model.unigram_freqs.push_back(static_cast<double>(c) / static_cast<double>(tokens));
  }
  return model;
}

namespace {

void check_magnitude(double magnitude) {
  if (!(magnitude >= 0.0 && magnitude <= 1.0)) {
    throw std::invalid_argument("magnitude must lie in [0, 1], got " + std::to_string(magnitude));
  }
}

}  // namespace

Words tfidf_replace(const Words& words, const TfIdfModel& model, double magnitude,
                    std::uint64_t seed) {
  check_magnitude(magnitude);
  if (magnitude == 0.0 || words.empty() || model.unigram_words.empty()) return words;
  std::unordered_map<std::string, std::size_t> tf;
  for (const auto& w : words) ++tf[w];
  std::vector<double> score(words.size());
  double max_score = 0.0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    score[i] = static_cast<double>(tf[words[i]]) * model.idf_of(words[i]);
    max_score = std::max(max_score, score[i]);
  }
  Rng rng(mix_seed(seed, 0x7f1d));
  Words out = words;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const double p = magnitude * (1.0 - score[i] / max_score);
    if (rng.uniform() < p) out[i] = model.unigram_words[rng.weighted(model.unigram_freqs)];
  }
  return out;
}

Words back_translate(const Words& words, const Lexicon& lexicon, std::uint64_t seed,
                     double probability) {
  check_magnitude(probability);
  Rng rng(mix_seed(seed, 0xb7));
  Words out = words;
  for (auto& w : out) {
    if (probability < 1.0 && !rng.bernoulli(probability)) continue;
    auto to_source = lexicon.target_to_source.find(w);
    if (to_source == lexicon.target_to_source.end()) continue;
    auto back = lexicon.source_to_target.find(to_source->second);
    if (back == lexicon.source_to_target.end() || back->second.empty()) continue;
    w = back->second[rng.index(back->second.size())];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random perturbation

namespace {

const std::vector<std::u32string>& keyboard_rows() {
  static const std::vector<std::u32string> rows = {
      U"1234567890", U"qwertyuiop", U"asdfghjkl", U"zxcvbnm",
      // Arabic PC layout, letter rows.
      U"ضصثقفغعهخحجد", U"شسيبلاتنمكط", U"ئءؤرىةوزظ"};
  return rows;
}

char32_t lower_ascii(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }
bool is_upper_ascii(char32_t c) { return c >= U'A' && c <= U'Z'; }
bool is_lower_ascii(char32_t c) { return c >= U'a' && c <= U'z'; }

std::vector<char32_t> neighbours(char32_t c) {
  const char32_t base = lower_ascii(c);
  std::vector<char32_t> out;
  const auto& rows = keyboard_rows();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto pos = rows[r].find(base);
    if (pos == std::u32string::npos) continue;
    if (pos > 0) out.push_back(rows[r][pos - 1]);
    if (pos + 1 < rows[r].size()) out.push_back(rows[r][pos + 1]);
    // Same column in the Latin rows directly above and below.
    if (r >= 1 && r <= 3) {
      for (std::size_t other : {r - 1, r + 1}) {
        if (other < 1 || other > 3) continue;
        if (pos < rows[other].size()) out.push_back(rows[other][pos]);
      }
    }
    break;
  }
  if (is_upper_ascii(c)) {
    for (auto& n : out) n = is_lower_ascii(n) ? n - 32 : n;
  }
  return out;
}

enum class PerturbKind { kSwap, kTypo, kCase };

std::vector<std::size_t> typo_positions(const std::u32string& w) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!neighbours(w[i]).empty()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> case_positions(const std::u32string& w) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (is_upper_ascii(w[i]) || is_lower_ascii(w[i])) out.push_back(i);
  }
  return out;
}

}  // namespace

PerturbResult rand_perturb_logged(const Words& words, double magnitude, std::uint64_t seed) {
  check_magnitude(magnitude);
  PerturbResult result{words, {}};
  const auto ops = static_cast<std::size_t>(std::ceil(magnitude * 3.0 - 1e-12));
  if (ops == 0 || words.empty()) return result;
  Rng rng(mix_seed(seed, 0x5ca1));
  std::vector<std::u32string> text;
  for (const auto& w : words) text.push_back(utf8::decode(w));

  for (std::size_t op = 0; op < ops; ++op) {
    // Gather the (word, char) targets for each kind, then pick a kind among
    // those with at least one target.
    std::vector<std::pair<std::size_t, std::size_t>> typo, flip;
    for (std::size_t i = 0; i < text.size(); ++i) {
      for (auto c : typo_positions(text[i])) typo.emplace_back(i, c);
      for (auto c : case_positions(text[i])) flip.emplace_back(i, c);
    }
    std::vector<PerturbKind> kinds;
    if (text.size() >= 2) kinds.push_back(PerturbKind::kSwap);
    if (!typo.empty()) kinds.push_back(PerturbKind::kTypo);
    if (!flip.empty()) kinds.push_back(PerturbKind::kCase);
    if (kinds.empty()) break;

    std::ostringstream line;
    switch (kinds[rng.index(kinds.size())]) {
      case PerturbKind::kSwap: {
        const std::size_t i = rng.index(text.size() - 1);
        std::swap(text[i], text[i + 1]);
        line << "swap " << i << " " << i + 1;
        break;
      }
      case PerturbKind::kTypo: {
        const auto [i, c] = typo[rng.index(typo.size())];
        const auto options = neighbours(text[i][c]);
        const char32_t old = text[i][c];
        text[i][c] = options[rng.index(options.size())];
        line << "typo " << i << " " << c << " " << utf8::encode(old) << " "
             << utf8::encode(text[i][c]);
        break;
      }
      case PerturbKind::kCase: {
        const auto [i, c] = flip[rng.index(flip.size())];
        text[i][c] = is_upper_ascii(text[i][c]) ? text[i][c] + 32 : text[i][c] - 32;
        line << "case " << i << " " << c;
        break;
      }
    }
    result.log.push_back(line.str());
  }
  for (std::size_t i = 0; i < text.size(); ++i) result.words[i] = utf8::encode(text[i]);
  return result;
}

Words rand_perturb(const Words& words, double magnitude, std::uint64_t seed) {
  return rand_perturb_logged(words, magnitude, seed).words;
}

Words apply_perturb_log(const Words& words, std::span<const std::string> log) {
  std::vector<std::u32string> text;
  for (const auto& w : words) text.push_back(utf8::decode(w));
  for (const auto& entry : log) {
    std::istringstream in(entry);
    std::string kind;
    std::size_t i = 0, j = 0;
    in >> kind >> i >> j;
    if (!in || i >= text.size()) throw std::invalid_argument("bad perturb log entry: " + entry);
    if (kind == "swap") {
      if (j >= text.size()) throw std::invalid_argument("bad perturb log entry: " + entry);
      std::swap(text[i], text[j]);
    } else if (kind == "typo") {
      std::string from, to;
      in >> from >> to;
      const auto replacement = utf8::decode(to);
      if (j >= text[i].size() || replacement.size() != 1 || utf8::encode(text[i][j]) != from) {
        throw std::invalid_argument("perturb log does not match input: " + entry);
      }
      text[i][j] = replacement[0];
    } else if (kind == "case") {
      if (j >= text[i].size()) throw std::invalid_argument("bad perturb log entry: " + entry);
      char32_t& c = text[i][j];
      c = is_upper_ascii(c) ? c + 32 : is_lower_ascii(c) ? c - 32 : c;
    } else {
      throw std::invalid_argument("unknown perturb operation: " + entry);
    }
  }
  Words out(words.size());
  for (std::size_t k = 0; k < text.size(); ++k) out[k] = utf8::encode(text[k]);
  return out;
}

// ---------------------------------------------------------------------------

std::string_view augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::kBackTranslate: return "back_translate";
    case AugmentOp::kRandPerturb: return "rand_perturb";
    case AugmentOp::kTfIdfReplace: return "tfidf_replace";
  }
  return "?";
}

AugmentOp parse_augment_op(std::string_view name) {
  for (auto op : {AugmentOp::kBackTranslate, AugmentOp::kRandPerturb, AugmentOp::kTfIdfReplace}) {
    if (augment_op_name(op) == name) return op;
  }
  throw std::invalid_argument("unknown augmentation operator '" + std::string(name) + "'");
}

bool AugmentConfig::uses(AugmentOp op) const {
  return std::find(operators.begin(), operators.end(), op) != operators.end();
}

void AugmentConfig::validate() const {
  if (operators.empty()) throw std::invalid_argument("augmentation needs at least one operator");
  for (double m : magnitude) check_magnitude(m);
}

std::vector<AugmentedPair> augment_batch(std::span<const TaggedSentence> sentences,
                                         const AugmentConfig& config, const TfIdfModel& tfidf,
                                         const Lexicon& lexicon) {
  config.validate();
  std::vector<AugmentedPair> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const std::uint64_t seed = config.seed + i;
    Words words = sentences[i].words;
    if (config.uses(AugmentOp::kBackTranslate)) {
      words = back_translate(words, lexicon, seed, config.strength(AugmentOp::kBackTranslate));
    }
    if (config.uses(AugmentOp::kRandPerturb)) {
      words = rand_perturb(words, config.strength(AugmentOp::kRandPerturb), seed);
    }
    if (config.uses(AugmentOp::kTfIdfReplace)) {
      words = tfidf_replace(words, tfidf, config.strength(AugmentOp::kTfIdfReplace), seed);
    }
    out.push_back({sentences[i].words, std::move(words)});
  }
  return out;
}

}  // namespace xld
