#include "xld/tokenize.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "xld/utf8.hpp"

namespace xld {
namespace {

constexpr std::array<std::string_view, kNumReserved> kReserved = {"[PAD]", "[UNK]", "[BOS]"};

std::vector<std::string> ranked(const std::map<std::string, std::size_t>& counts,
                                std::size_t min_freq) {
  std::vector<std::pair<std::string, std::size_t>> items;
  for (const auto& [token, count] : counts) {
    if (count >= min_freq) items.emplace_back(token, count);
  }
  // std::map iteration is already lexicographic; stable sort keeps it for ties.
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& item : items) out.push_back(std::move(item.first));
  return out;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (auto token : kReserved) add(std::string(token));
}

void Vocabulary::add(const std::string& token) {
  if (token_to_id_.contains(token)) return;
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const Dataset> datasets, std::size_t min_freq,
                             std::size_t max_size) {
  std::map<std::string, std::size_t> words;
  std::map<std::string, std::size_t> pieces;
  std::size_t total_words = 0;
  for (const auto& dataset : datasets) {
    for (const auto& sentence : dataset.sentences) {
      for (const auto& word : sentence.words) {
        ++words[word];
        ++total_words;
        const auto chars = utf8::split_chars(word);
        for (std::size_t i = 0; i < chars.size(); ++i) {
          ++pieces[i == 0 ? chars[i] : std::string(kContinuationPrefix) + chars[i]];
        }
      }
    }
  }
  if (total_words == 0) throw std::invalid_argument("cannot build a vocabulary from no text");

  const auto kept_words = ranked(words, min_freq);
  if (kept_words.empty()) {
    throw std::invalid_argument("every token falls below min_freq " + std::to_string(min_freq));
  }
  const auto kept_pieces = ranked(pieces, min_freq);

  Vocabulary vocab;
  // The fallback alphabet is always kept; words fill the remaining room.
  const std::size_t room =
      max_size > kNumReserved + kept_pieces.size() ? max_size - kNumReserved - kept_pieces.size() : 0;
  for (std::size_t i = 0; i < kept_words.size() && i < room; ++i) vocab.add(kept_words[i]);
  for (const auto& piece : kept_pieces) vocab.add(piece);
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.contains(std::string(token));
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode_word(std::string_view word) const {
  if (auto it = token_to_id_.find(std::string(word)); it != token_to_id_.end()) {
    if (it->second >= kNumReserved) return {it->second};
  }
  const auto chars = utf8::split_chars(word);
  std::vector<int> ids;
  ids.reserve(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i) {
    ids.push_back(id(i == 0 ? chars[i] : std::string(kContinuationPrefix) + chars[i]));
  }
  if (ids.empty()) ids.push_back(kUnkId);
  return ids;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json reserved = nlohmann::json::object();
  for (int i = 0; i < kNumReserved; ++i) reserved[id_to_token_[static_cast<std::size_t>(i)]] = i;
  nlohmann::json tokens = nlohmann::json::object();
  for (std::size_t i = kNumReserved; i < id_to_token_.size(); ++i) {
    tokens[id_to_token_[i]] = i;
  }
  return {{"reserved", reserved}, {"tokens", tokens}, {"size", id_to_token_.size()}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  const auto& tokens = doc.at("tokens");
  const std::size_t size = doc.value("size", tokens.size() + kNumReserved);
  std::vector<std::string> by_id(size);
  for (const auto& [token, id] : doc.at("reserved").items()) {
    const auto i = id.get<std::size_t>();
    if (i >= kNumReserved || token != kReserved[i]) {
      throw std::invalid_argument("unexpected reserved entry '" + token + "'");
    }
    by_id[i] = token;
  }
  for (const auto& [token, id] : tokens.items()) {
    const auto i = id.get<std::size_t>();
    if (i < kNumReserved || i >= size || !by_id[i].empty()) {
      throw std::invalid_argument("bad vocabulary id for '" + token + "'");
    }
    by_id[i] = token;
  }
  Vocabulary vocab;
  vocab.id_to_token_.clear();
  vocab.token_to_id_.clear();
  for (std::size_t i = 0; i < size; ++i) {
    if (by_id[i].empty()) throw std::invalid_argument("vocabulary id gap at " + std::to_string(i));
    vocab.add(by_id[i]);
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(1) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return from_json(nlohmann::json::parse(in));
}

std::vector<std::size_t> TokenizedExample::word_start_positions() const {
  std::vector<std::size_t> out;
  out.reserve(word_count);
  for (std::size_t i = 0; i < word_starts.size(); ++i) {
    if (word_starts[i]) out.push_back(i);
  }
  return out;
}

namespace {

TokenizedExample encode_impl(std::span<const std::string> words, const std::vector<Tag>* tags,
                             const Vocabulary& vocab, std::size_t max_len) {
  if (words.empty()) throw std::invalid_argument("cannot encode an empty sentence");
  TokenizedExample ex;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto pieces = vocab.encode_word(words[w]);
    if (ex.size() + pieces.size() > max_len) {
      if (w == 0) {
        throw std::invalid_argument("max_len " + std::to_string(max_len) +
                                    " cannot hold the first word (" +
                                    std::to_string(pieces.size()) + " pieces)");
      }
      break;
    }
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      ex.input_ids.push_back(pieces[p]);
      ex.attention_mask.push_back(1);
      ex.word_starts.push_back(p == 0 ? 1 : 0);
      ex.label_ids.push_back(p == 0 && tags ? (*tags)[w].id() : kIgnoreLabel);
    }
    ++ex.word_count;
  }
  return ex;
}

}  // namespace

TokenizedExample encode_and_align(const TaggedSentence& sentence, const Vocabulary& vocab,
                                  std::size_t max_len) {
  if (sentence.words.size() != sentence.tags.size()) {
    throw std::invalid_argument("sentence words/tags length mismatch");
  }
  return encode_impl(sentence.words, &sentence.tags, vocab, max_len);
}

TokenizedExample encode_words(std::span<const std::string> words, const Vocabulary& vocab,
                              std::size_t max_len) {
  return encode_impl(words, nullptr, vocab, max_len);
}

std::vector<Tag> decode_tags(const TokenizedExample& example, std::span<const int> predicted) {
  if (predicted.size() != example.size()) {
    throw std::invalid_argument("prediction length " + std::to_string(predicted.size()) +
                                " != example length " + std::to_string(example.size()));
  }
  std::vector<Tag> tags;
  tags.reserve(example.word_count);
  for (std::size_t i = 0; i < example.size(); ++i) {
    if (example.word_starts[i]) tags.push_back(Tag::from_id(predicted[i]));
  }
  return repair_iob(std::move(tags));
}

}  // namespace xld
