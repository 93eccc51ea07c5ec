#include <filesystem>
#include <set>

#include "doctest.h"
#include "xld/corpus.hpp"
#include "xld/tokenize.hpp"
#include "xld/utf8.hpp"

using namespace xld;

namespace {

TaggedSentence words_only(const std::string& text, Language lang = Language::kSource) {
  TaggedSentence s;
  s.language = lang;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto j = text.find(' ', i);
    s.words.push_back(text.substr(i, j - i));
    s.tags.push_back(Tag::outside());
    if (j == std::string::npos) break;
    i = j + 1;
  }
  return s;
}

Dataset dataset(std::vector<std::string> lines, Language lang = Language::kSource) {
  Dataset d;
  d.language = lang;
  for (const auto& l : lines) d.sentences.push_back(words_only(l, lang));
  return d;
}

}  // namespace

TEST_CASE("build_vocab thresholds") {
  const std::vector<Dataset> ds{dataset({"a b", "a c"})};
  const auto v1 = Vocabulary::build(ds, 1);
  for (const char* w : {"a", "b", "c"}) CHECK(v1.contains(w));
  CHECK(v1.id("[PAD]") == kPadId);
  CHECK(v1.id("[UNK]") == kUnkId);

  const auto v2 = Vocabulary::build(ds, 2);
  CHECK(v2.contains("a"));
  CHECK(!v2.contains("b"));
  CHECK(v2.encode_word("b") == std::vector<int>{kUnkId});
  CHECK(v2.encode_word("c") == std::vector<int>{kUnkId});

  CHECK_THROWS_AS(Vocabulary::build(ds, 5), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary::build(std::vector<Dataset>{}, 1), std::invalid_argument);
}

TEST_CASE("ordering is frequency then lexicographic") {
  const std::vector<Dataset> ds{dataset({"z y", "z x", "y"})};
  const auto v = Vocabulary::build(ds, 1);
  CHECK(v.id("y") == kNumReserved);      // 2 occurrences, y < z
  CHECK(v.id("z") == kNumReserved + 1);
  CHECK(v.id("x") == kNumReserved + 2);
}

TEST_CASE("bilingual vocabulary covers both scripts") {
  const auto en = dataset({"Paid 5.00 EGP", "card used at Zara", "balance is 10", "on 01/02/2024", "thanks"});
  const auto ar = dataset({"تم دفع 5.00 جنيه", "بطاقة في Zara", "الرصيد 10", "يوم 01/02/2024", "شكرا"},
                          Language::kTarget);
  const auto v = Vocabulary::build(std::vector<Dataset>{en, ar}, 1);
  std::set<std::string> words, covered;
  for (const auto* d : {&en, &ar})
    for (const auto& s : d->sentences)
      for (const auto& w : s.words) words.insert(w);
  for (const auto& w : words)
    if (v.contains(w)) covered.insert(w);
  CHECK(covered == words);
  for (const auto& s : ar.sentences) {
    const auto ex = encode_and_align(s, v);
    for (int id : ex.input_ids) CHECK(id != kUnkId);
  }
}

TEST_CASE("encode_and_align fixtures") {
  TaggedSentence s;
  s.words = {"5.00", "EGP"};
  s.tags = {Tag::begin(EntityType::kAmount), Tag::begin(EntityType::kCurrency)};
  const auto v = Vocabulary::build(std::vector<Dataset>{Dataset{{s}}}, 1);
  const auto ex = encode_and_align(s, v);
  CHECK(ex.size() == 2);
  CHECK(ex.label_ids == std::vector<int>{Tag::begin(EntityType::kAmount).id(),
                                         Tag::begin(EntityType::kCurrency).id()});

  // Unknown word falls back to characters known from another word.
  TaggedSentence oov;
  oov.words = {"XYZ123"};
  oov.tags = {Tag::begin(EntityType::kNumber)};
  const auto cv = Vocabulary::build(std::vector<Dataset>{dataset({"X Y Z 1 2 3 XX YY ZZ 11 22 33"})}, 1);
  const auto oe = encode_and_align(oov, cv);
  CHECK(oe.size() == 6);
  std::size_t labelled = 0;
  for (int l : oe.label_ids) labelled += l != kIgnoreLabel;
  CHECK(labelled == 1);
  CHECK(oe.label_ids[0] == Tag::begin(EntityType::kNumber).id());
  CHECK(cv.token(oe.input_ids[1]) == "##Y");

  CHECK_THROWS_AS(encode_and_align(oov, cv, 1), std::invalid_argument);
}

TEST_CASE("truncation keeps whole words") {
  const auto v = Vocabulary::build(std::vector<Dataset>{dataset({"a b c d e"})}, 1);
  const auto s = words_only("a b c d e");
  const auto ex = encode_and_align(s, v, 3);
  CHECK(ex.size() == 3);
  CHECK(ex.word_count == 3);
  TaggedSentence mixed = words_only("a bcd e");
  const auto me = encode_and_align(mixed, v, 3);
  // "bcd" needs 3 pieces and would not fit after "a".
  CHECK(me.word_count == 1);
  CHECK(me.size() == 1);
}

TEST_CASE("decode_tags") {
  auto corpus = generate_corpus(default_template_pack(), Language::kSource, 200,
                                default_profile(Language::kSource), 2);
  const auto v = Vocabulary::build(std::vector<Dataset>{corpus}, 2);
  for (const auto& s : corpus.sentences) {
    const auto capped = encode_and_align(s, v);
    std::size_t labelled = 0;
    for (int l : capped.label_ids) labelled += l != kIgnoreLabel;
    REQUIRE(labelled == capped.word_count);
    REQUIRE(capped.size() <= kDefaultMaxLen);
    if (capped.word_count < s.words.size()) {
      // The next word would not have fit.
      REQUIRE(capped.size() + v.encode_word(s.words[capped.word_count]).size() > kDefaultMaxLen);
    }
    const auto ex = encode_and_align(s, v, 1000);
    REQUIRE(ex.word_count == s.words.size());
    std::vector<int> pred(ex.label_ids);
    for (auto& p : pred) p = p == kIgnoreLabel ? 0 : p;
    REQUIRE(decode_tags(ex, pred) == s.tags);
    const std::vector<int> zeros(ex.size(), 0);
    for (const auto& t : decode_tags(ex, zeros)) CHECK(t.is_outside());
  }
  TaggedSentence s = words_only("paid 5.00");
  const auto ex = encode_and_align(s, Vocabulary::build(std::vector<Dataset>{Dataset{{s}}}, 1));
  const std::vector<int> pred{0, Tag::inside(EntityType::kAmount).id()};
  CHECK(decode_tags(ex, pred)[1] == Tag::begin(EntityType::kAmount));
  CHECK_THROWS_AS(decode_tags(ex, std::vector<int>{0}), std::invalid_argument);
}

TEST_CASE("vocabulary save/load is exact and encoding stable") {
  const auto ar = generate_corpus(default_template_pack(), Language::kTarget, 30,
                                  default_profile(Language::kTarget), 7);
  const auto v = Vocabulary::build(std::vector<Dataset>{ar}, 1);
  const auto path = std::filesystem::temp_directory_path() / "xld_vocab.json";
  v.save(path);
  const auto back = Vocabulary::load(path);
  CHECK(back == v);
  for (const auto& s : ar.sentences) CHECK(encode_and_align(s, v).input_ids == encode_and_align(s, back).input_ids);
  std::filesystem::remove(path);
}
