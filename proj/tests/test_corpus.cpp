#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "xld/corpus.hpp"
#include "xld/utf8.hpp"

using namespace xld;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("xld_corpus_" + name);
}

// Independent reader: split on '\n', then on the single tab.
std::vector<std::vector<std::pair<std::string, std::string>>> naive_lines(const std::string& text) {
  std::vector<std::vector<std::pair<std::string, std::string>>> out(1);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!out.back().empty()) out.emplace_back();
      continue;
    }
    const auto tab = line.find('\t');
    out.back().emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

TaggedSentence sentence(std::vector<std::string> words, std::vector<std::string> tags,
                        Language lang = Language::kSource) {
  TaggedSentence s;
  s.words = std::move(words);
  for (const auto& t : tags) s.tags.push_back(parse_tag(t));
  s.language = lang;
  return s;
}

std::size_t profile_count(const EntityProfile& p, EntityType t) {
  return static_cast<std::size_t>(p.at(std::string(entity_name(t))));
}

}  // namespace

TEST_CASE("entity inventory and tag ids") {
  CHECK(kNumEntityTypes == 12);
  std::set<std::string> names;
  for (auto t : all_entity_types()) names.insert(std::string(entity_name(t)));
  CHECK(names == std::set<std::string>{"amount", "supplier", "currency", "number", "full-date",
                                       "card-number", "full-time", "merchant", "balance", "time",
                                       "month", "date"});
  std::set<int> ids;
  ids.insert(Tag::outside().id());
  for (auto t : all_entity_types()) {
    ids.insert(Tag::begin(t).id());
    ids.insert(Tag::inside(t).id());
    CHECK(parse_tag(Tag::inside(t).str()) == Tag::inside(t));
  }
  CHECK(ids.size() == 25);
  CHECK(*ids.rbegin() == 24);
  CHECK(parse_tag("B-card-number") == Tag::begin(EntityType::kCardNumber));
  CHECK_THROWS_AS(parse_tag("B-cardnumber"), std::invalid_argument);
  CHECK_THROWS_AS(parse_tag("X-amount"), std::invalid_argument);
}

TEST_CASE("IOB fixture parses against an independent line reader") {
  const std::string text = "5.00\tB-amount\nEGP\tB-currency\n\n";
  const auto ds = parse_iob(text, Language::kSource);
  const auto lines = naive_lines(text);
  REQUIRE(ds.size() == 1);
  REQUIRE(lines.size() == 1);
  CHECK(ds.sentences[0].words.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(ds.sentences[0].words[i] == lines[0][i].first);
    CHECK(ds.sentences[0].tags[i].str() == lines[0][i].second);
  }
}

TEST_CASE("IOB errors carry line numbers; repair mode fixes orphans") {
  const std::string orphan = "paid\tO\n\n5.00\tI-amount\nEGP\tB-currency\n";
  try {
    (void)parse_iob(orphan, Language::kSource);
    FAIL("accepted orphan I-");
  } catch (const IobFormatError& e) {
    CHECK(e.line() == 3);
  }
  const auto repaired = parse_iob(orphan, Language::kSource, IobMode::kRepair);
  CHECK(repaired.sentences[1].tags[0] == Tag::begin(EntityType::kAmount));

  CHECK_THROWS_AS(parse_iob("a\tO\textra\n", Language::kSource), IobFormatError);
  CHECK_THROWS_AS(parse_iob("a\n", Language::kSource), IobFormatError);
  CHECK_THROWS_AS(parse_iob("a\tB-nothing\n", Language::kSource), IobFormatError);
}

TEST_CASE("IOB write/read round trip") {
  Dataset ds;
  ds.sentences = {sentence({"Paid", "5.00", "EGP"}, {"O", "B-amount", "B-currency"}),
                  sentence({"at", "Carrefour", "City", "Stars"}, {"O", "B-merchant", "I-merchant", "I-merchant"}),
                  sentence({"card", "XXXX1234"}, {"O", "B-card-number"})};
  const auto path = temp_file("rt.iob");
  write_iob(ds, path);
  const auto back = read_iob(path, Language::kSource);
  CHECK(back.sentences == ds.sentences);
  CHECK(format_iob(back) == format_iob(ds));
  CHECK_THROWS(write_iob(Dataset{}, path));
  std::filesystem::remove(path);
}

TEST_CASE("default corpora have the reference sizes and valid tags") {
  const auto pack = default_template_pack();
  CHECK_NOTHROW(validate_pack(pack));
  const auto src = generate_corpus(pack, Language::kSource, 1730, default_profile(Language::kSource), 7);
  const auto tgt = generate_corpus(pack, Language::kTarget, 30, default_profile(Language::kTarget), 7);
  CHECK(src.size() == 1730);
  CHECK(tgt.size() == 30);
  for (const auto* ds : {&src, &tgt}) {
    for (const auto& s : ds->sentences) {
      REQUIRE(!s.words.empty());
      REQUIRE(s.words.size() == s.tags.size());
      REQUIRE(is_iob_valid(s.tags));
      REQUIRE(s.language == ds->language);
    }
  }
  const auto stats = corpus_stats(src);
  CHECK(std::max_element(stats.begin(), stats.end()) - stats.begin() ==
        static_cast<std::ptrdiff_t>(EntityType::kAmount));

  // Ranking follows the profile wherever the expected count is at least 20.
  const auto profile = default_profile(Language::kSource);
  double weight = 0, total = 0;
  for (auto t : all_entity_types()) weight += profile_count(profile, t);
  for (auto c : stats) total += static_cast<double>(c);
  for (auto a : all_entity_types()) {
    for (auto b : all_entity_types()) {
      const double ea = total * profile_count(profile, a) / weight;
      const double eb = total * profile_count(profile, b) / weight;
      if (ea < 20 || eb < 20) continue;
      if (profile_count(profile, a) > profile_count(profile, b)) {
        INFO(entity_name(a) << " vs " << entity_name(b));
        CHECK(stats[static_cast<std::size_t>(a)] >= stats[static_cast<std::size_t>(b)]);
      }
    }
  }
}

TEST_CASE("generation is deterministic and seed dependent") {
  const auto pack = default_template_pack();
  const auto profile = default_profile(Language::kTarget);
  const auto a = generate_corpus(pack, Language::kTarget, 50, profile, 3);
  const auto b = generate_corpus(pack, Language::kTarget, 50, profile, 3);
  const auto c = generate_corpus(pack, Language::kTarget, 50, profile, 4);
  CHECK(format_iob(a) == format_iob(b));
  CHECK(format_iob(a) != format_iob(c));
}

TEST_CASE("degenerate profiles") {
  const auto pack = default_template_pack();
  const auto one = generate_corpus(pack, Language::kSource, 1, {{"amount", 1.0}}, 0);
  REQUIRE(one.size() == 1);
  CHECK(corpus_stats(one)[static_cast<std::size_t>(EntityType::kAmount)] >= 1);
  CHECK(is_iob_valid(one.sentences[0].tags));
  CHECK_THROWS_AS(generate_corpus(pack, Language::kSource, 1, {{"iban", 1.0}}, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_corpus(pack, Language::kSource, 1, {{"amount", 0.0}}, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_corpus(pack, Language::kSource, 1, {{"amount", -1.0}}, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_corpus(pack, Language::kSource, 0, default_profile(Language::kSource), 0),
                  std::invalid_argument);
  TemplatePack empty;
  CHECK_THROWS(generate_corpus(empty, Language::kSource, 1, {{"amount", 1.0}}, 0));
}

TEST_CASE("target corpus mixes Latin brand names into Arabic text") {
  const auto tgt = generate_corpus(default_template_pack(), Language::kTarget, 200,
                                   default_profile(Language::kTarget), 1);
  bool arabic = false, latin_entity = false;
  for (const auto& s : tgt.sentences) {
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      for (char32_t c : utf8::decode(s.words[i])) {
        if (c >= 0x0600 && c <= 0x06FF) arabic = true;
        if (((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) && !s.tags[i].is_outside()) latin_entity = true;
      }
    }
  }
  CHECK(arabic);
  CHECK(latin_entity);
}

TEST_CASE("mask_sensitive") {
  const auto card = sentence({"card", "4532111122223333", "used"}, {"O", "B-card-number", "O"});
  const auto masked = mask_sensitive(card);
  CHECK(masked.words[1] == "XXXXXXXXXXXX3333");
  CHECK(masked.words[0] == "card");
  CHECK(masked.tags == card.tags);
  CHECK(mask_sensitive(masked) == masked);

  const auto short_card = sentence({"1234"}, {"B-card-number"});
  CHECK(mask_sensitive(short_card) == short_card);
  const auto plain = sentence({"5.00", "EGP"}, {"B-amount", "B-currency"});
  CHECK(mask_sensitive(plain) == plain);
  // Multi-word span: the last four digits of the whole span survive.
  const auto split = sentence({"4532", "1111", "2222", "3333"},
                              {"B-card-number", "I-card-number", "I-card-number", "I-card-number"});
  const auto sm = mask_sensitive(split);
  CHECK(sm.words == std::vector<std::string>{"XXXX", "XXXX", "XXXX", "3333"});

  // Stats are unchanged by masking on a generated corpus.
  auto src = generate_corpus(default_template_pack(), Language::kSource, 200,
                             default_profile(Language::kSource), 5);
  const auto before = corpus_stats(src);
  for (auto& s : src.sentences) s = mask_sensitive(s);
  CHECK(corpus_stats(src) == before);
}

TEST_CASE("corpus_stats counts spans") {
  Dataset ds;
  ds.sentences = {sentence({"5.00", "EGP", "x"}, {"B-amount", "B-currency", "O"})};
  const auto st = corpus_stats(ds);
  CHECK(st[static_cast<std::size_t>(EntityType::kAmount)] == 1);
  CHECK(st[static_cast<std::size_t>(EntityType::kCurrency)] == 1);
  std::size_t total = 0;
  for (auto c : st) total += c;
  CHECK(total == 2);
  const auto zero = corpus_stats(Dataset{});
  CHECK(std::all_of(zero.begin(), zero.end(), [](auto c) { return c == 0; }));
}

TEST_CASE("split is 80/10/10 and a partition") {
  const auto src = generate_corpus(default_template_pack(), Language::kSource, 1730,
                                   default_profile(Language::kSource), 7);
  const auto parts = split_dataset(src, 7);
  CHECK(parts.train.size() == 1384);
  CHECK(parts.val.size() == 173);
  CHECK(parts.test.size() == 173);
  std::multiset<std::string> all, joined;
  auto key = [](const TaggedSentence& s) {
    std::string k;
    for (const auto& w : s.words) k += w + " ";
    return k;
  };
  for (const auto& s : src.sentences) all.insert(key(s));
  for (const auto* d : {&parts.train, &parts.val, &parts.test})
    for (const auto& s : d->sentences) joined.insert(key(s));
  CHECK(all == joined);
}

TEST_CASE("template pack JSON round trip") {
  const auto pack = default_template_pack();
  const auto back = pack_from_json(pack_to_json(pack));
  CHECK(pack_to_json(back) == pack_to_json(pack));
  auto broken = pack;
  broken.source.fillers[EntityType::kAmount].clear();
  CHECK_THROWS_AS(validate_pack(broken), std::invalid_argument);
}
