#include "xld/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "xld/tokenize.hpp"

namespace xld {

std::vector<Chunk> extract_chunks(const std::vector<Tag>& tags) {
  const auto fixed = repair_iob(tags);
  std::vector<Chunk> out;
  std::optional<Chunk> open;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    const Tag& t = fixed[i];
    const bool continues = t.kind == Tag::Kind::kInside && open && open->type == t.type;
    if (open && !continues) {
      open->end = i;
      out.push_back(*open);
      open.reset();
    }
    if (!t.is_outside() && !continues) open = Chunk{t.type, i, i};
  }
  if (open) {
    open->end = fixed.size();
    out.push_back(*open);
  }
  return out;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics compute_metrics(const std::vector<std::vector<Tag>>& predicted, const Dataset& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("alignment mismatch: " + std::to_string(predicted.size()) +
                                " predicted sentences for " + std::to_string(gold.size()));
  }
  Metrics m;
  std::size_t right_words = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold.sentences[s].tags;
    const auto& p = predicted[s];
    if (g.size() != p.size()) {
      throw std::invalid_argument("alignment mismatch in sentence " + std::to_string(s) + ": " +
                                  std::to_string(p.size()) + " predicted tags for " +
                                  std::to_string(g.size()) + " words");
    }
    for (std::size_t i = 0; i < g.size(); ++i) right_words += g[i] == p[i] ? 1 : 0;
    m.words += g.size();

    const auto gc = extract_chunks(g);
    const auto pc = extract_chunks(p);
    const std::set<Chunk> gold_set(gc.begin(), gc.end());
    for (const auto& c : gc) ++m.per_type[static_cast<std::size_t>(c.type)].support;
    for (const auto& c : pc) {
      auto& row = m.per_type[static_cast<std::size_t>(c.type)];
      ++row.predicted;
      if (gold_set.count(c)) ++row.correct;
    }
  }
  for (auto& row : m.per_type) {
    m.gold_chunks += row.support;
    m.predicted_chunks += row.predicted;
    m.correct_chunks += row.correct;
    row.precision = ratio(row.correct, row.predicted);
    row.recall = ratio(row.correct, row.support);
    row.f1 = f1_score(row.precision, row.recall);
  }
  m.token_accuracy = ratio(right_words, m.words);
  m.precision = ratio(m.correct_chunks, m.predicted_chunks);
  m.recall = ratio(m.correct_chunks, m.gold_chunks);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

template <typename T>
std::vector<std::vector<Tag>> predict_dataset(const TransformerTagger<T>& model,
                                              const Vocabulary& vocab, const Dataset& data) {
  std::vector<std::vector<Tag>> out;
  out.reserve(data.size());
  for (const auto& sentence : data.sentences) {
    const auto example = encode_and_align(sentence, vocab, model.config().max_len);
    auto tags = model.predict_tags(example);
    tags.resize(sentence.words.size(), Tag::outside());
    out.push_back(std::move(tags));
  }
  return out;
}

template std::vector<std::vector<Tag>> predict_dataset<float>(const TransformerTagger<float>&,
                                                              const Vocabulary&, const Dataset&);
template std::vector<std::vector<Tag>> predict_dataset<double>(const TransformerTagger<double>&,
                                                               const Vocabulary&, const Dataset&);

// ---------------------------------------------------------------------------

ComparisonReport comparison_report(const std::map<std::string, std::pair<Metrics, Metrics>>& scores,
                                   std::string target_test_label) {
  ComparisonReport report;
  report.target_test_label = std::move(target_test_label);
  std::string missing;
  for (auto name : kReportRows) {
    auto it = scores.find(std::string(name));
    if (it == scores.end()) {
      missing += (missing.empty() ? "" : ", ") + std::string(name);
      continue;
    }
    report.rows.push_back({std::string(name), it->second.first, it->second.second});
  }
  if (!missing.empty()) throw std::invalid_argument("comparison report is missing: " + missing);
  return report;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string ComparisonReport::to_csv() const {
  std::ostringstream out;
  out << "model,source_f1,source_acc,target_f1,target_acc\n";
  for (const auto& r : rows) {
    out << r.model << ',' << fixed4(r.source.f1) << ',' << fixed4(r.source.token_accuracy) << ','
        << fixed4(r.target.f1) << ',' << fixed4(r.target.token_accuracy) << '\n';
  }
  return out.str();
}

std::string ComparisonReport::to_text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %10s %10s %10s %10s\n", "model", "source F1",
                "source Acc", "target F1", "target Acc");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %10.4f %10.4f %10.4f %10.4f\n", r.model.c_str(),
                  r.source.f1, r.source.token_accuracy, r.target.f1, r.target.token_accuracy);
    out << line;
  }
  out << "target test set: " << target_test_label << '\n';
  return out.str();
}

std::string ComparisonReport::per_type_csv() const {
  std::ostringstream out;
  out << "model,test_set,entity,precision,recall,f1,support\n";
  for (const auto& r : rows) {
    for (const auto& [label, m] : {std::pair{"source", &r.source}, std::pair{"target", &r.target}}) {
      for (std::size_t t = 0; t < kNumEntityTypes; ++t) {
        const auto& s = m->per_type[t];
        out << r.model << ',' << label << ',' << kEntityNames[t] << ',' << fixed4(s.precision)
            << ',' << fixed4(s.recall) << ',' << fixed4(s.f1) << ',' << s.support << '\n';
      }
    }
  }
  return out.str();
}

void ComparisonReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, std::string> files[] = {
      {"report.csv", to_csv()}, {"report.txt", to_text()}, {"per_type.csv", per_type_csv()}};
  for (const auto& [name, body] : files) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << body;
  }
}

}  // namespace xld
