#include "xld/pipeline.hpp"

#include <cstdio>
#include <stdexcept>

namespace xld {

void DataConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("data config: " + what); };
  if (source_sentences < 10) fail("source_sentences must be >= 10");
  if (target_sentences < 1) fail("target_sentences must be >= 1");
  if (target_val_sentences < 1) fail("target_val_sentences must be >= 1");
  if (target_test_sentences < 1) fail("target_test_sentences must be >= 1");
  if (min_freq < 1) fail("min_freq must be >= 1");
  if (max_len < 2) fail("max_len must be >= 2");
}

nlohmann::json DataConfig::to_json() const {
  return {{"seed", seed},
          {"source_sentences", source_sentences},
          {"target_sentences", target_sentences},
          {"target_val_sentences", target_val_sentences},
          {"target_test_sentences", target_test_sentences},
          {"min_freq", min_freq},
          {"max_len", max_len}};
}

DataConfig DataConfig::from_json(const nlohmann::json& doc) {
  DataConfig c;
  c.seed = doc.value("seed", c.seed);
  c.source_sentences = doc.value("source_sentences", c.source_sentences);
  c.target_sentences = doc.value("target_sentences", c.target_sentences);
  c.target_val_sentences = doc.value("target_val_sentences", c.target_val_sentences);
  c.target_test_sentences = doc.value("target_test_sentences", c.target_test_sentences);
  c.min_freq = doc.value("min_freq", c.min_freq);
  c.max_len = doc.value("max_len", c.max_len);
  return c;
}

Vocabulary build_vocabulary(const Dataset& source_train, const Dataset& target_train,
                            std::size_t min_freq) {
  const std::vector<Dataset> parts{source_train, target_train};
  return Vocabulary::build(parts, min_freq);
}

ExperimentData build_experiment_data(const DataConfig& config) {
  config.validate();
  ExperimentData d;
  d.pack = default_template_pack();
  const auto source =
      generate_corpus(d.pack, Language::kSource, config.source_sentences,
                      default_profile(Language::kSource), config.seed);
  d.source = split_dataset(source, config.seed);
  const auto profile = default_profile(Language::kTarget);
  d.target_train = generate_corpus(d.pack, Language::kTarget, config.target_sentences, profile,
                                   config.seed);
  d.target_val = generate_corpus(d.pack, Language::kTarget, config.target_val_sentences, profile,
                                 mix_seed(config.seed, 0x7a1));
  d.target_val.split = Split::kVal;
  d.target_test = generate_corpus(d.pack, Language::kTarget, config.target_test_sentences, profile,
                                  mix_seed(config.seed, 0x7e5));
  d.target_test.split = Split::kTest;
  d.vocab = build_vocabulary(d.source.train, d.target_train, config.min_freq);
  return d;
}

std::vector<TokenizedExample> tokenize_dataset(const Dataset& data, const Vocabulary& vocab,
                                               std::size_t max_len) {
  std::vector<TokenizedExample> out;
  out.reserve(data.size());
  for (const auto& s : data.sentences) out.push_back(encode_and_align(s, vocab, max_len));
  return out;
}

std::vector<TokenizedExample> augmented_examples(const Dataset& target_train,
                                                 const AugmentConfig& augment,
                                                 const TemplatePack& pack, const Vocabulary& vocab,
                                                 std::size_t max_len) {
  std::vector<Words> docs;
  for (const auto& s : target_train.sentences) docs.push_back(s.words);
  const auto tfidf = fit_tfidf(docs);
  const auto pairs = augment_batch(target_train.sentences, augment, tfidf, pack.lexicon);
  std::vector<TokenizedExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(encode_words(p.augmented, vocab, max_len));
  return out;
}

PhaseData source_phase_data(const ExperimentData& data, std::size_t max_len) {
  PhaseData out;
  out.train = tokenize_dataset(data.source.train, data.vocab, max_len);
  out.val = tokenize_dataset(data.source.val, data.vocab, max_len);
  return out;
}

PhaseData target_phase_data(const ExperimentData& data, const AugmentConfig& augment,
                            std::size_t max_len) {
  PhaseData out;
  out.train = tokenize_dataset(data.target_train, data.vocab, max_len);
  out.val = tokenize_dataset(data.target_val, data.vocab, max_len);
  out.augmented = augmented_examples(data.target_train, augment, data.pack, data.vocab, max_len);
  return out;
}

ExperimentConfig ExperimentConfig::seeded(std::uint64_t seed) {
  ExperimentConfig c;
  c.data.seed = seed;
  c.teacher.seed = mix_seed(seed, 1);
  c.distill.seed = mix_seed(seed, 2);
  c.consistency.seed = mix_seed(seed, 3);
  c.naive.seed = mix_seed(seed, 4);
  c.augment.seed = mix_seed(seed, 5);
  return c;
}

template <typename T>
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const std::function<void(const std::string&)>& log,
                                std::optional<TransformerTagger<T>>* student_kd) {
  const std::size_t max_len = config.data.max_len;
  const std::size_t v = data.vocab.size();
  auto note = [&](const std::string& phase, const std::vector<EpochRecord>& records) {
    if (!log) return;
    double seconds = 0.0;
    for (const auto& r : records) seconds += r.seconds;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %2zu epochs  train %.4f  val %.4f  %.1fs", phase.c_str(),
                  records.size(), records.back().train_loss, records.back().val_loss, seconds);
    log(buf);
  };

  const PhaseData source = source_phase_data(data, max_len);
  const PhaseData target = target_phase_data(data, config.augment, max_len);

  ExperimentResult result;
  auto teacher_cfg = ModelConfig::teacher(v, kNumTags);
  teacher_cfg.max_len = max_len;
  TransformerTagger<T> teacher(teacher_cfg, Role::kTeacher, mix_seed(config.teacher.seed, 0x71));
  result.teacher_log = run_phase(teacher, source, config.teacher);
  note("teacher", result.teacher_log);

  auto student_cfg = ModelConfig::student(v, kNumTags);
  student_cfg.max_len = max_len;
  TransformerTagger<T> student(student_cfg, Role::kStudent, mix_seed(config.distill.seed, 0x51));
  result.distill_log = run_phase(student, source, config.distill, &teacher);
  note("distill", result.distill_log);

  if (student_kd) student_kd->emplace(student.clone());
  auto adapted = student.clone();
  result.consistency_log = run_phase(adapted, target, config.consistency);
  note("consistency", result.consistency_log);

  TransformerTagger<T> naive(student_cfg, Role::kStudent, mix_seed(config.naive.seed, 0x4a));
  PhaseData naive_data = target;
  naive_data.augmented.clear();
  result.naive_log = run_phase(naive, naive_data, config.naive);
  note("naive", result.naive_log);

  std::map<std::string, std::pair<Metrics, Metrics>> scores;
  auto score = [&](const std::string& name, const TransformerTagger<T>& m) {
    scores[name] = {evaluate_model(m, data.vocab, data.source.test),
                    evaluate_model(m, data.vocab, data.target_test)};
  };
  score("teacher", teacher);
  score("student_kd", student);
  score("student_kd_ct", adapted);
  score("naive_baseline", naive);
  result.report = comparison_report(
      scores, "synthetic target test set (" + std::to_string(data.target_test.size()) +
                  " generated sentences)");
  return result;
}

template ExperimentResult run_experiment<float>(const ExperimentConfig&, const ExperimentData&,
                                                const std::function<void(const std::string&)>&,
                                                std::optional<TransformerTagger<float>>*);
template ExperimentResult run_experiment<double>(const ExperimentConfig&, const ExperimentData&,
                                                 const std::function<void(const std::string&)>&,
                                                 std::optional<TransformerTagger<double>>*);

}  // namespace xld
