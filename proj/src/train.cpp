#include "xld/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace xld {

std::string phase_name(Phase phase) {
  switch (phase) {
    case Phase::kTeacher: return "teacher";
    case Phase::kDistill: return "distill";
    case Phase::kConsistency: return "consistency";
  }
  return "?";
}

Phase parse_phase(std::string_view name) {
  for (auto p : {Phase::kTeacher, Phase::kDistill, Phase::kConsistency}) {
    if (phase_name(p) == name) return p;
  }
  throw std::invalid_argument("unknown phase '" + std::string(name) + "'");
}

TrainConfig TrainConfig::defaults(Phase phase, bool parity) {
  TrainConfig c;
  c.phase = phase;
  if (parity) c.learning_rate = 2e-5;
  else c.learning_rate = phase == Phase::kConsistency ? 1e-4 : 1e-3;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"phase", phase_name(phase)},
          {"alpha", alpha},
          {"temperature", temperature},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"weight_decay", weight_decay},
          {"betas", {beta1, beta2}},
          {"epsilon", epsilon},
          {"two_branch", flow == ConsistencyGradient::kBothBranches}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c = defaults(parse_phase(doc.at("phase").get<std::string>()));
  c.alpha = doc.value("alpha", c.alpha);
  c.temperature = doc.value("temperature", c.temperature);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.epochs = doc.value("epochs", c.epochs);
  c.seed = doc.value("seed", c.seed);
  c.weight_decay = doc.value("weight_decay", c.weight_decay);
  if (doc.contains("betas")) {
    c.beta1 = doc["betas"].at(0).get<double>();
    c.beta2 = doc["betas"].at(1).get<double>();
  }
  c.epsilon = doc.value("epsilon", c.epsilon);
  c.flow = doc.value("two_branch", false) ? ConsistencyGradient::kBothBranches
                                          : ConsistencyGradient::kAugmentedOnly;
  return c;
}

// ---------------------------------------------------------------------------

template <typename T>
AdamW<T>::AdamW(std::vector<nn::Parameter<T>>& params, const TrainConfig& config)
    : params_(&params),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.epsilon),
      wd_(config.weight_decay) {
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.size(), T(0));
    v_.emplace_back(p.tensor.size(), T(0));
  }
}

template <typename T>
void AdamW<T>::step() {
  auto& params = *params_;
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (std::isnan(g)) throw std::runtime_error("NaN gradient in parameter " + p.name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].tensor.data();
    const bool has = params[i].tensor.has_grad();
    const auto grad = params[i].tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const T g = has ? grad[j] : T(0);
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      const double p = static_cast<double>(data[j]);
      data[j] = static_cast<T>(p - lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p));
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::vector<const TokenizedExample*> pick(const std::vector<TokenizedExample>& all,
                                          std::span<const std::size_t> idx) {
  std::vector<const TokenizedExample*> out;
  for (auto i : idx) out.push_back(&all[i]);
  return out;
}

// Teacher word-row distributions at the given temperature, one block per example.
template <typename T>
std::vector<std::vector<T>> teacher_targets(const TransformerTagger<T>& teacher,
                                            const std::vector<TokenizedExample>& examples,
                                            double temperature) {
  std::vector<std::vector<T>> out;
  out.reserve(examples.size());
  const std::size_t k = teacher.config().k;
  for (const auto& ex : examples) {
    const TokenizedExample* one[] = {&ex};
    const auto batch = Batch::pack(one);
    auto words = nn::gather_rows(nn::detach(teacher.forward(batch)), batch.word_rows);
    if (temperature != 1.0) words = nn::scale(words, static_cast<T>(1.0 / temperature));
    const auto probs = nn::softmax(words, 1);
    out.emplace_back(probs.ptr(), probs.ptr() + batch.word_rows.size() * k);
  }
  return out;
}

}  // namespace

template <typename T>
double supervised_loss(const TransformerTagger<T>& model,
                       const std::vector<TokenizedExample>& examples) {
  if (examples.empty()) throw std::invalid_argument("supervised_loss: no examples");
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const std::size_t end = std::min(examples.size(), start + kChunk);
    std::vector<const TokenizedExample*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&examples[i]);
    const auto batch = Batch::pack(ptrs);
    const auto probs =
        nn::softmax(nn::gather_rows(nn::detach(model.forward(batch)), batch.word_rows), 1);
    const std::size_t k = model.config().k;
    for (const auto& seg : batch.word_segments) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t r = seg.offset; r < seg.offset + seg.length; ++r) {
        const int gold = batch.word_labels[r];
        if (gold == kIgnoreLabel) continue;
        const double p = probs.ptr()[r * k + static_cast<std::size_t>(gold)];
        sum -= std::log(std::max(p, kProbFloor));
        ++n;
      }
      if (n == 0) continue;
      total += sum / static_cast<double>(n);
      ++counted;
    }
  }
  if (counted == 0) throw std::invalid_argument("supervised_loss: no labelled words");
  return total / static_cast<double>(counted);
}

template <typename T>
std::vector<EpochRecord> run_phase(TransformerTagger<T>& model, const PhaseData& data,
                                   const TrainConfig& config, const TransformerTagger<T>* teacher,
                                   const BatchCallback& on_batch) {
  config.validate();
  if (data.train.empty()) throw std::invalid_argument("run_phase: empty training set");
  if (data.val.empty()) throw std::invalid_argument("run_phase: empty validation set");
  if (config.phase == Phase::kDistill && teacher == nullptr) {
    throw std::invalid_argument("distill phase requires a teacher model");
  }
  if (config.phase == Phase::kDistill && teacher->config().k != model.config().k) {
    throw std::invalid_argument("teacher and student label sets differ");
  }
  if (config.phase == Phase::kConsistency && data.augmented.size() != data.train.size()) {
    throw std::invalid_argument("consistency phase needs one augmented example per training example");
  }

  std::vector<std::vector<T>> targets;
  if (config.phase == Phase::kDistill) targets = teacher_targets(*teacher, data.train, config.temperature);

  AdamW<T> optimizer(model.parameters(), config);
  Rng dropout_rng(mix_seed(config.seed, 0xd0));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = model.config().k;

  std::vector<EpochRecord> records;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(config.seed, epoch));
    shuffle_rng.shuffle(order);

    double sum_total = 0.0, sum_ce = 0.0, sum_kl = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto clean = pick<T>(data.train, idx);

      model.zero_grad();
      LossTerms<T> terms;
      if (config.phase == Phase::kConsistency) {
        std::vector<std::size_t> limits;
        for (auto i : idx) {
          limits.push_back(std::min(data.train[i].word_count, data.augmented[i].word_count));
        }
        const auto noisy = pick<T>(data.augmented, idx);
        const auto batch = Batch::pack(clean, limits);
        const auto aug_batch = Batch::pack(noisy, limits);
        const auto original = nn::gather_rows(model.forward(batch, &dropout_rng), batch.word_rows);
        const auto augmented =
            nn::gather_rows(model.forward(aug_batch, &dropout_rng), aug_batch.word_rows);
        terms = consistency_objective(augmented, original, batch.word_labels, batch.word_segments,
                                      config.alpha, config.temperature, config.flow);
      } else {
        const auto batch = Batch::pack(clean);
        const auto logits = nn::gather_rows(model.forward(batch, &dropout_rng), batch.word_rows);
        if (config.phase == Phase::kDistill) {
          std::vector<T> soft;
          soft.reserve(batch.word_rows.size() * k);
          for (auto i : idx) soft.insert(soft.end(), targets[i].begin(), targets[i].end());
          const auto teacher_probs = nn::Tensor<T>::from({batch.word_rows.size(), k}, std::move(soft));
          terms = distill_objective(logits, teacher_probs, batch.word_labels, batch.word_segments,
                                    config.alpha, config.temperature);
        } else {
          terms = supervised_objective(logits, batch.word_labels, batch.word_segments);
        }
      }
      const double total = static_cast<double>(terms.total.item());
      if (!std::isfinite(total)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch));
      }
      nn::backward(terms.total);
      optimizer.step();
      if (on_batch) on_batch({epoch, batches, total, terms.ce, terms.kl});
      sum_total += total;
      sum_ce += terms.ce;
      sum_kl += terms.kl;
      ++batches;
    }

    EpochRecord rec;
    rec.phase = config.phase;
    rec.alpha = config.phase == Phase::kTeacher ? 1.0 : config.alpha;
    rec.seed = config.seed;
    rec.epoch = epoch;
    rec.train_loss = sum_total / static_cast<double>(batches);
    rec.ce_part = sum_ce / static_cast<double>(batches);
    rec.kl_part = sum_kl / static_cast<double>(batches);
    rec.val_loss = supervised_loss(model, data.val);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    records.push_back(rec);
  }
  return records;
}

template <typename T>
std::vector<EpochRecord> sweep_alpha(const TransformerTagger<T>& student, const PhaseData& data,
                                     const TrainConfig& base, const std::vector<double>& alphas) {
  if (alphas.empty()) throw std::invalid_argument("sweep_alpha: no alpha values");
  for (double a : alphas) check_alpha(a);
  std::vector<EpochRecord> all;
  for (double a : alphas) {
    auto model = student.clone();
    TrainConfig config = base;
    config.phase = Phase::kConsistency;
    config.alpha = a;
    const auto records = run_phase(model, data, config);
    all.insert(all.end(), records.begin(), records.end());
  }
  return all;
}

#define XLD_INSTANTIATE_TRAIN(T)                                                               \
  template std::vector<EpochRecord> run_phase<T>(TransformerTagger<T>&, const PhaseData&,     \
                                                 const TrainConfig&, const TransformerTagger<T>*, \
                                                 const BatchCallback&);                        \
  template double supervised_loss<T>(const TransformerTagger<T>&,                              \
                                     const std::vector<TokenizedExample>&);                    \
  template std::vector<EpochRecord> sweep_alpha<T>(const TransformerTagger<T>&,               \
                                                   const PhaseData&, const TrainConfig&,       \
                                                   const std::vector<double>&);
XLD_INSTANTIATE_TRAIN(float)
XLD_INSTANTIATE_TRAIN(double)
#undef XLD_INSTANTIATE_TRAIN

// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string epoch_csv(const std::vector<EpochRecord>& records, bool deterministic) {
  std::ostringstream out;
  out << kEpochCsvHeader << "\n";
  for (const auto& r : records) {
    out << phase_name(r.phase) << ',' << fmt_double(r.alpha) << ',' << r.seed << ',' << r.epoch
        << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.val_loss) << ','
        << fmt_double(r.ce_part) << ',' << fmt_double(r.kl_part) << ','
        << (deterministic ? std::string("0") : fmt_double(r.seconds)) << "\n";
  }
  return out.str();
}

void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& records,
                     bool deterministic) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << epoch_csv(records, deterministic);
}

std::vector<EpochRecord> read_epoch_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kEpochCsvHeader) throw std::runtime_error(path.string() + ": unexpected CSV header");
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error(path.string() + ": bad CSV row '" + line + "'");
    EpochRecord r;
    r.phase = parse_phase(f[0]);
    r.alpha = std::stod(f[1]);
    r.seed = std::stoull(f[2]);
    r.epoch = std::stoul(f[3]);
    r.train_loss = std::stod(f[4]);
    r.val_loss = std::stod(f[5]);
    r.ce_part = std::stod(f[6]);
    r.kl_part = std::stod(f[7]);
    r.seconds = std::stod(f[8]);
    out.push_back(r);
  }
  return out;
}

}  // namespace xld
