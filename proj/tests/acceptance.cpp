// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Optional arguments select criteria by number.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "xld/cli.hpp"
#include "xld/eval.hpp"
#include "xld/gradcheck.hpp"
#include "xld/losses.hpp"
#include "xld/pipeline.hpp"
#include "xld/rng.hpp"
#include "xld/tokenize.hpp"
#include "xld/train.hpp"

using namespace xld;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeeds[] = {7, 11, 23};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path root = fs::temp_directory_path() / ("xld_acceptance_" + name);
  fs::remove_all(root);
  fs::create_directories(root);
  return root;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto suite = grad_check_suite(10, 20240601);
  const double elapsed = seconds_since(t0);
  std::set<std::string> objectives;
  for (const auto& [name, report] : suite.runs) objectives.insert(name.substr(name.find(" / ") + 3));
  const bool composite = objectives.count("distill") && objectives.count("consistency");
  const bool ok = suite.passed() && suite.worst() < 1e-3 && composite && elapsed < 60.0;
  return {ok, fmt("runs=%zu parameters=%zu worst_rel=%.3g time=%.1fs", suite.runs.size(),
                  suite.worst_by_parameter.size(), suite.worst(), elapsed)};
}

// ---------------------------------------------------------------------------

ProbMatrix random_probs(Rng& rng, std::size_t rows, std::size_t k) {
  ProbMatrix m(rows, k);
  for (std::size_t i = 0; i < rows; ++i) {
    double z = 0;
    for (auto& v : m.row(i)) z += v = std::exp(2.0 * rng.normal());
    for (auto& v : m.row(i)) v /= z;
  }
  return m;
}

double ref_ce(const ProbMatrix& p, const std::vector<int>& gold) {
  double s = 0;
  for (std::size_t i = 0; i < p.rows; ++i) s -= std::log(std::max(p.row(i)[gold[i]], kProbFloor));
  return s / static_cast<double>(p.rows);
}

double ref_kl(const ProbMatrix& p, const ProbMatrix& q) {
  double s = 0;
  for (std::size_t i = 0; i < p.rows; ++i) {
    for (std::size_t j = 0; j < p.labels; ++j) {
      const double a = p.row(i)[j], b = q.row(i)[j];
      if (a > 0) s += a * (std::log(std::max(a, kProbFloor)) - std::log(std::max(b, kProbFloor)));
    }
  }
  return s / static_cast<double>(p.rows);
}

Outcome loss_algebra() {
  Rng rng(31);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.index(12);
    const auto a = random_probs(rng, rows, kNumTags), b = random_probs(rng, rows, kNumTags);
    std::vector<int> gold(rows);
    for (auto& g : gold) g = static_cast<int>(rng.index(kNumTags));
    const double ce_ab = ref_ce(a, gold), ce_b = ref_ce(b, gold);
    const double kl_ba = ref_kl(b, a), kl_ab = ref_kl(a, b);

    auto dev = [&](double x, double y) { worst = std::max(worst, std::abs(x - y)); };
    // student a, teacher b
    dev(distill_loss(a, b, gold, 0.0), kl_ba);
    dev(distill_loss(a, b, gold, 1.0), ce_ab);
    // augmented a, original b
    dev(consistency_loss(a, b, gold, 0.0), kl_ab);
    dev(consistency_loss(a, b, gold, 1.0), ce_b);
    for (double alpha : {0.1, 0.3, 0.5, 0.8, 0.95}) {
      dev(distill_loss(a, b, gold, alpha), alpha * ce_ab + (1 - alpha) * kl_ba);
      dev(consistency_loss(a, b, gold, alpha), alpha * ce_b + (1 - alpha) * kl_ab);
    }
  }

  ProbMatrix point(1, 2), half(1, 2), uniform(1, 25);
  point.values = {1.0, 0.0};
  half.values = {0.5, 0.5};
  std::fill(uniform.values.begin(), uniform.values.end(), 1.0 / 25);
  const std::vector<int> gold{3};
  const double ln2 = kl_divergence(point, half), ln25 = cross_entropy(uniform, gold);
  const bool fixtures = std::abs(ln2 - 0.6931) < 1e-4 && std::abs(ln25 - 3.2189) < 1e-4;
  return {worst < 1e-6 && fixtures,
          fmt("max_dev=%.2g KL(point||half)=%.6f CE(uniform25)=%.6f", worst, ln2, ln25)};
}

// ---------------------------------------------------------------------------

using Span = std::tuple<int, std::size_t, std::size_t>;

// Every [s, e) that opens a chunk of type x at s, continues with I-x and is
// not continued at e.
std::set<Span> brute_spans(const std::vector<Tag>& tags) {
  const std::size_t n = tags.size();
  std::set<Span> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (tags[s].is_outside()) continue;
    const auto x = tags[s].type;
    const bool prev_same = s > 0 && !tags[s - 1].is_outside() && tags[s - 1].type == x;
    if (tags[s].kind == Tag::Kind::kInside && prev_same) continue;
    std::size_t e = s + 1;
    while (e < n && tags[e].kind == Tag::Kind::kInside && tags[e].type == x) ++e;
    out.insert({static_cast<int>(x), s, e});
  }
  return out;
}

Outcome metric_oracle() {
  Rng rng(8080);
  std::size_t mismatches = 0, chunks = 0;
  for (int pair = 0; pair < 200; ++pair) {
    Dataset gold;
    std::vector<std::vector<Tag>> pred;
    const std::size_t sentences = 1 + rng.index(4);
    std::size_t g = 0, p = 0, c = 0, words = 0, right = 0;
    for (std::size_t s = 0; s < sentences; ++s) {
      const std::size_t n = 1 + rng.index(30);
      TaggedSentence sent;
      std::vector<Tag> guess;
      for (std::size_t i = 0; i < n; ++i) {
        sent.words.push_back("w");
        sent.tags.push_back(Tag::from_id(static_cast<int>(rng.index(kNumTags))));
        // Predictions copy gold half of the time so that matches occur.
        guess.push_back(rng.bernoulli(0.5) ? sent.tags.back()
                                           : Tag::from_id(static_cast<int>(rng.index(kNumTags))));
        words += 1;
        right += guess.back() == sent.tags.back();
      }
      const auto gs = brute_spans(sent.tags), ps = brute_spans(guess);
      g += gs.size();
      p += ps.size();
      for (const auto& span : ps) c += gs.count(span);
      gold.sentences.push_back(std::move(sent));
      pred.push_back(std::move(guess));
    }
    const auto m = compute_metrics(pred, gold);
    const double prec = p ? double(c) / double(p) : 0.0, rec = g ? double(c) / double(g) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const bool same = m.gold_chunks == g && m.predicted_chunks == p && m.correct_chunks == c &&
                      m.words == words && m.precision == prec && m.recall == rec && m.f1 == f1 &&
                      m.token_accuracy == double(right) / double(words);
    mismatches += !same;
    chunks += g;
  }
  return {mismatches == 0, fmt("pairs=200 gold_chunks=%zu mismatches=%zu", chunks, mismatches)};
}

// ---------------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed;
  ExperimentResult result;
  std::vector<EpochRecord> sweep;
  double pipeline_seconds;
};

double f1(const ExperimentResult& r, const std::string& model, bool target) {
  for (const auto& row : r.report.rows) {
    if (row.model == model) return target ? row.target.f1 : row.source.f1;
  }
  return -1;
}

const std::vector<SeedRun>& seed_runs() {
  static const std::vector<SeedRun> runs = [] {
    std::vector<SeedRun> out;
    for (auto seed : kSeeds) {
      const auto config = ExperimentConfig::seeded(seed);
      const auto data = build_experiment_data(config.data);
      std::optional<TransformerTagger<float>> kd;
      const auto t0 = Clock::now();
      auto result = run_experiment<float>(
          config, data, [&](const std::string& line) { std::printf("  [seed %llu] %s\n", (unsigned long long)seed, line.c_str()); std::fflush(stdout); },
          &kd);
      const double elapsed = seconds_since(t0);
      std::printf("%s", result.report.to_text().c_str());
      const auto target = target_phase_data(data, config.augment, config.data.max_len);
      auto sweep = sweep_alpha(*kd, target, config.consistency, {0.0, 0.2, 0.5, 0.8, 1.0});
      out.push_back({seed, std::move(result), std::move(sweep), elapsed});
    }
    return out;
  }();
  return runs;
}

Outcome source_learning() {
  const auto& run = seed_runs().front();
  const double teacher = f1(run.result, "teacher", false), student = f1(run.result, "student_kd", false);
  const bool ok = teacher >= 0.95 && student >= teacher - 0.03 && run.pipeline_seconds <= 15 * 60;
  return {ok, fmt("seed %llu teacher_f1=%.4f student_f1=%.4f pipeline=%.0fs", (unsigned long long)run.seed,
                  teacher, student, run.pipeline_seconds)};
}

Outcome directional_transfer() {
  double kd = 0, ct = 0, naive = 0;
  std::string per_seed;
  for (const auto& run : seed_runs()) {
    const double a = f1(run.result, "student_kd", true), b = f1(run.result, "student_kd_ct", true),
                 c = f1(run.result, "naive_baseline", true);
    kd += a, ct += b, naive += c;
    per_seed += fmt(" [%llu: kd=%.3f kd+ct=%.3f naive=%.3f]", (unsigned long long)run.seed, a, b, c);
  }
  const double n = static_cast<double>(std::size(kSeeds));
  kd /= n, ct /= n, naive /= n;
  const bool ok = ct - kd >= 0.02 && ct - naive >= 0.02;
  return {ok, fmt("mean target f1 kd=%.4f kd+ct=%.4f naive=%.4f;", kd, ct, naive) + per_seed};
}

Outcome alpha_sweep() {
  const fs::path dir = scratch("sweep");
  std::size_t rising = 0;
  bool all_alphas = true;
  std::string per_seed;
  for (const auto& run : seed_runs()) {
    const fs::path csv = dir / fmt("sweep_%llu.csv", (unsigned long long)run.seed);
    write_epoch_csv(csv, run.sweep, true);
    std::set<double> alphas;
    double final_val = 0, min_val = 1e300;
    for (const auto& r : read_epoch_csv(csv)) {
      alphas.insert(r.alpha);
      if (r.alpha != 0.0) continue;
      min_val = std::min(min_val, r.val_loss);
      final_val = r.val_loss;
    }
    all_alphas = all_alphas && alphas == std::set<double>{0.0, 0.2, 0.5, 0.8, 1.0};
    rising += final_val > min_val;
    per_seed += fmt(" [%llu: final=%.4f min=%.4f]", (unsigned long long)run.seed, final_val, min_val);
  }
  return {rising >= 2 && all_alphas,
          fmt("alpha=0 final>min in %zu/3 seeds, csv has all alphas=%s;", rising, all_alphas ? "yes" : "no") +
              per_seed};
}

// ---------------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

// Every file below `dir` except the manifest, which carries a timestamp.
std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return out;
}

Outcome determinism() {
  const fs::path root = scratch("determinism");
  setenv("XLD_RUN_ROOT", (root / "runs").c_str(), 1);
  const std::string data = (root / "data").string(), vocab = (root / "vocab" / "vocab.json").string();
  if (cli({"gen-corpus", "--seed", "3", "--source-sentences", "60", "--target-sentences", "12",
           "--target-val-sentences", "8", "--target-test-sentences", "8", "--run-dir", data}) ||
      cli({"build-vocab", "--data", data, "--min-freq", "1", "--run-dir", (root / "vocab").string()})) {
    return {false, "setup failed"};
  }
  const std::vector<std::string> io = {"--data", data, "--vocab", vocab};
  const auto ckpt = [&](const char* dir) { return (root / dir / "a" / "model.ckpt").string(); };
  struct Step {
    std::string name;
    std::vector<std::string> args;
  };
  const std::vector<Step> steps = {
      {"gen-corpus", {"gen-corpus", "--seed", "4", "--source-sentences", "30", "--target-val-sentences", "5",
                      "--target-test-sentences", "5"}},
      {"train-teacher", {"train-teacher", "--epochs", "2"}},
      {"distill", {"distill", "--epochs", "2", "--teacher", ckpt("train-teacher")}},
      {"consistency-train", {"consistency-train", "--epochs", "2", "--student", ckpt("distill")}},
      {"naive", {"train-teacher", "--baseline", "--epochs", "2"}},
      {"sweep-alpha", {"sweep-alpha", "--epochs", "2", "--student", ckpt("distill")}},
      {"evaluate", {"evaluate", "--model", ckpt("consistency-train")}},
      {"report", {"report", "--teacher", ckpt("train-teacher"), "--student-kd", ckpt("distill"),
                  "--student-kd-ct", ckpt("consistency-train"), "--naive", ckpt("naive")}},
  };
  std::size_t csvs = 0;
  for (const auto& step : steps) {
    auto args = step.args;
    if (step.name != "gen-corpus") args.insert(args.end(), io.begin(), io.end());
    const fs::path a = root / step.name / "a", b = root / step.name / "b";
    auto first = args, second = args;
    first.insert(first.end(), {"--run-dir", a.string()});
    if (cli(first)) return {false, step.name + ": first run failed"};
    second.insert(second.end(), {"--config", (a / "manifest.json").string(), "--run-dir", b.string()});
    if (cli(second)) return {false, step.name + ": manifest rerun failed"};
    const auto x = outputs(a), y = outputs(b);
    if (x != y) return {false, step.name + ": outputs differ"};
    for (const auto& [name, bytes] : x) csvs += name.ends_with(".csv");
  }
  return {true, fmt("commands=%zu csv_files=%zu all byte-identical", steps.size(), csvs)};
}

// ---------------------------------------------------------------------------

Outcome round_trips() {
  const auto t0 = Clock::now();
  const fs::path root = scratch("roundtrip");
  const auto pack = default_template_pack();
  bool ok = true;
  std::string failed;
  auto expect = [&](bool cond, const char* what) {
    if (!cond) ok = false, failed += std::string(" ") + what;
  };

  const auto source = generate_corpus(pack, Language::kSource, 400, default_profile(Language::kSource), 5);
  const auto target = generate_corpus(pack, Language::kTarget, 100, default_profile(Language::kTarget), 6);
  for (const auto* d : {&source, &target}) {
    const auto text = format_iob(*d);
    const auto parsed = parse_iob(text, d->language);
    expect(parsed.sentences == d->sentences, "iob-parse");
    expect(format_iob(parsed) == text, "iob-format");
    const fs::path p = root / "corpus.iob";
    write_iob(*d, p);
    expect(read_iob(p, d->language).sentences == d->sentences, "iob-file");
  }

  const std::vector<Dataset> sets{source, target};
  const auto vocab = Vocabulary::build(sets, 2);
  vocab.save(root / "vocab.json");
  const auto loaded = Vocabulary::load(root / "vocab.json");
  expect(loaded == vocab, "vocab");
  for (const auto& s : target.sentences) {
    for (const auto& w : s.words) expect(loaded.encode_word(w) == vocab.encode_word(w), "vocab-encode");
  }

  auto model_trip = [&](auto tag) {
    using T = decltype(tag);
    TransformerTagger<T> model(ModelConfig::student(vocab.size()), Role::kStudent, 77);
    const fs::path a = root / "a.ckpt", b = root / "b.ckpt";
    model.save(a);
    const auto back = TransformerTagger<T>::load(a);
    back.save(b);
    expect(slurp(a) == slurp(b), "checkpoint-bytes");
    bool same = back.parameters().size() == model.parameters().size();
    for (std::size_t i = 0; same && i < model.parameters().size(); ++i) {
      const auto x = model.parameters()[i].tensor.data(), y = back.parameters()[i].tensor.data();
      same = model.parameters()[i].name == back.parameters()[i].name &&
             std::equal(x.begin(), x.end(), y.begin(), y.end());
    }
    expect(same, "checkpoint-values");
  };
  model_trip(float{});
  model_trip(double{});

  const double elapsed = seconds_since(t0);
  expect(elapsed < 30.0, "time");
  return {ok, fmt("iob sentences=%zu vocab=%zu checkpoints=f32,f64 time=%.1fs", source.size() + target.size(),
                  vocab.size(), elapsed) +
                  failed};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"loss algebra", loss_algebra},
      {"metric oracle", metric_oracle},
      {"end-to-end source learning", source_learning},
      {"directional transfer", directional_transfer},
      {"alpha sweep", alpha_sweep},
      {"determinism", determinism},
      {"round trips", round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  std::vector<std::string> lines;
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    lines.push_back(fmt("%s criterion %d (%s): ", o.pass ? "PASS" : "FAIL", n, criteria[i].first) + o.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return failures ? 1 : 0;
}
