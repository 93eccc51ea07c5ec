#include "xld/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "xld/charts.hpp"
#include "xld/gradcheck.hpp"
#include "xld/pipeline.hpp"

namespace xld {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  return {{"command", command}, {"config", config},       {"seed", seed},
          {"inputs", inputs},   {"outputs", outputs},     {"config_hash", hash},
          {"timestamp", timestamp}};
}

RunManifest RunManifest::from_json(const nlohmann::json& doc) {
  RunManifest m;
  m.command = doc.at("command").get<std::string>();
  m.config = doc.at("config");
  m.seed = doc.value("seed", std::uint64_t{0});
  m.inputs = doc.value("inputs", nlohmann::json::object());
  m.outputs = doc.value("outputs", nlohmann::json::array());
  m.hash = doc.value("config_hash", std::string());
  m.timestamp = doc.value("timestamp", std::string());
  return m;
}

std::filesystem::path default_run_root() {
  const char* env = std::getenv("XLD_RUN_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flags

struct Flags {
  std::uint64_t seed = 0;
  double alpha = 0.8;
  double temperature = 1.0;
  double lr = 1e-3;
  std::size_t batch_size = 28;
  std::size_t epochs = 20;
  int precision = 32;
  bool parity = false;
  bool deterministic = true;
  bool two_branch = false;
  std::string run_dir;
  std::string config;

  std::size_t source_sentences = 0, target_sentences = 0, target_val = 0, target_test = 0;
  std::size_t min_freq = 2;

  std::string data, vocab, teacher, student, model, student_kd, student_kd_ct, naive;
  bool baseline = false;
  std::vector<double> alphas;
  std::vector<std::string> ops;
  std::vector<double> magnitudes;
  std::size_t count = 5;
  std::size_t configs = 10;
  std::string test_set = "both";
  std::string corrupt;
};

enum class Block { kData, kTrain, kAugment };

struct Command {
  std::string name;
  std::string help;
  std::vector<Block> blocks;
  Phase phase = Phase::kTeacher;
  // Input path flags: (flag, json key, required).
  std::vector<std::tuple<std::string, std::string, bool>> inputs;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> list = {
      {"gen-corpus", "generate the source corpus splits and the target sets as IOB files",
       {Block::kData}, Phase::kTeacher, {}},
      {"build-vocab", "build the shared vocabulary from a generated corpus", {}, Phase::kTeacher,
       {{"--data", "data", true}}},
      {"train-teacher", "train the teacher on source data (or, with --baseline, the naive target model)",
       {Block::kTrain}, Phase::kTeacher,
       {{"--data", "data", true}, {"--vocab", "vocab", true}}},
      {"distill", "train the student against a frozen teacher", {Block::kTrain}, Phase::kDistill,
       {{"--data", "data", true}, {"--vocab", "vocab", true}, {"--teacher", "teacher", true}}},
      {"consistency-train", "adapt the distilled student on the labelled target sentences",
       {Block::kTrain, Block::kAugment}, Phase::kConsistency,
       {{"--data", "data", true}, {"--vocab", "vocab", true}, {"--student", "student", true}}},
      {"sweep-alpha", "consistency training once per alpha from one student snapshot",
       {Block::kTrain, Block::kAugment}, Phase::kConsistency,
       {{"--data", "data", true}, {"--vocab", "vocab", true}, {"--student", "student", true}}},
      {"evaluate", "score one checkpoint on the source and target test sets", {}, Phase::kTeacher,
       {{"--data", "data", true}, {"--vocab", "vocab", true}, {"--model", "model", true}}},
      {"report", "four-model comparison table", {}, Phase::kTeacher,
       {{"--data", "data", true},
        {"--vocab", "vocab", true},
        {"--teacher", "teacher", true},
        {"--student-kd", "student_kd", true},
        {"--student-kd-ct", "student_kd_ct", true},
        {"--naive", "naive_baseline", true}}},
      {"grad-check", "compare analytic and finite-difference gradients on random tiny models", {},
       Phase::kTeacher, {}},
      {"augment-preview", "show augmented copies of target training sentences", {Block::kAugment},
       Phase::kTeacher, {{"--data", "data", true}}},
  };
  return list;
}

bool has(const Command& c, Block b) {
  return std::find(c.blocks.begin(), c.blocks.end(), b) != c.blocks.end();
}

std::string* input_slot(Flags& f, const std::string& key) {
  static const std::map<std::string, std::string Flags::*> slots = {
      {"data", &Flags::data},           {"vocab", &Flags::vocab},
      {"teacher", &Flags::teacher},     {"student", &Flags::student},
      {"model", &Flags::model},         {"student_kd", &Flags::student_kd},
      {"student_kd_ct", &Flags::student_kd_ct}, {"naive_baseline", &Flags::naive}};
  return &(f.*slots.at(key));
}

void add_flags(CLI::App& sub, const Command& c, Flags& f) {
  sub.add_option("--seed", f.seed, "random seed");
  sub.add_option("--precision", f.precision, "floating-point width, 32 or 64");
  sub.add_option("--run-dir", f.run_dir, "output directory (default: $XLD_RUN_ROOT/<command>-<hash>)");
  sub.add_option("--config", f.config, "JSON config file or a run manifest");
  sub.add_flag("--deterministic,!--no-deterministic", f.deterministic,
               "write 0 for wall-clock seconds so reruns give identical bytes");
  for (const auto& [flag, key, required] : c.inputs) {
    auto* opt = sub.add_option(flag, *input_slot(f, key), "input path");
    if (required) opt->required();
  }
  if (has(c, Block::kTrain)) {
    sub.add_option("--alpha", f.alpha, "weight of the cross-entropy term");
    sub.add_option("--temperature", f.temperature, "softmax temperature of the KL term");
    sub.add_option("--lr", f.lr, "learning rate");
    sub.add_option("--batch-size", f.batch_size, "sentences per batch (default 28)");
    sub.add_option("--epochs", f.epochs, "training epochs (default 20)");
    sub.add_flag("--parity-mode", f.parity, "use learning rate 2e-5 in every phase");
  }
  if (has(c, Block::kData)) {
    sub.add_option("--source-sentences", f.source_sentences);
    sub.add_option("--target-sentences", f.target_sentences);
    sub.add_option("--target-val-sentences", f.target_val);
    sub.add_option("--target-test-sentences", f.target_test);
  }
  if (has(c, Block::kAugment)) {
    sub.add_option("--ops", f.ops, "augmentation operators")->delimiter(',');
    sub.add_option("--magnitudes", f.magnitudes,
                   "back_translate,rand_perturb,tfidf_replace strengths")
        ->delimiter(',')
        ->expected(3);
  }
  if (c.name == "train-teacher") {
    sub.add_flag("--baseline", f.baseline,
                 "student-size model trained from scratch on the target sentences");
  }
  if (c.name == "consistency-train" || c.name == "sweep-alpha") {
    sub.add_flag("--two-branch", f.two_branch, "let the KL gradient reach the original branch too");
  }
  if (c.name == "build-vocab") sub.add_option("--min-freq", f.min_freq, "minimum word count");
  if (c.name == "sweep-alpha") {
    sub.add_option("--alphas", f.alphas, "comma-separated alpha values")->delimiter(',');
  }
  if (c.name == "evaluate") {
    sub.add_option("--test-set", f.test_set, "source, target or both")
        ->check(CLI::IsMember({"source", "target", "both"}));
  }
  if (c.name == "augment-preview") sub.add_option("--count", f.count, "sentences to show");
  if (c.name == "grad-check") {
    sub.add_option("--configs", f.configs, "random tiny configurations");
    sub.add_option("--corrupt", f.corrupt, "damage this parameter's gradient (self-test)");
  }
}

// ---------------------------------------------------------------------------
// Config resolution: defaults < config file < flags.

json augment_to_json(const AugmentConfig& a) {
  json ops = json::array();
  for (auto op : a.operators) ops.push_back(std::string(augment_op_name(op)));
  return {{"operators", ops},
          {"magnitude",
           {{"back_translate", a.strength(AugmentOp::kBackTranslate)},
            {"rand_perturb", a.strength(AugmentOp::kRandPerturb)},
            {"tfidf_replace", a.strength(AugmentOp::kTfIdfReplace)}}}};
}

AugmentConfig augment_from_json(const json& doc, std::uint64_t seed) {
  AugmentConfig a;
  a.seed = seed;
  a.operators.clear();
  for (const auto& name : doc.at("operators")) a.operators.push_back(parse_augment_op(name.get<std::string>()));
  for (const auto& [name, value] : doc.at("magnitude").items()) {
    a.magnitude[static_cast<std::size_t>(parse_augment_op(name))] = value.get<double>();
  }
  a.validate();
  return a;
}

json defaults_for(const Command& c) {
  json d = {{"seed", 0}, {"precision", 32}, {"deterministic", true}};
  if (has(c, Block::kData)) {
    json data = DataConfig{}.to_json();
    data.erase("seed");
    data.erase("min_freq");
    d["data"] = data;
  }
  if (has(c, Block::kTrain)) {
    json train = TrainConfig::defaults(c.phase).to_json();
    train.erase("seed");
    train.erase("phase");
    d["train"] = train;
    d["parity_mode"] = false;
  }
  if (has(c, Block::kAugment)) d["augment"] = augment_to_json(AugmentConfig{});
  if (c.name == "train-teacher") d["baseline"] = false;
  if (c.name == "build-vocab") d["min_freq"] = 2;
  if (c.name == "sweep-alpha") d["alphas"] = {0.0, 0.2, 0.5, 0.8, 1.0};
  if (c.name == "evaluate") d["test_set"] = "both";
  if (c.name == "augment-preview") d["count"] = 5;
  if (c.name == "grad-check") {
    d["precision"] = 64;
    d["configs"] = 10;
    d["epsilon"] = 1e-5;
    d["tolerance"] = 1e-3;
    d["corrupt"] = "";
  }
  return d;
}

// Rejects keys absent from `defaults` so typos are not silently ignored.
void check_keys(const json& defaults, const json& patch, const std::string& where) {
  for (const auto& [key, value] : patch.items()) {
    if (!defaults.contains(key)) throw UsageError("invalid config: unknown field '" + where + key + "'");
    if (defaults[key].is_object() && key != "magnitude") {
      if (!value.is_object()) throw UsageError("invalid config: field '" + where + key + "' must be an object");
      check_keys(defaults[key], value, where + key + ".");
    }
  }
}

json resolve_config(const Command& c, CLI::App& sub, const Flags& f) {
  json d = defaults_for(c);
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw UsageError("cannot open config file " + f.config);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("config file " + f.config + " is not valid JSON: " + e.what());
    }
    // A run manifest replays its resolved config.
    if (doc.contains("command") && doc.contains("config")) {
      if (doc["command"] != c.name) {
        throw UsageError("manifest is for '" + doc["command"].get<std::string>() + "', not '" + c.name + "'");
      }
      doc = doc["config"];
    }
    if (!doc.is_object()) throw UsageError("config file must hold a JSON object");
    check_keys(d, doc, "");
    d.merge_patch(doc);
  }
  auto given = [&](const char* flag) {
    const auto* opt = sub.get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };
  auto set = [&](const char* flag, auto&& assign) {
    if (given(flag)) assign();
  };
  set("--seed", [&] { d["seed"] = f.seed; });
  set("--precision", [&] { d["precision"] = f.precision; });
  set("--deterministic", [&] { d["deterministic"] = f.deterministic; });
  set("--no-deterministic", [&] { d["deterministic"] = f.deterministic; });
  if (has(c, Block::kTrain)) {
    set("--alpha", [&] { d["train"]["alpha"] = f.alpha; });
    set("--temperature", [&] { d["train"]["temperature"] = f.temperature; });
    set("--lr", [&] { d["train"]["learning_rate"] = f.lr; });
    set("--batch-size", [&] { d["train"]["batch_size"] = f.batch_size; });
    set("--epochs", [&] { d["train"]["epochs"] = f.epochs; });
    set("--parity-mode", [&] { d["parity_mode"] = f.parity; });
    set("--two-branch", [&] { d["train"]["two_branch"] = f.two_branch; });
    if (d["parity_mode"].get<bool>()) {
      if (given("--lr")) throw UsageError("invalid config: --lr conflicts with --parity-mode");
      d["train"]["learning_rate"] = 2e-5;
    }
  }
  if (has(c, Block::kData)) {
    set("--source-sentences", [&] { d["data"]["source_sentences"] = f.source_sentences; });
    set("--target-sentences", [&] { d["data"]["target_sentences"] = f.target_sentences; });
    set("--target-val-sentences", [&] { d["data"]["target_val_sentences"] = f.target_val; });
    set("--target-test-sentences", [&] { d["data"]["target_test_sentences"] = f.target_test; });
  }
  if (has(c, Block::kAugment)) {
    set("--ops", [&] { d["augment"]["operators"] = f.ops; });
    set("--magnitudes", [&] {
      d["augment"]["magnitude"] = {{"back_translate", f.magnitudes[0]},
                                   {"rand_perturb", f.magnitudes[1]},
                                   {"tfidf_replace", f.magnitudes[2]}};
    });
  }
  set("--baseline", [&] { d["baseline"] = f.baseline; });
  set("--min-freq", [&] { d["min_freq"] = f.min_freq; });
  set("--alphas", [&] { d["alphas"] = f.alphas; });
  set("--test-set", [&] { d["test_set"] = f.test_set; });
  set("--count", [&] { d["count"] = f.count; });
  set("--configs", [&] { d["configs"] = f.configs; });
  set("--corrupt", [&] { d["corrupt"] = f.corrupt; });
  return d;
}

// Typed views of the resolved config; any failure is a configuration error.
struct Resolved {
  json config;
  std::uint64_t seed = 0;
  int precision = 32;
  bool deterministic = true;
  TrainConfig train;
  DataConfig data;
  AugmentConfig augment;
};

Resolved typed(const Command& c, const json& d) {
  Resolved r;
  r.config = d;
  try {
    r.seed = d.at("seed").get<std::uint64_t>();
    r.precision = d.at("precision").get<int>();
    r.deterministic = d.at("deterministic").get<bool>();
    if (r.precision != 32 && r.precision != 64) throw UsageError("invalid config: precision must be 32 or 64");
    if (c.name == "grad-check" && r.precision != 64) {
      throw UsageError("invalid config: grad-check needs precision 64");
    }
    if (has(c, Block::kData)) {
      r.data = DataConfig::from_json(d.at("data"));
      r.data.seed = r.seed;
      r.data.validate();
    }
    if (has(c, Block::kTrain)) {
      json t = d.at("train");
      t["phase"] = phase_name(c.phase);
      t["seed"] = r.seed;
      r.train = TrainConfig::from_json(t);
      r.train.validate();
    }
    if (has(c, Block::kAugment)) r.augment = augment_from_json(d.at("augment"), mix_seed(r.seed, 5));
    if (c.name == "build-vocab" && d.at("min_freq").get<std::size_t>() < 1) {
      throw UsageError("invalid config: min_freq must be >= 1");
    }
    if (c.name == "sweep-alpha") {
      const auto alphas = d.at("alphas").get<std::vector<double>>();
      if (alphas.empty()) throw UsageError("invalid config: alphas must not be empty");
      for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0)) throw UsageError("invalid config: alphas must lie in [0, 1]");
      }
    }
    if (c.name == "grad-check" && d.at("configs").get<std::size_t>() < 1) {
      throw UsageError("invalid config: configs must be >= 1");
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Command bodies

struct Run {
  const Command& command;
  const Resolved& cfg;
  json inputs;
  fs::path dir;
  std::ostream& out;
  std::vector<std::string> outputs;

  fs::path input(const std::string& key) const { return inputs.at(key).get<std::string>(); }
  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return dir / name;
  }
};

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

Dataset load_split(const fs::path& dir, const std::string& name) {
  const Language lang = name.rfind("target", 0) == 0 ? Language::kTarget : Language::kSource;
  Dataset d = read_iob(dir / (name + ".iob"), lang);
  d.split = name.find("train") != std::string::npos ? Split::kTrain
            : name.find("val") != std::string::npos ? Split::kVal
                                                    : Split::kTest;
  return d;
}

TemplatePack load_pack(const fs::path& dir) {
  const fs::path p = dir / "pack.json";
  if (!fs::exists(p)) return default_template_pack();
  std::ifstream in(p);
  return pack_from_json(json::parse(in));
}

template <typename F>
void with_precision(int bits, F&& fn) {
  if (bits == 64) {
    fn(static_cast<double*>(nullptr));
  } else {
    fn(static_cast<float*>(nullptr));
  }
}

void finish_training(Run& run, const std::string& csv_name, const std::vector<EpochRecord>& records) {
  write_epoch_csv(run.output(csv_name), records, run.cfg.deterministic);
  for (const auto& chart : emit_loss_curves(run.dir)) {
    run.outputs.push_back(fs::relative(chart, run.dir).string());
  }
  run.outputs.push_back("charts/" + csv_name);
  const auto& last = records.back();
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch %zu  train_loss %.6f  val_loss %.6f\n", last.epoch,
                last.train_loss, last.val_loss);
  run.out << buf;
}

void cmd_gen_corpus(Run& run) {
  const auto data = build_experiment_data(run.cfg.data);
  write_iob(data.source.train, run.output("source_train.iob"));
  write_iob(data.source.val, run.output("source_val.iob"));
  write_iob(data.source.test, run.output("source_test.iob"));
  write_iob(data.target_train, run.output("target_train.iob"));
  write_iob(data.target_val, run.output("target_val.iob"));
  write_iob(data.target_test, run.output("target_test.iob"));
  write_text(run.output("pack.json"), pack_to_json(data.pack).dump(2) + "\n");

  std::ostringstream stats;
  stats << "entity,source,target\n";
  auto merged = data.source.train;
  for (const auto* part : {&data.source.val, &data.source.test}) {
    merged.sentences.insert(merged.sentences.end(), part->sentences.begin(), part->sentences.end());
  }
  const auto src = corpus_stats(merged), tgt = corpus_stats(data.target_train);
  for (std::size_t t = 0; t < kNumEntityTypes; ++t) {
    stats << kEntityNames[t] << ',' << src[t] << ',' << tgt[t] << '\n';
  }
  write_text(run.output("stats.csv"), stats.str());
  run.out << "source " << merged.size() << " sentences (" << data.source.train.size() << "/"
          << data.source.val.size() << "/" << data.source.test.size() << "), target "
          << data.target_train.size() << " labelled + " << data.target_val.size() << " val + "
          << data.target_test.size() << " test\n";
}

void cmd_build_vocab(Run& run) {
  const fs::path dir = run.input("data");
  const auto vocab = build_vocabulary(load_split(dir, "source_train"), load_split(dir, "target_train"),
                                      run.cfg.config.at("min_freq").get<std::size_t>());
  vocab.save(run.output("vocab.json"));
  run.out << "vocabulary: " << vocab.size() << " entries\n";
}

void cmd_train_teacher(Run& run) {
  const fs::path dir = run.input("data");
  const auto vocab = Vocabulary::load(run.input("vocab"));
  const bool baseline = run.cfg.config.at("baseline").get<bool>();
  PhaseData data;
  const auto max_len = kDefaultMaxLen;
  data.train = tokenize_dataset(load_split(dir, baseline ? "target_train" : "source_train"), vocab, max_len);
  data.val = tokenize_dataset(load_split(dir, baseline ? "target_val" : "source_val"), vocab, max_len);
  with_precision(run.cfg.precision, [&]<typename T>(T*) {
    auto mc = baseline ? ModelConfig::student(vocab.size()) : ModelConfig::teacher(vocab.size());
    TransformerTagger<T> model(mc, baseline ? Role::kStudent : Role::kTeacher,
                               mix_seed(run.cfg.seed, baseline ? 0x4a : 0x71));
    const auto records = run_phase(model, data, run.cfg.train);
    model.save(run.output("model.ckpt"));
    finish_training(run, "epochs.csv", records);
  });
}

void cmd_distill(Run& run) {
  const fs::path dir = run.input("data");
  const auto vocab = Vocabulary::load(run.input("vocab"));
  PhaseData data;
  data.train = tokenize_dataset(load_split(dir, "source_train"), vocab, kDefaultMaxLen);
  data.val = tokenize_dataset(load_split(dir, "source_val"), vocab, kDefaultMaxLen);
  with_precision(checkpoint_precision(run.input("teacher")), [&]<typename T>(T*) {
    const auto teacher = TransformerTagger<T>::load(run.input("teacher"), kNumTags);
    if (teacher.config().vocab_size != vocab.size()) {
      throw std::runtime_error("teacher vocabulary size " + std::to_string(teacher.config().vocab_size) +
                               " does not match " + std::to_string(vocab.size()));
    }
    TransformerTagger<T> student(ModelConfig::student(vocab.size()), Role::kStudent,
                                 mix_seed(run.cfg.seed, 0x51));
    const auto records = run_phase(student, data, run.cfg.train, &teacher);
    student.save(run.output("model.ckpt"));
    finish_training(run, "epochs.csv", records);
  });
}

PhaseData target_data(Run& run, const Vocabulary& vocab) {
  const fs::path dir = run.input("data");
  const auto train = load_split(dir, "target_train");
  PhaseData data;
  data.train = tokenize_dataset(train, vocab, kDefaultMaxLen);
  data.val = tokenize_dataset(load_split(dir, "target_val"), vocab, kDefaultMaxLen);
  data.augmented = augmented_examples(train, run.cfg.augment, load_pack(dir), vocab, kDefaultMaxLen);
  return data;
}

void cmd_consistency(Run& run) {
  const auto vocab = Vocabulary::load(run.input("vocab"));
  const auto data = target_data(run, vocab);
  with_precision(checkpoint_precision(run.input("student")), [&]<typename T>(T*) {
    auto model = TransformerTagger<T>::load(run.input("student"), kNumTags);
    const auto records = run_phase(model, data, run.cfg.train);
    model.save(run.output("model.ckpt"));
    finish_training(run, "epochs.csv", records);
  });
}

void cmd_sweep(Run& run) {
  const auto vocab = Vocabulary::load(run.input("vocab"));
  const auto data = target_data(run, vocab);
  const auto alphas = run.cfg.config.at("alphas").get<std::vector<double>>();
  with_precision(checkpoint_precision(run.input("student")), [&]<typename T>(T*) {
    const auto student = TransformerTagger<T>::load(run.input("student"), kNumTags);
    const auto records = sweep_alpha(student, data, run.cfg.train, alphas);
    finish_training(run, "sweep.csv", records);
  });
}

void print_metrics(std::ostream& out, const std::string& label, const Metrics& m) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-7s F1 %.4f  P %.4f  R %.4f  Acc %.4f  (%zu gold chunks)\n",
                label.c_str(), m.f1, m.precision, m.recall, m.token_accuracy, m.gold_chunks);
  out << buf;
}

json metrics_json(const Metrics& m) {
  json types = json::object();
  for (std::size_t t = 0; t < kNumEntityTypes; ++t) {
    const auto& s = m.per_type[t];
    types[std::string(kEntityNames[t])] = {
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  return {{"f1", m.f1},           {"precision", m.precision},
          {"recall", m.recall},   {"token_accuracy", m.token_accuracy},
          {"words", m.words},     {"gold_chunks", m.gold_chunks},
          {"per_type", types}};
}

void cmd_evaluate(Run& run) {
  const fs::path dir = run.input("data");
  const auto vocab = Vocabulary::load(run.input("vocab"));
  const auto which = run.cfg.config.at("test_set").get<std::string>();
  json result = json::object();
  std::ostringstream per_type;
  per_type << "test_set,entity,precision,recall,f1,support\n";
  with_precision(checkpoint_precision(run.input("model")), [&]<typename T>(T*) {
    const auto model = TransformerTagger<T>::load(run.input("model"), kNumTags);
    for (const std::string name : {"source", "target"}) {
      if (which != "both" && which != name) continue;
      const auto m = evaluate_model(model, vocab, load_split(dir, name + "_test"));
      result[name] = metrics_json(m);
      print_metrics(run.out, name, m);
      for (std::size_t t = 0; t < kNumEntityTypes; ++t) {
        const auto& s = m.per_type[t];
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f,%.4f,%zu\n", name.c_str(),
                      std::string(kEntityNames[t]).c_str(), s.precision, s.recall, s.f1, s.support);
        per_type << buf;
      }
    }
  });
  write_text(run.output("metrics.json"), result.dump(2) + "\n");
  write_text(run.output("per_type.csv"), per_type.str());
}

void cmd_report(Run& run) {
  const fs::path dir = run.input("data");
  const auto vocab = Vocabulary::load(run.input("vocab"));
  const auto source = load_split(dir, "source_test");
  const auto target = load_split(dir, "target_test");
  std::map<std::string, std::pair<Metrics, Metrics>> scores;
  for (auto slot : kReportRows) {
    const fs::path path = run.input(std::string(slot));
    with_precision(checkpoint_precision(path), [&]<typename T>(T*) {
      const auto model = TransformerTagger<T>::load(path, kNumTags);
      scores[std::string(slot)] = {evaluate_model(model, vocab, source),
                                   evaluate_model(model, vocab, target)};
    });
  }
  const auto report = comparison_report(
      scores, "synthetic target test set (" + std::to_string(target.size()) + " generated sentences)");
  write_text(run.output("report.csv"), report.to_csv());
  write_text(run.output("report.txt"), report.to_text());
  write_text(run.output("per_type.csv"), report.per_type_csv());
  run.out << report.to_text();
}

bool cmd_grad_check(Run& run) {
  const auto& d = run.cfg.config;
  const auto started = std::chrono::steady_clock::now();
  const auto suite = grad_check_suite(d.at("configs").get<std::size_t>(), run.cfg.seed,
                                      d.at("epsilon").get<double>(), d.at("tolerance").get<double>(),
                                      d.at("corrupt").get<std::string>());
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ostringstream full;
  for (const auto& [label, report] : suite.runs) full << "# " << label << "\n" << report.to_text();
  write_text(run.output("gradcheck.txt"), full.str());
  run.out << suite.summary();
  if (!run.cfg.deterministic) run.out << "seconds " << seconds << "\n";
  return suite.passed();
}

void cmd_augment_preview(Run& run) {
  const fs::path dir = run.input("data");
  const auto train = load_split(dir, "target_train");
  std::vector<Words> docs;
  for (const auto& s : train.sentences) docs.push_back(s.words);
  const auto pairs =
      augment_batch(train.sentences, run.cfg.augment, fit_tfidf(docs), load_pack(dir).lexicon);
  auto join = [](const Words& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + w[i];
    return s;
  };
  std::ostringstream tsv;
  tsv << "index\toriginal\taugmented\n";
  const auto shown = std::min(pairs.size(), run.cfg.config.at("count").get<std::size_t>());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    tsv << i << '\t' << join(pairs[i].original) << '\t' << join(pairs[i].augmented) << '\n';
    if (i < shown) {
      run.out << "[" << i << "] " << join(pairs[i].original) << "\n    " << join(pairs[i].augmented)
              << "\n";
    }
  }
  write_text(run.output("augmented.tsv"), tsv.str());
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int execute(const Command& c, CLI::App& sub, Flags& f, std::ostream& out) {
  const Resolved cfg = typed(c, resolve_config(c, sub, f));
  json inputs = json::object();
  for (const auto& [flag, key, required] : c.inputs) {
    const std::string& value = *input_slot(f, key);
    if (value.empty()) continue;
    if (!fs::exists(value)) throw UsageError("input " + flag + " does not exist: " + value);
    inputs[key] = fs::absolute(value).lexically_normal().string();
  }
  RunManifest manifest;
  manifest.command = c.name;
  manifest.config = cfg.config;
  manifest.seed = cfg.seed;
  manifest.inputs = inputs;
  manifest.hash = config_hash({{"command", c.name}, {"config", cfg.config}, {"inputs", inputs}});
  manifest.timestamp = utc_now();

  const fs::path dir = f.run_dir.empty() ? default_run_root() / (c.name + "-" + manifest.hash.substr(0, 12))
                                         : fs::path(f.run_dir);
  fs::create_directories(dir);
  Run run{c, cfg, inputs, dir, out, {}};
  bool ok = true;
  if (c.name == "gen-corpus") cmd_gen_corpus(run);
  else if (c.name == "build-vocab") cmd_build_vocab(run);
  else if (c.name == "train-teacher") cmd_train_teacher(run);
  else if (c.name == "distill") cmd_distill(run);
  else if (c.name == "consistency-train") cmd_consistency(run);
  else if (c.name == "sweep-alpha") cmd_sweep(run);
  else if (c.name == "evaluate") cmd_evaluate(run);
  else if (c.name == "report") cmd_report(run);
  else if (c.name == "grad-check") ok = cmd_grad_check(run);
  else if (c.name == "augment-preview") cmd_augment_preview(run);

  manifest.outputs = run.outputs;
  write_text(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  out << "run directory: " << dir.string() << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-lingual NER: teacher/student distillation and consistency training", "xld"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  Flags flags;
  std::vector<std::pair<const Command*, CLI::App*>> subs;
  for (const auto& c : commands()) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_flags(*sub, c, flags);
    subs.emplace_back(&c, sub);
  }

  if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
      std::none_of(commands().begin(), commands().end(),
                   [&](const Command& c) { return c.name == args[0]; })) {
    err << "error: unknown subcommand '" << args[0] << "'\n\n" << app.help();
    return 2;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* failed = &app;
    for (auto& [c, sub] : subs) {
      if (sub->parsed()) failed = sub;
    }
    err << failed->help();
    return 2;
  }

  for (auto& [c, sub] : subs) {
    if (!sub->parsed()) continue;
    try {
      return execute(*c, *sub, flags, out);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  err << app.help();
  return 2;
}

}  // namespace xld
