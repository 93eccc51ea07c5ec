#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "xld/charts.hpp"
#include "xld/cli.hpp"

using namespace xld;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

// Fresh scratch root, also used as $XLD_RUN_ROOT.
fs::path scratch(const std::string& name) {
  const fs::path root = fs::temp_directory_path() / ("xld_cli_" + name);
  fs::remove_all(root);
  fs::create_directories(root);
  setenv("XLD_RUN_ROOT", (root / "runs").c_str(), 1);
  return root;
}

// Small generated corpus plus vocabulary, shared by the training cases.
const fs::path& corpus() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / "xld_cli_corpus";
    fs::remove_all(r);
    const auto gen = cli({"gen-corpus", "--seed", "5", "--source-sentences", "40",
                          "--target-sentences", "12", "--target-val-sentences", "6",
                          "--target-test-sentences", "6", "--run-dir", (r / "data").string()});
    REQUIRE(gen.code == 0);
    const auto vocab = cli({"build-vocab", "--data", (r / "data").string(), "--min-freq", "1",
                            "--run-dir", (r / "vocab").string()});
    REQUIRE(vocab.code == 0);
    return r;
  }();
  return root;
}

std::vector<std::string> with_data(std::vector<std::string> args) {
  args.push_back("--data");
  args.push_back((corpus() / "data").string());
  args.push_back("--vocab");
  args.push_back((corpus() / "vocab" / "vocab.json").string());
  return args;
}

}  // namespace

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("usage errors exit 2 and write nothing") {
  const auto root = scratch("usage");
  auto r = cli({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("frobnicate") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);

  r = cli({"grad-check", "--no-such-flag"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);

  r = cli({});
  CHECK(r.code == 2);

  r = cli(with_data({"train-teacher", "--alpha", "1.5"}));
  CHECK(r.code == 2);
  CHECK(r.err.find("alpha") != std::string::npos);

  r = cli(with_data({"train-teacher", "--batch-size", "0"}));
  CHECK(r.code == 2);
  CHECK(r.err.find("batch_size") != std::string::npos);

  r = cli(with_data({"distill", "--teacher", "/nonexistent/teacher.ckpt"}));
  CHECK(r.code == 2);

  r = cli({"grad-check", "--precision", "32"});
  CHECK(r.code == 2);

  r = cli(with_data({"train-teacher", "--parity-mode", "--lr", "0.1"}));
  CHECK(r.code == 2);

  CHECK(!fs::exists(root / "runs"));
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("config precedence and manifest") {
  const auto root = scratch("precedence");
  const fs::path cfg = root / "cfg.json";
  std::ofstream(cfg) << R"({"train": {"epochs": 1, "alpha": 0.3, "batch_size": 16}, "seed": 4})";
  const auto r = cli(with_data({"train-teacher", "--config", cfg.string(), "--alpha", "0.5"}));
  REQUIRE(r.code == 0);

  // Run directory defaults to $XLD_RUN_ROOT/<command>-<hash>.
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root / "runs")) dirs.push_back(e.path());
  REQUIRE(dirs.size() == 1);
  CHECK(dirs[0].filename().string().rfind("train-teacher-", 0) == 0);

  const auto m = manifest(dirs[0]);
  CHECK(m["config"]["train"]["epochs"] == 1);
  CHECK(m["config"]["train"]["batch_size"] == 16);
  CHECK(m["config"]["train"]["alpha"] == 0.5);
  CHECK(m["config"]["train"]["learning_rate"] == 1e-3);
  CHECK(m["seed"] == 4);
  CHECK(m["config_hash"] ==
        config_hash({{"command", "train-teacher"}, {"config", m["config"]}, {"inputs", m["inputs"]}}));
  CHECK(fs::exists(dirs[0] / "model.ckpt"));
  CHECK(fs::exists(dirs[0] / "epochs.csv"));
  CHECK(fs::exists(dirs[0] / "charts" / "epochs.csv"));
  CHECK(fs::exists(dirs[0] / "charts" / "loss_teacher_alpha_1.svg"));
  CHECK(!fs::exists(dirs[0] / "charts" / "loss_combined.svg"));

  std::ofstream(root / "bad.json") << R"({"train": {"epoch": 3}})";
  const auto bad = cli(with_data({"train-teacher", "--config", (root / "bad.json").string()}));
  CHECK(bad.code == 2);
  CHECK(bad.err.find("train.epoch") != std::string::npos);

  const auto parity = cli(with_data({"consistency-train", "--parity-mode", "--epochs", "1", "--student",
                                     (dirs[0] / "model.ckpt").string(), "--run-dir",
                                     (root / "parity").string()}));
  REQUIRE(parity.code == 0);
  CHECK(manifest(root / "parity")["config"]["train"]["learning_rate"] == 2e-5);
}

TEST_CASE("reruns from a manifest are byte-identical") {
  const auto root = scratch("rerun");
  const auto first = cli(with_data({"train-teacher", "--baseline", "--epochs", "2", "--seed", "9",
                                    "--run-dir", (root / "a").string()}));
  REQUIRE(first.code == 0);
  const auto again = cli(with_data({"train-teacher", "--config", (root / "a" / "manifest.json").string(),
                                    "--run-dir", (root / "b").string()}));
  REQUIRE(again.code == 0);
  CHECK(slurp(root / "a" / "epochs.csv") == slurp(root / "b" / "epochs.csv"));
  CHECK(slurp(root / "a" / "model.ckpt") == slurp(root / "b" / "model.ckpt"));
  CHECK(manifest(root / "a")["config_hash"] == manifest(root / "b")["config_hash"]);

  const auto gen = [&](const std::string& dir) {
    return cli({"gen-corpus", "--seed", "2", "--source-sentences", "20", "--target-val-sentences", "4",
                "--target-test-sentences", "4", "--run-dir", (root / dir).string()});
  };
  REQUIRE(gen("g1").code == 0);
  REQUIRE(gen("g2").code == 0);
  for (const char* f : {"source_train.iob", "target_train.iob", "target_test.iob", "stats.csv"}) {
    CHECK(slurp(root / "g1" / f) == slurp(root / "g2" / f));
  }
}

TEST_CASE("pipeline commands") {
  const auto root = scratch("pipeline");
  auto run = [&](std::vector<std::string> args, const std::string& dir) {
    args.push_back("--run-dir");
    args.push_back((root / dir).string());
    const auto r = cli(with_data(args));
    INFO(r.err);
    REQUIRE(r.code == 0);
    return r;
  };
  run({"train-teacher", "--epochs", "1"}, "teacher");
  run({"distill", "--epochs", "1", "--teacher", (root / "teacher" / "model.ckpt").string()}, "kd");
  const auto student = (root / "kd" / "model.ckpt").string();
  run({"consistency-train", "--epochs", "1", "--student", student}, "ct");
  run({"train-teacher", "--baseline", "--epochs", "1", "--precision", "64"}, "naive");

  run({"sweep-alpha", "--epochs", "2", "--student", student, "--alphas", "0,0.2,0.5,0.8,1"}, "sweep");
  const auto csv = slurp(root / "sweep" / "sweep.csv");
  for (const char* a : {"consistency,0,", "consistency,0.2,", "consistency,0.5,", "consistency,0.8,",
                        "consistency,1,"}) {
    CHECK(csv.find(a) != std::string::npos);
  }
  std::size_t charts = 0;
  for (const auto& e : fs::directory_iterator(root / "sweep" / "charts")) charts += e.path().extension() == ".svg";
  CHECK(charts == 6);
  CHECK(fs::exists(root / "sweep" / "charts" / "loss_combined.svg"));

  const auto ev = run({"evaluate", "--model", student}, "eval");
  CHECK(ev.out.find("source") != std::string::npos);
  const auto metrics = nlohmann::json::parse(slurp(root / "eval" / "metrics.json"));
  CHECK(metrics.contains("target"));

  const auto rep = run({"report", "--teacher", (root / "teacher" / "model.ckpt").string(), "--student-kd",
                        student, "--student-kd-ct", (root / "ct" / "model.ckpt").string(), "--naive",
                        (root / "naive" / "model.ckpt").string()},
                       "report");
  CHECK(rep.out.find("naive_baseline") != std::string::npos);
  CHECK(fs::exists(root / "report" / "per_type.csv"));

  const auto aug = cli({"augment-preview", "--data", (corpus() / "data").string(), "--count", "2",
                        "--run-dir", (root / "aug").string()});
  CHECK(aug.code == 0);
  CHECK(fs::exists(root / "aug" / "augmented.tsv"));
}

TEST_CASE("grad-check command") {
  const auto root = scratch("gradcheck");
  const auto ok = cli({"grad-check", "--precision", "64", "--configs", "2", "--run-dir", (root / "ok").string()});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("layers.0.attn.q.weight") != std::string::npos);
  CHECK(ok.out.find("PASS") != std::string::npos);
  const auto bad = cli({"grad-check", "--configs", "1", "--corrupt", "head.weight", "--run-dir",
                        (root / "bad").string()});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL  head.weight") != std::string::npos);
}

TEST_CASE("loss charts") {
  const auto root = scratch("charts");
  CHECK_THROWS_AS(emit_loss_curves(root), std::runtime_error);

  std::vector<EpochRecord> records;
  for (std::size_t e = 1; e <= 4; ++e) {
    records.push_back({Phase::kConsistency, 0.8, 1, e, 1.0 / static_cast<double>(e), 0.9, 0.5, 0.4, 0.0});
  }
  write_epoch_csv(root / "epochs.csv", records, true);
  const auto charts = emit_loss_curves(root);
  REQUIRE(charts.size() == 1);
  const auto svg = slurp(charts[0]);
  CHECK(svg.rfind("<svg", 0) == 0);
  std::size_t lines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++lines;
  CHECK(lines == 2);
  CHECK(slurp(root / "charts" / "epochs.csv") == slurp(root / "epochs.csv"));

  emit_loss_curves(root);
  CHECK(slurp(charts[0]) == svg);
}
