#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "xld/checkpoint.hpp"
#include "xld/model.hpp"

using xld::Batch;
using xld::ModelConfig;
using xld::Role;
using xld::TokenizedExample;
using xld::TransformerTagger;

namespace {

TokenizedExample random_example(xld::Rng& rng, std::size_t length, std::size_t vocab) {
  TokenizedExample ex;
  for (std::size_t i = 0; i < length; ++i) {
    ex.input_ids.push_back(static_cast<int>(xld::kNumReserved + rng.index(vocab - xld::kNumReserved)));
    ex.attention_mask.push_back(1);
    ex.word_starts.push_back(1);
    ex.label_ids.push_back(static_cast<int>(rng.index(xld::kNumTags)));
  }
  ex.word_count = length;
  return ex;
}

ModelConfig small(std::size_t vocab = 40) {
  ModelConfig c = ModelConfig::student(vocab);
  c.layers = 1;
  c.d_model = 16;
  c.heads = 2;
  c.d_ff = 32;
  c.max_len = 16;
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("xld_test_" + name);
}

}  // namespace

TEST_CASE("config validation and presets") {
  CHECK_NOTHROW(ModelConfig::teacher(100).validate());
  ModelConfig bad = ModelConfig::student(100);
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(ModelConfig::from_json(ModelConfig::teacher(77).to_json()) == ModelConfig::teacher(77));

  const TransformerTagger<float> teacher(ModelConfig::teacher(500), Role::kTeacher, 1);
  const TransformerTagger<float> student(ModelConfig::student(500), Role::kStudent, 1);
  CHECK(student.param_count() < teacher.param_count());
  // Closed-form count for the student preset.
  const std::size_t d = 64, f = 256, v = 500, k = 25, len = 64;
  const std::size_t layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
  CHECK(student.param_count() == v * d + len * d + 2 * layer + 2 * d + d * k + k);
}

TEST_CASE("parameter names are unique") {
  const TransformerTagger<float> m(ModelConfig::teacher(50), Role::kTeacher, 1);
  std::set<std::string> names;
  for (const auto& p : m.parameters()) CHECK(names.insert(p.name).second);
}

TEST_CASE("forward shape, determinism and masking") {
  xld::Rng rng(1);
  const auto cfg = small();
  const TransformerTagger<double> model(cfg, Role::kStudent, 7);
  const TransformerTagger<double> twin(cfg, Role::kStudent, 7);
  auto ex = random_example(rng, 9, cfg.vocab_size);
  const TokenizedExample* one[] = {&ex};
  const auto logits = model.forward(Batch::pack(one));
  CHECK(logits.shape() == xld::nn::Shape{9, 25});
  const auto again = twin.forward(Batch::pack(one));
  CHECK(std::equal(logits.data().begin(), logits.data().end(), again.data().begin()));

  ex.attention_mask[4] = 0;
  auto changed = ex;
  changed.input_ids[4] = xld::kNumReserved;
  const TokenizedExample* a[] = {&ex};
  const TokenizedExample* b[] = {&changed};
  const auto la = model.forward(Batch::pack(a));
  const auto lb = model.forward(Batch::pack(b));
  for (std::size_t i = 0; i < 9; ++i) {
    if (i == 4) continue;
    for (std::size_t j = 0; j < 25; ++j) CHECK(la.data()[i * 25 + j] == lb.data()[i * 25 + j]);
  }

  ex.input_ids[0] = static_cast<int>(cfg.vocab_size);
  CHECK_THROWS_AS(model.forward(Batch::pack(a)), std::out_of_range);
}

TEST_CASE("packed sentences do not interact") {
  xld::Rng rng(2);
  const auto cfg = small();
  const TransformerTagger<double> model(cfg, Role::kStudent, 3);
  const auto x = random_example(rng, 5, cfg.vocab_size);
  const auto y = random_example(rng, 7, cfg.vocab_size);
  const TokenizedExample* both[] = {&x, &y};
  const TokenizedExample* only[] = {&y};
  const auto packed = model.forward(Batch::pack(both));
  const auto alone = model.forward(Batch::pack(only));
  for (std::size_t i = 0; i < 7 * 25; ++i) {
    CHECK(packed.data()[5 * 25 + i] == doctest::Approx(alone.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("untrained predictions are near uniform") {
  const auto cfg = small();
  double total_max = 0.0;
  std::size_t rows = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    xld::Rng rng(seed);
    const TransformerTagger<double> model(cfg, Role::kStudent, seed);
    const auto ex = random_example(rng, 10, cfg.vocab_size);
    const auto p = model.predict(ex);
    for (std::size_t i = 0; i < p.rows; ++i) {
      double sum = 0.0;
      for (double v : p.row(i)) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-6);
      total_max += *std::max_element(p.row(i).begin(), p.row(i).end());
      ++rows;
    }
  }
  CHECK(rows == 100);
  CHECK(total_max / static_cast<double>(rows) < 0.25);
}

TEST_CASE("predict flags padding rows and rejects overlong input") {
  xld::Rng rng(3);
  const auto cfg = small();
  const TransformerTagger<float> model(cfg, Role::kStudent, 1);
  auto ex = random_example(rng, 6, cfg.vocab_size);
  ex.attention_mask[5] = 0;
  const auto p = model.predict(ex);
  CHECK(p.valid[5] == 0);
  CHECK(p.valid[0] == 1);
  const auto longer = random_example(rng, cfg.max_len + 1, cfg.vocab_size);
  CHECK_THROWS_AS(model.predict(longer), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bitwise") {
  xld::Rng rng(4);
  const auto cfg = small();
  const TransformerTagger<float> model(cfg, Role::kTeacher, 11);
  const auto path = temp_file("ckpt.bin");
  model.save(path);
  const auto loaded = TransformerTagger<float>::load(path, 25);
  CHECK(loaded.config() == cfg);
  CHECK(loaded.role() == Role::kTeacher);
  for (int t = 0; t < 5; ++t) {
    const auto ex = random_example(rng, 3 + rng.index(10), cfg.vocab_size);
    CHECK(model.predict(ex).values == loaded.predict(ex).values);
  }
  // Saving the loaded copy reproduces the file byte for byte.
  const auto again = temp_file("ckpt2.bin");
  loaded.save(again);
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(bytes(path) == bytes(again));

  try {
    (void)TransformerTagger<float>::load(path, 9);
    FAIL("k mismatch accepted");
  } catch (const xld::nn::CheckpointError& e) {
    const std::string what = e.what();
    CHECK(what.find("25") != std::string::npos);
    CHECK(what.find("9") != std::string::npos);
  }
  CHECK_THROWS_AS(TransformerTagger<double>::load(path), xld::nn::CheckpointError);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 1);
  CHECK_THROWS_AS(TransformerTagger<float>::load(path), xld::nn::CheckpointError);
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("clone is deep") {
  const TransformerTagger<float> model(small(), Role::kStudent, 1);
  auto copy = model.clone();
  copy.parameters()[0].tensor.data()[0] += 1.0f;
  CHECK(copy.parameters()[0].tensor.data()[0] != model.parameters()[0].tensor.data()[0]);
}
