#include "xld/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "xld/checkpoint.hpp"

namespace xld {

ModelConfig ModelConfig::teacher(std::size_t vocab_size, std::size_t k) {
  ModelConfig c;
  c.layers = 4;
  c.heads = 8;
  c.d_model = 128;
  c.d_ff = 512;
  c.vocab_size = vocab_size;
  c.k = k;
  return c;
}

ModelConfig ModelConfig::student(std::size_t vocab_size, std::size_t k) {
  ModelConfig c;
  c.layers = 2;
  c.heads = 4;
  c.d_model = 64;
  c.d_ff = 256;
  c.vocab_size = vocab_size;
  c.k = k;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (layers == 0) fail("layers must be positive");
  if (heads == 0 || d_model == 0) fail("heads and d_model must be positive");
  if (d_model % heads != 0) {
    fail("d_model " + std::to_string(d_model) + " not divisible by heads " + std::to_string(heads));
  }
  if (d_ff == 0) fail("d_ff must be positive");
  if (vocab_size <= static_cast<std::size_t>(kNumReserved)) fail("vocab_size too small");
  if (k < 1) fail("k must be positive");
  if (max_len == 0) fail("max_len must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"layers", layers},         {"heads", heads}, {"d_model", d_model},
          {"d_ff", d_ff},             {"vocab_size", vocab_size},
          {"k", k},                   {"max_len", max_len},
          {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  c.layers = doc.at("layers").get<std::size_t>();
  c.heads = doc.at("heads").get<std::size_t>();
  c.d_model = doc.at("d_model").get<std::size_t>();
  c.d_ff = doc.at("d_ff").get<std::size_t>();
  c.vocab_size = doc.at("vocab_size").get<std::size_t>();
  c.k = doc.at("k").get<std::size_t>();
  c.max_len = doc.at("max_len").get<std::size_t>();
  c.dropout = doc.at("dropout").get<double>();
  return c;
}

std::string role_name(Role role) { return role == Role::kTeacher ? "teacher" : "student"; }

Role parse_role(std::string_view name) {
  if (name == "teacher") return Role::kTeacher;
  if (name == "student") return Role::kStudent;
  throw std::invalid_argument("unknown role " + std::string(name));
}

Batch Batch::pack(std::span<const TokenizedExample* const> examples,
                  std::span<const std::size_t> word_limits) {
  if (!word_limits.empty() && word_limits.size() != examples.size()) {
    throw std::invalid_argument("word_limits must match the number of examples");
  }
  Batch b;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    const TokenizedExample& ex = *examples[e];
    const std::size_t base = b.ids.size();
    b.segments.push_back({base, ex.size()});
    b.ids.insert(b.ids.end(), ex.input_ids.begin(), ex.input_ids.end());
    b.mask.insert(b.mask.end(), ex.attention_mask.begin(), ex.attention_mask.end());
    for (std::size_t i = 0; i < ex.size(); ++i) b.positions.push_back(static_cast<int>(i));

    const std::size_t limit = word_limits.empty() ? ex.word_count : word_limits[e];
    const std::size_t word_base = b.word_rows.size();
    std::size_t taken = 0;
    for (std::size_t i = 0; i < ex.size() && taken < limit; ++i) {
      if (!ex.word_starts[i]) continue;
      b.word_rows.push_back(base + i);
      b.word_labels.push_back(ex.label_ids[i]);
      ++taken;
    }
    if (taken < limit) throw std::invalid_argument("word limit exceeds retained words");
    b.word_segments.push_back({word_base, taken});
  }
  return b;
}

template <typename T>
TransformerTagger<T>::TransformerTagger(const ModelConfig& config, Role role, std::uint64_t seed)
    : config_(config), role_(role) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.d_model;
  token_embed_ = add_param("embed.token", {config_.vocab_size, d}, rng, 'w');
  position_embed_ = add_param("embed.position", {config_.max_len, d}, rng, 'w');
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l) + ".";
    auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
      const std::size_t w = add_param(prefix + name + ".weight", {in, out}, rng, 'w');
      add_param(prefix + name + ".bias", {out}, rng, '0');
      return w;
    };
    auto norm = [&](const std::string& name) {
      const std::size_t g = add_param(prefix + name + ".gain", {d}, rng, '1');
      add_param(prefix + name + ".bias", {d}, rng, '0');
      return g;
    };
    LayerIndex li{};
    li.ln1 = norm("ln1");
    li.q = linear("attn.q", d, d);
    li.k = linear("attn.k", d, d);
    li.v = linear("attn.v", d, d);
    li.out = linear("attn.out", d, d);
    li.ln2 = norm("ln2");
    li.ffn_in = linear("ffn.in", d, config_.d_ff);
    li.ffn_out = linear("ffn.out", config_.d_ff, d);
    layers_.push_back(li);
  }
  final_ln_ = add_param("final_ln.gain", {d}, rng, '1');
  add_param("final_ln.bias", {d}, rng, '0');
  head_ = add_param("head.weight", {d, config_.k}, rng, 'w');
  add_param("head.bias", {config_.k}, rng, '0');
}

template <typename T>
std::size_t TransformerTagger<T>::add_param(const std::string& name, nn::Shape shape, Rng& rng,
                                            char init) {
  auto t = nn::Tensor<T>::zeros(std::move(shape), true);
  auto data = t.data();
  if (init == 'w') {
    for (auto& x : data) x = static_cast<T>(rng.truncated_normal(0.02));
  } else if (init == '1') {
    std::fill(data.begin(), data.end(), T(1));
  }
  params_.push_back({name, t});
  return params_.size() - 1;
}

template <typename T>
std::size_t TransformerTagger<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& prm : params_) n += prm.tensor.size();
  return n;
}

template <typename T>
nn::Tensor<T> TransformerTagger<T>::forward(const Batch& batch, Rng* rng) const {
  for (const auto& s : batch.segments) {
    if (s.length > config_.max_len) {
      throw std::invalid_argument("sequence length " + std::to_string(s.length) +
                                  " exceeds max_len " + std::to_string(config_.max_len));
    }
  }
  const double drop = rng ? config_.dropout : 0.0;
  auto dropout = [&](const nn::Tensor<T>& x) { return rng ? nn::dropout(x, drop, *rng) : x; };
  auto linear = [&](const nn::Tensor<T>& x, std::size_t w) {
    return nn::linear(x, p(w), p(w + 1));
  };
  auto norm = [&](const nn::Tensor<T>& x, std::size_t g) {
    return nn::layer_norm(x, p(g), p(g + 1));
  };

  auto x = nn::add(nn::embedding(p(token_embed_), batch.ids),
                   nn::embedding(p(position_embed_), batch.positions));
  x = dropout(x);
  for (const auto& li : layers_) {
    const auto h = norm(x, li.ln1);
    const auto a = nn::attention(linear(h, li.q), linear(h, li.k), linear(h, li.v), config_.heads,
                                 batch.segments, batch.mask);
    x = nn::add(x, dropout(linear(a, li.out)));
    const auto f = linear(nn::gelu(linear(norm(x, li.ln2), li.ffn_in)), li.ffn_out);
    x = nn::add(x, dropout(f));
  }
  return linear(norm(x, final_ln_), head_);
}

template <typename T>
ProbMatrix TransformerTagger<T>::predict(const TokenizedExample& example) const {
  const TokenizedExample* one[] = {&example};
  const auto batch = Batch::pack(one);
  const auto probs = nn::softmax(nn::detach(forward(batch)), 1);
  ProbMatrix out(example.size(), config_.k);
  std::copy(probs.ptr(), probs.ptr() + probs.size(), out.values.begin());
  for (std::size_t i = 0; i < example.size(); ++i) out.valid[i] = example.attention_mask[i];
  return out;
}

template <typename T>
std::vector<Tag> TransformerTagger<T>::predict_tags(const TokenizedExample& example) const {
  const auto probs = predict(example);
  std::vector<int> argmax(example.size());
  for (std::size_t i = 0; i < example.size(); ++i) {
    const auto row = probs.row(i);
    argmax[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return decode_tags(example, argmax);
}

template <typename T>
TransformerTagger<T> TransformerTagger<T>::clone() const {
  TransformerTagger copy = *this;
  for (auto& prm : copy.params_) {
    const auto values = std::vector<T>(prm.tensor.data().begin(), prm.tensor.data().end());
    prm.tensor = nn::Tensor<T>::from(prm.tensor.shape(), values, true);
  }
  return copy;
}

template <typename T>
void TransformerTagger<T>::zero_grad() {
  for (auto& prm : params_) prm.tensor.zero_grad();
}

template <typename T>
void TransformerTagger<T>::save(const std::filesystem::path& path) const {
  nn::save_checkpoint(path, params_, {{"config", config_.to_json()}, {"role", role_name(role_)}});
}

template <typename T>
TransformerTagger<T> TransformerTagger<T>::load(const std::filesystem::path& path,
                                                std::optional<std::size_t> expected_k) {
  const auto ckpt = nn::read_checkpoint(path);
  ModelConfig config;
  Role role;
  try {
    config = ModelConfig::from_json(ckpt.extra.at("config"));
    role = parse_role(ckpt.extra.at("role").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw nn::CheckpointError(std::string("checkpoint lacks a model config: ") + e.what());
  }
  if (expected_k && *expected_k != config.k) {
    throw nn::CheckpointError("checkpoint label count k=" + std::to_string(config.k) +
                              " but runtime label set has k=" + std::to_string(*expected_k));
  }
  TransformerTagger model(config, role, 0);
  nn::restore_parameters(ckpt, model.params_);
  return model;
}

int checkpoint_precision(const std::filesystem::path& path) {
  return nn::read_checkpoint(path).precision;
}

template class TransformerTagger<float>;
template class TransformerTagger<double>;

}  // namespace xld
