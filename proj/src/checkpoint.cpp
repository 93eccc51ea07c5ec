#include "xld/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace xld::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint buffers are written in host order; big-endian hosts unsupported");

namespace {

constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic) - 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter<T>>& params,
                     const nlohmann::json& extra) {
  nlohmann::json manifest;
  manifest["precision"] = precision_bits<T>();
  manifest["extra"] = extra;
  manifest["parameters"] = nlohmann::json::array();
  std::set<std::string> seen;
  std::size_t offset = 0;
  for (const auto& p : params) {
    if (!seen.insert(p.name).second) throw CheckpointError("duplicate parameter name " + p.name);
    const std::size_t bytes = p.tensor.size() * sizeof(T);
    manifest["parameters"].push_back(
        {{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  const std::string text = manifest.dump();
  std::string header(kCheckpointMagic, kMagicSize);
  put_u64(header, text.size());
  header += text;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : params) {
    out.write(reinterpret_cast<const char*>(p.tensor.ptr()),
              static_cast<std::streamsize>(p.tensor.size() * sizeof(T)));
  }
  if (!out) throw CheckpointError("short write to " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (file.size() < kMagicSize + 8 || std::memcmp(file.data(), kCheckpointMagic, kMagicSize) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  const std::uint64_t manifest_size = get_u64(file.data() + kMagicSize);
  const std::size_t body = kMagicSize + 8;
  if (manifest_size > file.size() - body) throw CheckpointError("truncated checkpoint manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(file.begin() + static_cast<std::ptrdiff_t>(body),
                                     file.begin() + static_cast<std::ptrdiff_t>(body + manifest_size));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
  }

  Checkpoint ckpt;
  std::size_t expected = 0;
  try {
    ckpt.precision = manifest.at("precision").get<int>();
    if (ckpt.precision != 32 && ckpt.precision != 64) {
      throw CheckpointError("unsupported precision " + std::to_string(ckpt.precision));
    }
    ckpt.extra = manifest.value("extra", nlohmann::json::object());
    const std::size_t element = static_cast<std::size_t>(ckpt.precision / 8);
    const std::size_t data_start = body + manifest_size;
    for (const auto& entry : manifest.at("parameters")) {
      RawParameter raw;
      raw.name = entry.at("name").get<std::string>();
      raw.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto bytes = entry.at("bytes").get<std::size_t>();
      if (bytes != shape_size(raw.shape) * element) {
        throw CheckpointError("manifest size mismatch for " + raw.name);
      }
      if (offset != expected) throw CheckpointError("non-contiguous buffer for " + raw.name);
      expected += bytes;
      if (data_start + expected > file.size()) throw CheckpointError("truncated checkpoint data");
      raw.bytes.assign(file.begin() + static_cast<std::ptrdiff_t>(data_start + offset),
                       file.begin() + static_cast<std::ptrdiff_t>(data_start + offset + bytes));
      ckpt.parameters.push_back(std::move(raw));
    }
    if (data_start + expected != file.size()) {
      throw CheckpointError("checkpoint has " + std::to_string(file.size() - data_start - expected) +
                            " trailing bytes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
  }
  return ckpt;
}

template <typename T>
void restore_parameters(const Checkpoint& ckpt, std::vector<Parameter<T>>& params) {
  if (ckpt.precision != precision_bits<T>()) {
    throw CheckpointError("checkpoint precision " + std::to_string(ckpt.precision) +
                          " differs from runtime precision " + std::to_string(precision_bits<T>()));
  }
  if (ckpt.parameters.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.parameters.size()) +
                          " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& raw = ckpt.parameters[i];
    if (raw.name != params[i].name) {
      throw CheckpointError("parameter " + std::to_string(i) + " is " + raw.name + ", expected " +
                            params[i].name);
    }
    if (raw.shape != params[i].tensor.shape()) {
      throw CheckpointError("shape mismatch for " + raw.name + ": " + shape_string(raw.shape) +
                            " vs " + shape_string(params[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& raw = ckpt.parameters[i];
    if (!raw.bytes.empty()) std::memcpy(params[i].tensor.ptr(), raw.bytes.data(), raw.bytes.size());
  }
}

template void save_checkpoint<float>(const std::filesystem::path&,
                                     const std::vector<Parameter<float>>&, const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&,
                                      const std::vector<Parameter<double>>&, const nlohmann::json&);
template void restore_parameters<float>(const Checkpoint&, std::vector<Parameter<float>>&);
template void restore_parameters<double>(const Checkpoint&, std::vector<Parameter<double>>&);

}  // namespace xld::nn
