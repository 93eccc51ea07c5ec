#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "xld/tensor.hpp"

namespace xld::nn {

// File layout: "XLDCKPT1", u64 manifest length (LE), manifest JSON, then
// the raw little-endian parameter buffers in manifest order.
inline constexpr char kCheckpointMagic[] = "XLDCKPT1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawParameter {
  std::string name;
  Shape shape;
  std::vector<unsigned char> bytes;
};

struct Checkpoint {
  int precision = 32;  // bits per element
  nlohmann::json extra;  // caller metadata (model config, role, ...)
  std::vector<RawParameter> parameters;
};

template <typename T>
constexpr int precision_bits() {
  return static_cast<int>(sizeof(T) * 8);
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter<T>>& params,
                     const nlohmann::json& extra);

// Reads and validates the whole file; throws CheckpointError on any damage.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies checkpoint buffers into `params`, matching by name and shape.
// Nothing is written unless every parameter matches.
template <typename T>
void restore_parameters(const Checkpoint& ckpt, std::vector<Parameter<T>>& params);

}  // namespace xld::nn
