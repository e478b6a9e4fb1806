#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "factr/model/model.hpp"
#include "json.hpp"

namespace factr::model {

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

struct CheckpointTensor {
  std::string name;
  DType dtype = DType::F32;
  ad::Shape shape;
  std::vector<double> values;  // widened copy; narrowing back to F32 is exact

  std::size_t numel() const { return values.size(); }
};

/// File layout, all integers little-endian:
///   magic "FACTRCKP", u32 version, u64 header length, header JSON
///   ({"model": ModelConfig, "meta": ...}), u64 tensor count, then per tensor
///   u32 name length, name, u8 dtype, u32 ndim, u64 dims..., raw values.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  nlohmann::json header;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  ModelConfig model_config() const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Snapshot of a model. Tensors whose name starts with one of `skip_prefixes`
/// are left out (an encoder-only checkpoint skips "head.").
template <typename Real>
Checkpoint make_checkpoint(const FaCTRModel<Real>& model, const nlohmann::json& meta = nlohmann::json::object(),
                           const std::vector<std::string>& skip_prefixes = {});

/// Copies matching tensors into the model. Every checkpoint tensor must
/// exist in the model with the same shape; model tensors absent from the
/// checkpoint are allowed only when they start with one of `optional_prefixes`.
/// Returns the names that were loaded.
template <typename Real>
std::vector<std::string> load_into(FaCTRModel<Real>& model, const Checkpoint& ckpt,
                                   const std::vector<std::string>& optional_prefixes = {});

/// Rebuilds the model described by the header and loads every tensor.
template <typename Real>
FaCTRModel<Real> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace factr::model
