#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "brushtrace/tensor.h"

namespace brushtrace {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct CheckpointHeader {
    std::uint64_t config_digest = 0;
    std::uint32_t epoch = 0;
    std::int32_t fold_id = -1;
    double val_accuracy = 0.0;
    std::string config_json;  // the ModelConfig, so a checkpoint is self-describing
};

struct CheckpointFile {
    CheckpointHeader header;
    std::vector<NamedTensor> tensors;
};

// Binary layout, all integers little-endian:
//
//   char[4]   magic "BTCK"
//   u16       format version (1)
//   u16       reserved, 0
//   u64       config digest (FNV-1a of the canonical config JSON)
//   u32       epoch
//   i32       fold id (-1 when not from a fold)
//   f64       validation accuracy (IEEE-754 binary64)
//   u32       config JSON length, then that many UTF-8 bytes
//   u32       tensor count
//   per tensor, in declaration order:
//     u16     name length, then name bytes
//     u8      rank
//     u32     dims[rank]
//     f32     values[numel], row-major, IEEE-754 binary32
//
// Values are stored at single precision; round_to_f32() applies the same
// rounding in memory so a reloaded checkpoint reproduces its evaluation.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(const std::string& bytes);

void round_to_f32(Tensor& t);

}  // namespace brushtrace
