#pragma once

// Versioned binary checkpoint: magic, format version, configuration echo,
// string metadata and named tensors with shapes, closed by a checksum.

#include "hsn/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace hsn {

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'N', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::map<std::string, std::string> meta;
  std::map<std::string, Matrix> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IntegrityError on a bad magic, version or checksum.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace hsn
