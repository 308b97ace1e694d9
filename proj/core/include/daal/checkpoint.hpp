#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "daal/tensor.hpp"

namespace daal::cli {

/// Checkpoint file: magic "DAAL", u32 format version, u64 config hash, then
/// named tensor fragments until end of file. The resolved config text is
/// written alongside as "<path>.config" for humans and for model-shape
/// recovery.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, std::uint64_t config_hash,
                     const std::vector<std::pair<std::string, nd::Tensor>>&
                         tensors);

struct LoadedCheckpoint {
    std::uint64_t config_hash = 0;
    std::map<std::string, nd::Tensor> tensors;
};

/// Verifies magic and version; corrupt files are reported with the byte
/// offset of the failure.
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace daal::cli
