#include "daal/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "daal/serialize.hpp"

namespace daal::cli {

namespace {
constexpr char kMagic[4] = {'D', 'A', 'A', 'L'};
}

void save_checkpoint(
    const std::string& path, std::uint64_t config_hash,
    const std::vector<std::pair<std::string, nd::Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("checkpoint: cannot open " + path +
                                 " for writing");
    }
    os.write(kMagic, 4);
    nd::write_u32(os, kCheckpointVersion);
    nd::write_u64(os, config_hash);
    for (const auto& [name, tensor] : tensors) {
        nd::write_fragment(os, name, tensor);
    }
    if (!os) {
        throw std::runtime_error("checkpoint: write failed for " + path);
    }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("checkpoint: cannot open " + path);
    }
    std::uint64_t offset = 0;
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != std::string(kMagic, 4)) {
        throw std::runtime_error("checkpoint: bad magic at offset 0 in " +
                                 path);
    }
    offset = 4;
    const std::uint32_t version = nd::read_u32(is, offset);
    if (version != kCheckpointVersion) {
        throw std::runtime_error(
            "checkpoint: unsupported version " + std::to_string(version) +
            " at offset 4 in " + path);
    }
    LoadedCheckpoint out;
    out.config_hash = nd::read_u64(is, offset);
    while (true) {
        is.peek();
        if (is.eof()) break;
        auto [name, tensor] = nd::read_fragment(is, offset);
        if (out.tensors.count(name)) {
            throw std::runtime_error("checkpoint: duplicate tensor '" + name +
                                     "' near offset " + std::to_string(offset));
        }
        out.tensors.emplace(std::move(name), std::move(tensor));
    }
    return out;
}

} // namespace daal::cli
