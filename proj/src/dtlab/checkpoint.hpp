#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dtlab/tensor.hpp"

namespace dtlab {

// Named tensors plus an opaque UTF-8 metadata blob (JSON by convention).
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> entries;
    std::string metadata;

    void add(std::string name, Tensor value);
    bool contains(const std::string& name) const;
    const Tensor& at(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[9] = "CWARP001";

// Layout (little-endian): magic[8] | u32 count | count x (u32 name_len, name,
// u32 ndim, u32 dims[ndim], f64 data[numel]) | u32 meta_len, meta.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dtlab
