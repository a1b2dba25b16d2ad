#pragma once

#include "assimlab/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace assimlab {

using TensorMap = std::map<std::string, Tensor>;

// safetensors container: u64 little-endian header length, JSON header
// mapping names to {dtype, shape, data_offsets}, then the raw buffer.
// F32, F16 and BF16 entries are widened to float32 on read.
TensorMap read_safetensors(const std::filesystem::path& path);

// Writes F32 entries in name order, so identical maps give identical bytes.
void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors,
                       const std::map<std::string, std::string>& metadata = {});

}  // namespace assimlab
