#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cdpcl/numerics/tensor.hpp"

namespace cdpcl {

/// Binary tensor archive, little-endian:
///   "CDPT" | version u32 | count u32 |
///   per tensor: name_len u32 | name bytes (UTF-8) | rank u32 | dims u32[rank] | f64[numel]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in, const std::string& source = "<stream>");

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Throws DataError when the name is missing.
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace cdpcl
