#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mvcc/tensor.hpp"

namespace mvcc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian binary container: magic "MVCC", version u32, tensor count u32,
// then per tensor: name length u16 + UTF-8 name, rank u8, dims as u64,
// payload as f64 row-major. Round trips are bit-exact.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

// Preserves file order. Loaded tensors do not require grad.
// Throws ConfigError on bad magic or unsupported version, IngestionError on
// unreadable or truncated files.
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

}  // namespace mvcc
