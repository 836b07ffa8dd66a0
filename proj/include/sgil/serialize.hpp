#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sgil/dense.hpp"
#include "sgil/trainer.hpp"

namespace sgil {

using NamedTensor = std::pair<std::string, DenseMatrix>;

// Binary container: magic "SGILTNS1", u64 tensor count, then per tensor a
// u32 name length, the name bytes, u64 rows, u64 cols, and row-major
// little-endian doubles. Byte-identical for identical inputs.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const DenseMatrix*>>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

// A checkpoint is prefix.tns (parameters plus optimizer moments) and
// prefix.json (config echo and counters).
void save_checkpoint(const std::string& prefix, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& prefix);

}  // namespace sgil
