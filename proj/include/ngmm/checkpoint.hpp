#pragma once

#include "ngmm/model.hpp"

#include <cstdint>
#include <string>

namespace ngmm {

struct Checkpoint {
  NgmmParams params;
  MarginalRule rule = MarginalRule::gauss_hermite(32);
  std::uint64_t seed = 0;
};

/// Text header (magic, family, architecture, rule, seed, record count, blank
/// line) followed by binary records: u32 name length, name bytes, u32 ndims,
/// u64 dims, little-endian f64 payload in column-major order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ngmm
