#pragma once

#include <string>

#include "grd/model.hpp"

namespace grd {

/// Binary checkpoint, little-endian:
///   magic "GRDM" | version u32 | max_dim u32 | d_model u32 | n_blocks u32 |
///   n_heads u32 | flags u32 (bit 0: second attention unmasked) |
///   kind (u16 length + bytes) |
///   norm stats (max_dim u32, mean f64[3*max_dim], std f64[3*max_dim]) |
///   tensor count u32, then per tensor: name (u16 + bytes), rows u32,
///   cols u32, f64 data | CRC-32 of everything before it.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace grd
