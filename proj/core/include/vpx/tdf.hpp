#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "vpx/tensor.hpp"

namespace vpx {

// Binary tensor container. Layout, all little-endian:
//   magic "TDF1" | u8 dtype (0 = float32) | u8 rank | rank x u32 extents |
//   row-major float payload.
// Archive layout: u32 entry count, then per entry u16 name length, name bytes
// (UTF-8), and a full record as above. Entry order is preserved so identical
// archives are byte-identical.
void write_tdf(std::ostream& os, const Tensor& t);
Tensor read_tdf(std::istream& is);

void save_tdf(const std::string& path, const Tensor& t);
Tensor load_tdf(const std::string& path);

using TensorArchive = std::vector<std::pair<std::string, Tensor>>;

void write_archive(std::ostream& os, const TensorArchive& entries);
TensorArchive read_archive(std::istream& is);

void save_archive(const std::string& path, const TensorArchive& entries);
TensorArchive load_archive(const std::string& path);

// Returns a pointer into the archive or null; archives may hold duplicate
// names only through deliberate misuse, the first match wins.
const Tensor* find_entry(const TensorArchive& entries, const std::string& name);

}  // namespace vpx
