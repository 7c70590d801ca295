#ifndef DOWNSCALER_IO_FORMATS_HPP
#define DOWNSCALER_IO_FORMATS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "downscaler/tensor.hpp"

namespace downscaler::io {

// Named tensor, the unit of both binary container formats.
//
// CKPT checkpoint layout (little-endian throughout):
//   magic "CKPT" | version u16 | count u32 |
//   count x ( name_len u16 | name bytes | rank u8 | extents u32[rank] | f32[numel] )
//
// DSET dataset layout:
//   magic "DSET" | version u16 | count u32 | tensors as above |
//   split_index u32 | meta_len u32 | metadata JSON bytes (UTF-8)
struct NamedTensor {
    std::string name;
    Tensor value;
};

struct DsetFile {
    std::vector<NamedTensor> tensors;
    std::uint32_t split_index = 0;
    std::string metadata_json;
};

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

void write_dset(const std::string& path, const DsetFile& file);
DsetFile read_dset(const std::string& path);

// nullptr when absent.
const Tensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
const Tensor& require_tensor(const std::vector<NamedTensor>& tensors, const std::string& name,
                             const std::string& path);

// 8-bit binary PGM (P5). Grayscale is an affine rescale of log1p(field) to
// [0,255]; the rescale bounds go into the comment line so the map can be
// inverted.
void write_pgm(const std::string& path, const Tensor& field);

// Shortest round-trip-ish decimal formatting used by every emitted text file,
// so identical runs produce identical bytes.
std::string format_double(double v);

} // namespace downscaler::io

#endif
