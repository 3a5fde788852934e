#pragma once

#include <string>

#include "octseg/volume.hpp"

namespace octseg {

// MetaImage (.mhd + .raw) I/O.
//
// Header: ASCII "Key = Value" lines. Required keys: NDims (= 3), DimSize,
// ElementSpacing, ElementType (MET_UCHAR | MET_SHORT | MET_USHORT | MET_FLOAT),
// ElementDataFile. Payload is little-endian, x-fastest. ElementDataFile may be
// LOCAL (payload follows the header) or a file name resolved next to the header.
//
// Errors: missing/garbled required key -> RuntimeError naming the key;
// payload size != product(DimSize) * element size -> RuntimeError (truncation).

Volume read_metaimage(const std::string &path);
void write_metaimage(const Volume &v, const std::string &path);

// Masks are stored as MET_UCHAR. Reading validates labels are in {0,1,2,3}.
LabelMask read_mask(const std::string &path);
void write_mask(const LabelMask &m, const std::string &path);

// Conversion helpers shared by mask I/O and resampling.
LabelMask volume_to_mask(const Volume &v);
Volume mask_to_volume(const LabelMask &m);

}  // namespace octseg
