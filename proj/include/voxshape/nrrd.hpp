// nrrd.hpp - minimal NRRD reader/writer for 3D scalar volumes.
//
// Supported: NRRD0001-0005 attached headers, `raw` and `gzip` encodings,
// uint8/int16/uint16/float/double scalars, little-endian payloads.
// Everything else is rejected with UnsupportedFormatError.
#pragma once

#include <filesystem>
#include <string>

#include "voxshape/grid.hpp"

namespace voxshape {

struct NrrdReadOptions {
  bool binarize = false;  // value > 0.5 -> 1, else 0
};

enum class NrrdEncoding { raw, gzip };

struct NrrdWriteOptions {
  NrrdEncoding encoding = NrrdEncoding::raw;
};

VoxelGrid read_nrrd(const std::filesystem::path& path, const NrrdReadOptions& options = {});

// Binary grids are stored as uint8, anything else as double.
void write_nrrd(const VoxelGrid& grid, const std::filesystem::path& path,
                const NrrdWriteOptions& options = {});

// In-memory variants used by the file functions; exposed for tests.
VoxelGrid parse_nrrd(const std::string& bytes, const NrrdReadOptions& options = {});
std::string serialize_nrrd(const VoxelGrid& grid, const NrrdWriteOptions& options = {});

}  // namespace voxshape
