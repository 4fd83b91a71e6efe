// postprocess.hpp - turning a raw subtraction result into a clean implant.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxshape/grid.hpp"

namespace voxshape {

// Voxelwise median over a kernel^3 cube, zero outside the lattice.
// Throws ArgumentError for even or non-positive kernels.
VoxelGrid median_filter(const VoxelGrid& grid, int kernel);

// Discrete ball {d : |d|^2 <= radius^2} in voxel units.
VoxelGrid erode(const VoxelGrid& grid, int radius);
VoxelGrid dilate(const VoxelGrid& grid, int radius);
// Erosion then dilation; radius 0 is the identity.
VoxelGrid morphological_opening(const VoxelGrid& grid, int radius);

struct Components {
  Geometry geometry;
  std::vector<std::int32_t> labels;  // 0 background, 1..count()
  std::vector<std::size_t> sizes;    // sizes[l - 1] voxels carry label l

  std::size_t count() const noexcept { return sizes.size(); }
  VoxelGrid mask(std::int32_t label) const;
};

// Labels are ordered by descending size, ties by smallest linear index.
Components connected_components(const VoxelGrid& grid, int connectivity = 26);

enum class ComponentSelection {
  automatic,   // max_overlap when a hint is given, else largest
  largest,
  max_overlap  // per hint component, the component overlapping it most
};

std::string to_string(ComponentSelection s);
ComponentSelection component_selection_from_string(const std::string& s);

struct PostprocessConfig {
  int median_kernel = 3;
  int opening_radius = 1;
  int connectivity = 26;
  // Geodesic dilation steps that grow the selected pieces back inside the
  // (erased) raw input, recovering rims the median and opening wore off.
  int restore_steps = 2;
  ComponentSelection selection = ComponentSelection::automatic;
  std::optional<VoxelGrid> erase_mask;

  void validate() const;
};

struct StageRecord {
  std::string stage;
  std::size_t voxels = 0;
};

struct ExtractionResult {
  VoxelGrid implant;
  std::vector<StageRecord> stages;
  std::size_t pieces = 0;  // components kept
};

// erase -> median -> opening -> components -> selection -> restore. Throws
// EmptyImplantError naming the stage that left nothing behind.
ExtractionResult extract_implant(const VoxelGrid& raw, const PostprocessConfig& config,
                                 const std::optional<VoxelGrid>& defect_hint = std::nullopt);

}  // namespace voxshape
