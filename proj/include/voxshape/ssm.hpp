// ssm.hpp - statistical shape model on registered voxel grids.
//
// A model is a mean shape plus C modes of variation, one row of `modes`
// per mode over all reference-space voxels. Shapes are mapped to weights
// by projection and back by `mean + weights * modes`.
#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxshape/grid.hpp"

namespace voxshape {

using ModeMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModeNormalization {
  unit,           // orthonormal principal directions
  pseudo_inverse  // PCA scores times the pseudo-inverse of the training matrix
};

std::string to_string(ModeNormalization n);
ModeNormalization mode_normalization_from_string(const std::string& s);

struct ShapeModel {
  VoxelGrid mean;
  ModeMatrix modes;                     // num_modes x voxel_count
  std::vector<double> singular_values;  // of the centred training matrix, per mode
  std::vector<bool> near_zero;          // singular value < 1e-10 * largest
  std::vector<std::string> training_ids;
  bool centered = true;                 // projection subtracts the mean
  ModeNormalization normalization = ModeNormalization::unit;

  std::size_t num_modes() const noexcept { return static_cast<std::size_t>(modes.rows()); }
  const Geometry& reference() const noexcept { return mean.geometry(); }
  // Modes with a non-negligible singular value.
  std::size_t rank() const noexcept;
};

struct WeightVector {
  std::vector<double> values;
  bool rescaled = false;
  double rescale_min = 0.0;  // raw bounds, valid when rescaled
  double rescale_max = 0.0;

  // Values on the raw (un-rescaled) scale.
  std::vector<double> raw() const;
  static WeightVector unit(std::size_t num_modes);
};

// Min-max rescale of raw weights to [0,1]. Throws DegenerateInputError when
// all weights are equal.
WeightVector rescale_weights(const WeightVector& raw);

// Voxelwise arithmetic mean of grids sharing one lattice.
VoxelGrid mean_shape(const std::vector<VoxelGrid>& warped);

struct FitOptions {
  bool centered = true;
  ModeNormalization normalization = ModeNormalization::unit;
  std::vector<std::string> training_ids;  // defaults to "0", "1", ...
};

// PCA through the eigen-decomposition of the N x N Gram matrix of the
// mean-centred training data. Each mode is oriented so that its
// largest-magnitude entry is positive; near-zero modes are zero rows.
ShapeModel fit_modes(const std::vector<VoxelGrid>& warped, std::size_t num_modes,
                     const FitOptions& options = {});

WeightVector project(const ShapeModel& model, const VoxelGrid& shape, bool rescale = false);

enum class ReconstructionForm {
  matrix,    // mean + weights * modes as one matrix product
  summation  // mean + sum_i weights_i * mode_i, one mode at a time
};

struct ReconstructOptions {
  // Apply rescaled weights as they are instead of inverting the rescale.
  bool literal_rescaled = false;
  bool binarize = false;  // >= 0.5 -> 1
  ReconstructionForm form = ReconstructionForm::matrix;
};

VoxelGrid reconstruct(const ShapeModel& model, const WeightVector& weights,
                      const ReconstructOptions& options = {});

// weights * modes without the mean shape.
VoxelGrid modes_only_reconstruct(const ShapeModel& model, const WeightVector& weights,
                                 const ReconstructOptions& options = {});

struct ModeStatistics {
  std::size_t mode = 0;
  double mean_weight = 0.0;
  double min_weight = 0.0;
  double max_weight = 0.0;
  double roi_energy_fraction = 0.0;  // sum of squared mode entries inside the ROI / total
  bool near_zero = false;
};

// Raw projected weights summarised per mode over test_shapes. Without an
// ROI the whole grid is used.
std::vector<ModeStatistics> mode_report(const ShapeModel& model, const std::vector<VoxelGrid>& test_shapes,
                                        const std::optional<VoxelGrid>& roi = std::nullopt);

// Directory layout: mean.nrrd, modes.bin (float64, little-endian,
// row-major), model.json.
void save_model(const ShapeModel& model, const std::filesystem::path& dir);
ShapeModel load_model(const std::filesystem::path& dir);

}  // namespace voxshape
