// completion.hpp - completing defective shapes by template subtraction or SSM.
//
// Both routes register the defective shape y into the reference space
// (y' = Tr(y)), build a complete estimate there, take the implant as the
// clamped difference estimate - y', and map implant + y' back with the
// inverse transform.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voxshape/grid.hpp"
#include "voxshape/registration.hpp"
#include "voxshape/ssm.hpp"
#include "voxshape/transform.hpp"

namespace voxshape {

enum class CompletionMethod { template_single, template_mean, ssm, ssm_external };

std::string to_string(CompletionMethod m);
CompletionMethod completion_method_from_string(const std::string& s);

struct Template {
  VoxelGrid grid;  // binary, reference space
  CompletionMethod kind = CompletionMethod::template_single;
  std::vector<std::string> source_ids;
  double threshold = 0.5;  // binarisation threshold of a mean template
};

Template make_template(const VoxelGrid& shape, const std::string& id = "reference");
// Mean of the shapes binarised at `threshold` (mean >= threshold kept).
Template make_template(const std::vector<VoxelGrid>& warped, double threshold = 0.5,
                       std::vector<std::string> ids = {});

struct CompletionResult {
  VoxelGrid warped_input;         // y'
  VoxelGrid implant_reference;    // y_m
  VoxelGrid completed_reference;  // y_m + y'
  VoxelGrid completed_original;   // y_c
  RegistrationReport registration;
  CompletionMethod method = CompletionMethod::template_single;
  std::optional<WeightVector> weights;  // SSM routes only, as applied

  // Inverse of the registration, resampling onto the defective input's lattice.
  SimilarityTransform to_original() const;
};

CompletionResult complete_by_template(const VoxelGrid& defective, const Template& tmpl,
                                      const RegistrationConfig& registration = {});

enum class ExternalSpace { original, reference };

struct SsmCompletionOptions {
  // Shape the defective input is registered to; defaults to the mean
  // shape binarised at 0.5.
  std::optional<VoxelGrid> registration_target;
  // Completed shape supplying the weights instead of y' itself.
  std::optional<VoxelGrid> external;
  ExternalSpace external_space = ExternalSpace::original;
  // Apply min-max rescaled weights verbatim in the reconstruction.
  bool paper_rescale = false;
  double binarize_threshold = 0.5;
  RegistrationConfig registration;
};

CompletionResult complete_by_ssm(const VoxelGrid& defective, const ShapeModel& model,
                                 const SsmCompletionOptions& options = {});

}  // namespace voxshape
