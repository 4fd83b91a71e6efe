#include "voxshape/completion.hpp"

#include "voxshape/error.hpp"

namespace voxshape {

std::string to_string(CompletionMethod m) {
  switch (m) {
    case CompletionMethod::template_single: return "template-single";
    case CompletionMethod::template_mean: return "template-mean";
    case CompletionMethod::ssm: return "ssm";
    case CompletionMethod::ssm_external: return "ssm-external";
  }
  return "template-single";
}

CompletionMethod completion_method_from_string(const std::string& s) {
  if (s == "template-single") return CompletionMethod::template_single;
  if (s == "template-mean") return CompletionMethod::template_mean;
  if (s == "ssm") return CompletionMethod::ssm;
  if (s == "ssm-external") return CompletionMethod::ssm_external;
  throw ArgumentError("unknown completion method '" + s + "'");
}

Template make_template(const VoxelGrid& shape, const std::string& id) {
  if (!shape.is_binary()) throw ArgumentError("make_template: single-shape template must be binary");
  return {shape, CompletionMethod::template_single, {id}, 0.5};
}

Template make_template(const std::vector<VoxelGrid>& warped, double threshold, std::vector<std::string> ids) {
  if (warped.empty()) throw ArgumentError("make_template: empty shape list");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ArgumentError("make_template: threshold must lie in (0, 1)");
  if (ids.empty())
    for (std::size_t i = 0; i < warped.size(); ++i) ids.push_back(std::to_string(i));
  return {mean_shape(warped).binarized(threshold), CompletionMethod::template_mean, std::move(ids), threshold};
}

SimilarityTransform CompletionResult::to_original() const {
  return inverse(registration.transform, completed_original.geometry());
}

namespace {

// Shared tail of both routes: subtraction, union and the inverse warp.
CompletionResult finish(const VoxelGrid& defective, const VoxelGrid& estimate, VoxelGrid warped_input,
                        RegistrationReport registration, CompletionMethod method) {
  CompletionResult r;
  r.implant_reference = volume_subtract(estimate, warped_input);
  r.completed_reference = volume_add(r.implant_reference, warped_input);
  r.warped_input = std::move(warped_input);
  r.registration = std::move(registration);
  r.method = method;
  const auto back = inverse(r.registration.transform, defective.geometry());
  r.completed_original = warp(r.completed_reference, back, WarpMode::binary);
  return r;
}

void require_defective(const VoxelGrid& defective) {
  if (!defective.is_binary()) throw ArgumentError("completion: defective input must be binary");
  if (defective.count_foreground() == 0)
    throw DegenerateInputError("completion: defective input has an empty foreground");
}

}  // namespace

CompletionResult complete_by_template(const VoxelGrid& defective, const Template& tmpl,
                                      const RegistrationConfig& registration) {
  require_defective(defective);
  auto report = estimate_transform(defective, tmpl.grid, registration);
  VoxelGrid warped = warp(defective, report.transform, WarpMode::binary);
  return finish(defective, tmpl.grid, std::move(warped), std::move(report), tmpl.kind);
}

CompletionResult complete_by_ssm(const VoxelGrid& defective, const ShapeModel& model,
                                 const SsmCompletionOptions& options) {
  require_defective(defective);
  const VoxelGrid target =
      options.registration_target ? *options.registration_target : model.mean.binarized(0.5);
  require_compatible(model.mean, target, "complete_by_ssm");

  auto report = estimate_transform(defective, target, options.registration);
  VoxelGrid warped = warp(defective, report.transform, WarpMode::binary);

  VoxelGrid weight_source = warped;
  CompletionMethod method = CompletionMethod::ssm;
  if (options.external) {
    method = CompletionMethod::ssm_external;
    if (options.external_space == ExternalSpace::original) {
      require_compatible(defective, *options.external, "complete_by_ssm external volume");
      weight_source = warp(*options.external, report.transform, WarpMode::binary);
    } else {
      require_compatible(model.mean, *options.external, "complete_by_ssm external volume");
      weight_source = options.external->binarized(0.5);
    }
  }

  WeightVector weights = project(model, weight_source, false);
  ReconstructOptions ro;
  if (options.paper_rescale) {
    weights = rescale_weights(weights);
    ro.literal_rescaled = true;
  }
  const VoxelGrid estimate = reconstruct(model, weights, ro).binarized(options.binarize_threshold);
  auto result = finish(defective, estimate, std::move(warped), std::move(report), method);
  result.weights = std::move(weights);
  return result;
}

}  // namespace voxshape
