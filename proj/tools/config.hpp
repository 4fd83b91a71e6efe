// config.hpp - the pipeline configuration shared by every subcommand.
//
// A run starts from defaults, overlays a JSON config file, then overlays
// command-line flags. The resolved value is what manifests record.
#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "voxshape/completion.hpp"
#include "voxshape/phantom.hpp"
#include "voxshape/postprocess.hpp"
#include "voxshape/registration.hpp"
#include "voxshape/ssm.hpp"

namespace vscli {

using Json = nlohmann::ordered_json;

struct PhantomSettings {
  voxshape::PopulationSpec population;
  int train = 10;
  int test = 5;
  voxshape::DefectKind defect = voxshape::DefectKind::sphere;
  double fraction_min = 0.1;
  double fraction_max = 0.3;
  bool write_hints = false;  // one hint blob per defect, for hinted extraction
};

struct PipelineConfig {
  std::string reference;              // empty: first training shape
  std::vector<std::string> training;  // files, or one directory of .nrrd files
  std::size_t num_modes = 10;
  std::size_t template_mean_count = 0;  // 0: every training shape
  double template_threshold = 0.5;
  voxshape::CompletionMethod method = voxshape::CompletionMethod::ssm;
  bool centered = true;
  voxshape::ModeNormalization normalization = voxshape::ModeNormalization::unit;
  bool paper_rescale = false;
  voxshape::ExternalSpace external_space = voxshape::ExternalSpace::original;
  voxshape::RegistrationConfig registration;
  voxshape::PostprocessConfig postprocess;
  double bdsc_tolerance = 1.0;
  PhantomSettings phantom;
  std::string output = "out";
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Keys mirror the struct fields; unknown keys are rejected with ArgumentError.
void merge_json(PipelineConfig& config, const Json& j);
Json to_json(const PipelineConfig& config);

PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace vscli
