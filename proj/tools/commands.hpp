// commands.hpp - the voxshape subcommands.
#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace vscli {

// Training phantoms plus defective test cases with ground-truth implants.
void cmd_phantom(const PipelineConfig& config);

// Registers the training shapes to the reference, fits the SSM and writes
// the single and mean templates.
void cmd_build_model(const PipelineConfig& config);

struct CompleteArgs {
  std::string model_dir;           // output directory of build-model
  std::vector<std::string> cases;  // defective NRRD files or case directories
  std::string external;            // ssm-external: file name inside each case directory
};
void cmd_complete(const PipelineConfig& config, const CompleteArgs& args);

struct ExtractArgs {
  // Single volume: --raw, or --completed with --defective.
  std::string raw, completed, defective, hint, erase, out;
  // Batch: complete's output directory and the matching case directories.
  std::string pred_dir, cases_dir;
};
void cmd_extract_implant(const PipelineConfig& config, const ExtractArgs& args);

struct EvaluateArgs {
  std::string pred_dir, gt_dir;
  std::string pred_name = "implant_final.nrrd";
  std::string gt_name = "implant.nrrd";
};
void cmd_evaluate(const PipelineConfig& config, const EvaluateArgs& args);

struct InspectArgs {
  std::string model_dir;
  std::vector<std::string> shapes;
  std::string roi;
  bool register_shapes = true;  // warp each shape onto the reference first
};
void cmd_inspect_weights(const PipelineConfig& config, const InspectArgs& args);

}  // namespace vscli
