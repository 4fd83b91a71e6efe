// voxshape - command-line front end for phantom generation, model building,
// completion, implant extraction, evaluation and weight inspection.
//
// Exit codes: 0 success, 2 configuration, 3 I/O, 4 numerical failure.
#include <CLI11.hpp>
#include <functional>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "voxshape/error.hpp"

namespace {

using vscli::PipelineConfig;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

// Flags overlay the config file; only flags actually given are applied.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& help,
                   std::function<void(PipelineConfig&, const T&)> apply) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(name, *value, help);
    appliers_.push_back([opt, value, apply](PipelineConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& help,
                    std::function<void(PipelineConfig&, bool)> apply) {
    auto value = std::make_shared<bool>(false);
    auto* opt = app->add_flag(name, *value, help);
    appliers_.push_back([opt, value, apply](PipelineConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
    return opt;
  }

  void apply(PipelineConfig& c) const {
    for (const auto& f : appliers_) f(c);
  }

 private:
  std::vector<std::function<void(PipelineConfig&)>> appliers_;
};

void common_options(CLI::App* app, Overrides& o, std::string& config_path) {
  app->add_option("--config", config_path, "JSON pipeline config");
  o.add<std::string>(app, "-o,--output", "output directory", [](auto& c, const auto& v) { c.output = v; });
  o.add<std::uint64_t>(app, "--seed", "random seed", [](auto& c, const auto& v) { c.seed = v; });
  o.add<int>(app, "-j,--jobs", "parallel cases", [](auto& c, const auto& v) { c.jobs = v; });
}

void registration_options(CLI::App* app, Overrides& o) {
  o.add<double>(app, "--reg-tol", "registration convergence tolerance",
                [](auto& c, const auto& v) { c.registration.tol = v; });
  o.add<int>(app, "--reg-max-iterations", "registration iteration cap",
             [](auto& c, const auto& v) { c.registration.max_iterations = v; });
  o.add<double>(app, "--reg-trim", "fraction of closest matches kept",
                [](auto& c, const auto& v) { c.registration.trim_fraction = v; });
}

void postprocess_options(CLI::App* app, Overrides& o) {
  o.add<int>(app, "--median-kernel", "median filter size (odd)",
             [](auto& c, const auto& v) { c.postprocess.median_kernel = v; });
  o.add<int>(app, "--opening-radius", "opening ball radius in voxels",
             [](auto& c, const auto& v) { c.postprocess.opening_radius = v; });
  o.add<int>(app, "--connectivity", "6, 18 or 26", [](auto& c, const auto& v) { c.postprocess.connectivity = v; });
  o.add<int>(app, "--restore-steps", "geodesic regrowth steps after selection",
             [](auto& c, const auto& v) { c.postprocess.restore_steps = v; });
  o.add<std::string>(app, "--selection", "auto, largest or max-overlap", [](auto& c, const auto& v) {
    c.postprocess.selection = voxshape::component_selection_from_string(v);
  });
}

int exit_code(const voxshape::Error& e) {
  switch (e.category()) {
    case voxshape::Error::Category::config: return kExitConfig;
    case voxshape::Error::Category::io: return kExitIo;
    case voxshape::Error::Category::numeric: return kExitNumeric;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxshape: voxel shape models for implant completion"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  auto* phantom = app.add_subcommand("phantom", "generate training phantoms and defective test cases");
  common_options(phantom, overrides, config_path);
  overrides.add<int>(phantom, "--train", "training phantoms", [](auto& c, const auto& v) { c.phantom.train = v; });
  overrides.add<int>(phantom, "--test", "defective test cases", [](auto& c, const auto& v) { c.phantom.test = v; });
  overrides.add<std::string>(phantom, "--defect", "sphere, box or multi", [](auto& c, const auto& v) {
    c.phantom.defect = voxshape::defect_kind_from_string(v);
  });
  overrides.add<double>(phantom, "--fraction-min", "smallest removed fraction",
                        [](auto& c, const auto& v) { c.phantom.fraction_min = v; });
  overrides.add<double>(phantom, "--fraction-max", "largest removed fraction",
                        [](auto& c, const auto& v) { c.phantom.fraction_max = v; });
  overrides.add<std::int64_t>(phantom, "--size", "cubic lattice side in voxels", [](auto& c, const auto& v) {
    c.phantom.population.base.dims = {v, v, v};
  });
  overrides.flag(phantom, "--write-hints", "also write one hint blob per defect",
                 [](auto& c, bool v) { c.phantom.write_hints = v; });

  auto* build = app.add_subcommand("build-model", "register training shapes and fit the shape model");
  common_options(build, overrides, config_path);
  registration_options(build, overrides);
  overrides.add<std::string>(build, "--reference", "reference shape", [](auto& c, const auto& v) { c.reference = v; });
  overrides.add<std::vector<std::string>>(build, "--training", "training files or directories",
                                          [](auto& c, const auto& v) { c.training = v; });
  overrides.add<std::size_t>(build, "-C,--num-modes", "modes of variation", [](auto& c, const auto& v) { c.num_modes = v; });
  overrides.add<std::size_t>(build, "--template-count", "shapes averaged into the mean template (0: all)",
                             [](auto& c, const auto& v) { c.template_mean_count = v; });
  overrides.add<double>(build, "--template-threshold", "mean template binarisation threshold",
                        [](auto& c, const auto& v) { c.template_threshold = v; });
  overrides.add<std::string>(build, "--normalization", "unit or pseudo_inverse", [](auto& c, const auto& v) {
    c.normalization = voxshape::mode_normalization_from_string(v);
  });
  overrides.flag(build, "--uncentered", "project raw shapes without subtracting the mean",
                 [](auto& c, bool v) { c.centered = !v; });

  vscli::CompleteArgs complete_args;
  auto* complete = app.add_subcommand("complete", "complete defective shapes");
  common_options(complete, overrides, config_path);
  registration_options(complete, overrides);
  complete->add_option("--model-dir", complete_args.model_dir, "build-model output directory")->required();
  complete->add_option("cases", complete_args.cases, "defective NRRD files or case directories")->required();
  complete->add_option("--external", complete_args.external, "completed shape supplying SSM weights");
  overrides.add<std::string>(complete, "-m,--method", "template-single, template-mean, ssm or ssm-external",
                             [](auto& c, const auto& v) { c.method = voxshape::completion_method_from_string(v); });
  overrides.flag(complete, "--paper-rescale", "apply min-max rescaled weights verbatim",
                 [](auto& c, bool v) { c.paper_rescale = v; });
  overrides.add<std::string>(complete, "--external-space", "original or reference", [](auto& c, const auto& v) {
    vscli::Json j = {{"external_space", v}};
    vscli::merge_json(c, j);
  });

  vscli::ExtractArgs extract_args;
  auto* extract = app.add_subcommand("extract-implant", "clean a subtraction result into an implant");
  common_options(extract, overrides, config_path);
  postprocess_options(extract, overrides);
  extract->add_option("--raw", extract_args.raw, "raw subtraction volume");
  extract->add_option("--completed", extract_args.completed, "completed shape in original space");
  extract->add_option("--defective", extract_args.defective, "defective input");
  extract->add_option("--hint", extract_args.hint, "defect hint mask");
  extract->add_option("--erase", extract_args.erase, "mask of voxels to erase first");
  extract->add_option("--out", extract_args.out, "output implant NRRD");
  extract->add_option("--pred-dir", extract_args.pred_dir, "complete output directory (batch)");
  extract->add_option("--cases-dir", extract_args.cases_dir, "case directories with defective.nrrd (batch)");

  vscli::EvaluateArgs evaluate_args;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  common_options(evaluate, overrides, config_path);
  evaluate->add_option("--pred-dir", evaluate_args.pred_dir, "prediction case directories")->required();
  evaluate->add_option("--gt-dir", evaluate_args.gt_dir, "ground-truth case directories")->required();
  evaluate->add_option("--pred-name", evaluate_args.pred_name, "implant file name in prediction cases");
  evaluate->add_option("--gt-name", evaluate_args.gt_name, "implant file name in ground-truth cases");
  overrides.add<double>(evaluate, "--tolerance", "surface Dice tolerance in mm",
                        [](auto& c, const auto& v) { c.bdsc_tolerance = v; });

  vscli::InspectArgs inspect_args;
  auto* inspect = app.add_subcommand("inspect-weights", "per-mode weight statistics");
  common_options(inspect, overrides, config_path);
  registration_options(inspect, overrides);
  inspect->add_option("--model-dir", inspect_args.model_dir, "build-model output directory")->required();
  inspect->add_option("shapes", inspect_args.shapes, "shape files or directories")->required();
  inspect->add_option("--roi", inspect_args.roi, "region-of-interest mask in reference space");
  inspect->add_flag("--no-register{false}", inspect_args.register_shapes, "shapes are already in reference space");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    PipelineConfig config = config_path.empty() ? PipelineConfig{} : vscli::load_config(config_path);
    overrides.apply(config);
    if (config.jobs < 1) throw voxshape::ArgumentError("jobs must be >= 1");

    if (phantom->parsed()) vscli::cmd_phantom(config);
    if (build->parsed()) vscli::cmd_build_model(config);
    if (complete->parsed()) vscli::cmd_complete(config, complete_args);
    if (extract->parsed()) vscli::cmd_extract_implant(config, extract_args);
    if (evaluate->parsed()) vscli::cmd_evaluate(config, evaluate_args);
    if (inspect->parsed()) vscli::cmd_inspect_weights(config, inspect_args);
  } catch (const voxshape::EmptyImplantError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const voxshape::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
