#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "voxshape/error.hpp"
#include "voxshape/manifest.hpp"
#include "voxshape/metrics.hpp"
#include "voxshape/nrrd.hpp"

namespace vscli {

namespace fs = std::filesystem;
using namespace voxshape;

namespace {

constexpr const char* kTool = "voxshape 1.0.0";

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// Paths in manifests are relative to the manifest's directory so that
// identical runs in different places produce identical bytes.
std::string portable(const fs::path& p, const fs::path& base) {
  const auto abs = fs::absolute(p).lexically_normal();
  const auto rel = abs.lexically_relative(fs::absolute(base).lexically_normal());
  return (rel.empty() ? abs : rel).generic_string();
}

Json file_entry(const fs::path& p, const fs::path& base) {
  return {{"path", portable(p, base)}, {"sha256", sha256_file(p)}};
}

Json manifest_config(const PipelineConfig& config, const fs::path& base) {
  Json j = to_json(config);
  if (!config.reference.empty()) j["reference"] = portable(config.reference, base);
  Json training = Json::array();
  for (const auto& t : config.training) training.push_back(portable(t, base));
  j["training"] = training;
  j.erase("output");
  j.erase("jobs");  // scheduling only, never changes results
  return j;
}

VoxelGrid load_mask(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError("missing input " + p.string());
  return read_nrrd(p, NrrdReadOptions{true});
}

std::string stem_of(const fs::path& p) {
  auto name = p.filename().string();
  for (const char* ext : {".nrrd", ".nhdr"})
    if (name.size() > std::string(ext).size() && name.ends_with(ext)) return name.substr(0, name.size() - std::string(ext).size());
  return p.stem().string();
}

// A file, or every .nrrd file directly inside a directory, sorted by name.
std::vector<fs::path> nrrd_files(const std::string& entry) {
  const fs::path p(entry);
  if (fs::is_regular_file(p)) return {p};
  if (!fs::is_directory(p)) throw IoError("no such file or directory: " + entry);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".nrrd") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> sorted_subdirs_with(const fs::path& dir, const std::string& file) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::is_regular_file(e.path() / file)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

struct Case {
  std::string id;
  fs::path defective;
  fs::path dir;  // empty when the case was given as a bare file
};

// Case directories hold defective.nrrd; bare .nrrd files are cases too.
std::vector<Case> discover_cases(const std::vector<std::string>& entries) {
  std::vector<Case> out;
  for (const auto& entry : entries) {
    const fs::path p(entry);
    if (fs::is_regular_file(p)) {
      out.push_back({stem_of(p), p, {}});
    } else if (fs::is_regular_file(p / "defective.nrrd")) {
      out.push_back({p.lexically_normal().filename().string(), p / "defective.nrrd", p});
    } else if (fs::is_directory(p)) {
      const auto dirs = sorted_subdirs_with(p, "defective.nrrd");
      if (!dirs.empty()) {
        for (const auto& d : dirs) out.push_back({d.filename().string(), d / "defective.nrrd", d});
      } else {
        for (const auto& f : nrrd_files(entry)) out.push_back({stem_of(f), f, {}});
      }
    } else {
      throw IoError("no such case: " + entry);
    }
  }
  std::set<std::string> seen;
  for (const auto& c : out)
    if (!seen.insert(c.id).second) throw ArgumentError("duplicate case id '" + c.id + "'");
  if (out.empty()) throw ArgumentError("no cases found");
  return out;
}

// Runs fn(0..n-1) on up to `jobs` threads. Failures are reported for the
// lowest failing index, prefixed with its label, after all work stops.
void run_parallel(std::size_t n, int jobs, const std::function<std::string(std::size_t)>& label,
                  const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp<int>(jobs, 1, 64));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const EmptyImplantError& e) {
      throw EmptyImplantError(e.stage(), label(i) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.category(), label(i) + ": " + e.what());
    } catch (const fs::filesystem_error& e) {
      throw IoError(label(i) + ": " + e.what());
    }
  }
}

// Collects one case's files in a hidden sibling directory and renames it
// into place once everything is written.
class CaseWriter {
 public:
  explicit CaseWriter(fs::path final_dir)
      : final_(std::move(final_dir)), staging_(final_.parent_path() / ("." + final_.filename().string() + ".partial")) {
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }

  void volume(const std::string& name, const VoxelGrid& grid) { text(name, serialize_nrrd(grid)); }

  void text(const std::string& name, const std::string& bytes) {
    write_file_atomic(staging_ / name, bytes);
    outputs_[name] = sha256_hex(bytes);
  }

  Json outputs() const {
    Json j = Json::object();
    for (const auto& [name, hash] : outputs_) j[name] = hash;
    return j;
  }

  void commit(const Json& manifest) {
    write_file_atomic(staging_ / "manifest.json", dump(manifest));
    fs::remove_all(final_);
    fs::rename(staging_, final_);
  }

 private:
  fs::path final_, staging_;
  std::map<std::string, std::string> outputs_;
};

Json transform_json(const SimilarityTransform& t) { return Json::parse(transform_to_json(t)); }

Json registration_json(const RegistrationReport& r) {
  return {{"residual_mm", r.residual},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"transform", transform_json(r.transform)}};
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

// Registers onto the reference; a shape identical to it is kept as is.
std::pair<VoxelGrid, RegistrationReport> to_reference(const VoxelGrid& shape, const VoxelGrid& reference,
                                                      const RegistrationConfig& config) {
  if (shape == reference) {
    RegistrationReport r;
    r.transform = SimilarityTransform::identity(reference.geometry());
    r.converged = true;
    return {shape, r};
  }
  auto r = estimate_transform(shape, reference, config);
  return {warp(shape, r.transform, WarpMode::binary), r};
}

void validate_postprocess(const PipelineConfig& c) { c.postprocess.validate(); }

}  // namespace

void cmd_phantom(const PipelineConfig& config) {
  const auto& s = config.phantom;
  if (s.train < 0 || s.train > 1000) throw ArgumentError("phantom: train must lie in [0, 1000]");
  if (s.test < 0) throw ArgumentError("phantom: test must be >= 0");
  if (!(s.fraction_min > 0.0 && s.fraction_min <= s.fraction_max && s.fraction_max < 1.0))
    throw ArgumentError("phantom: need 0 < fraction_min <= fraction_max < 1");
  PopulationSpec pop = s.population;
  pop.seed = config.seed;
  pop.base.seed = config.seed;
  pop.validate();

  const fs::path out(config.output);
  fs::create_directories(out / "training");
  fs::create_directories(out / "cases");

  std::vector<Json> training(static_cast<std::size_t>(s.train));
  run_parallel(
      training.size(), config.jobs, [](std::size_t i) { return "training subject " + std::to_string(i); },
      [&](std::size_t i) {
        const auto subject = make_subject(pop, i);
        std::ostringstream name;
        name << "subject_" << std::setw(3) << std::setfill('0') << i << ".nrrd";
        const auto bytes = serialize_nrrd(subject.grid);
        write_file_atomic(out / "training" / name.str(), bytes);
        training[i] = {{"id", stem_of(name.str())},
                       {"path", "training/" + name.str()},
                       {"sha256", sha256_hex(bytes)},
                       {"radii", subject.spec.radii},
                       {"pose", transform_json(subject.pose)}};
      });

  // Fractions are drawn up front so the dataset does not depend on --jobs.
  std::seed_seq seq{config.seed, std::uint64_t{0xCA5E}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> fraction(s.fraction_min, s.fraction_max);
  std::vector<double> fractions;
  for (int m = 0; m < s.test; ++m) fractions.push_back(fraction(rng));

  std::vector<Json> cases(static_cast<std::size_t>(s.test));
  auto case_id = [](std::size_t m) {
    std::ostringstream id;
    id << "case_" << std::setw(3) << std::setfill('0') << m;
    return id.str();
  };
  run_parallel(
      cases.size(), config.jobs, case_id, [&](std::size_t m) {
        const auto dc = make_defect_case(pop, 1000 + m, s.defect, fractions[m]);
        CaseWriter writer(out / "cases" / case_id(m));
        writer.volume("defective.nrrd", dc.result.defective);
        writer.volume("implant.nrrd", dc.result.implant);
        if (s.write_hints) writer.volume("hint.nrrd", defect_hint(dc.subject.grid.geometry(), dc.defect));
        Json centers = Json::array();
        for (const auto& c : dc.defect.centers) centers.push_back(c);
        Json entry = {{"id", case_id(m)},
                      {"subject_index", 1000 + m},
                      {"defect", {{"kind", to_string(dc.defect.kind)}, {"centers_mm", centers}, {"sizes_mm", dc.defect.sizes}}},
                      {"requested_fraction", dc.requested_fraction},
                      {"achieved_fraction", dc.achieved_fraction},
                      {"pose", transform_json(dc.subject.pose)},
                      {"outputs", writer.outputs()}};
        Json manifest = {{"tool", kTool}, {"command", "phantom"}};
        manifest.update(entry);
        writer.commit(manifest);
        cases[m] = entry;
      });

  Json manifest = {{"tool", kTool},
                   {"command", "phantom"},
                   {"config", manifest_config(config, out)},
                   {"training", training},
                   {"cases", cases}};
  write_file_atomic(out / "manifest.json", dump(manifest));
}

void cmd_build_model(const PipelineConfig& config) {
  std::vector<fs::path> files;
  for (const auto& entry : config.training)
    for (const auto& f : nrrd_files(entry)) files.push_back(f);
  if (files.empty()) throw ArgumentError("build-model: no training shapes");
  if (config.num_modes < 1 || config.num_modes > files.size())
    throw ArgumentError("build-model: num_modes " + std::to_string(config.num_modes) + " needs 1 <= C <= " +
                        std::to_string(files.size()) + " training shapes");
  if (config.template_mean_count > files.size())
    throw ArgumentError("build-model: template_mean_count exceeds the training count");
  if (!(config.template_threshold > 0.0 && config.template_threshold < 1.0))
    throw ArgumentError("build-model: template_threshold must lie in (0, 1)");
  std::vector<std::string> ids;
  for (const auto& f : files) ids.push_back(stem_of(f));
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
    throw ArgumentError("build-model: training file names must be unique");

  const fs::path reference_path = config.reference.empty() ? files.front() : fs::path(config.reference);
  const VoxelGrid reference = load_mask(reference_path);
  const fs::path out(config.output);

  std::vector<VoxelGrid> warped(files.size());
  std::vector<RegistrationReport> reports(files.size());
  run_parallel(
      files.size(), config.jobs, [&](std::size_t i) { return "training shape " + ids[i]; },
      [&](std::size_t i) {
        auto [grid, report] = to_reference(load_mask(files[i]), reference, config.registration);
        warped[i] = std::move(grid);
        reports[i] = std::move(report);
      });

  FitOptions fit;
  fit.centered = config.centered;
  fit.normalization = config.normalization;
  fit.training_ids = ids;
  const auto model = fit_modes(warped, config.num_modes, fit);

  const std::size_t k = config.template_mean_count == 0 ? warped.size() : config.template_mean_count;
  const std::vector<VoxelGrid> mean_sources(warped.begin(), warped.begin() + static_cast<std::ptrdiff_t>(k));
  const auto mean_template =
      make_template(mean_sources, config.template_threshold, std::vector<std::string>(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k)));

  fs::create_directories(out);
  const auto staging = out / ".model.partial";
  fs::remove_all(staging);
  save_model(model, staging);
  fs::remove_all(out / "model");
  fs::rename(staging, out / "model");

  CaseWriter templates(out / "templates");
  templates.volume("single.nrrd", reference.binarized());
  templates.volume("mean.nrrd", mean_template.grid);
  Json template_info = {{"single", {{"source", portable(reference_path, out)}}},
                        {"mean", {{"sources", mean_template.source_ids}, {"threshold", mean_template.threshold}}},
                        {"outputs", templates.outputs()}};
  templates.commit(Json{{"tool", kTool}, {"command", "build-model"}, {"templates", template_info}});

  Json training = Json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    Json entry = file_entry(files[i], out);
    entry["id"] = ids[i];
    entry["warped_sha256"] = sha256_hex(serialize_nrrd(warped[i]));
    entry["registration"] = registration_json(reports[i]);
    training.push_back(entry);
  }
  Json model_files = Json::object();
  for (const char* f : {"mean.nrrd", "modes.bin", "model.json"}) model_files[f] = sha256_file(out / "model" / f);

  Json manifest = {{"tool", kTool},
                   {"command", "build-model"},
                   {"config", manifest_config(config, out)},
                   {"reference", file_entry(reference_path, out)},
                   {"training", training},
                   {"model",
                    {{"num_modes", model.num_modes()},
                     {"rank", model.rank()},
                     {"singular_values", model.singular_values},
                     {"files", model_files}}},
                   {"templates", template_info}};
  write_file_atomic(out / "manifest.json", dump(manifest));
}

void cmd_complete(const PipelineConfig& config, const CompleteArgs& args) {
  if (args.model_dir.empty()) throw ArgumentError("complete: --model-dir is required");
  if (config.method == CompletionMethod::ssm_external && args.external.empty())
    throw ArgumentError("complete: method ssm-external needs --external");
  const auto cases = discover_cases(args.cases);
  const fs::path model_dir(args.model_dir);
  const fs::path out(config.output);

  std::optional<Template> tmpl;
  std::optional<ShapeModel> model;
  Json resources = Json::object();
  if (config.method == CompletionMethod::template_single || config.method == CompletionMethod::template_mean) {
    const bool single = config.method == CompletionMethod::template_single;
    const auto path = model_dir / "templates" / (single ? "single.nrrd" : "mean.nrrd");
    tmpl = Template{load_mask(path), config.method, {single ? "single" : "mean"}, 0.5};
    resources["template"] = file_entry(path, out);
  } else {
    model = load_model(model_dir / "model");
    for (const char* f : {"mean.nrrd", "modes.bin", "model.json"})
      resources[std::string("model/") + f] = file_entry(model_dir / "model" / f, out);
  }
  const Json resolved = manifest_config(config, out);
  fs::create_directories(out);

  run_parallel(
      cases.size(), config.jobs, [&](std::size_t i) { return "case " + cases[i].id; },
      [&](std::size_t i) {
        const auto& c = cases[i];
        const auto defective = load_mask(c.defective);
        Json inputs = {{"defective", file_entry(c.defective, out / c.id)}};
        CompletionResult r;
        if (tmpl) {
          r = complete_by_template(defective, *tmpl, config.registration);
        } else {
          SsmCompletionOptions opts;
          opts.paper_rescale = config.paper_rescale;
          opts.external_space = config.external_space;
          opts.registration = config.registration;
          if (config.method == CompletionMethod::ssm_external) {
            const fs::path ext = c.dir.empty() ? fs::path(args.external) : c.dir / args.external;
            opts.external = load_mask(ext);
            inputs["external"] = file_entry(ext, out / c.id);
          }
          r = complete_by_ssm(defective, *model, opts);
        }
        CaseWriter writer(out / c.id);
        writer.volume("completed.nrrd", r.completed_reference);
        writer.volume("implant.nrrd", r.implant_reference);
        writer.volume("completed_original.nrrd", r.completed_original);
        writer.text("transform.json", transform_to_json(r.registration.transform));
        Json manifest = {{"tool", kTool},
                         {"command", "complete"},
                         {"case", c.id},
                         {"method", to_string(r.method)},
                         {"config", resolved},
                         {"inputs", inputs},
                         {"resources", resources},
                         {"registration", registration_json(r.registration)},
                         {"implant_voxels", r.implant_reference.count_foreground()}};
        if (r.weights) {
          manifest["weights"] = {{"values", r.weights->values},
                                 {"rescaled", r.weights->rescaled},
                                 {"rescale_min", r.weights->rescale_min},
                                 {"rescale_max", r.weights->rescale_max}};
        }
        manifest["outputs"] = writer.outputs();
        writer.commit(manifest);
      });
}

namespace {

Json extraction_json(const ExtractionResult& r) {
  Json stages = Json::array();
  for (const auto& s : r.stages) stages.push_back({{"stage", s.stage}, {"voxels", s.voxels}});
  return {{"stages", stages}, {"pieces", r.pieces}};
}

PostprocessConfig with_erase(const PipelineConfig& config, const fs::path& erase) {
  PostprocessConfig pc = config.postprocess;
  if (!erase.empty()) pc.erase_mask = load_mask(erase);
  return pc;
}

}  // namespace

void cmd_extract_implant(const PipelineConfig& config, const ExtractArgs& args) {
  validate_postprocess(config);
  const bool batch = !args.pred_dir.empty() || !args.cases_dir.empty();
  if (batch) {
    if (args.pred_dir.empty() || args.cases_dir.empty())
      throw ArgumentError("extract-implant: batch mode needs both --pred-dir and --cases-dir");
    const auto dirs = sorted_subdirs_with(args.pred_dir, "completed_original.nrrd");
    if (dirs.empty()) throw ArgumentError("extract-implant: no completed cases in " + args.pred_dir);
    run_parallel(
        dirs.size(), config.jobs, [&](std::size_t i) { return "case " + dirs[i].filename().string(); },
        [&](std::size_t i) {
          const auto& dir = dirs[i];
          const auto case_dir = fs::path(args.cases_dir) / dir.filename();
          const auto defective_path = case_dir / "defective.nrrd";
          const auto hint_path = case_dir / "hint.nrrd";
          const auto erase_path = case_dir / "erase.nrrd";
          const bool has_hint = fs::is_regular_file(hint_path), has_erase = fs::is_regular_file(erase_path);
          const auto raw = volume_subtract(load_mask(dir / "completed_original.nrrd"), load_mask(defective_path));
          std::optional<VoxelGrid> hint;
          if (has_hint) hint = load_mask(hint_path);
          const auto result = extract_implant(raw, with_erase(config, has_erase ? erase_path : fs::path{}), hint);
          const auto bytes = serialize_nrrd(result.implant);
          Json inputs = {{"completed_original", file_entry(dir / "completed_original.nrrd", dir)},
                         {"defective", file_entry(defective_path, dir)}};
          if (has_hint) inputs["hint"] = file_entry(hint_path, dir);
          if (has_erase) inputs["erase"] = file_entry(erase_path, dir);
          Json manifest = {{"tool", kTool},
                           {"command", "extract-implant"},
                           {"case", dir.filename().string()},
                           {"postprocess", to_json(config)["postprocess"]},
                           {"inputs", inputs}};
          manifest.update(extraction_json(result));
          manifest["outputs"] = {{"implant_final.nrrd", sha256_hex(bytes)}};
          write_file_atomic(dir / "implant_final.nrrd", bytes);
          write_file_atomic(dir / "extract.json", dump(manifest));
        });
    return;
  }

  if (args.out.empty()) throw ArgumentError("extract-implant: --out is required");
  if (args.raw.empty() == (args.completed.empty() || args.defective.empty()))
    throw ArgumentError("extract-implant: give either --raw or both --completed and --defective");
  const fs::path out(args.out);
  const fs::path base = out.parent_path().empty() ? fs::path(".") : out.parent_path();
  Json inputs = Json::object();
  VoxelGrid raw;
  if (!args.raw.empty()) {
    raw = load_mask(args.raw);
    inputs["raw"] = file_entry(args.raw, base);
  } else {
    raw = volume_subtract(load_mask(args.completed), load_mask(args.defective));
    inputs["completed"] = file_entry(args.completed, base);
    inputs["defective"] = file_entry(args.defective, base);
  }
  std::optional<VoxelGrid> hint;
  if (!args.hint.empty()) {
    hint = load_mask(args.hint);
    inputs["hint"] = file_entry(args.hint, base);
  }
  if (!args.erase.empty()) inputs["erase"] = file_entry(args.erase, base);
  const auto result = extract_implant(raw, with_erase(config, args.erase), hint);
  const auto bytes = serialize_nrrd(result.implant);
  Json manifest = {{"tool", kTool},
                   {"command", "extract-implant"},
                   {"postprocess", to_json(config)["postprocess"]},
                   {"inputs", inputs}};
  manifest.update(extraction_json(result));
  manifest["outputs"] = {{out.filename().string(), sha256_hex(bytes)}};
  if (!base.empty()) fs::create_directories(base);
  write_file_atomic(out, bytes);
  auto manifest_path = out;
  manifest_path.replace_extension(".json");
  write_file_atomic(manifest_path, dump(manifest));
}

void cmd_evaluate(const PipelineConfig& config, const EvaluateArgs& args) {
  if (args.pred_dir.empty() || args.gt_dir.empty()) throw ArgumentError("evaluate: --pred-dir and --gt-dir are required");
  if (!(config.bdsc_tolerance >= 0.0)) throw ArgumentError("evaluate: bdsc_tolerance must be >= 0");
  std::set<std::string> gt_ids, pred_ids;
  for (const auto& d : sorted_subdirs_with(args.gt_dir, args.gt_name)) gt_ids.insert(d.filename().string());
  for (const auto& d : sorted_subdirs_with(args.pred_dir, args.pred_name)) pred_ids.insert(d.filename().string());
  std::vector<std::string> missing;
  for (const auto& id : gt_ids)
    if (!pred_ids.count(id)) missing.push_back("prediction for '" + id + "'");
  for (const auto& id : pred_ids)
    if (!gt_ids.count(id)) missing.push_back("ground truth for '" + id + "'");
  if (!missing.empty()) {
    std::string msg = "evaluate: unmatched cases:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw IoError(msg);
  }
  if (gt_ids.empty()) throw ArgumentError("evaluate: no cases found in " + args.gt_dir);

  const std::vector<std::string> ids(gt_ids.begin(), gt_ids.end());
  const fs::path out(config.output);
  fs::create_directories(out);
  std::vector<CaseEvaluation> evaluations(ids.size());
  std::vector<Json> inputs(ids.size());
  run_parallel(
      ids.size(), config.jobs, [&](std::size_t i) { return "case " + ids[i]; },
      [&](std::size_t i) {
        const auto pred_dir = fs::path(args.pred_dir) / ids[i];
        const auto gt_dir = fs::path(args.gt_dir) / ids[i];
        const auto pred = load_mask(pred_dir / args.pred_name);
        const auto gt = load_mask(gt_dir / args.gt_name);
        Json in = {{"prediction", file_entry(pred_dir / args.pred_name, out)},
                   {"ground_truth", file_entry(gt_dir / args.gt_name, out)}};
        std::optional<VoxelGrid> pred_skull, gt_skull;
        if (fs::is_regular_file(pred_dir / "completed_original.nrrd") && fs::is_regular_file(gt_dir / "defective.nrrd")) {
          pred_skull = load_mask(pred_dir / "completed_original.nrrd");
          gt_skull = volume_add(load_mask(gt_dir / "defective.nrrd"), gt);
          in["prediction_skull"] = file_entry(pred_dir / "completed_original.nrrd", out);
          in["defective"] = file_entry(gt_dir / "defective.nrrd", out);
        }
        auto e = evaluate_case(ids[i], pred, gt, pred_skull ? &*pred_skull : nullptr, gt_skull ? &*gt_skull : nullptr,
                               config.bdsc_tolerance);
        e.implant.prediction = portable(pred_dir / args.pred_name, out);
        e.implant.ground_truth = portable(gt_dir / args.gt_name, out);
        if (e.skull) {
          e.skull->prediction = portable(pred_dir / "completed_original.nrrd", out);
          e.skull->ground_truth = portable(gt_dir / "defective.nrrd", out) + " + " + e.implant.ground_truth;
        }
        write_file_atomic(out / (ids[i] + ".json"), report_to_json(e));
        evaluations[i] = std::move(e);
        inputs[i] = std::move(in);
      });

  std::vector<MetricsReport> implants, skulls;
  for (const auto& e : evaluations) {
    implants.push_back(e.implant);
    if (e.skull) skulls.push_back(*e.skull);
  }
  Json outputs = Json::object();
  const auto csv = aggregate_csv(implants);
  write_file_atomic(out / "aggregate.csv", csv);
  outputs["aggregate.csv"] = sha256_hex(csv);
  if (!skulls.empty()) {
    const auto skull_csv = aggregate_csv(skulls);
    write_file_atomic(out / "aggregate_skull.csv", skull_csv);
    outputs["aggregate_skull.csv"] = sha256_hex(skull_csv);
  }
  Json cases = Json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) cases[ids[i]] = inputs[i];
  Json manifest = {{"tool", kTool},
                   {"command", "evaluate"},
                   {"bdsc_tolerance_mm", config.bdsc_tolerance},
                   {"cases", cases},
                   {"outputs", outputs}};
  write_file_atomic(out / "manifest.json", dump(manifest));
}

void cmd_inspect_weights(const PipelineConfig& config, const InspectArgs& args) {
  if (args.model_dir.empty()) throw ArgumentError("inspect-weights: --model-dir is required");
  std::vector<fs::path> files;
  for (const auto& entry : args.shapes)
    for (const auto& f : nrrd_files(entry)) files.push_back(f);
  if (files.empty()) throw ArgumentError("inspect-weights: empty shape list");

  const fs::path model_dir(args.model_dir);
  const fs::path out(config.output);
  const auto model = load_model(model_dir / "model");
  std::optional<VoxelGrid> reference;
  if (args.register_shapes) reference = load_mask(model_dir / "templates" / "single.nrrd");
  std::optional<VoxelGrid> roi;
  if (!args.roi.empty()) roi = load_mask(args.roi);

  std::vector<VoxelGrid> shapes(files.size());
  run_parallel(
      files.size(), config.jobs, [&](std::size_t i) { return "shape " + files[i].string(); },
      [&](std::size_t i) {
        auto grid = load_mask(files[i]);
        shapes[i] = reference ? to_reference(grid, *reference, config.registration).first : std::move(grid);
      });
  const auto stats = mode_report(model, shapes, roi);

  std::ostringstream csv;
  csv << "mode,mean_weight,min_weight,max_weight,roi_energy_fraction,near_zero\n";
  Json modes = Json::array();
  for (const auto& s : stats) {
    csv << s.mode << ',' << fmt(s.mean_weight) << ',' << fmt(s.min_weight) << ',' << fmt(s.max_weight) << ','
        << fmt(s.roi_energy_fraction) << ',' << (s.near_zero ? 1 : 0) << '\n';
    modes.push_back({{"mode", s.mode},
                     {"mean_weight", s.mean_weight},
                     {"min_weight", s.min_weight},
                     {"max_weight", s.max_weight},
                     {"roi_energy_fraction", s.roi_energy_fraction},
                     {"near_zero", s.near_zero}});
  }
  Json per_shape = Json::array();
  for (std::size_t i = 0; i < files.size(); ++i)
    per_shape.push_back({{"id", stem_of(files[i])}, {"weights", project(model, shapes[i]).values}});
  const Json plot = {{"modes", modes}, {"shapes", per_shape}};

  fs::create_directories(out);
  const auto csv_text = csv.str();
  const auto plot_text = dump(plot);
  write_file_atomic(out / "weights.csv", csv_text);
  write_file_atomic(out / "weights.json", plot_text);
  Json inputs = Json::array();
  for (const auto& f : files) inputs.push_back(file_entry(f, out));
  Json manifest = {{"tool", kTool},
                   {"command", "inspect-weights"},
                   {"registered", args.register_shapes},
                   {"model", file_entry(model_dir / "model" / "model.json", out)},
                   {"shapes", inputs},
                   {"outputs", {{"weights.csv", sha256_hex(csv_text)}, {"weights.json", sha256_hex(plot_text)}}}};
  if (roi) manifest["roi"] = file_entry(args.roi, out);
  write_file_atomic(out / "manifest.json", dump(manifest));
}

}  // namespace vscli
