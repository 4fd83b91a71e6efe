#include "config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "voxshape/error.hpp"

namespace vscli {

using voxshape::ArgumentError;

namespace {

using Setter = std::function<void(const Json&)>;

// Applies each key of `j` through `setters`; `where` prefixes messages.
void apply(const Json& j, const std::map<std::string, Setter>& setters, const std::string& where) {
  if (!j.is_object()) throw ArgumentError("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ArgumentError("config: unknown key '" + where + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw ArgumentError("config: bad value for '" + where + key + "': " + e.what());
    }
  }
}

template <class T>
Setter set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

voxshape::ExternalSpace external_space_from_string(const std::string& s) {
  if (s == "original") return voxshape::ExternalSpace::original;
  if (s == "reference") return voxshape::ExternalSpace::reference;
  throw ArgumentError("unknown external space '" + s + "'");
}

std::string to_string(voxshape::ExternalSpace s) {
  return s == voxshape::ExternalSpace::original ? "original" : "reference";
}

void merge_registration(voxshape::RegistrationConfig& r, const Json& j) {
  apply(j,
        {{"tol", set(r.tol)},
         {"max_iterations", set(r.max_iterations)},
         {"trim_fraction", set(r.trim_fraction)},
         {"max_points", set(r.max_points)},
         {"normal_weight", set(r.normal_weight)}},
        "registration.");
}

void merge_postprocess(voxshape::PostprocessConfig& p, const Json& j) {
  apply(j,
        {{"median_kernel", set(p.median_kernel)},
         {"opening_radius", set(p.opening_radius)},
         {"connectivity", set(p.connectivity)},
         {"restore_steps", set(p.restore_steps)},
         {"selection",
          [&p](const Json& v) { p.selection = voxshape::component_selection_from_string(v.get<std::string>()); }}},
        "postprocess.");
}

void merge_phantom(PhantomSettings& s, const Json& j) {
  auto& pop = s.population;
  auto& base = pop.base;
  apply(j,
        {{"dims", set(base.dims)},
         {"spacing", set(base.spacing)},
         {"radii", set(base.radii)},
         {"thickness", set(base.thickness)},
         {"amplitude", set(base.amplitude)},
         {"radius_jitter", set(pop.radius_jitter)},
         {"max_log_scale", set(pop.max_log_scale)},
         {"max_rotation_deg", set(pop.max_rotation_deg)},
         {"max_translation", set(pop.max_translation)},
         {"train", set(s.train)},
         {"test", set(s.test)},
         {"defect", [&s](const Json& v) { s.defect = voxshape::defect_kind_from_string(v.get<std::string>()); }},
         {"fraction_min", set(s.fraction_min)},
         {"fraction_max", set(s.fraction_max)},
         {"write_hints", set(s.write_hints)}},
        "phantom.");
}

}  // namespace

void merge_json(PipelineConfig& c, const Json& j) {
  apply(j,
        {{"reference", set(c.reference)},
         {"training",
          [&c](const Json& v) {
            c.training = v.is_string() ? std::vector<std::string>{v.get<std::string>()}
                                       : v.get<std::vector<std::string>>();
          }},
         {"num_modes", set(c.num_modes)},
         {"template_mean_count", set(c.template_mean_count)},
         {"template_threshold", set(c.template_threshold)},
         {"method", [&c](const Json& v) { c.method = voxshape::completion_method_from_string(v.get<std::string>()); }},
         {"centered", set(c.centered)},
         {"normalization",
          [&c](const Json& v) { c.normalization = voxshape::mode_normalization_from_string(v.get<std::string>()); }},
         {"paper_rescale", set(c.paper_rescale)},
         {"external_space", [&c](const Json& v) { c.external_space = external_space_from_string(v.get<std::string>()); }},
         {"registration", [&c](const Json& v) { merge_registration(c.registration, v); }},
         {"postprocess", [&c](const Json& v) { merge_postprocess(c.postprocess, v); }},
         {"bdsc_tolerance", set(c.bdsc_tolerance)},
         {"phantom", [&c](const Json& v) { merge_phantom(c.phantom, v); }},
         {"output", set(c.output)},
         {"seed", set(c.seed)},
         {"jobs", set(c.jobs)}},
        "");
}

Json to_json(const PipelineConfig& c) {
  const auto& r = c.registration;
  const auto& p = c.postprocess;
  const auto& pop = c.phantom.population;
  Json j;
  j["reference"] = c.reference;
  j["training"] = c.training;
  j["num_modes"] = c.num_modes;
  j["template_mean_count"] = c.template_mean_count;
  j["template_threshold"] = c.template_threshold;
  j["method"] = voxshape::to_string(c.method);
  j["centered"] = c.centered;
  j["normalization"] = voxshape::to_string(c.normalization);
  j["paper_rescale"] = c.paper_rescale;
  j["external_space"] = to_string(c.external_space);
  j["registration"] = {{"tol", r.tol},
                       {"max_iterations", r.max_iterations},
                       {"trim_fraction", r.trim_fraction},
                       {"max_points", r.max_points},
                       {"normal_weight", r.normal_weight}};
  j["postprocess"] = {{"median_kernel", p.median_kernel},
                      {"opening_radius", p.opening_radius},
                      {"connectivity", p.connectivity},
                      {"restore_steps", p.restore_steps},
                      {"selection", voxshape::to_string(p.selection)}};
  j["bdsc_tolerance"] = c.bdsc_tolerance;
  j["phantom"] = {{"dims", pop.base.dims},
                  {"spacing", pop.base.spacing},
                  {"radii", pop.base.radii},
                  {"thickness", pop.base.thickness},
                  {"amplitude", pop.base.amplitude},
                  {"radius_jitter", pop.radius_jitter},
                  {"max_log_scale", pop.max_log_scale},
                  {"max_rotation_deg", pop.max_rotation_deg},
                  {"max_translation", pop.max_translation},
                  {"train", c.phantom.train},
                  {"test", c.phantom.test},
                  {"defect", voxshape::to_string(c.phantom.defect)},
                  {"fraction_min", c.phantom.fraction_min},
                  {"fraction_max", c.phantom.fraction_max},
                  {"write_hints", c.phantom.write_hints}};
  j["output"] = c.output;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  return j;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw voxshape::IoError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config " + path.string() + ": " + e.what());
  }
  PipelineConfig c;
  merge_json(c, j);
  return c;
}

}  // namespace vscli
