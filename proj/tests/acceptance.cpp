// acceptance - runs the eight acceptance criteria and prints one PASS/FAIL
// line per criterion. Exit status is nonzero if any criterion fails.
//
//   acceptance [criterion ...]   (default: all)
#include <sys/wait.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "oracles.hpp"
#include "support.hpp"
#include "voxshape/completion.hpp"
#include "voxshape/error.hpp"
#include "voxshape/manifest.hpp"
#include "voxshape/metrics.hpp"
#include "voxshape/phantom.hpp"
#include "voxshape/postprocess.hpp"
#include "voxshape/registration.hpp"
#include "voxshape/ssm.hpp"

namespace fs = std::filesystem;
using namespace voxshape;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double max_abs_diff(const VoxelGrid& a, const VoxelGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_spacing(const VoxelGrid& g) { return *std::max_element(g.spacing().begin(), g.spacing().end()); }

// ---------------------------------------------------------------------------
// 1. PCA identities

// mean + sum_k <y - mean, phi_k> phi_k, one voxel at a time.
VoxelGrid projection_oracle(const ShapeModel& model, const VoxelGrid& y) {
  VoxelGrid out = model.mean;
  for (Eigen::Index k = 0; k < model.modes.rows(); ++k) {
    double w = 0.0;
    for (std::size_t v = 0; v < y.size(); ++v) w += (y[v] - model.mean[v]) * model.modes(k, static_cast<Eigen::Index>(v));
    for (std::size_t v = 0; v < y.size(); ++v) out[v] += w * model.modes(k, static_cast<Eigen::Index>(v));
  }
  return out;
}

Outcome pca_identity() {
  const auto t0 = Clock::now();
  PopulationSpec pop;
  std::vector<VoxelGrid> training, held_out;
  for (std::uint64_t i = 0; i < 10; ++i) training.push_back(make_subject(pop, i).grid);
  for (std::uint64_t i = 10; i < 15; ++i) held_out.push_back(make_subject(pop, i).grid);
  const auto model = fit_modes(training, 10);
  double train_err = 0.0, held_err = 0.0;
  for (const auto& s : training) train_err = std::max(train_err, max_abs_diff(reconstruct(model, project(model, s)), s));
  for (const auto& s : held_out)
    held_err = std::max(held_err, max_abs_diff(reconstruct(model, project(model, s)), projection_oracle(model, s)));
  const double t = seconds_since(t0);
  return {train_err < 1e-6 && held_err < 1e-6 && t < 120.0,
          format("training max err %.2e, held-out identity max err %.2e (tol 1e-6), %.1fs (limit 120s)", train_err,
                 held_err, t)};
}

// ---------------------------------------------------------------------------
// 2. Registration recovery

Outcome registration_recovery() {
  const auto t0 = Clock::now();
  const PhantomSpec spec;
  const auto fixed = make_phantom(spec);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  int ok = 0;
  const int runs = 50;
  for (int r = 0; r < runs; ++r) {
    auto pose = SimilarityTransform::identity(spec.geometry());
    pose.scale = std::exp(std::log(0.8) + unit(rng) * (std::log(1.25) - std::log(0.8)));
    const Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
    pose.rotation = SimilarityTransform::axis_angle(axis, unit(rng) * 30.0 * std::numbers::pi / 180.0);
    const Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
    pose.translation = dir.normalized() * (10.0 * std::cbrt(unit(rng)));  // uniform in the 10-voxel ball
    const auto report = estimate_transform(make_phantom(spec, pose), fixed);
    const auto truth = inverse(pose, spec.geometry());
    const double ds = std::abs(report.transform.scale - truth.scale);
    const double da = rotation_angle_between(report.transform.rotation, truth.rotation) * 180.0 / std::numbers::pi;
    const double dt = (report.transform.translation - truth.translation).norm();
    ok += ds <= 0.03 && da <= 3.0 && dt <= 1.0;
  }
  const double t = seconds_since(t0);
  return {ok >= 45 && t < 300.0, format("%d/%d runs within scale 0.03, 3 deg, 1 voxel (need 45), %.1fs (limit 300s)",
                                        ok, runs, t)};
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> side(1, 5);
  std::uniform_real_distribution<double> density(0.05, 0.9), spacing(0.5, 2.5), tol(0.0, 3.0);
  double worst = 0.0;
  int mismatched_definedness = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Geometry g{{side(rng), side(rng), side(rng)}, {spacing(rng), spacing(rng), spacing(rng)}, {0.0, 0.0, 0.0}};
    const auto a = vs_test::random_mask(g, rng, density(rng));
    const auto b = vs_test::random_mask(g, rng, density(rng));
    const double t = tol(rng);
    worst = std::max(worst, std::abs(dsc(a, b) - vs_test::oracle::dsc(a, b)));
    worst = std::max(worst, std::abs(bdsc(a, b, t) - vs_test::oracle::bdsc(a, b, t)));
    const auto expected = vs_test::oracle::hd95(a, b);
    if (!expected) {
      try {
        hd95(a, b);
        ++mismatched_definedness;
      } catch (const UndefinedMetricError&) {
      }
    } else {
      worst = std::max(worst, std::abs(hd95(a, b) - *expected));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-9 && mismatched_definedness == 0 && t < 60.0,
          format("max |metric - oracle| %.2e over 200 grids (tol 1e-9), %d definedness mismatches, %.1fs (limit 60s)",
                 worst, mismatched_definedness, t)};
}

// ---------------------------------------------------------------------------
// Shared phantom experiment: 10 training subjects registered to subject 0,
// which also serves as the single template.

struct Experiment {
  PopulationSpec population;
  Template single, mean;
  ShapeModel model;
  double setup_seconds = 0.0;
};

const Experiment& experiment() {
  static const Experiment e = [] {
    const auto t0 = Clock::now();
    Experiment out;
    const auto reference = make_subject(out.population, 0).grid;
    std::vector<VoxelGrid> warped{reference};
    std::vector<std::string> ids{"0"};
    for (std::uint64_t i = 1; i < 10; ++i) {
      const auto s = make_subject(out.population, i).grid;
      warped.push_back(warp(s, estimate_transform(s, reference).transform, WarpMode::binary));
      ids.push_back(std::to_string(i));
    }
    out.single = make_template(reference, "0");
    out.mean = make_template(warped, 0.5, ids);
    FitOptions fit;
    fit.training_ids = ids;
    out.model = fit_modes(warped, 10, fit);
    out.setup_seconds = seconds_since(t0);
    return out;
  }();
  return e;
}

struct ImplantScore {
  double dsc = 0.0;
  double hd95 = 0.0;
  std::size_t pieces = 0;
  VoxelGrid implant;
};

// Completion, subtraction in the original space, then cleanup.
ImplantScore score(const CompletionResult& r, const DefectCase& dc, const std::optional<VoxelGrid>& hint = std::nullopt) {
  const auto raw = volume_subtract(r.completed_original, dc.result.defective);
  ImplantScore s;
  try {
    auto ex = extract_implant(raw, PostprocessConfig{}, hint);
    s.implant = std::move(ex.implant);
    s.pieces = ex.pieces;
    s.dsc = dsc(s.implant, dc.result.implant);
    s.hd95 = hd95(s.implant, dc.result.implant);
  } catch (const EmptyImplantError&) {
    s.implant = VoxelGrid(raw.geometry());
    s.hd95 = std::numeric_limits<double>::infinity();
  }
  return s;
}

// ---------------------------------------------------------------------------
// 4. Phantom completion

Outcome phantom_completion() {
  const auto t0 = Clock::now();
  const auto& e = experiment();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> fraction(0.1, 0.3);
  const int cases = 20;
  double dsc_sum[3] = {0, 0, 0}, hd_sum[3] = {0, 0, 0};
  double spacing = 0.0;
  for (int c = 0; c < cases; ++c) {
    const auto dc = make_defect_case(e.population, 100 + static_cast<std::uint64_t>(c), DefectKind::sphere, fraction(rng));
    spacing = std::max(spacing, max_spacing(dc.result.defective));
    const CompletionResult results[3] = {complete_by_template(dc.result.defective, e.single),
                                         complete_by_template(dc.result.defective, e.mean),
                                         complete_by_ssm(dc.result.defective, e.model)};
    for (int m = 0; m < 3; ++m) {
      const auto s = score(results[m], dc);
      dsc_sum[m] += s.dsc;
      hd_sum[m] += s.hd95;
    }
  }
  double d[3], h[3];
  bool pass = true;
  for (int m = 0; m < 3; ++m) {
    d[m] = dsc_sum[m] / cases;
    h[m] = hd_sum[m] / cases;
    pass = pass && d[m] >= 0.85 && h[m] <= 3.0 * spacing;
  }
  const double gap = std::abs(d[0] - d[1]);
  const double t = seconds_since(t0);
  pass = pass && gap <= 0.02 && t < 600.0;
  return {pass, format("mean implant DSC single %.3f, mean(10) %.3f, SSM(10) %.3f (need 0.85); HD95 %.2f/%.2f/%.2f mm "
                       "(limit %.1f); single-mean gap %.3f (limit 0.02); %.1fs incl. %.1fs model (limit 600s)",
                       d[0], d[1], d[2], h[0], h[1], h[2], 3.0 * spacing, gap, t, e.setup_seconds)};
}

// ---------------------------------------------------------------------------
// 5. Defect insensitivity

Outcome defect_insensitivity() {
  const auto& e = experiment();
  const DefectKind kinds[3] = {DefectKind::sphere, DefectKind::box, DefectKind::multi};
  double worst_spread = 0.0;
  std::string per_phantom;
  for (std::uint64_t p = 0; p < 5; ++p) {
    double lo = 1.0, hi = 0.0;
    for (auto kind : kinds) {
      const auto dc = make_defect_case(e.population, 200 + p, kind, 0.2);
      const auto hint = defect_hint(dc.subject.grid.geometry(), dc.defect);
      const auto s = score(complete_by_ssm(dc.result.defective, e.model), dc, hint);
      lo = std::min(lo, s.dsc);
      hi = std::max(hi, s.dsc);
    }
    worst_spread = std::max(worst_spread, hi - lo);
    per_phantom += format(" %.3f", hi - lo);
  }
  return {worst_spread <= 0.05,
          format("SSM implant DSC spread across sphere/box/two-defect per phantom:%s; worst %.3f (limit 0.05)",
                 per_phantom.c_str(), worst_spread)};
}

// ---------------------------------------------------------------------------
// 6. Post-processing under salt noise

// Adds up to `count` voxels with no foreground in their 26-neighbourhood.
VoxelGrid add_isolated_noise(const VoxelGrid& clean, std::mt19937_64& rng, int count) {
  VoxelGrid out = clean;
  const auto& d = clean.dims();
  std::uniform_int_distribution<std::int64_t> pi(0, d[0] - 1), pj(0, d[1] - 1), pk(0, d[2] - 1);
  int placed = 0;
  for (int attempt = 0; placed < count && attempt < 100 * count; ++attempt) {
    const auto i = pi(rng), j = pj(rng), k = pk(rng);
    bool isolated = true;
    for (int dk = -1; dk <= 1 && isolated; ++dk)
      for (int dj = -1; dj <= 1 && isolated; ++dj)
        for (int di = -1; di <= 1 && isolated; ++di) isolated = out.value_or_zero(i + di, j + dj, k + dk) < 0.5;
    if (!isolated) continue;
    out.at(i, j, k) = 1.0;
    ++placed;
  }
  return out;
}

Outcome postprocess_noise() {
  const auto t0 = Clock::now();
  const PopulationSpec pop;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> fraction(0.1, 0.3);
  std::uniform_int_distribution<int> noise(1, 200);
  int ok = 0;
  double worst = 1.0;
  const int cases = 40;
  for (int c = 0; c < cases; ++c) {
    const auto dc = make_defect_case(pop, 300 + static_cast<std::uint64_t>(c), DefectKind::sphere, fraction(rng));
    const auto noisy = add_isolated_noise(dc.result.implant, rng, noise(rng));
    double d = 0.0;
    try {
      d = dsc(extract_implant(noisy, PostprocessConfig{}).implant, dc.result.implant);
    } catch (const EmptyImplantError&) {
    }
    ok += d >= 0.95;
    worst = std::min(worst, d);
  }
  const double t = seconds_since(t0);
  return {ok >= 38 && t < 120.0,
          format("%d/%d cases with DSC >= 0.95 after cleanup (need 38), worst %.3f, %.1fs (limit 120s)", ok, cases,
                 worst, t)};
}

// ---------------------------------------------------------------------------
// 7. Two-defect completion

Outcome two_defects() {
  const auto& e = experiment();
  const auto dc = make_defect_case(e.population, 400, DefectKind::multi, 0.2);
  const auto hint = defect_hint(dc.subject.grid.geometry(), dc.defect);
  const auto r = complete_by_ssm(dc.result.defective, e.model);
  const auto s = score(r, dc, hint);
  const auto pieces = connected_components(s.implant).count();
  const double union_dsc = dsc(volume_add(dc.result.defective, s.implant), dc.subject.grid);
  return {union_dsc >= 0.95 && s.pieces == 2 && pieces == 2,
          format("skull-with-implants DSC %.3f (need 0.95), selected pieces %zu, connected pieces %zu (need 2)",
                 union_dsc, s.pieces, pieces)};
}

// ---------------------------------------------------------------------------
// 8. Determinism of the command-line pipeline

int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" VOXSHAPE_CLI "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& f : fs::recursive_directory_iterator(dir))
    if (f.is_regular_file()) out[f.path().lexically_relative(dir).generic_string()] = sha256_file(f.path());
  return out;
}

Outcome determinism() {
  vs_test::ScratchDir scratch("determinism");
  const char* steps[] = {
      "phantom -o data --train 4 --test 3 --seed 8 --write-hints",
      "build-model -o model --training data/training -C 4",
      "complete --model-dir model -o pred -m ssm data/cases",
      "extract-implant --pred-dir pred --cases-dir data/cases",
      "evaluate --pred-dir pred --gt-dir data/cases -o eval",
  };
  for (const char* run : {"a", "b"}) {
    const auto dir = scratch / run;
    fs::create_directories(dir);
    for (const char* step : steps) {
      // The second run uses two workers to show scheduling does not leak into outputs.
      const std::string args = std::string(step) + (std::string(run) == "b" ? " -j 2" : "");
      if (run_cli(args, dir) != 0) return {false, format("run %s failed at: %s", run, step)};
    }
  }
  const auto a = tree_hashes(scratch / "a"), b = tree_hashes(scratch / "b");
  std::size_t nrrd = 0, manifests = 0, differing = 0;
  for (const auto& [path, hash] : a) {
    nrrd += path.ends_with(".nrrd");
    manifests += path.ends_with("manifest.json") || path.ends_with("extract.json");
    const auto it = b.find(path);
    differing += it == b.end() || it->second != hash;
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  return {differing == 0 && nrrd > 0 && manifests > 0,
          format("%zu files compared (%zu NRRD, %zu manifests), %zu differ", a.size(), nrrd, manifests, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"PCA identity", pca_identity},
      {"registration recovery", registration_recovery},
      {"metric oracles", metric_oracles},
      {"phantom completion", phantom_completion},
      {"defect insensitivity", defect_insensitivity},
      {"post-processing under noise", postprocess_noise},
      {"two-defect completion", two_defects},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("threw: ") + ex.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d (%s): %s - %s\n", n, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
