#include "voxshape/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "voxshape/edt.hpp"
#include "voxshape/error.hpp"

namespace voxshape {

namespace {

std::vector<double> directed_squared(const VoxelGrid& from_surface, const std::vector<double>& to_edt) {
  std::vector<double> out;
  for (std::size_t i = 0; i < from_surface.size(); ++i)
    if (from_surface[i] >= 0.5) out.push_back(to_edt[i]);
  return out;
}

std::string number(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

bool within_tolerance(double squared_distance, double tolerance_mm) {
  const double t2 = tolerance_mm * tolerance_mm;
  return squared_distance <= t2 * (1.0 + 1e-12) + 1e-12;
}

double dsc(const VoxelGrid& a, const VoxelGrid& b) {
  require_compatible(a, b, "dsc");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] >= 0.5, y = b[i] >= 0.5;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return static_cast<double>(2 * both) / static_cast<double>(na + nb);
}

double bdsc(const VoxelGrid& a, const VoxelGrid& b, double tolerance_mm) {
  require_compatible(a, b, "bdsc");
  if (!(tolerance_mm >= 0.0)) throw ArgumentError("bdsc: tolerance must be >= 0");
  const VoxelGrid sa = surface_mask(a), sb = surface_mask(b);
  const auto ea = squared_distance_transform(sa);
  const auto eb = squared_distance_transform(sb);
  const auto da = directed_squared(sa, eb);
  const auto db = directed_squared(sb, ea);
  if (da.empty() && db.empty()) return 1.0;
  auto matched = [&](const std::vector<double>& d) {
    return static_cast<std::size_t>(
        std::count_if(d.begin(), d.end(), [&](double v) { return within_tolerance(v, tolerance_mm); }));
  };
  return static_cast<double>(matched(da) + matched(db)) / static_cast<double>(da.size() + db.size());
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ArgumentError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double hd95(const VoxelGrid& a, const VoxelGrid& b) {
  require_compatible(a, b, "hd95");
  const VoxelGrid sa = surface_mask(a), sb = surface_mask(b);
  if (sa.count_foreground() == 0 || sb.count_foreground() == 0)
    throw UndefinedMetricError("hd95: undefined for an empty mask");
  const auto ea = squared_distance_transform(sa);
  const auto eb = squared_distance_transform(sb);
  std::vector<double> pooled = directed_squared(sa, eb);
  const auto back = directed_squared(sb, ea);
  pooled.insert(pooled.end(), back.begin(), back.end());
  for (auto& v : pooled) v = std::sqrt(v);
  return percentile(std::move(pooled), 95.0);
}

MetricsReport compare_masks(const VoxelGrid& prediction, const VoxelGrid& ground_truth, double tolerance_mm,
                            const std::string& case_id, const std::string& subject) {
  MetricsReport r;
  r.case_id = case_id;
  r.subject = subject;
  r.bdsc_tolerance_mm = tolerance_mm;
  const bool pred_empty = prediction.count_foreground() == 0;
  const bool gt_empty = ground_truth.count_foreground() == 0;
  r.dsc = dsc(prediction, ground_truth);
  if (pred_empty && !gt_empty) {
    r.bdsc = 0.0;
  } else {
    r.bdsc = bdsc(prediction, ground_truth, tolerance_mm);
  }
  if (!pred_empty && !gt_empty) r.hd95 = hd95(prediction, ground_truth);
  return r;
}

CaseEvaluation evaluate_case(const std::string& case_id, const VoxelGrid& pred_implant,
                             const VoxelGrid& gt_implant, const VoxelGrid* pred_skull, const VoxelGrid* gt_skull,
                             double tolerance_mm) {
  CaseEvaluation out;
  out.implant = compare_masks(pred_implant, gt_implant, tolerance_mm, case_id, "implant");
  if (pred_skull && gt_skull) out.skull = compare_masks(*pred_skull, *gt_skull, tolerance_mm, case_id, "skull");
  return out;
}

namespace {

nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["dsc"] = r.dsc;
  j["bdsc"] = r.bdsc;
  j["hd95"] = r.hd95 ? nlohmann::ordered_json(*r.hd95) : nlohmann::ordered_json(nullptr);
  j["bdsc_tolerance_mm"] = r.bdsc_tolerance_mm;
  j["prediction"] = r.prediction;
  j["ground_truth"] = r.ground_truth;
  return j;
}

}  // namespace

std::string report_to_json(const CaseEvaluation& evaluation) {
  nlohmann::ordered_json j;
  j["case"] = evaluation.implant.case_id;
  j["implant"] = report_json(evaluation.implant);
  if (evaluation.skull) j["skull"] = report_json(*evaluation.skull);
  return j.dump(2);
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ArgumentError("aggregate: no reports");
  std::vector<double> d, b, h;
  for (const auto& r : reports) {
    d.push_back(r.dsc);
    b.push_back(r.bdsc);
    if (r.hd95) h.push_back(*r.hd95);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  AggregateRow m{"mean", mean(d), mean(b), std::nullopt};
  AggregateRow md{"median", percentile(d, 50.0), percentile(b, 50.0), std::nullopt};
  if (!h.empty()) {
    m.hd95 = mean(h);
    md.hd95 = percentile(h, 50.0);
  }
  return {m, md};
}

std::string aggregate_csv(std::vector<MetricsReport> reports) {
  std::sort(reports.begin(), reports.end(),
            [](const MetricsReport& x, const MetricsReport& y) { return x.case_id < y.case_id; });
  std::ostringstream out;
  out << "case,dsc,bdsc,hd95,bdsc_tolerance_mm\n";
  const double tol = reports.empty() ? 1.0 : reports.front().bdsc_tolerance_mm;
  for (const auto& r : reports)
    out << r.case_id << "," << number(r.dsc) << "," << number(r.bdsc) << ","
        << (r.hd95 ? number(*r.hd95) : "") << "," << number(r.bdsc_tolerance_mm) << "\n";
  if (!reports.empty())
    for (const auto& row : aggregate(reports))
      out << row.label << "," << number(row.dsc) << "," << number(row.bdsc) << ","
          << (row.hd95 ? number(*row.hd95) : "") << "," << number(tol) << "\n";
  return out.str();
}

}  // namespace voxshape
