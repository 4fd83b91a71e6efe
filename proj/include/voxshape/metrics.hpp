// metrics.hpp - overlap and surface-distance metrics between binary masks.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voxshape/grid.hpp"

namespace voxshape {

// 2|A n B| / (|A| + |B|); 1 when both are empty.
double dsc(const VoxelGrid& a, const VoxelGrid& b);

// Surface Dice at a tolerance: boundary voxels of each mask matched to the
// other mask's boundary within tolerance_mm. 1 when both boundaries are empty.
double bdsc(const VoxelGrid& a, const VoxelGrid& b, double tolerance_mm = 1.0);

// 95th percentile (linear interpolation) of the pooled directed boundary
// distances A->B and B->A, in mm. UndefinedMetricError if either is empty.
double hd95(const VoxelGrid& a, const VoxelGrid& b);

// Percentile with linear interpolation between order statistics at
// position p/100 * (n - 1). `values` must be non-empty.
double percentile(std::vector<double> values, double p);

// A distance d (mm) counts as within tolerance t when d^2 <= t^2 (1 + 1e-12) + 1e-12.
bool within_tolerance(double squared_distance, double tolerance_mm);

struct MetricsReport {
  std::string case_id;
  std::string subject;  // "implant" or "skull"
  double dsc = 0.0;
  double bdsc = 0.0;
  std::optional<double> hd95;  // missing when either mask is empty
  double bdsc_tolerance_mm = 1.0;
  std::string prediction;  // provenance of the compared volumes
  std::string ground_truth;
};

// Empty predictions score dsc 0, bdsc 0 and no hd95.
MetricsReport compare_masks(const VoxelGrid& prediction, const VoxelGrid& ground_truth, double tolerance_mm,
                            const std::string& case_id, const std::string& subject);

struct CaseEvaluation {
  MetricsReport implant;
  std::optional<MetricsReport> skull;
};

CaseEvaluation evaluate_case(const std::string& case_id, const VoxelGrid& pred_implant,
                             const VoxelGrid& gt_implant, const VoxelGrid* pred_skull, const VoxelGrid* gt_skull,
                             double tolerance_mm = 1.0);

std::string report_to_json(const CaseEvaluation& evaluation);

struct AggregateRow {
  std::string label;  // "mean" or "median"
  double dsc = 0.0;
  double bdsc = 0.0;
  std::optional<double> hd95;
};

// Mean and median over reports; hd95 skips missing values.
std::vector<AggregateRow> aggregate(const std::vector<MetricsReport>& reports);

// CSV columns: case,dsc,bdsc,hd95,bdsc_tolerance_mm. Rows are sorted by
// case id, followed by mean and median rows.
std::string aggregate_csv(std::vector<MetricsReport> reports);

}  // namespace voxshape
