#include "voxshape/postprocess.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "voxshape/error.hpp"

namespace voxshape {
namespace {

std::vector<Index3> ball_offsets(int radius) {
  std::vector<Index3> out;
  for (int z = -radius; z <= radius; ++z)
    for (int y = -radius; y <= radius; ++y)
      for (int x = -radius; x <= radius; ++x)
        if (x * x + y * y + z * z <= radius * radius) out.push_back({x, y, z});
  return out;
}

std::vector<Index3> neighbour_offsets(int connectivity) {
  std::vector<Index3> out;
  for (int z = -1; z <= 1; ++z)
    for (int y = -1; y <= 1; ++y)
      for (int x = -1; x <= 1; ++x) {
        const int order = std::abs(x) + std::abs(y) + std::abs(z);
        if (order == 0) continue;
        if (connectivity == 6 && order > 1) continue;
        if (connectivity == 18 && order > 2) continue;
        out.push_back({x, y, z});
      }
  return out;
}

// Inclusive prefix sums with a zero border: P(i+1,j+1,k+1) = sum over [0..i]x[0..j]x[0..k].
class IntegralVolume {
 public:
  explicit IntegralVolume(const VoxelGrid& g)
      : nx_(g.dims()[0] + 1), ny_(g.dims()[1] + 1), nz_(g.dims()[2] + 1),
        sums_(static_cast<std::size_t>(nx_ * ny_ * nz_), 0) {
    const auto& d = g.dims();
    for (std::int64_t k = 0; k < d[2]; ++k)
      for (std::int64_t j = 0; j < d[1]; ++j)
        for (std::int64_t i = 0; i < d[0]; ++i) {
          const std::int64_t v = g.at(i, j, k) >= 0.5 ? 1 : 0;
          at(i + 1, j + 1, k + 1) = v + at(i, j + 1, k + 1) + at(i + 1, j, k + 1) + at(i + 1, j + 1, k) -
                                    at(i, j, k + 1) - at(i, j + 1, k) - at(i + 1, j, k) + at(i, j, k);
        }
  }

  // Foreground count in the clamped box [lo, hi] (inclusive voxel bounds).
  std::int64_t box(Index3 lo, Index3 hi) const {
    for (int a = 0; a < 3; ++a) {
      const std::int64_t n = (a == 0 ? nx_ : a == 1 ? ny_ : nz_) - 1;
      lo[a] = std::clamp<std::int64_t>(lo[a], 0, n);
      hi[a] = std::clamp<std::int64_t>(hi[a] + 1, 0, n);
      if (hi[a] <= lo[a]) return 0;
    }
    return at(hi[0], hi[1], hi[2]) - at(lo[0], hi[1], hi[2]) - at(hi[0], lo[1], hi[2]) -
           at(hi[0], hi[1], lo[2]) + at(lo[0], lo[1], hi[2]) + at(lo[0], hi[1], lo[2]) +
           at(hi[0], lo[1], lo[2]) - at(lo[0], lo[1], lo[2]);
  }

 private:
  std::int64_t& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return sums_[static_cast<std::size_t>(i + nx_ * (j + ny_ * k))];
  }
  std::int64_t at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return sums_[static_cast<std::size_t>(i + nx_ * (j + ny_ * k))];
  }

  std::int64_t nx_, ny_, nz_;
  std::vector<std::int64_t> sums_;
};

}  // namespace

VoxelGrid median_filter(const VoxelGrid& grid, int kernel) {
  if (kernel < 1 || kernel % 2 == 0)
    throw ArgumentError("median_filter: kernel must be odd and >= 1, got " + std::to_string(kernel));
  if (kernel == 1) return grid;
  const int r = kernel / 2;
  const auto& d = grid.dims();
  VoxelGrid out(grid.geometry());
  const std::int64_t window = static_cast<std::int64_t>(kernel) * kernel * kernel;

  if (grid.is_binary()) {
    // Median of a 0/1 window is 1 iff ones are the strict majority.
    const IntegralVolume iv(grid);
    for (std::int64_t k = 0; k < d[2]; ++k)
      for (std::int64_t j = 0; j < d[1]; ++j)
        for (std::int64_t i = 0; i < d[0]; ++i) {
          const auto ones = iv.box({i - r, j - r, k - r}, {i + r, j + r, k + r});
          out.at(i, j, k) = 2 * ones > window ? 1.0 : 0.0;
        }
    return out;
  }

  std::vector<double> values(static_cast<std::size_t>(window));
  const auto mid = values.begin() + window / 2;
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        std::size_t n = 0;
        for (int z = -r; z <= r; ++z)
          for (int y = -r; y <= r; ++y)
            for (int x = -r; x <= r; ++x) values[n++] = grid.value_or_zero(i + x, j + y, k + z);
        std::nth_element(values.begin(), mid, values.end());
        out.at(i, j, k) = *mid;
      }
  return out;
}

VoxelGrid erode(const VoxelGrid& grid, int radius) {
  if (radius < 0) throw ArgumentError("erode: radius must be >= 0");
  const auto ball = ball_offsets(radius);
  const auto& d = grid.dims();
  VoxelGrid out(grid.geometry());
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        if (grid.at(i, j, k) < 0.5) continue;
        bool keep = true;
        for (const auto& o : ball)
          if (grid.value_or_zero(i + o[0], j + o[1], k + o[2]) < 0.5) {
            keep = false;
            break;
          }
        if (keep) out.at(i, j, k) = 1.0;
      }
  return out;
}

VoxelGrid dilate(const VoxelGrid& grid, int radius) {
  if (radius < 0) throw ArgumentError("dilate: radius must be >= 0");
  const auto ball = ball_offsets(radius);
  const auto& g = grid.geometry();
  const auto& d = g.dims;
  VoxelGrid out(g);
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        if (grid.at(i, j, k) < 0.5) continue;
        for (const auto& o : ball)
          if (g.contains(i + o[0], j + o[1], k + o[2])) out.at(i + o[0], j + o[1], k + o[2]) = 1.0;
      }
  return out;
}

VoxelGrid morphological_opening(const VoxelGrid& grid, int radius) {
  if (radius < 0) throw ArgumentError("morphological_opening: radius must be >= 0");
  if (radius == 0) return grid;
  return dilate(erode(grid, radius), radius);
}

VoxelGrid Components::mask(std::int32_t label) const {
  VoxelGrid out(geometry);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out[i] = 1.0;
  return out;
}

Components connected_components(const VoxelGrid& grid, int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26)
    throw ArgumentError("connected_components: connectivity must be 6, 18 or 26");
  const auto offsets = neighbour_offsets(connectivity);
  const auto& g = grid.geometry();

  // Flood fill in scan order, so provisional labels follow smallest index.
  std::vector<std::int32_t> provisional(grid.size(), 0);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < grid.size(); ++seed) {
    if (grid[seed] < 0.5 || provisional[seed] != 0) continue;
    const auto label = static_cast<std::int32_t>(sizes.size() + 1);
    std::size_t count = 0;
    provisional[seed] = label;
    stack.push_back(seed);
    while (!stack.empty()) {
      const auto idx = stack.back();
      stack.pop_back();
      ++count;
      const auto p = g.unravel(idx);
      for (const auto& o : offsets) {
        const auto i = p[0] + o[0], j = p[1] + o[1], k = p[2] + o[2];
        if (!g.contains(i, j, k)) continue;
        const auto n = g.linear(i, j, k);
        if (grid[n] >= 0.5 && provisional[n] == 0) {
          provisional[n] = label;
          stack.push_back(n);
        }
      }
    }
    sizes.push_back(count);
  }

  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  std::vector<std::int32_t> relabel(sizes.size() + 1, 0);
  Components out;
  out.geometry = g;
  out.sizes.resize(sizes.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    relabel[order[r] + 1] = static_cast<std::int32_t>(r + 1);
    out.sizes[r] = sizes[order[r]];
  }
  out.labels.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out.labels[i] = relabel[static_cast<std::size_t>(provisional[i])];
  return out;
}

std::string to_string(ComponentSelection s) {
  switch (s) {
    case ComponentSelection::automatic: return "auto";
    case ComponentSelection::largest: return "largest";
    case ComponentSelection::max_overlap: return "max-overlap";
  }
  return "auto";
}

ComponentSelection component_selection_from_string(const std::string& s) {
  if (s == "auto") return ComponentSelection::automatic;
  if (s == "largest") return ComponentSelection::largest;
  if (s == "max-overlap") return ComponentSelection::max_overlap;
  throw ArgumentError("unknown component selection '" + s + "'");
}

void PostprocessConfig::validate() const {
  if (median_kernel < 1 || median_kernel % 2 == 0) throw ArgumentError("postprocess: median_kernel must be odd and >= 1");
  if (opening_radius < 0) throw ArgumentError("postprocess: opening_radius must be >= 0");
  if (restore_steps < 0) throw ArgumentError("postprocess: restore_steps must be >= 0");
  if (connectivity != 6 && connectivity != 18 && connectivity != 26)
    throw ArgumentError("postprocess: connectivity must be 6, 18 or 26");
}

ExtractionResult extract_implant(const VoxelGrid& raw, const PostprocessConfig& config,
                                 const std::optional<VoxelGrid>& defect_hint) {
  config.validate();
  ExtractionResult result;
  auto record = [&](const std::string& stage, const VoxelGrid& g) {
    const auto n = g.count_foreground();
    result.stages.push_back({stage, n});
    if (n == 0) throw EmptyImplantError(stage, "extract_implant: stage '" + stage + "' left no voxels");
  };

  VoxelGrid current = raw.binarized(0.5);
  record("input", current);
  if (config.erase_mask) {
    current = volume_subtract(current, config.erase_mask->binarized(0.5));
    record("erase", current);
  }
  const VoxelGrid allowed = current;
  // The median may fill holes; the implant stays inside the raw difference.
  current = volume_intersect(median_filter(current, config.median_kernel), current);
  record("median", current);
  current = morphological_opening(current, config.opening_radius);
  record("opening", current);

  const Components comps = connected_components(current, config.connectivity);
  result.stages.push_back({"components", comps.count()});

  ComponentSelection selection = config.selection;
  if (selection == ComponentSelection::automatic)
    selection = defect_hint ? ComponentSelection::max_overlap : ComponentSelection::largest;

  std::set<std::int32_t> keep;
  if (selection == ComponentSelection::largest) {
    keep.insert(1);
  } else {
    if (!defect_hint) throw ArgumentError("extract_implant: max-overlap selection needs a defect hint");
    require_compatible(raw, *defect_hint, "extract_implant");
    const Components hints = connected_components(defect_hint->binarized(0.5), config.connectivity);
    for (std::int32_t h = 1; h <= static_cast<std::int32_t>(hints.count()); ++h) {
      std::vector<std::size_t> overlap(comps.count() + 1, 0);
      for (std::size_t i = 0; i < current.size(); ++i)
        if (hints.labels[i] == h && comps.labels[i] > 0) ++overlap[static_cast<std::size_t>(comps.labels[i])];
      const auto best = std::max_element(overlap.begin() + 1, overlap.end());
      if (best != overlap.end() && *best > 0) keep.insert(static_cast<std::int32_t>(best - overlap.begin()));
    }
  }

  VoxelGrid selected(current.geometry());
  for (std::size_t i = 0; i < current.size(); ++i)
    if (keep.count(comps.labels[i])) selected[i] = 1.0;
  result.pieces = keep.size();
  record("selection", selected);
  if (config.restore_steps > 0) {
    for (int step = 0; step < config.restore_steps; ++step) selected = volume_intersect(dilate(selected, 1), allowed);
    record("restore", selected);
  }
  result.implant = std::move(selected);
  return result;
}

}  // namespace voxshape
