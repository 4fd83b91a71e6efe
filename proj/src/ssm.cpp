#include "voxshape/ssm.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "voxshape/error.hpp"
#include "voxshape/nrrd.hpp"

namespace voxshape {

namespace {

constexpr double kNearZero = 1e-10;

Eigen::Map<const Eigen::RowVectorXd> row_view(const VoxelGrid& g) {
  return {g.data().data(), static_cast<Eigen::Index>(g.size())};
}

void require_reference(const ShapeModel& model, const VoxelGrid& shape, const char* op) {
  require_compatible(model.mean, shape, op);
}

void orient(Eigen::Ref<Eigen::RowVectorXd> row) {
  Eigen::Index arg = 0;
  row.cwiseAbs().maxCoeff(&arg);
  if (row[arg] < 0.0) row = -row;
}

std::vector<double> effective_weights(const ShapeModel& model, const WeightVector& weights,
                                      const ReconstructOptions& options) {
  if (weights.values.size() != model.num_modes())
    throw ArgumentError("reconstruct: got " + std::to_string(weights.values.size()) + " weights for " +
                        std::to_string(model.num_modes()) + " modes");
  return options.literal_rescaled ? weights.values : weights.raw();
}

VoxelGrid combine_modes(const ShapeModel& model, const std::vector<double>& w, bool add_mean,
                        const ReconstructOptions& options) {
  const auto d = static_cast<Eigen::Index>(model.mean.size());
  Eigen::RowVectorXd acc(d);
  if (options.form == ReconstructionForm::matrix) {
    const Eigen::Map<const Eigen::RowVectorXd> lambda(w.data(), static_cast<Eigen::Index>(w.size()));
    acc.noalias() = lambda * model.modes;
  } else {
    acc.setZero();
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * model.modes.row(static_cast<Eigen::Index>(i));
  }
  std::vector<double> out(static_cast<std::size_t>(d));
  if (add_mean) {
    const auto mean = row_view(model.mean);
    for (Eigen::Index v = 0; v < d; ++v) out[static_cast<std::size_t>(v)] = mean[v] + acc[v];
  } else {
    for (Eigen::Index v = 0; v < d; ++v) out[static_cast<std::size_t>(v)] = acc[v];
  }
  VoxelGrid grid(model.mean.geometry(), std::move(out));
  return options.binarize ? grid.binarized(0.5) : grid;
}

}  // namespace

std::string to_string(ModeNormalization n) {
  return n == ModeNormalization::unit ? "unit" : "pseudo_inverse";
}

ModeNormalization mode_normalization_from_string(const std::string& s) {
  if (s == "unit") return ModeNormalization::unit;
  if (s == "pseudo_inverse") return ModeNormalization::pseudo_inverse;
  throw ArgumentError("unknown mode normalization '" + s + "'");
}

std::size_t ShapeModel::rank() const noexcept {
  return static_cast<std::size_t>(std::count(near_zero.begin(), near_zero.end(), false));
}

std::vector<double> WeightVector::raw() const {
  if (!rescaled) return values;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = values[i] * (rescale_max - rescale_min) + rescale_min;
  return out;
}

WeightVector WeightVector::unit(std::size_t num_modes) {
  WeightVector w;
  w.values.assign(num_modes, 1.0);
  return w;
}

WeightVector rescale_weights(const WeightVector& raw) {
  if (raw.rescaled) return raw;
  if (raw.values.empty()) throw DegenerateInputError("rescale: no weights");
  const auto [lo, hi] = std::minmax_element(raw.values.begin(), raw.values.end());
  if (!(*hi > *lo)) throw DegenerateInputError("rescale: degenerate weights, max equals min");
  WeightVector out;
  out.rescaled = true;
  out.rescale_min = *lo;
  out.rescale_max = *hi;
  out.values.resize(raw.values.size());
  for (std::size_t i = 0; i < raw.values.size(); ++i)
    out.values[i] = (raw.values[i] - out.rescale_min) / (out.rescale_max - out.rescale_min);
  return out;
}

VoxelGrid mean_shape(const std::vector<VoxelGrid>& warped) {
  if (warped.empty()) throw ArgumentError("mean_shape: empty shape list");
  VoxelGrid sum(warped.front().geometry());
  for (const auto& g : warped) {
    require_compatible(warped.front(), g, "mean_shape");
    auto dst = sum.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double n = static_cast<double>(warped.size());
  for (auto& v : sum.data()) v /= n;
  return sum;
}

ShapeModel fit_modes(const std::vector<VoxelGrid>& warped, std::size_t num_modes, const FitOptions& options) {
  if (warped.empty()) throw ArgumentError("fit_modes: empty shape list");
  if (num_modes < 1) throw ArgumentError("fit_modes: need at least one mode");
  if (num_modes > warped.size())
    throw ArgumentError("fit_modes: " + std::to_string(num_modes) + " modes requested from " +
                        std::to_string(warped.size()) + " shapes");
  if (!options.training_ids.empty() && options.training_ids.size() != warped.size())
    throw ArgumentError("fit_modes: training_ids length differs from shape count");

  ShapeModel model;
  model.mean = mean_shape(warped);
  model.centered = options.centered;
  model.normalization = options.normalization;
  model.training_ids = options.training_ids;
  if (model.training_ids.empty())
    for (std::size_t i = 0; i < warped.size(); ++i) model.training_ids.push_back(std::to_string(i));

  const auto n = static_cast<Eigen::Index>(warped.size());
  const auto d = static_cast<Eigen::Index>(model.mean.size());
  const auto c = static_cast<Eigen::Index>(num_modes);
  const auto mean = row_view(model.mean);

  ModeMatrix centred(n, d);
  for (Eigen::Index i = 0; i < n; ++i) centred.row(i) = row_view(warped[static_cast<std::size_t>(i)]) - mean;

  // Gram trick: eigenvectors of the N x N Gram matrix lift to voxel space.
  const Eigen::MatrixXd gram = centred * centred.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::MatrixXd evecs = eig.eigenvectors().rowwise().reverse();

  // Singular values are taken as norms of the lifted rows; that is accurate
  // to eps * |X| even where the Gram eigenvalues are pure round-off.
  ModeMatrix lifted = evecs.leftCols(c).transpose() * centred;
  std::vector<double> sigma(num_modes);
  double sigma_max = 0.0;
  for (Eigen::Index k = 0; k < c; ++k) {
    sigma[static_cast<std::size_t>(k)] = lifted.row(k).norm();
    sigma_max = std::max(sigma_max, sigma[static_cast<std::size_t>(k)]);
  }

  model.modes = ModeMatrix::Zero(c, d);
  model.singular_values = sigma;
  model.near_zero.resize(num_modes);
  for (Eigen::Index k = 0; k < c; ++k) {
    const double s = sigma[static_cast<std::size_t>(k)];
    const bool negligible = sigma_max == 0.0 || s < kNearZero * sigma_max;
    model.near_zero[static_cast<std::size_t>(k)] = negligible;
    if (negligible) continue;
    Eigen::RowVectorXd row = lifted.row(k) / s;
    // One Gram-Schmidt pass against earlier modes removes lifting round-off.
    for (Eigen::Index p = 0; p < k; ++p) row -= row.dot(model.modes.row(p)) * model.modes.row(p);
    row.normalize();
    orient(row);
    model.modes.row(k) = row;
  }

  if (options.normalization == ModeNormalization::pseudo_inverse) {
    // Phi = X_pca * pinv(X'), with X' the uncentred D x N training matrix
    // and X_pca = Phi_unit * (X' - mean) the PCA scores.
    ModeMatrix raw(n, d);
    for (Eigen::Index i = 0; i < n; ++i) raw.row(i) = row_view(warped[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd scores = model.modes * centred.transpose();  // C x N
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> raw_eig(raw * raw.transpose());
    const Eigen::MatrixXd& u = raw_eig.eigenvectors();
    Eigen::VectorXd sv(n);
    for (Eigen::Index i = 0; i < n; ++i) sv[i] = (u.col(i).transpose() * raw).norm();
    const double sv_max = sv.maxCoeff();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (sv_max > 0.0 && sv[i] >= kNearZero * sv_max) inv[i] = 1.0 / (sv[i] * sv[i]);
    const Eigen::MatrixXd gram_pinv = u * inv.asDiagonal() * u.transpose();
    // Signs are inherited from the unit modes, so Phi * X' equals the scores.
    model.modes = (scores * gram_pinv) * raw;
  }
  return model;
}

WeightVector project(const ShapeModel& model, const VoxelGrid& shape, bool rescale) {
  require_reference(model, shape, "project");
  Eigen::RowVectorXd y = row_view(shape);
  if (model.centered) y -= row_view(model.mean);
  const Eigen::VectorXd lambda = model.modes * y.transpose();
  WeightVector w;
  w.values.assign(lambda.data(), lambda.data() + lambda.size());
  return rescale ? rescale_weights(w) : w;
}

VoxelGrid reconstruct(const ShapeModel& model, const WeightVector& weights, const ReconstructOptions& options) {
  return combine_modes(model, effective_weights(model, weights, options), true, options);
}

VoxelGrid modes_only_reconstruct(const ShapeModel& model, const WeightVector& weights,
                                 const ReconstructOptions& options) {
  return combine_modes(model, effective_weights(model, weights, options), false, options);
}

std::vector<ModeStatistics> mode_report(const ShapeModel& model, const std::vector<VoxelGrid>& test_shapes,
                                        const std::optional<VoxelGrid>& roi) {
  if (test_shapes.empty()) throw ArgumentError("mode_report: empty test set");
  if (roi) require_reference(model, *roi, "mode_report");

  std::vector<ModeStatistics> stats(model.num_modes());
  for (std::size_t k = 0; k < stats.size(); ++k) {
    stats[k].mode = k;
    stats[k].min_weight = std::numeric_limits<double>::infinity();
    stats[k].max_weight = -std::numeric_limits<double>::infinity();
    stats[k].near_zero = model.near_zero[k];
  }
  for (const auto& shape : test_shapes) {
    const auto w = project(model, shape, false).values;
    for (std::size_t k = 0; k < stats.size(); ++k) {
      stats[k].mean_weight += w[k];
      stats[k].min_weight = std::min(stats[k].min_weight, w[k]);
      stats[k].max_weight = std::max(stats[k].max_weight, w[k]);
    }
  }
  for (auto& s : stats) s.mean_weight /= static_cast<double>(test_shapes.size());

  for (std::size_t k = 0; k < stats.size(); ++k) {
    const auto row = model.modes.row(static_cast<Eigen::Index>(k));
    double total = 0.0, inside = 0.0;
    for (Eigen::Index v = 0; v < row.size(); ++v) {
      const double e = row[v] * row[v];
      total += e;
      if (!roi || (*roi)[static_cast<std::size_t>(v)] >= 0.5) inside += e;
    }
    stats[k].roi_energy_fraction = total > 0.0 ? inside / total : 0.0;
  }
  return stats;
}

void save_model(const ShapeModel& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create model directory " + dir.string());
  write_nrrd(model.mean, dir / "mean.nrrd");

  {
    std::ofstream out(dir / "modes.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "modes.bin").string());
    out.write(reinterpret_cast<const char*>(model.modes.data()),
              static_cast<std::streamsize>(model.modes.size() * sizeof(double)));
    if (!out) throw IoError("short write to " + (dir / "modes.bin").string());
  }

  const auto& g = model.reference();
  nlohmann::ordered_json j;
  j["num_modes"] = model.num_modes();
  j["voxel_count"] = model.mean.size();
  j["centered"] = model.centered;
  j["normalization"] = to_string(model.normalization);
  j["modes_file"] = "modes.bin";
  j["modes_dtype"] = "float64-le-rowmajor";
  j["mean_file"] = "mean.nrrd";
  j["training_ids"] = model.training_ids;
  j["singular_values"] = model.singular_values;
  std::vector<int> nz(model.near_zero.begin(), model.near_zero.end());
  j["near_zero"] = nz;
  j["rank"] = model.rank();
  j["reference"] = {{"dims", g.dims}, {"spacing", g.spacing}, {"origin", g.origin}};
  std::ofstream meta(dir / "model.json", std::ios::trunc);
  if (!meta) throw IoError("cannot write " + (dir / "model.json").string());
  meta << j.dump(2) << "\n";
}

ShapeModel load_model(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "model.json");
  if (!meta) throw IoError("cannot open " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model.json: " + std::string(e.what()));
  }
  ShapeModel model;
  try {
    model.centered = j.at("centered").get<bool>();
    model.normalization = mode_normalization_from_string(j.at("normalization").get<std::string>());
    model.training_ids = j.at("training_ids").get<std::vector<std::string>>();
    model.singular_values = j.at("singular_values").get<std::vector<double>>();
    for (int v : j.at("near_zero").get<std::vector<int>>()) model.near_zero.push_back(v != 0);
    model.mean = read_nrrd(dir / j.at("mean_file").get<std::string>());
    const auto c = j.at("num_modes").get<std::size_t>();
    const auto d = j.at("voxel_count").get<std::size_t>();
    if (d != model.mean.size()) throw ParseError("model.json: voxel_count disagrees with mean.nrrd");
    if (model.singular_values.size() != c || model.near_zero.size() != c)
      throw ParseError("model.json: per-mode arrays disagree with num_modes");
    const Index3 dims = j.at("reference").at("dims").get<Index3>();
    if (dims != model.mean.dims()) throw ParseError("model.json: reference dims disagree with mean.nrrd");

    model.modes.resize(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d));
    std::ifstream in(dir / j.at("modes_file").get<std::string>(), std::ios::binary);
    if (!in) throw IoError("cannot open modes file in " + dir.string());
    in.read(reinterpret_cast<char*>(model.modes.data()), static_cast<std::streamsize>(c * d * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(c * d * sizeof(double)))
      throw ParseError("modes.bin: truncated mode matrix");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model.json: " + std::string(e.what()));
  }
  return model;
}

}  // namespace voxshape
