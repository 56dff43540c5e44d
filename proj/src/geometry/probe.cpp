#include "sad/geometry/probe.hpp"

#include <array>
#include <cmath>
#include <string>

#include "sad/error.hpp"

namespace sad {

namespace {

constexpr std::array<std::pair<ProbeKind, std::string_view>, 3> kProbeNames{{
    {ProbeKind::delta_zero, "delta_zero"},
    {ProbeKind::isotropic_gaussian, "isotropic_gaussian"},
    {ProbeKind::around_sample, "around_sample"},
}};

}  // namespace

std::string_view to_string(ProbeKind k) {
  for (const auto& [kind, name] : kProbeNames)
    if (kind == k) return name;
  return "?";
}

ProbeKind parse_probe_kind(std::string_view label) {
  for (const auto& [kind, name] : kProbeNames)
    if (name == label) return kind;
  throw ConfigError("unknown probe kind '" + std::string(label) + "'");
}

ProbeDistribution ProbeDistribution::delta_zero(std::vector<double> sigma_levels) {
  ProbeDistribution p;
  p.kind = ProbeKind::delta_zero;
  p.sigma_levels = std::move(sigma_levels);
  return p;
}

ProbeDistribution ProbeDistribution::isotropic(double sigma_p, std::vector<double> sigma_levels) {
  ProbeDistribution p;
  p.kind = ProbeKind::isotropic_gaussian;
  p.sigma_p = sigma_p;
  p.sigma_levels = std::move(sigma_levels);
  return p;
}

ProbeDistribution ProbeDistribution::around_sample(std::shared_ptr<const Matrix> data,
                                                   std::vector<double> sigma_levels, std::string data_label) {
  ProbeDistribution p;
  p.kind = ProbeKind::around_sample;
  p.data = std::move(data);
  p.sigma_levels = std::move(sigma_levels);
  p.data_label = std::move(data_label);
  return p;
}

void ProbeDistribution::validate() const {
  if (sigma_levels.empty()) throw PreconditionError("probe: no noise levels");
  for (double s : sigma_levels)
    if (!(s > 0.0) || !std::isfinite(s)) throw PreconditionError("probe: noise levels must be positive and finite");
  if (kind == ProbeKind::isotropic_gaussian && !(sigma_p >= 0.0))
    throw PreconditionError("probe: isotropic scale must be non-negative");
  if (kind == ProbeKind::around_sample && (!data || data->rows() == 0))
    throw PreconditionError("probe: around_sample needs a non-empty dataset");
}

void ProbeDistribution::draw(RngStream& stream, Matrix& x, Vector& sigma) const {
  sigma.resize(x.rows());
  if (kind == ProbeKind::around_sample && data->cols() != x.cols())
    throw DimensionError("probe: dataset dimension " + std::to_string(data->cols()) + " does not match " +
                         std::to_string(x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double s = sigma_levels.size() == 1 ? sigma_levels[0] : sigma_levels[stream.uniform_index(sigma_levels.size())];
    sigma[r] = s;
    auto row = x.row(r);
    switch (kind) {
      case ProbeKind::delta_zero:
        std::fill(row.begin(), row.end(), 0.0);
        break;
      case ProbeKind::isotropic_gaussian:
        stream.fill_normal(row);
        for (double& v : row) v *= sigma_p;
        break;
      case ProbeKind::around_sample: {
        const auto x0 = data->row(stream.uniform_index(data->rows()));
        stream.fill_normal(row);
        const double scale = 1.0 / std::sqrt(1.0 + s * s);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = (x0[c] + s * row[c]) * scale;
        break;
      }
    }
  }
}

Matrix ProbeDistribution::second_moment(std::size_t dim) const {
  validate();
  switch (kind) {
    case ProbeKind::delta_zero:
      return Matrix(dim, dim);
    case ProbeKind::isotropic_gaussian:
      return Matrix::identity(dim) * (sigma_p * sigma_p);
    case ProbeKind::around_sample: {
      if (data->cols() != dim) throw DimensionError("probe: dataset dimension mismatch");
      Matrix c = transposed_matmul(*data, *data) * (1.0 / static_cast<double>(data->rows()));
      // Average of (C + s^2 I) / (1 + s^2) over the levels.
      double a = 0.0;
      double b = 0.0;
      for (double s : sigma_levels) {
        a += 1.0 / (1.0 + s * s);
        b += s * s / (1.0 + s * s);
      }
      const double n = static_cast<double>(sigma_levels.size());
      c *= a / n;
      for (std::size_t i = 0; i < dim; ++i) c(i, i) += b / n;
      return c;
    }
  }
  return {};
}

nlohmann::json ProbeDistribution::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)}, {"sigma_levels", sigma_levels}};
  if (kind == ProbeKind::isotropic_gaussian) j["sigma_p"] = sigma_p;
  if (kind == ProbeKind::around_sample) {
    j["data"] = data_label;
    j["data_rows"] = data ? data->rows() : 0;
  }
  return j;
}

}  // namespace sad
