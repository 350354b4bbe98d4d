#include "dgcn/dataset.hpp"

#include <cmath>

#include "dgcn/error.hpp"

namespace dgcn {

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.column_names = column_names;
  out.target_name = target_name;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    if (r >= x.rows()) throw InvalidArgument("Dataset::subset: row out of range");
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(r);
    out.y[static_cast<Eigen::Index>(i)] = y[r];
  }
  return out;
}

void validate_dataset(const Dataset& data, std::size_t min_rows) {
  if (data.size() == 0) throw EmptyDataset("dataset has no rows");
  if (data.size() < min_rows) {
    throw EmptyDataset("dataset has " + std::to_string(data.size()) + " rows, need at least " +
                       std::to_string(min_rows));
  }
  if (data.x.cols() == 0) throw EmptyDataset("dataset has no input columns");
  if (data.y.size() != data.x.rows()) throw DimensionMismatch("dataset: target length differs from row count");
  if (!data.column_names.empty() && data.column_names.size() != data.dims()) {
    throw DimensionMismatch("dataset: column names do not match input width");
  }
  if (!all_finite(data.x) || !all_finite(data.y)) throw InvalidArgument("dataset contains non-finite values");
}

Scaler Scaler::fit(const Dataset& data, bool standardize_y) {
  validate_dataset(data, 1);
  Scaler s;
  const double n = static_cast<double>(data.size());
  s.x_mean = data.x.colwise().mean().transpose();
  s.x_std.resize(data.x.cols());
  for (Eigen::Index c = 0; c < data.x.cols(); ++c) {
    const double var = (data.x.col(c).array() - s.x_mean[c]).square().sum() / n;
    s.x_std[c] = std::max(std::sqrt(var), kStdFloor);
  }
  if (standardize_y) {
    s.y_mean = data.y.mean();
    s.y_std = std::max(std::sqrt((data.y.array() - s.y_mean).square().sum() / n), kStdFloor);
  }
  return s;
}

Matrix Scaler::transform_x(const Matrix& x) const {
  if (x.cols() != x_mean.size()) throw SchemaMismatch("input has " + std::to_string(x.cols()) +
                                                      " columns, scaler expects " + std::to_string(x_mean.size()));
  Matrix out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) = (x.col(c).array() - x_mean[c]) / x_std[c];
  return out;
}

Vector Scaler::transform_y(const Vector& y) const { return ((y.array() - y_mean) / y_std).matrix(); }

Vector Scaler::inverse_y(const Vector& y) const { return (y.array() * y_std + y_mean).matrix(); }

}  // namespace dgcn
