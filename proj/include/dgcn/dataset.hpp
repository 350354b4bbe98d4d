#pragma once

#include <string>
#include <vector>

#include "dgcn/linalg.hpp"

namespace dgcn {

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> column_names;  // input columns only
  std::string target_name;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(x.cols()); }

  // Rows in the given order.
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

// Throws EmptyDataset / DimensionMismatch / InvalidArgument on a malformed set.
void validate_dataset(const Dataset& data, std::size_t min_rows = 2);

// Per-column z-scoring of inputs and target.
struct Scaler {
  static constexpr double kStdFloor = 1e-12;

  Vector x_mean;
  Vector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  static Scaler fit(const Dataset& data, bool standardize_y = true);

  Matrix transform_x(const Matrix& x) const;
  Vector transform_y(const Vector& y) const;
  Vector inverse_y(const Vector& y) const;
  double inverse_y(double y) const { return y * y_std + y_mean; }
};

}  // namespace dgcn
