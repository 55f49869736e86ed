#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace colorsurf {

using MatrixXdR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense 2-D row-major double tensor. Rows are the batch dimension.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor row3(double x, double y, double z) {
    Tensor t(1, 3);
    t.data = {x, y, z};
    return t;
  }
  static Tensor from_rows(const std::vector<std::vector<double>>& rows_in) {
    if (rows_in.empty()) return Tensor();
    Tensor t(static_cast<int>(rows_in.size()), static_cast<int>(rows_in[0].size()));
    for (int r = 0; r < t.rows; ++r) {
      if (static_cast<int>(rows_in[r].size()) != t.cols)
        throw std::invalid_argument("Tensor::from_rows: ragged rows");
      std::copy(rows_in[r].begin(), rows_in[r].end(), t.data.begin() + static_cast<size_t>(r) * t.cols);
    }
    return t;
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double value() const {
    if (rows != 1 || cols != 1) throw std::logic_error("Tensor::value: not a 1x1 tensor");
    return data[0];
  }

  Eigen::Map<MatrixXdR> mat() { return {data.data(), rows, cols}; }
  Eigen::Map<const MatrixXdR> mat() const { return {data.data(), rows, cols}; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Rounds every entry to the nearest float32 value. Parameter state is kept
  // float32-representable so checkpoints (stored as float32) round-trip bitwise.
  void quantize_f32() {
    for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  }
};

}  // namespace colorsurf
