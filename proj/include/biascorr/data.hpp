#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace biascorr {

using Label = std::size_t;

// Dense row-major matrix of features, one row per sample.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct Batch {
  Matrix features;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
};

}  // namespace biascorr
