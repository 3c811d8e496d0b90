// Copyright 2026 The imvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "imvae/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "imvae/errors.hpp"

namespace imvae {

DenseArray::DenseArray(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseArray::DenseArray(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw DimensionError("DenseArray: " + std::to_string(data_.size()) +
                         " values for shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

DenseArray DenseArray::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("DenseArray::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseArray(r, c, std::move(data));
}

void DenseArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double DenseArray::item() const {
  if (rows_ != 1 || cols_ != 1) {
    throw DimensionError("item() on non-scalar array of shape " + shape_string());
  }
  return data_[0];
}

bool DenseArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string DenseArray::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

DenseArray gather_rows(const DenseArray& a, std::span<const std::size_t> indices) {
  DenseArray out(indices.size(), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + a.shape_string());
    }
    std::memcpy(out.row(i).data(), a.row(indices[i]).data(), a.cols() * sizeof(double));
  }
  return out;
}

}  // namespace imvae
