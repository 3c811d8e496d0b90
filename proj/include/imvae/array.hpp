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

#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace imvae {

/// Allocator that places every buffer on a 64-byte boundary. Vectorized
/// kernels peel scalar iterations up to the first aligned element, so a
/// fixed alignment keeps results independent of where the heap put the data.
template <class T>
struct CacheAlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  CacheAlignedAllocator() = default;
  template <class U>
  CacheAlignedAllocator(const CacheAlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const CacheAlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Dense row-major 2-D array of doubles. Batches are rows.
class DenseArray {
 public:
  DenseArray() = default;
  DenseArray(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws DimensionError unless
  /// data.size() == rows * cols.
  DenseArray(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseArray from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseArray scalar(double v) { return DenseArray(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const DenseArray& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  /// Value of a 1x1 array; throws DimensionError otherwise.
  double item() const;
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, CacheAlignedAllocator<double>> data_;
};

/// Rows `indices` of `a`, in that order.
DenseArray gather_rows(const DenseArray& a, std::span<const std::size_t> indices);

}  // namespace imvae
