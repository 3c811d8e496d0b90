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

#include <Eigen/Core>

#include "imvae/array.hpp"

namespace imvae::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

inline MatrixView view(DenseArray& a) {
  return MatrixView(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                    static_cast<Eigen::Index>(a.cols()));
}

inline ConstMatrixView view(const DenseArray& a) {
  return ConstMatrixView(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                         static_cast<Eigen::Index>(a.cols()));
}

}  // namespace imvae::detail
