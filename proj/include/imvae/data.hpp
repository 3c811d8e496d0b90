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

// Datasets: IDX parsing (optionally gzip-compressed), binarization,
// subsetting, holdout splits, minibatching and synthetic Gaussian pairs
// with known mutual information.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imvae/array.hpp"
#include "imvae/rng.hpp"

namespace imvae {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

struct Dataset {
  std::string name;
  DenseArray examples;  ///< count x input_dim, values in [0, 1]
  std::optional<std::vector<int>> labels;
  std::size_t classes = 0;

  std::size_t size() const { return examples.rows(); }
  std::size_t input_dim() const { return examples.cols(); }
  bool labeled() const { return labels.has_value(); }
  /// Rows `indices` as a new dataset (labels carried along).
  Dataset select(std::span<const std::size_t> indices, std::string new_name) const;
};

/// Images: magic 2051, u32 count, u32 rows, u32 cols (big-endian), then
/// count*rows*cols bytes. Labels: magic 2049, u32 count, then count bytes.
/// Pixels are scaled by 1/255. FormatError names the observed magic;
/// LengthError reports truncated payloads. An empty `label_bytes` span
/// yields an unlabeled dataset.
Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, std::string name = "idx");

/// Reads a file, transparently gunzipping when it starts with the gzip
/// magic. Throws IoError.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Loads images and, when `labels` is given, labels from (possibly .gz) IDX
/// files.
Dataset load_idx(const std::filesystem::path& images,
                 const std::optional<std::filesystem::path>& labels);

enum class BinarizeMode { none, threshold, stochastic };

/// Parses "none", "threshold" or "stochastic"; ConfigError otherwise.
BinarizeMode binarize_mode_from_name(const std::string& name);
std::string to_string(BinarizeMode mode);

/// threshold: p >= 0.5 -> 1 else 0; stochastic: Bernoulli(p) draws from
/// `seed`; none: unchanged copy.
Dataset binarize(const Dataset& data, std::uint64_t seed, BinarizeMode mode);

struct GaussianPairs {
  DenseArray x;  ///< n x 1
  DenseArray z;  ///< n x 1
  double rho = 0.0;
  double mutual_information = 0.0;  ///< -0.5 log(1 - rho^2)
};

/// n draws of a standard bivariate normal with correlation rho.
/// DomainError unless |rho| < 1.
GaussianPairs synth_correlated_gaussian(std::size_t n, double rho, std::uint64_t seed);

/// n examples. Without a seed the first n rows are taken in order. With a
/// seed rows are sampled without replacement; `stratified` allocates per
/// class by largest remainder (requires labels). ContractError if n > size.
Dataset subset(const Dataset& data, std::size_t n, std::optional<std::uint64_t> seed,
               bool stratified);

struct Split {
  Dataset train;
  Dataset holdout;
};

/// Holdout = the last ceil(fraction * size) rows, never shuffled into train.
Split split_holdout(const Dataset& data, double fraction = 0.1);

/// Shuffled minibatches of exactly `batch` rows; each epoch is a fresh
/// permutation and a short final batch is dropped.
class BatchIterator {
 public:
  /// ContractError if batch < 2 or batch > size.
  BatchIterator(std::size_t size, std::size_t batch, std::uint64_t seed);

  /// Row indices of the next batch.
  std::span<const std::size_t> next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batch_size() const { return batch_; }
  std::size_t batches_per_epoch() const { return order_.size() / batch_; }

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

}  // namespace imvae
