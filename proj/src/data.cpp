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

#include "imvae/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "imvae/errors.hpp"

namespace imvae {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void require_bytes(std::span<const std::uint8_t> b, std::size_t need, const char* what) {
  if (b.size() < need) {
    throw LengthError(std::string(what) + ": need " + std::to_string(need) + " bytes, got " +
                      std::to_string(b.size()));
  }
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in, const std::string& name) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("zlib init failed for " + name);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream in " + name + " (zlib code " + std::to_string(rc) +
                        ")");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw LengthError("truncated gzip stream in " + name);
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

Dataset Dataset::select(std::span<const std::size_t> indices, std::string new_name) const {
  Dataset out;
  out.name = std::move(new_name);
  out.examples = gather_rows(examples, indices);
  out.classes = classes;
  if (labels) {
    std::vector<int> l;
    l.reserve(indices.size());
    for (std::size_t i : indices) l.push_back((*labels)[i]);
    out.labels = std::move(l);
  }
  return out;
}

Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, std::string name) {
  require_bytes(image_bytes, 16, "IDX image header");
  const std::uint32_t magic = read_be32(image_bytes, 0);
  if (magic != kIdxImageMagic) {
    throw FormatError("IDX image magic is " + std::to_string(magic) + ", expected " +
                      std::to_string(kIdxImageMagic));
  }
  const std::size_t count = read_be32(image_bytes, 4);
  const std::size_t rows = read_be32(image_bytes, 8);
  const std::size_t cols = read_be32(image_bytes, 12);
  const std::size_t dim = rows * cols;
  require_bytes(image_bytes, 16 + count * dim, "IDX image payload");

  Dataset out;
  out.name = std::move(name);
  out.examples = DenseArray(count, dim);
  auto px = out.examples.data();
  for (std::size_t i = 0; i < count * dim; ++i) px[i] = image_bytes[16 + i] / 255.0;

  if (!label_bytes.empty()) {
    require_bytes(label_bytes, 8, "IDX label header");
    const std::uint32_t lmagic = read_be32(label_bytes, 0);
    if (lmagic != kIdxLabelMagic) {
      throw FormatError("IDX label magic is " + std::to_string(lmagic) + ", expected " +
                        std::to_string(kIdxLabelMagic));
    }
    const std::size_t lcount = read_be32(label_bytes, 4);
    if (lcount != count) {
      throw FormatError("IDX label count " + std::to_string(lcount) + " does not match " +
                        std::to_string(count) + " images");
    }
    require_bytes(label_bytes, 8 + count, "IDX label payload");
    std::vector<int> labels(count);
    int max_label = -1;
    for (std::size_t i = 0; i < count; ++i) {
      labels[i] = label_bytes[8 + i];
      max_label = std::max(max_label, labels[i]);
    }
    out.labels = std::move(labels);
    out.classes = static_cast<std::size_t>(max_label + 1);
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
    return gunzip(bytes, path.string());
  }
  return bytes;
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::optional<std::filesystem::path>& labels) {
  const auto image_bytes = read_file_bytes(images);
  std::vector<std::uint8_t> label_bytes;
  if (labels) label_bytes = read_file_bytes(*labels);
  return parse_idx(image_bytes, label_bytes, images.filename().string());
}

BinarizeMode binarize_mode_from_name(const std::string& name) {
  if (name == "none") return BinarizeMode::none;
  if (name == "threshold") return BinarizeMode::threshold;
  if (name == "stochastic") return BinarizeMode::stochastic;
  throw ConfigError("unknown binarize mode '" + name + "' (expected none, threshold, stochastic)");
}

std::string to_string(BinarizeMode mode) {
  switch (mode) {
    case BinarizeMode::none: return "none";
    case BinarizeMode::threshold: return "threshold";
    case BinarizeMode::stochastic: return "stochastic";
  }
  return "none";
}

Dataset binarize(const Dataset& data, std::uint64_t seed, BinarizeMode mode) {
  Dataset out = data;
  if (mode == BinarizeMode::none) return out;
  Rng rng = Rng::stream(seed, 101);
  for (double& p : out.examples.data()) {
    if (mode == BinarizeMode::threshold) {
      p = p >= 0.5 ? 1.0 : 0.0;
    } else {
      p = rng.uniform() < p ? 1.0 : 0.0;
    }
  }
  out.name = data.name + "+" + to_string(mode);
  return out;
}

GaussianPairs synth_correlated_gaussian(std::size_t n, double rho, std::uint64_t seed) {
  if (!(std::abs(rho) < 1.0)) {
    throw DomainError("synth_correlated_gaussian: |rho| must be < 1, got " + std::to_string(rho));
  }
  Rng rng = Rng::stream(seed, 102);
  GaussianPairs out;
  out.x = DenseArray(n, 1);
  out.z = DenseArray(n, 1);
  const double c = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal();
    const double b = rng.normal();
    out.x[i] = a;
    out.z[i] = rho * a + c * b;
  }
  out.rho = rho;
  out.mutual_information = -0.5 * std::log1p(-rho * rho);
  return out;
}

Dataset subset(const Dataset& data, std::size_t n, std::optional<std::uint64_t> seed,
               bool stratified) {
  if (n > data.size()) {
    throw ContractError("subset of " + std::to_string(n) + " from a dataset of " +
                        std::to_string(data.size()));
  }
  std::vector<std::size_t> picked;
  if (!seed) {
    if (stratified) throw ContractError("stratified subsets need a seed");
    picked.resize(n);
    std::iota(picked.begin(), picked.end(), std::size_t{0});
  } else if (!stratified) {
    Rng rng = Rng::stream(*seed, 103);
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(all));
    picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(picked.begin(), picked.end());
  } else {
    if (!data.labeled()) throw ContractError("stratified subset of an unlabeled dataset");
    const auto& labels = *data.labels;
    std::vector<std::vector<std::size_t>> by_class(data.classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    // Largest-remainder allocation of n across classes.
    const double total = static_cast<double>(data.size());
    std::vector<std::size_t> quota(data.classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < data.classes; ++c) {
      const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) / total;
      quota[c] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[c];
      remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k) {
      ++quota[remainders[k].second];
      ++assigned;
    }
    Rng rng = Rng::stream(*seed, 104);
    for (std::size_t c = 0; c < data.classes; ++c) {
      auto& members = by_class[c];
      rng.shuffle(std::span<std::size_t>(members));
      picked.insert(picked.end(), members.begin(),
                    members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
    std::sort(picked.begin(), picked.end());
  }
  return data.select(picked, data.name + "[" + std::to_string(n) + "]");
}

Split split_holdout(const Dataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ContractError("holdout fraction must be in (0, 1), got " + std::to_string(fraction));
  }
  const auto held = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(data.size())));
  const std::size_t kept = data.size() - held;
  std::vector<std::size_t> train_idx(kept);
  std::vector<std::size_t> hold_idx(held);
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::iota(hold_idx.begin(), hold_idx.end(), kept);
  return {data.select(train_idx, data.name + ":train"),
          data.select(hold_idx, data.name + ":holdout")};
}

BatchIterator::BatchIterator(std::size_t size, std::size_t batch, std::uint64_t seed)
    : order_(size), batch_(batch), rng_(Rng::stream(seed, 105)) {
  if (batch < 2) throw ContractError("batch size must be >= 2, got " + std::to_string(batch));
  if (batch > size) {
    throw ContractError("batch size " + std::to_string(batch) + " exceeds dataset size " +
                        std::to_string(size));
  }
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchIterator::reshuffle() {
  rng_.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::span<const std::size_t> BatchIterator::next() {
  if (cursor_ + batch_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  std::span<const std::size_t> out(order_.data() + cursor_, batch_);
  cursor_ += batch_;
  return out;
}

}  // namespace imvae
