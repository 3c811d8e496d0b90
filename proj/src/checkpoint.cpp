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

#include "imvae/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>

#include "imvae/errors.hpp"

namespace imvae {

namespace {

constexpr std::size_t kArraysPerCoder = 2 * (kCoderHiddenLayers + 1);
constexpr std::size_t kArraysPerCritic = 2 * (kCriticHiddenLayers + 1);
constexpr std::size_t kArrayCount = 2 * kArraysPerCoder + kArraysPerCritic;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError("checkpoint truncated at offset " + std::to_string(pos_) + " reading " +
                        what + " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(remaining()) + ")");
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  void skip(std::size_t n) { pos_ += n; }
  std::span<const std::uint8_t> peek(std::size_t n) const { return bytes_.subspan(pos_, n); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void layout_error(const std::string& msg, std::size_t offset) {
  throw FormatError("checkpoint layout error at offset " + std::to_string(offset) + ": " + msg);
}

struct RawArray {
  DenseArray values;
  std::size_t offset;
};

std::vector<Linear> take_stack(std::vector<RawArray>& arrays, std::size_t& next,
                               std::size_t layer_count, const std::string& prefix) {
  std::vector<Linear> layers;
  for (std::size_t i = 0; i < layer_count; ++i) {
    RawArray& w = arrays[next++];
    RawArray& b = arrays[next++];
    if (b.values.rows() != 1 || b.values.cols() != w.values.cols()) {
      layout_error(prefix + " layer " + std::to_string(i) + " bias has shape " +
                       b.values.shape_string() + " for weight " + w.values.shape_string(),
                   b.offset);
    }
    if (!layers.empty() && layers.back().fan_out() != w.values.rows()) {
      layout_error(prefix + " layer " + std::to_string(i) + " weight " +
                       w.values.shape_string() + " does not chain from width " +
                       std::to_string(layers.back().fan_out()),
                   w.offset);
    }
    const std::string name = prefix + "." + std::to_string(i);
    layers.push_back(Linear{diff::Parameter(name + ".weight", std::move(w.values)),
                            diff::Parameter(name + ".bias", std::move(b.values))});
  }
  return layers;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  const auto params = model.all_parameters();
  for (const diff::Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (double v : p->value.data()) put_f64(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  return out;
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.need(kCheckpointMagic.size(), "magic");
  const auto magic = in.peek(kCheckpointMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) {
    throw FormatError("checkpoint magic mismatch at offset 0: expected IMVAE001, got \"" +
                      std::string(magic.begin(), magic.end()) + "\"");
  }
  in.skip(kCheckpointMagic.size());

  std::vector<RawArray> arrays;
  while (in.remaining() != 4) {
    const std::size_t at = in.offset();
    const std::uint32_t rows = in.u32("array rows");
    const std::uint32_t cols = in.u32("array cols");
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (count > in.remaining() / 8) in.need(in.remaining() + 1, "array payload");
    DenseArray values(rows, cols);
    for (double& v : values.data()) v = in.f64();
    arrays.push_back({std::move(values), at});
  }
  const std::size_t checksum_at = in.offset();
  const std::uint32_t checksum = in.u32("checksum");
  if (checksum != arrays.size()) {
    layout_error("checksum " + std::to_string(checksum) + " but " +
                     std::to_string(arrays.size()) + " arrays present",
                 checksum_at);
  }
  if (arrays.size() != kArrayCount) {
    layout_error("expected " + std::to_string(kArrayCount) + " arrays, found " +
                     std::to_string(arrays.size()),
                 checksum_at);
  }

  Model model;
  std::size_t next = 0;
  model.encoder.layers = take_stack(arrays, next, kCoderHiddenLayers + 1, "encoder");
  model.decoder.layers = take_stack(arrays, next, kCoderHiddenLayers + 1, "decoder");
  const std::size_t critic_start = next;
  model.critic.layers = take_stack(arrays, next, kCriticHiddenLayers + 1, "critic");

  const std::size_t input_dim = model.encoder.layers.front().fan_in();
  const std::size_t enc_out = model.encoder.layers.back().fan_out();
  if (enc_out % 2 != 0) layout_error("encoder output width is odd", arrays[kArraysPerCoder - 2].offset);
  const std::size_t z_dim = enc_out / 2;
  if (model.decoder.layers.front().fan_in() != z_dim ||
      model.decoder.layers.back().fan_out() != input_dim) {
    layout_error("decoder shape does not match encoder (input " + std::to_string(input_dim) +
                     ", z " + std::to_string(z_dim) + ")",
                 arrays[kArraysPerCoder].offset);
  }
  if (model.critic.layers.front().fan_in() != input_dim + z_dim ||
      model.critic.layers.back().fan_out() != 1) {
    layout_error("critic shape does not match (input + z) -> 1", arrays[critic_start].offset);
  }
  model.encoder.z_dim = z_dim;
  model.critic.input_dim = input_dim;
  model.shape = ModelShape{input_dim, z_dim, model.encoder.layers.front().fan_out(),
                           model.critic.layers.front().fan_out()};
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace imvae
