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

// Checkpoint layout (all integers little-endian):
//
//   "IMVAE001"                                  8-byte magic
//   repeated per parameter array, in Model::all_parameters() order:
//     u32 rows, u32 cols, rows*cols IEEE-754 binary64 values (row-major)
//   u32 checksum = number of arrays
//
// The order is encoder layers 0..4, decoder layers 0..4, critic layers 0..2,
// each as (weight, bias): 26 arrays in total. The model shape is recovered
// from the array shapes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "imvae/models.hpp"

namespace imvae {

inline constexpr std::string_view kCheckpointMagic = "IMVAE001";

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
/// Throws FormatError (with the byte offset) on any layout violation.
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Throws IoError if the file cannot be written.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace imvae
