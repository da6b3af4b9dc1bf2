/* Copyright 2026 The lungsev Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Parameter checkpoints: <base>.json manifest + <base>.bin float64 little-endian
// payload, tensors concatenated in manifest order. Loss curves as CSV.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lungsev/error.hpp"
#include "lungsev/toynet/net.hpp"
#include "lungsev/toynet/train.hpp"

namespace lungsev::toynet {

inline std::filesystem::path payload_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

inline void save_params(const ParamSet& ps, const std::filesystem::path& manifest) {
  nlohmann::ordered_json j;
  j["dtype"] = "float64";
  j["byte_order"] = "little";
  j["payload"] = payload_path(manifest).filename().string();
  j["tensors"] = nlohmann::ordered_json::array();
  std::int64_t offset = 0;
  std::vector<std::uint64_t> raw;
  raw.reserve(ps.scalar_count());
  for (const auto& p : ps) {
    const auto& s = p.value.shape();
    j["tensors"].push_back({{"name", p.name},
                            {"shape", {s.n, s.c, s.z, s.y, s.x}},
                            {"offset", offset}});
    offset += s.count();
    for (double v : p.value.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      raw.push_back(bits);
    }
  }
  {
    std::ofstream f(manifest);
    if (!f) throw InputError("cannot write " + manifest.string());
    f << j.dump(2) << "\n";
  }
  std::ofstream b(payload_path(manifest), std::ios::binary);
  if (!b) throw InputError("cannot write " + payload_path(manifest).string());
  b.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint64_t)));
  if (!b) throw InputError("short write to " + payload_path(manifest).string());
}

/// Loads into an existing parameter set; names and shapes must match exactly.
inline void load_params(ParamSet& ps, const std::filesystem::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw InputError("cannot open " + manifest.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  if (j.value("dtype", "") != "float64" || j.value("byte_order", "") != "little") {
    throw FormatError("checkpoint must be float64 little-endian");
  }
  const auto& tensors = j.at("tensors");
  if (tensors.size() != ps.size()) {
    throw FormatError("checkpoint has " + std::to_string(tensors.size()) + " tensors, net has " +
                      std::to_string(ps.size()));
  }
  const auto bin = manifest.parent_path() / j.at("payload").get<std::string>();
  std::ifstream b(bin, std::ios::binary);
  if (!b) throw InputError("cannot open " + bin.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  if (bytes.size() != ps.scalar_count() * sizeof(double)) {
    throw FormatError("checkpoint payload length mismatch: " + std::to_string(bytes.size()) + " bytes");
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& t = tensors[i];
    auto& p = ps[i];
    const auto shape = t.at("shape").get<std::vector<std::int64_t>>();
    const auto& s = p.value.shape();
    if (t.at("name").get<std::string>() != p.name || shape != std::vector<std::int64_t>{s.n, s.c, s.z, s.y, s.x}) {
      throw FormatError("checkpoint tensor " + std::to_string(i) + " does not match " + p.name + " " + s.str());
    }
    const auto off = t.at("offset").get<std::size_t>();
    auto dst = p.value.data();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes.data() + (off + k) * sizeof(double), sizeof bits);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      dst[k] = std::bit_cast<double>(bits);
    }
  }
}

inline void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  f << "iteration,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& r : history) f << r.iteration << "," << r.train_loss << "," << r.val_loss << "\n";
}

}  // namespace lungsev::toynet
