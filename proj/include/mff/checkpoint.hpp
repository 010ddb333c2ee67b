/*
 * Copyright 2026 The MFF Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Binary checkpoint: "MFFCKPT1", u32 version, u64 metadata length, JSON
// metadata, u32 tensor count, then per tensor: u32 name length, name,
// u8 dtype (0 = f32, 1 = f64), u32 rank, u64 dims, raw little-endian data.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mff/common.hpp"
#include "mff/dataset.hpp"
#include "mff/networks.hpp"
#include "mff/tensor.hpp"

namespace mff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'M', 'F', 'F', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["fusion"] = to_string(c.fusion);
  j["features"] = to_string(c.feature_kind);
  j["scale"] = to_string(c.scale);
  j["dropout_rate"] = c.dropout_rate;
  j["share_tower_weights"] = c.share_tower_weights;
  j["head_width"] = c.resolved_head_width();
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.fusion = parse_fusion(j.at("fusion").get<std::string>());
    c.feature_kind = parse_feature_kind(j.at("features").get<std::string>());
    c.scale = parse_scale(j.at("scale").get<std::string>());
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.share_tower_weights = j.at("share_tower_weights").get<bool>();
    c.head_width = j.at("head_width").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model configuration: ") + e.what());
  }
  c.validate();
  return c;
}

struct Checkpoint {
  ModelConfig config;
  StandardizerStats stats;
  std::vector<std::pair<std::string, Tensor<float>>> params;  // model parameter order
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  /// Rebuilds the model with the stored parameters.
  FusionModel<float> instantiate() const {
    FusionModel<float> model(config, 0);
    auto slots = model.parameters();
    if (slots.size() != params.size())
      throw ConfigError("checkpoint holds " + std::to_string(params.size()) + " tensors, model expects " +
                        std::to_string(slots.size()));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i]->name != params[i].first || slots[i]->value.shape != params[i].second.shape)
        throw ConfigError("checkpoint tensor '" + params[i].first + "' does not match model slot '" + slots[i]->name +
                          "'");
      slots[i]->value = params[i].second;
    }
    return model;
  }
};

template <class T>
std::vector<std::pair<std::string, Tensor<float>>> snapshot_parameters(const FusionModel<T>& model) {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (const auto* p : model.parameters()) {
    Tensor<float> t(p->value.shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(p->value[i]);
    out.emplace_back(p->name, std::move(t));
  }
  return out;
}

template <class T>
void restore_parameters(FusionModel<T>& model, const std::vector<std::pair<std::string, Tensor<float>>>& saved) {
  auto slots = model.parameters();
  if (slots.size() != saved.size()) throw ConfigError("parameter snapshot does not match model");
  for (std::size_t k = 0; k < slots.size(); ++k)
    for (std::size_t i = 0; i < saved[k].second.size(); ++i) slots[k]->value[i] = static_cast<T>(saved[k].second[i]);
}

namespace detail {

template <class U>
void put_raw(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <class U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw InputError("checkpoint '" + source_ + "' is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

template <class U>
void put_tensor(std::string& out, const std::string& name, std::uint8_t dtype, const Shape& shape, const U* data,
                std::size_t n) {
  put_raw(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_raw(out, dtype);
  put_raw(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_raw(out, static_cast<std::uint64_t>(d));
  out.append(reinterpret_cast<const char*>(data), n * sizeof(U));
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::ordered_json meta;
  meta["config"] = config_to_json(ck.config);
  for (const auto& [k, v] : ck.metadata.items()) meta[k] = v;
  const std::string meta_text = meta.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_raw(out, kCheckpointVersion);
  detail::put_raw(out, static_cast<std::uint64_t>(meta_text.size()));
  out += meta_text;
  const std::pair<const char*, const std::vector<double>*> arrays[] = {
      {"standardizer/image_mean", &ck.stats.image_mean},
      {"standardizer/image_std", &ck.stats.image_std},
      {"standardizer/audio_mean", &ck.stats.audio_mean},
      {"standardizer/audio_std", &ck.stats.audio_std}};
  detail::put_raw(out, static_cast<std::uint32_t>(ck.params.size() + std::size(arrays)));
  for (const auto& [name, v] : arrays) detail::put_tensor(out, name, 1, {v->size()}, v->data(), v->size());
  for (const auto& [name, t] : ck.params) detail::put_tensor(out, name, 0, t.shape, t.ptr(), t.size());
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>") {
  detail::Reader in(bytes, source);
  if (std::memcmp(in.take(sizeof kCheckpointMagic), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw InputError("'" + source + "' is not a checkpoint");
  if (const auto version = in.get<std::uint32_t>(); version != kCheckpointVersion)
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto meta_len = in.get<std::uint64_t>();
  auto meta = nlohmann::ordered_json::parse(in.str(meta_len));
  ck.config = config_from_json(meta.at("config"));
  meta.erase("config");
  ck.metadata = std::move(meta);
  const auto count = in.get<std::uint32_t>();
  std::map<std::string, std::vector<double>*> arrays{{"standardizer/image_mean", &ck.stats.image_mean},
                                                     {"standardizer/image_std", &ck.stats.image_std},
                                                     {"standardizer/audio_mean", &ck.stats.audio_mean},
                                                     {"standardizer/audio_std", &ck.stats.audio_std}};
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = in.str(in.get<std::uint32_t>());
    const auto dtype = in.get<std::uint8_t>();
    Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = in.get<std::uint64_t>();
    const std::size_t n = element_count(shape);
    if (dtype == 1) {
      const auto it = arrays.find(name);
      if (it == arrays.end()) throw InputError("unexpected f64 tensor '" + name + "' in checkpoint");
      it->second->resize(n);
      std::memcpy(it->second->data(), in.take(n * sizeof(double)), n * sizeof(double));
    } else if (dtype == 0) {
      Tensor<float> t(shape);
      std::memcpy(t.ptr(), in.take(n * sizeof(float)), n * sizeof(float));
      ck.params.emplace_back(std::move(name), std::move(t));
    } else {
      throw InputError("unknown tensor dtype in checkpoint");
    }
  }
  if (!in.done()) throw InputError("trailing bytes in checkpoint '" + source + "'");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint '" + path.string() + "'");
  const std::string bytes = encode_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes, path.string());
}

}  // namespace mff
