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

// Audio (VGGish-style) and stereo vision (VGG16-style) encoders plus the
// early- and late-fusion classifier heads.
//
// Class index 0 is "safe", 1 is "unsafe".

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mff/audio_features.hpp"
#include "mff/common.hpp"
#include "mff/layers.hpp"
#include "mff/loss.hpp"
#include "mff/tensor.hpp"

namespace mff {

enum class Fusion { early, late };
enum class Scale { paper, tiny };

inline std::string_view to_string(Fusion f) { return f == Fusion::early ? "early" : "late"; }
inline std::string_view to_string(Scale s) { return s == Scale::paper ? "paper" : "tiny"; }

inline Fusion parse_fusion(std::string_view s) {
  if (s == "early") return Fusion::early;
  if (s == "late") return Fusion::late;
  throw ConfigError("unknown fusion '" + std::string(s) + "' (expected early or late)");
}

inline Scale parse_scale(std::string_view s) {
  if (s == "paper") return Scale::paper;
  if (s == "tiny") return Scale::tiny;
  throw ConfigError("unknown scale '" + std::string(s) + "' (expected paper or tiny)");
}

inline constexpr int kSafe = 0;
inline constexpr int kUnsafe = 1;

inline constexpr double kPaperDropoutRate = 0.5;
// With channels divided by 8, a 0.5 rate after every block stalls training
// for dozens of epochs; the desk-scale preset uses a lighter rate.
inline constexpr double kTinyDropoutRate = 0.3;

struct ModelConfig {
  Fusion fusion = Fusion::early;
  FeatureKind feature_kind = FeatureKind::mel;
  Scale scale = Scale::paper;
  double dropout_rate = 0.5;
  bool share_tower_weights = true;
  std::size_t head_width = 0;  // 0 selects 256 (paper) or 32 (tiny)

  /// Tiny scale divides every channel count by 8.
  std::size_t channel_divisor() const { return scale == Scale::paper ? 1 : 8; }
  std::size_t image_size() const { return scale == Scale::paper ? 224 : 64; }
  std::size_t embedding_width() const { return 512 / channel_divisor(); }
  std::size_t resolved_head_width() const { return head_width ? head_width : 256 / channel_divisor(); }

  FeatureConfig feature_config() const {
    if (scale == Scale::paper)
      return feature_kind == FeatureKind::mel ? FeatureConfig::paper_mel() : FeatureConfig::paper_mfcc();
    return feature_kind == FeatureKind::mel ? FeatureConfig::tiny_mel() : FeatureConfig::tiny_mfcc();
  }

  /// {rows, frames, 1}
  Shape audio_shape() const {
    const auto fc = feature_config();
    return {fc.rows(), fc.frames(), 1};
  }
  Shape image_shape() const { return {image_size(), image_size(), 3}; }

  static ModelConfig desk(Fusion f, FeatureKind k) {
    ModelConfig c;
    c.fusion = f;
    c.feature_kind = k;
    c.scale = Scale::tiny;
    c.dropout_rate = kTinyDropoutRate;
    return c;
  }

  void validate() const {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  }
};

/// Customized VGGish: [Conv+BN, pool, dropout] x2 then [Conv, Conv+BN, pool,
/// dropout] x2, global average pooling on top.
template <class T>
Sequential<T> make_vggish(const ModelConfig& cfg, const std::string& prefix, Rng& init) {
  const std::size_t d = cfg.channel_divisor();
  const std::array<std::size_t, 4> widths{64 / d, 128 / d, 256 / d, 512 / d};
  Sequential<T> net(prefix);
  std::size_t in = 1;
  for (std::size_t b = 0; b < widths.size(); ++b) {
    const std::string blk = prefix + "/block" + std::to_string(b + 1);
    const std::size_t convs = b < 2 ? 1 : 2;
    for (std::size_t c = 0; c < convs; ++c) {
      const std::string id = std::to_string(c + 1);
      net.template add<Conv2D<T>>(blk + "/conv" + id, in, widths[b], init);
      if (c + 1 == convs) net.template add<BatchNorm<T>>(blk + "/bn" + id, widths[b]);
      net.template add<ReLU<T>>(blk + "/relu" + id);
      in = widths[b];
    }
    net.template add<MaxPool2D<T>>(blk + "/pool");
    net.template add<MCDropout<T>>(blk + "/dropout", cfg.dropout_rate);
  }
  net.template add<GlobalAveragePool<T>>(prefix + "/gap");
  return net;
}

/// VGG16 tower: five blocks of 2,2,3,3,3 convolutions, each block closed by
/// pool + dropout, then global average pooling.
template <class T>
Sequential<T> make_vgg16_tower(const ModelConfig& cfg, const std::string& prefix, Rng& init) {
  const std::size_t d = cfg.channel_divisor();
  const std::array<std::size_t, 5> widths{64 / d, 128 / d, 256 / d, 512 / d, 512 / d};
  const std::array<std::size_t, 5> convs{2, 2, 3, 3, 3};
  Sequential<T> net(prefix);
  std::size_t in = 3;
  for (std::size_t b = 0; b < widths.size(); ++b) {
    const std::string blk = prefix + "/block" + std::to_string(b + 1);
    for (std::size_t c = 0; c < convs[b]; ++c) {
      const std::string id = std::to_string(c + 1);
      net.template add<Conv2D<T>>(blk + "/conv" + id, in, widths[b], init);
      net.template add<ReLU<T>>(blk + "/relu" + id);
      in = widths[b];
    }
    net.template add<MaxPool2D<T>>(blk + "/pool");
    net.template add<MCDropout<T>>(blk + "/dropout", cfg.dropout_rate);
  }
  net.template add<GlobalAveragePool<T>>(prefix + "/gap");
  return net;
}

/// Dense(in, hidden) -> ReLU -> dropout -> Dense(hidden, 2).
template <class T>
Sequential<T> make_mlp_head(const std::string& prefix, std::size_t in, std::size_t hidden, double dropout, Rng& init) {
  Sequential<T> net(prefix);
  net.template add<Dense<T>>(prefix + "/dense1", in, hidden, init);
  net.template add<ReLU<T>>(prefix + "/relu");
  net.template add<MCDropout<T>>(prefix + "/dropout", dropout);
  net.template add<Dense<T>>(prefix + "/dense2", hidden, 2, init);
  return net;
}

/// One row of a layer table: conv(+BN)+ReLU collapse into a single row.
struct TableRow {
  std::string layer;
  Shape output;
  bool operator==(const TableRow&) const = default;
};

inline std::vector<TableRow> summarize_layers(const std::vector<LayerTrace>& trace) {
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& t = trace[i];
    if (t.kind == "Conv2D") {
      TableRow row{"Conv2D", t.output};
      if (i + 1 < trace.size() && trace[i + 1].kind == "BatchNorm") {
        row.layer = "Conv2D+BN";
        row.output = trace[++i].output;
      }
      if (i + 1 < trace.size() && trace[i + 1].kind == "ReLU") row.output = trace[++i].output;
      rows.push_back(row);
    } else if (t.kind == "MaxPool2D" || t.kind == "MCDropout") {
      rows.push_back({t.kind, t.output});
    }
  }
  return rows;
}

template <class T>
struct Batch {
  Tensor<T> audio;  // {N, rows, frames, 1}
  Tensor<T> left;   // {N, S, S, 3}
  Tensor<T> right;
  std::vector<int> labels;

  std::size_t size() const { return audio.rank() ? audio.dim(0) : 0; }
};

template <class T>
struct FusionOutput {
  Tensor<T> probs;         // {N, 2}; fused for late fusion
  Tensor<T> audio_probs;   // late fusion only
  Tensor<T> vision_probs;  // late fusion only
};

template <class T>
struct FusionTape {
  SequentialTape<T> audio, left, right, head, audio_head, vision_head;
  FusionOutput<T> output;
};

/// Fail-safe decision: an exact tie is "unsafe".
template <class T>
int decide(T p_safe, T p_unsafe) {
  return p_unsafe >= p_safe ? kUnsafe : kSafe;
}

template <class T>
class FusionModel {
 public:
  FusionModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng init(seed);
    const std::size_t e = cfg_.embedding_width(), h = cfg_.resolved_head_width();
    audio_ = make_vggish<T>(cfg_, "audio", init);
    if (cfg_.share_tower_weights) {
      left_ = make_vgg16_tower<T>(cfg_, "vision", init);
    } else {
      left_ = make_vgg16_tower<T>(cfg_, "vision_left", init);
      right_ = make_vgg16_tower<T>(cfg_, "vision_right", init);
    }
    if (cfg_.fusion == Fusion::early) {
      head_ = make_mlp_head<T>("head", 3 * e, h, cfg_.dropout_rate, init);
    } else {
      audio_head_ = Sequential<T>("audio_head");
      audio_head_.template add<Dense<T>>("audio_head/dense", e, 2, init);
      vision_head_ = make_mlp_head<T>("vision_head", 2 * e, h, cfg_.dropout_rate, init);
    }
  }

  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;
  FusionModel(FusionModel&&) noexcept = default;
  FusionModel& operator=(FusionModel&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const Sequential<T>& audio_encoder() const { return audio_; }
  const Sequential<T>& left_tower() const { return left_; }
  const Sequential<T>& right_tower() const { return cfg_.share_tower_weights ? left_ : right_; }

  Tensor<T> encode_audio(const Tensor<T>& audio, const ForwardContext& ctx, SequentialTape<T>* tape = nullptr) const {
    check_input(audio, cfg_.audio_shape(), "audio");
    return audio_.forward(audio, ctx, tape);
  }

  Tensor<T> encode_view(const Tensor<T>& frames, const ForwardContext& ctx, bool right = false,
                        SequentialTape<T>* tape = nullptr) const {
    check_input(frames, cfg_.image_shape(), "image");
    return (right ? right_tower() : left_tower()).forward(frames, ctx, tape);
  }

  FusionOutput<T> forward(const Batch<T>& batch, const ForwardContext& ctx, FusionTape<T>* tape = nullptr) const {
    check_input(batch.audio, cfg_.audio_shape(), "audio");
    check_input(batch.left, cfg_.image_shape(), "left image");
    check_input(batch.right, cfg_.image_shape(), "right image");
    const std::size_t n = batch.size();
    if (batch.left.dim(0) != n || batch.right.dim(0) != n) throw ConfigError("batch size mismatch across modalities");

    const Tensor<T> a = audio_.forward(batch.audio, ctx, tape ? &tape->audio : nullptr);
    Tensor<T> l, r;
    if (cfg_.share_tower_weights) {
      const Tensor<T> both = left_.forward(concat_batch(batch.left, batch.right), ctx, tape ? &tape->left : nullptr);
      l = slice_batch(both, 0, n);
      r = slice_batch(both, n, 2 * n);
    } else {
      l = left_.forward(batch.left, ctx, tape ? &tape->left : nullptr);
      r = right_.forward(batch.right, ctx, tape ? &tape->right : nullptr);
    }

    FusionOutput<T> out;
    if (cfg_.fusion == Fusion::early) {
      const std::array<const Tensor<T>*, 3> parts{&a, &l, &r};
      out.probs = softmax(head_.forward(concat_features<T>(parts), ctx, tape ? &tape->head : nullptr));
    } else {
      out.audio_probs = softmax(audio_head_.forward(a, ctx, tape ? &tape->audio_head : nullptr));
      const std::array<const Tensor<T>*, 2> parts{&l, &r};
      out.vision_probs = softmax(vision_head_.forward(concat_features<T>(parts), ctx, tape ? &tape->vision_head : nullptr));
      out.probs = Tensor<T>(out.audio_probs.shape);
      for (std::size_t i = 0; i < out.probs.size(); ++i)
        out.probs[i] = (out.audio_probs[i] + out.vision_probs[i]) / T{2};
    }
    if (tape) tape->output = out;
    return out;
  }

  /// Backpropagates the training objective recorded in `tape` and returns
  /// its value. Early fusion: cross-entropy of the fused head. Late fusion:
  /// sum of the two branch cross-entropies (each branch is its own
  /// classifier).
  T backward(const FusionTape<T>& tape, std::span<const int> labels) {
    const std::size_t e = cfg_.embedding_width();
    Tensor<T> da, dl, dr;
    T objective{};
    if (cfg_.fusion == Fusion::early) {
      objective = cross_entropy_loss(tape.output.probs, labels);
      const Tensor<T> demb = head_.backward(softmax_cross_entropy_grad(tape.output.probs, labels), tape.head);
      da = slice_features(demb, 0, e);
      dl = slice_features(demb, e, e);
      dr = slice_features(demb, 2 * e, e);
    } else {
      objective = cross_entropy_loss(tape.output.audio_probs, labels) +
                  cross_entropy_loss(tape.output.vision_probs, labels);
      da = audio_head_.backward(softmax_cross_entropy_grad(tape.output.audio_probs, labels), tape.audio_head);
      const Tensor<T> dv =
          vision_head_.backward(softmax_cross_entropy_grad(tape.output.vision_probs, labels), tape.vision_head);
      dl = slice_features(dv, 0, e);
      dr = slice_features(dv, e, e);
    }
    audio_.backward(da, tape.audio);
    if (cfg_.share_tower_weights) {
      left_.backward(concat_batch(dl, dr), tape.left);
    } else {
      left_.backward(dl, tape.left);
      right_.backward(dr, tape.right);
    }
    return objective;
  }

  /// Applies batch-norm running-statistic updates from a train-mode pass.
  void commit(const FusionTape<T>& tape) {
    audio_.commit(tape.audio);
    left_.commit(tape.left);
    if (!cfg_.share_tower_weights) right_.commit(tape.right);
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    for (Sequential<T>* s : sequences())
      for (auto* p : s->params()) out.push_back(p);
    return out;
  }

  std::vector<const Param<T>*> parameters() const {
    std::vector<const Param<T>*> out;
    for (const Sequential<T>* s : const_cast<FusionModel*>(this)->sequences())
      for (const auto* p : s->params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters())
      if (p->trainable) p->grad.fill(T{0});
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters())
      if (p->trainable) n += p->value.size();
    return n;
  }

  /// Copies tensors whose names start with `prefix` from `named` (for
  /// example ImageNet-initialized vision towers). Returns how many matched.
  std::size_t import_parameters(const std::map<std::string, Tensor<T>>& named, std::string_view prefix = "") {
    std::size_t matched = 0;
    for (auto* p : parameters()) {
      if (!p->name.starts_with(prefix)) continue;
      const auto it = named.find(p->name);
      if (it == named.end()) continue;
      if (it->second.shape != p->value.shape)
        throw ConfigError("import_parameters: shape mismatch for " + p->name);
      p->value = it->second;
      ++matched;
    }
    return matched;
  }

 private:
  std::vector<Sequential<T>*> sequences() {
    std::vector<Sequential<T>*> s{&audio_, &left_};
    if (!cfg_.share_tower_weights) s.push_back(&right_);
    if (cfg_.fusion == Fusion::early) {
      s.push_back(&head_);
    } else {
      s.push_back(&audio_head_);
      s.push_back(&vision_head_);
    }
    return s;
  }

  static void check_input(const Tensor<T>& x, const Shape& expected, std::string_view what) {
    if (x.rank() != 4 || !std::equal(expected.begin(), expected.end(), x.shape.begin() + 1))
      throw ConfigError(std::string(what) + " input shape " + to_string(x.shape) + " does not match model (Nx" +
                        to_string(expected) + ")");
  }

  ModelConfig cfg_;
  Sequential<T> audio_, left_, right_, head_, audio_head_, vision_head_;
};

}  // namespace mff
