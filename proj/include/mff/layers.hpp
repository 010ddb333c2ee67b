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

// Layer primitives with hand-written backward passes.
//
// Forward passes are const and record whatever backward needs into an
// optional Saved slot, so inference over frozen parameters can run from
// several threads at once. Gradients accumulate into Param::grad.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mff/common.hpp"
#include "mff/tensor.hpp"

namespace mff {

enum class Mode { train, infer_deterministic, infer_mc };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::train: return "train";
    case Mode::infer_deterministic: return "infer_deterministic";
    case Mode::infer_mc: return "infer_mc";
  }
  return "?";
}

inline bool dropout_active(Mode m) { return m != Mode::infer_deterministic; }

struct LayerTrace {
  std::string name;
  std::string kind;
  Shape output;  // without the batch axis
};

struct ForwardContext {
  Mode mode = Mode::infer_deterministic;
  Rng* rng = nullptr;
  std::vector<LayerTrace>* trace = nullptr;
};

template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Shape s, bool train = true)
      : name(std::move(n)), value(s), grad(train ? Tensor<T>(s) : Tensor<T>()), trainable(train) {}
};

template <class T>
struct Saved {
  Tensor<T> x;
  Tensor<T> aux;
  std::vector<T> stats;
  std::vector<std::uint32_t> index;
  Mode mode = Mode::infer_deterministic;
};

template <class T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string_view kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Saved<T>* saved) const = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::vector<const Param<T>*> params() const { return {}; }
  /// Folds batch statistics gathered during a train-mode forward into
  /// running state. No-op for stateless layers.
  virtual void commit(const Saved<T>&) {}

 protected:
  void check_rank(const Tensor<T>& x, std::size_t rank) const {
    if (x.rank() != rank)
      throw ConfigError(name_ + ": expected rank " + std::to_string(rank) + " input, got " +
                        to_string(x.shape));
  }

 private:
  std::string name_;
};

template <class T>
void he_normal(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(sd * normal01(rng));
}

template <class T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.data) v = static_cast<T>(uniform(rng, -limit, limit));
}

/// 3x3 convolution, stride 1, "same" zero padding, NHWC.
template <class T>
class Conv2D final : public Layer<T> {
 public:
  Conv2D(std::string name, std::size_t in_channels, std::size_t out_channels, Rng& init)
      : Layer<T>(std::move(name)),
        in_(in_channels),
        out_(out_channels),
        weight_(this->name() + "/weight", {9 * in_channels, out_channels}),
        bias_(this->name() + "/bias", {out_channels}) {
    he_normal(weight_.value, 9 * in_channels, init);
  }

  std::string_view kind() const override { return "Conv2D"; }
  std::size_t out_channels() const { return out_; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[2] != in_)
      throw ConfigError(this->name() + ": expected HxWx" + std::to_string(in_) + ", got " + to_string(in));
    return {in[0], in[1], out_};
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&, Saved<T>* saved) const override {
    this->check_rank(x, 4);
    output_shape({x.dim(1), x.dim(2), x.dim(3)});
    const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2);
    Tensor<T> y({n, x.dim(1), x.dim(2), out_});
    const auto w = as_matrix(weight_.value, 9 * in_, out_);
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.ptr(), static_cast<Eigen::Index>(out_));
    std::vector<T>& col = scratch();
    for (std::size_t first = 0; first < n; first += kChunk) {
      const std::size_t count = std::min(kChunk, n - first);
      const std::size_t rows = count * hw;
      im2col(x, first, count, col);
      MatrixMap<T> ym(y.ptr() + first * hw * out_, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_));
      ym.noalias() = ConstMatrixMap<T>(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(9 * in_)) * w;
      ym.rowwise() += b;
    }
    if (saved) saved->x = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) override {
    const Tensor<T>& x = saved.x;
    const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2);
    auto dw = as_matrix(weight_.grad, 9 * in_, out_);
    const auto w = as_matrix(weight_.value, 9 * in_, out_);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.ptr(), static_cast<Eigen::Index>(out_));
    Tensor<T> dx(x.shape);
    std::vector<T>& col = scratch();
    for (std::size_t first = 0; first < n; first += kChunk) {
      const std::size_t count = std::min(kChunk, n - first);
      const auto rows = static_cast<Eigen::Index>(count * hw);
      const auto k = static_cast<Eigen::Index>(9 * in_);
      ConstMatrixMap<T> dym(dy.ptr() + first * hw * out_, rows, static_cast<Eigen::Index>(out_));
      im2col(x, first, count, col);
      dw.noalias() += ConstMatrixMap<T>(col.data(), rows, k).transpose() * dym;
      db += dym.colwise().sum();
      MatrixMap<T>(col.data(), rows, k).noalias() = dym * w.transpose();
      col2im(col, x.shape, first, count, dx);
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param<T>*> params() const override { return {&weight_, &bias_}; }

 private:
  // Samples per im2col/GEMM chunk. Chunking bounds scratch memory and makes
  // each sample's arithmetic independent of the total batch size.
  static constexpr std::size_t kChunk = 4;

  static std::vector<T>& scratch() {
    thread_local std::vector<T> buffer;
    return buffer;
  }

  void im2col(const Tensor<T>& x, std::size_t first, std::size_t count, std::vector<T>& col) const {
    const std::size_t h = x.dim(1), w = x.dim(2), c = in_;
    col.assign(count * h * w * 9 * c, T{0});
    T* out = col.data();
    for (std::size_t b = first; b < first + count; ++b) {
      const T* img = x.ptr() + b * h * w * c;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          for (int di = -1; di <= 1; ++di) {
            const auto si = static_cast<std::ptrdiff_t>(i) + di;
            if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) {
              out += 3 * c;
              continue;
            }
            const T* src_row = img + static_cast<std::size_t>(si) * w * c;
            if (j > 0 && j + 1 < w) {
              std::copy_n(src_row + (j - 1) * c, 3 * c, out);  // interior: three adjacent pixels
              out += 3 * c;
              continue;
            }
            for (int dj = -1; dj <= 1; ++dj, out += c) {
              const auto sj = static_cast<std::ptrdiff_t>(j) + dj;
              if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
              std::copy_n(src_row + static_cast<std::size_t>(sj) * c, c, out);
            }
          }
        }
      }
    }
  }

  void col2im(const std::vector<T>& dcol, const Shape& shape, std::size_t first, std::size_t count,
              Tensor<T>& dx) const {
    const std::size_t h = shape[1], w = shape[2], c = in_;
    const T* in = dcol.data();
    for (std::size_t b = first; b < first + count; ++b) {
      T* img = dx.ptr() + b * h * w * c;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          for (int di = -1; di <= 1; ++di) {
            const auto si = static_cast<std::ptrdiff_t>(i) + di;
            if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) {
              in += 3 * c;
              continue;
            }
            T* dst_row = img + static_cast<std::size_t>(si) * w * c;
            for (int dj = -1; dj <= 1; ++dj, in += c) {
              const auto sj = static_cast<std::ptrdiff_t>(j) + dj;
              if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
              T* dst = dst_row + static_cast<std::size_t>(sj) * c;
              for (std::size_t k = 0; k < c; ++k) dst[k] += in[k];
            }
          }
        }
      }
    }
  }

  std::size_t in_, out_;
  Param<T> weight_, bias_;
};

/// Per-channel batch normalization over N, H, W (or N for flat input).
/// Train mode normalizes with batch statistics; otherwise running ones.
template <class T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, std::size_t channels, double momentum = 0.99, double epsilon = 1e-3)
      : Layer<T>(std::move(name)),
        channels_(channels),
        momentum_(momentum),
        epsilon_(epsilon),
        gamma_(this->name() + "/gamma", {channels}),
        beta_(this->name() + "/beta", {channels}),
        running_mean_(this->name() + "/running_mean", {channels}, false),
        running_var_(this->name() + "/running_var", {channels}, false) {
    gamma_.value.fill(T{1});
    running_var_.value.fill(T{1});
  }

  std::string_view kind() const override { return "BatchNorm"; }
  Shape output_shape(const Shape& in) const override {
    if (in.empty() || in.back() != channels_) throw ConfigError(this->name() + ": channel mismatch");
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Saved<T>* saved) const override {
    if (x.shape.back() != channels_) throw ConfigError(this->name() + ": channel mismatch " + to_string(x.shape));
    const std::size_t c = channels_, m = x.size() / c;
    std::vector<T> mean(c, T{0}), var(c, T{0});
    if (ctx.mode == Mode::train) {
      if (m < 2) throw ConfigError(this->name() + ": train-mode batch norm needs more than one value per channel");
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < c; ++k) mean[k] += x[i * c + k];
      for (auto& v : mean) v /= static_cast<T>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < c; ++k) {
          const T d = x[i * c + k] - mean[k];
          var[k] += d * d;
        }
      for (auto& v : var) v /= static_cast<T>(m);
    } else {
      mean.assign(running_mean_.value.data.begin(), running_mean_.value.data.end());
      var.assign(running_var_.value.data.begin(), running_var_.value.data.end());
    }
    std::vector<T> inv_std(c);
    for (std::size_t k = 0; k < c; ++k) inv_std[k] = T{1} / std::sqrt(var[k] + static_cast<T>(epsilon_));

    Tensor<T> xhat(x.shape), y(x.shape);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        const T h = (x[i * c + k] - mean[k]) * inv_std[k];
        xhat[i * c + k] = h;
        y[i * c + k] = gamma_.value[k] * h + beta_.value[k];
      }
    if (saved) {
      saved->mode = ctx.mode;
      saved->aux = std::move(xhat);
      saved->stats.clear();
      saved->stats.insert(saved->stats.end(), mean.begin(), mean.end());
      saved->stats.insert(saved->stats.end(), var.begin(), var.end());
      saved->stats.insert(saved->stats.end(), inv_std.begin(), inv_std.end());
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) override {
    const std::size_t c = channels_, m = dy.size() / c;
    const Tensor<T>& xhat = saved.aux;
    const T* inv_std = saved.stats.data() + 2 * c;
    std::vector<T> sum_dxhat(c, T{0}), sum_dxhat_xhat(c, T{0});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        const T g = dy[i * c + k];
        gamma_.grad[k] += g * xhat[i * c + k];
        beta_.grad[k] += g;
        const T dxh = g * gamma_.value[k];
        sum_dxhat[k] += dxh;
        sum_dxhat_xhat[k] += dxh * xhat[i * c + k];
      }
    Tensor<T> dx(dy.shape);
    if (saved.mode == Mode::train) {
      const T inv_m = T{1} / static_cast<T>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < c; ++k) {
          const T dxh = dy[i * c + k] * gamma_.value[k];
          dx[i * c + k] =
              inv_std[k] * (dxh - inv_m * sum_dxhat[k] - xhat[i * c + k] * inv_m * sum_dxhat_xhat[k]);
        }
    } else {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < c; ++k) dx[i * c + k] = dy[i * c + k] * gamma_.value[k] * inv_std[k];
    }
    return dx;
  }

  void commit(const Saved<T>& saved) override {
    if (saved.mode != Mode::train) return;
    const std::size_t c = channels_;
    const T mom = static_cast<T>(momentum_);
    for (std::size_t k = 0; k < c; ++k) {
      running_mean_.value[k] = mom * running_mean_.value[k] + (T{1} - mom) * saved.stats[k];
      running_var_.value[k] = mom * running_var_.value[k] + (T{1} - mom) * saved.stats[c + k];
    }
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }
  std::vector<const Param<T>*> params() const override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }

 private:
  std::size_t channels_;
  double momentum_, epsilon_;
  Param<T> gamma_, beta_, running_mean_, running_var_;
};

template <class T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string_view kind() const override { return "ReLU"; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&, Saved<T>* saved) const override {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
    if (saved) saved->aux = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) override {
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = saved.aux[i] > T{0} ? dy[i] : T{0};
    return dx;
  }
};

/// 2x2 max pooling, stride 2, ceiling semantics: odd extents keep their last
/// row/column as a partial window (11 -> 6).
template <class T>
class MaxPool2D final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string_view kind() const override { return "MaxPool2D"; }

  static std::size_t pooled(std::size_t extent) { return (extent + 1) / 2; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3) throw ConfigError(this->name() + ": expected HxWxC, got " + to_string(in));
    return {pooled(in[0]), pooled(in[1]), in[2]};
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&, Saved<T>* saved) const override {
    this->check_rank(x, 4);
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::size_t oh = pooled(h), ow = pooled(w);
    Tensor<T> y({n, oh, ow, c});
    std::vector<std::uint32_t> arg(y.size());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
          for (std::size_t k = 0; k < c; ++k) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_at = 0;
            for (std::size_t di = 0; di < 2; ++di)
              for (std::size_t dj = 0; dj < 2; ++dj) {
                const std::size_t si = 2 * i + di, sj = 2 * j + dj;
                if (si >= h || sj >= w) continue;
                const std::size_t at = ((b * h + si) * w + sj) * c + k;
                if (x[at] > best) {
                  best = x[at];
                  best_at = at;
                }
              }
            const std::size_t out = ((b * oh + i) * ow + j) * c + k;
            y[out] = best;
            arg[out] = static_cast<std::uint32_t>(best_at);
          }
    if (saved) {
      saved->index = std::move(arg);
      saved->x = Tensor<T>();
      saved->x.shape = x.shape;  // shape only
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) override {
    Tensor<T> dx(saved.x.shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[saved.index[i]] += dy[i];
    return dx;
  }
};

/// Inverted dropout that stays active at inference in Mode::infer_mc.
template <class T>
class MCDropout final : public Layer<T> {
 public:
  MCDropout(std::string name, double rate) : Layer<T>(std::move(name)), rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError(this->name() + ": dropout rate must be in [0, 1)");
  }
  std::string_view kind() const override { return "MCDropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  double rate() const { return rate_; }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Saved<T>* saved) const override {
    if (saved) {
      saved->aux = Tensor<T>();
      saved->mode = ctx.mode;
    }
    if (rate_ == 0.0 || !dropout_active(ctx.mode)) return x;
    if (!ctx.rng) throw ConfigError(this->name() + ": stochastic mode requires an rng");
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    Tensor<T> mask(x.shape);
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask[i] = uniform01(*ctx.rng) < rate_ ? T{0} : scale;
      y[i] = x[i] * mask[i];
    }
    if (saved) saved->aux = std::move(mask);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) override {
    if (saved.aux.data.empty()) return dy;
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * saved.aux[i];
    return dx;
  }

 private:
  double rate_;
};

/// {N, H, W, C} -> {N, C}.
template <class T>
class GlobalAveragePool final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string_view kind() const override { return "GlobalAveragePool"; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3) throw ConfigError(this->name() + ": expected HxWxC");
    return {in[2]};
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&, Saved<T>* saved) const override {
    this->check_rank(x, 4);
    const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
    Tensor<T> y({n, c});
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t k = 0; k < c; ++k) y[b * c + k] += x[(b * hw + p) * c + k];
      for (std::size_t k = 0; k < c; ++k) y[b * c + k] /= static_cast<T>(hw);
    }
    if (saved) {
      saved->x = Tensor<T>();
      saved->x.shape = x.shape;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) override {
    const Shape& s = saved.x.shape;
    const std::size_t n = s[0], hw = s[1] * s[2], c = s[3];
    Tensor<T> dx(s);
    const T inv = T{1} / static_cast<T>(hw);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t k = 0; k < c; ++k) dx[(b * hw + p) * c + k] = dy[b * c + k] * inv;
    return dx;
  }
};

/// Fully connected layer, {N, in} -> {N, out}. Glorot-uniform weights, zero bias.
template <class T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, std::size_t in, std::size_t out, Rng& init)
      : Layer<T>(std::move(name)),
        in_(in),
        out_(out),
        weight_(this->name() + "/weight", {in, out}),
        bias_(this->name() + "/bias", {out}) {
    glorot_uniform(weight_.value, in, out, init);
  }

  std::string_view kind() const override { return "Dense"; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 1 || in[0] != in_) throw ConfigError(this->name() + ": expected " + std::to_string(in_) + " features");
    return {out_};
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&, Saved<T>* saved) const override {
    this->check_rank(x, 2);
    if (x.dim(1) != in_) throw ConfigError(this->name() + ": expected " + std::to_string(in_) + " features, got " + to_string(x.shape));
    const std::size_t n = x.dim(0);
    Tensor<T> y({n, out_});
    auto ym = as_matrix(y, n, out_);
    ym.noalias() = as_matrix(x, n, in_) * as_matrix(weight_.value, in_, out_);
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.ptr(),
                                                                          static_cast<Eigen::Index>(out_));
    if (saved) saved->x = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Saved<T>& saved) override {
    const std::size_t n = dy.dim(0);
    auto dym = as_matrix(dy, n, out_);
    as_matrix(weight_.grad, in_, out_).noalias() += as_matrix(saved.x, n, in_).transpose() * dym;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad.ptr(), static_cast<Eigen::Index>(out_)) +=
        dym.colwise().sum();
    Tensor<T> dx({n, in_});
    as_matrix(dx, n, in_).noalias() = dym * as_matrix(weight_.value, in_, out_).transpose();
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param<T>*> params() const override { return {&weight_, &bias_}; }

 private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
};

template <class T>
struct SequentialTape {
  std::vector<Saved<T>> saved;
};

/// Ordered layer chain.
template <class T>
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::string name) : name_(std::move(name)) {}

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  const std::string& name() const { return name_; }
  std::size_t size() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

  Shape output_shape(Shape in) const {
    for (const auto& l : layers_) in = l->output_shape(in);
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, SequentialTape<T>* tape) const {
    if (tape) tape->saved.assign(layers_.size(), Saved<T>{});
    Tensor<T> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i]->forward(h, ctx, tape ? &tape->saved[i] : nullptr);
      if (ctx.trace) ctx.trace->push_back({layers_[i]->name(), std::string(layers_[i]->kind()),
                                           Shape(h.shape.begin() + 1, h.shape.end())});
    }
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy, const SequentialTape<T>& tape) {
    Tensor<T> g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, tape.saved[i]);
    return g;
  }

  void commit(const SequentialTape<T>& tape) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->commit(tape.saved[i]);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
  std::vector<const Param<T>*> params() const {
    std::vector<const Param<T>*> out;
    for (const auto& l : layers_)
      for (const auto* p : static_cast<const Layer<T>&>(*l).params()) out.push_back(p);
    return out;
  }

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Row-wise softmax of {N, K} logits, computed with the max shift.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * k;
    const T mx = *std::max_element(row, row + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) {
      p[i * k + j] = std::exp(row[j] - mx);
      sum += p[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= sum;
  }
  return p;
}

}  // namespace mff
