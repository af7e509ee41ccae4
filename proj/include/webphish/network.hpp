#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "webphish/common.hpp"
#include "webphish/tensor.hpp"
#include "webphish/tokenizer.hpp"

namespace webphish {

enum class Variant { full, url_only, html_only };

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::url_only: return "url_only";
    case Variant::html_only: return "html_only";
    default: return "full";
  }
}

inline Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::full;
  if (text == "url_only" || text == "url") return Variant::url_only;
  if (text == "html_only" || text == "html") return Variant::html_only;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected full|url_only|html_only)");
}

/// Architecture of the dual-branch network:
/// per branch embedding -> conv (ReLU) x conv_layers -> global max over time,
/// branches concatenated -> FC (ReLU) x |fc_units| -> affine -> logistic.
struct ModelConfig {
  std::size_t embed_dim = 16;
  std::size_t url_len = 180;
  std::size_t html_len = 2000;
  std::size_t kernel_width = 8;
  std::size_t conv_filters = 16;
  std::size_t conv_layers = 1;
  std::vector<std::size_t> fc_units{32, 16};
  Variant variant = Variant::full;
  bool use_embedding = true;

  bool uses_url() const { return variant != Variant::html_only; }
  bool uses_html() const { return variant != Variant::url_only; }
  std::size_t branch_count() const { return static_cast<std::size_t>(uses_url()) + uses_html(); }
  std::size_t concat_width() const { return branch_count() * conv_filters; }
  EncoderConfig encoder() const { return {url_len, html_len}; }

  void validate() const {
    if (embed_dim == 0 || url_len == 0 || html_len == 0 || kernel_width == 0 || conv_filters == 0)
      throw ConfigError("model dimensions must be positive");
    if (conv_layers < 1 || conv_layers > 3) throw ConfigError("conv_layers must be in 1..3");
    if (fc_units.empty() || fc_units.size() > 3) throw ConfigError("fc layer count must be in 1..3");
    for (auto u : fc_units)
      if (u == 0) throw ConfigError("fc units must be positive");
    const std::size_t shrink = conv_layers * (kernel_width - 1);
    if (uses_url() && shrink >= url_len) throw ConfigError("kernel_width too large for url_len");
    if (uses_html() && shrink >= html_len) throw ConfigError("kernel_width too large for html_len");
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ConvLayer {
  Tensor<T> kernel;  // filters x width x in_channels
  Tensor<T> bias;    // filters
};

template <typename T>
struct BranchParams {
  Tensor<T> embedding;  // vocab x channels; row 0 (padding) is always zero
  std::vector<ConvLayer<T>> conv;

  bool present() const { return !embedding.empty(); }
};

template <typename T>
struct DenseLayer {
  Tensor<T> weight;  // out x in
  Tensor<T> bias;    // out
};

template <typename TensorT>
struct NamedTensor {
  std::string name;
  TensorT* tensor;
  bool trainable;
};

template <typename T>
struct ModelParams {
  BranchParams<T> url;
  BranchParams<T> html;
  std::vector<DenseLayer<T>> fc;
  Tensor<T> out_weight;  // last fc width
  Tensor<T> out_bias;    // 1
  bool frozen_embeddings = false;

  /// Every tensor in a fixed order; the same order is used by checkpoints and optimizers.
  std::vector<NamedTensor<Tensor<T>>> named_tensors() { return collect<Tensor<T>>(*this); }
  std::vector<NamedTensor<const Tensor<T>>> named_tensors() const { return collect<const Tensor<T>>(*this); }

  /// Same layout, all zeros.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto& n : z.named_tensors()) n.tensor->fill(T(0));
    return z;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    auto cast_branch = [](const BranchParams<T>& b) {
      BranchParams<U> o;
      o.embedding = b.embedding.template cast<U>();
      for (const auto& c : b.conv) o.conv.push_back({c.kernel.template cast<U>(), c.bias.template cast<U>()});
      return o;
    };
    out.url = cast_branch(url);
    out.html = cast_branch(html);
    for (const auto& d : fc) out.fc.push_back({d.weight.template cast<U>(), d.bias.template cast<U>()});
    out.out_weight = out_weight.template cast<U>();
    out.out_bias = out_bias.template cast<U>();
    out.frozen_embeddings = frozen_embeddings;
    return out;
  }

  bool all_finite() const {
    for (const auto& n : named_tensors())
      if (!n.tensor->all_finite()) return false;
    return true;
  }

  bool operator==(const ModelParams& other) const {
    auto a = named_tensors();
    auto b = other.named_tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].name != b[i].name || !(*a[i].tensor == *b[i].tensor)) return false;
    return frozen_embeddings == other.frozen_embeddings;
  }

 private:
  template <typename TensorT, typename Self>
  static std::vector<NamedTensor<TensorT>> collect(Self& self) {
    std::vector<NamedTensor<TensorT>> out;
    auto add_branch = [&](const char* prefix, auto& b) {
      if (!b.present()) return;
      out.push_back({std::string(prefix) + ".embedding", &b.embedding, !self.frozen_embeddings});
      for (std::size_t l = 0; l < b.conv.size(); ++l) {
        const auto base = std::string(prefix) + ".conv" + std::to_string(l);
        out.push_back({base + ".kernel", &b.conv[l].kernel, true});
        out.push_back({base + ".bias", &b.conv[l].bias, true});
      }
    };
    add_branch("url", self.url);
    add_branch("html", self.html);
    for (std::size_t i = 0; i < self.fc.size(); ++i) {
      out.push_back({"fc" + std::to_string(i) + ".weight", &self.fc[i].weight, true});
      out.push_back({"fc" + std::to_string(i) + ".bias", &self.fc[i].bias, true});
    }
    out.push_back({"output.weight", &self.out_weight, true});
    out.push_back({"output.bias", &self.out_bias, true});
    return out;
  }
};

struct VocabSizes {
  std::size_t url = 0;
  std::size_t html = 0;
};

namespace detail {

template <typename T>
Tensor<T> uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(uniform(rng, -bound, bound));
  return t;
}

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
BranchParams<T> init_branch(const ModelConfig& cfg, std::size_t vocab, Rng& rng) {
  BranchParams<T> b;
  if (cfg.use_embedding) {
    b.embedding = uniform_tensor<T>({vocab, cfg.embed_dim}, 0.05, rng);
  } else {
    // One-hot input: a fixed identity table.
    b.embedding = Tensor<T>({vocab, vocab});
    for (std::size_t i = 1; i < vocab; ++i) b.embedding[i * vocab + i] = T(1);
  }
  for (std::size_t c = 0; c < b.embedding.shape[1]; ++c) b.embedding[c] = T(0);
  std::size_t channels = b.embedding.shape[1];
  const std::size_t w = cfg.kernel_width, f = cfg.conv_filters;
  for (std::size_t l = 0; l < cfg.conv_layers; ++l) {
    ConvLayer<T> layer;
    layer.kernel = uniform_tensor<T>({f, w, channels}, glorot_bound(w * channels, w * f), rng);
    layer.bias = Tensor<T>({f});
    b.conv.push_back(std::move(layer));
    channels = f;
  }
  return b;
}

}  // namespace detail

/// Output layer: scaled-uniform weights, zero bias.
template <typename T>
void reset_output_layer(ModelParams<T>& params, Rng& rng) {
  const std::size_t in = params.out_weight.size();
  params.out_weight = detail::uniform_tensor<T>({in}, detail::glorot_bound(in, 1), rng);
  params.out_bias = Tensor<T>({1});
}

/// Fresh parameters: embeddings uniform(-0.05, 0.05) with a zero padding row,
/// conv/FC weights uniform within sqrt(6 / (fan_in + fan_out)), zero biases.
template <typename T = float>
ModelParams<T> init_params(const ModelConfig& cfg, VocabSizes vocab, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams<T> p;
  p.frozen_embeddings = !cfg.use_embedding;
  if (cfg.uses_url()) {
    if (vocab.url < 3) throw ConfigError("url vocabulary is empty");
    p.url = detail::init_branch<T>(cfg, vocab.url, rng);
  }
  if (cfg.uses_html()) {
    if (vocab.html < 3) throw ConfigError("html vocabulary is empty");
    p.html = detail::init_branch<T>(cfg, vocab.html, rng);
  }
  std::size_t in = cfg.concat_width();
  for (auto units : cfg.fc_units) {
    DenseLayer<T> d;
    d.weight = detail::uniform_tensor<T>({units, in}, detail::glorot_bound(in, units), rng);
    d.bias = Tensor<T>({units});
    p.fc.push_back(std::move(d));
    in = units;
  }
  p.out_weight = Tensor<T>({in});
  reset_output_layer(p, rng);
  return p;
}

/// Throws NumericError unless every tensor has the shape the config implies.
template <typename T>
void check_shapes(const ModelParams<T>& p, const ModelConfig& cfg) {
  cfg.validate();
  auto fail = [](const std::string& what) { throw NumericError("parameter shape mismatch: " + what); };
  auto check_branch = [&](const char* name, const BranchParams<T>& b, bool used) {
    if (b.present() != used) fail(std::string(name) + " branch presence does not match variant");
    if (!used) return;
    if (b.embedding.shape.size() != 2 || b.embedding.shape[0] < 1) fail(std::string(name) + ".embedding");
    const std::size_t expect_c = cfg.use_embedding ? cfg.embed_dim : b.embedding.shape[0];
    if (b.embedding.shape[1] != expect_c) fail(std::string(name) + ".embedding width");
    if (b.conv.size() != cfg.conv_layers) fail(std::string(name) + " conv layer count");
    std::size_t ch = expect_c;
    for (const auto& c : b.conv) {
      if (c.kernel.shape != std::vector<std::size_t>{cfg.conv_filters, cfg.kernel_width, ch})
        fail(std::string(name) + " conv kernel " + shape_string(c.kernel.shape));
      if (c.bias.shape != std::vector<std::size_t>{cfg.conv_filters}) fail(std::string(name) + " conv bias");
      ch = cfg.conv_filters;
    }
  };
  check_branch("url", p.url, cfg.uses_url());
  check_branch("html", p.html, cfg.uses_html());
  if (p.fc.size() != cfg.fc_units.size()) fail("fc layer count");
  std::size_t in = cfg.concat_width();
  for (std::size_t i = 0; i < p.fc.size(); ++i) {
    if (p.fc[i].weight.shape != std::vector<std::size_t>{cfg.fc_units[i], in}) fail("fc" + std::to_string(i) + ".weight");
    if (p.fc[i].bias.shape != std::vector<std::size_t>{cfg.fc_units[i]}) fail("fc" + std::to_string(i) + ".bias");
    in = cfg.fc_units[i];
  }
  if (p.out_weight.shape != std::vector<std::size_t>{in}) fail("output.weight");
  if (p.out_bias.shape != std::vector<std::size_t>{1}) fail("output.bias");
  if (p.frozen_embeddings != !cfg.use_embedding) fail("embedding trainability does not match use_embedding");
}

/// Logistic function clamped into the open interval (0, 1).
template <typename T>
T sigmoid(T q) {
  T p;
  if (q >= T(0)) {
    p = T(1) / (T(1) + std::exp(-q));
  } else {
    const T z = std::exp(q);
    p = z / (T(1) + z);
  }
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::clamp(p, lo, hi);
}

inline constexpr double kLossClampEpsilon = 1e-7;

/// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
template <typename P>
double bce_loss(std::span<const P> probabilities, std::span<const int> labels, double eps = kLossClampEpsilon) {
  if (probabilities.empty()) throw NumericError("bce_loss on an empty batch");
  if (probabilities.size() != labels.size()) throw NumericError("bce_loss length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probabilities[i]), eps, 1.0 - eps);
    sum += labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(probabilities.size());
}

template <typename P>
double bce_loss(const std::vector<P>& probabilities, const std::vector<int>& labels,
                double eps = kLossClampEpsilon) {
  return bce_loss(std::span<const P>(probabilities), std::span<const int>(labels), eps);
}

/// Cached activations of one forward pass, reused across samples to avoid reallocation.
template <typename T>
struct BranchTrace {
  const std::vector<TokenId>* ids = nullptr;
  std::vector<T> input;                  // seq_len x channels
  std::vector<std::vector<T>> acts;      // per conv layer, post-ReLU, time x filters
  std::vector<std::size_t> argmax;       // per filter, first maximal time step
  std::vector<std::vector<T>> grad_buf;  // scratch for backward
};

template <typename T>
struct Trace {
  BranchTrace<T> url;
  BranchTrace<T> html;
  std::vector<std::vector<T>> fc_in;  // fc_in[0] = concatenation, fc_in[i+1] = ReLU output of layer i
  T logit = T(0);
  T prob = T(0);
};

namespace detail {

/// Kernels re-laid out as [width * channels][filters] so the forward inner loop
/// runs over filters with unit stride.
template <typename T>
struct PreparedBranch {
  std::vector<std::vector<T>> kt;
};

template <typename T>
PreparedBranch<T> prepare_branch(const BranchParams<T>& b) {
  PreparedBranch<T> out;
  for (const auto& c : b.conv) {
    const std::size_t f = c.kernel.shape[0], span = c.kernel.shape[1] * c.kernel.shape[2];
    std::vector<T> kt(span * f);
    for (std::size_t q = 0; q < f; ++q)
      for (std::size_t j = 0; j < span; ++j) kt[j * f + q] = c.kernel[q * span + j];
    out.kt.push_back(std::move(kt));
  }
  return out;
}

template <typename T>
void conv_forward(const T* in, std::size_t t_in, std::size_t channels, const T* kt, const T* bias,
                  std::size_t width, std::size_t filters, T* out) {
  const std::size_t t_out = t_in - width + 1;
  const std::size_t span = width * channels;
  for (std::size_t t = 0; t < t_out; ++t) {
    T* o = out + t * filters;
    for (std::size_t q = 0; q < filters; ++q) o[q] = bias[q];
    const T* win = in + t * channels;
    for (std::size_t j = 0; j < span; ++j) {
      const T v = win[j];
      if (v == T(0)) continue;
      const T* kr = kt + j * filters;
      for (std::size_t q = 0; q < filters; ++q) o[q] += kr[q] * v;
    }
    for (std::size_t q = 0; q < filters; ++q) o[q] = o[q] > T(0) ? o[q] : T(0);
  }
}

/// `dout` holds dLoss/d(post-ReLU output); entries whose output was clipped are ignored.
template <typename T>
void conv_backward(const T* in, std::size_t t_in, std::size_t channels, const T* kernel, std::size_t width,
                   std::size_t filters, const T* out, const T* dout, T* dkernel, T* dbias, T* din) {
  const std::size_t t_out = t_in - width + 1;
  const std::size_t span = width * channels;
  for (std::size_t t = 0; t < t_out; ++t) {
    const T* win = in + t * channels;
    for (std::size_t q = 0; q < filters; ++q) {
      const T g = dout[t * filters + q];
      if (g == T(0) || !(out[t * filters + q] > T(0))) continue;
      dbias[q] += g;
      T* dk = dkernel + q * span;
      for (std::size_t j = 0; j < span; ++j) dk[j] += g * win[j];
      if (din) {
        T* dw = din + t * channels;
        const T* kr = kernel + q * span;
        for (std::size_t j = 0; j < span; ++j) dw[j] += g * kr[j];
      }
    }
  }
}

template <typename T>
void branch_forward(const BranchParams<T>& p, const PreparedBranch<T>& prep, const std::vector<TokenId>& ids,
                    BranchTrace<T>& tr, T* pooled) {
  const std::size_t vocab = p.embedding.shape[0];
  const std::size_t c0 = p.embedding.shape[1];
  const std::size_t len = ids.size();
  tr.ids = &ids;
  tr.input.assign(len * c0, T(0));
  for (std::size_t t = 0; t < len; ++t) {
    const TokenId id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw NumericError("token id " + std::to_string(id) + " outside embedding of size " + std::to_string(vocab));
    if (id == kPaddingId) continue;
    std::copy_n(p.embedding.ptr() + static_cast<std::size_t>(id) * c0, c0, tr.input.data() + t * c0);
  }
  tr.acts.resize(p.conv.size());
  const T* in = tr.input.data();
  std::size_t t_in = len, channels = c0;
  std::size_t filters = 0;
  for (std::size_t l = 0; l < p.conv.size(); ++l) {
    filters = p.conv[l].kernel.shape[0];
    const std::size_t width = p.conv[l].kernel.shape[1];
    const std::size_t t_out = t_in - width + 1;
    tr.acts[l].resize(t_out * filters);
    conv_forward(in, t_in, channels, prep.kt[l].data(), p.conv[l].bias.ptr(), width, filters, tr.acts[l].data());
    in = tr.acts[l].data();
    t_in = t_out;
    channels = filters;
  }
  tr.argmax.assign(filters, 0);
  const auto& last = tr.acts.back();
  for (std::size_t q = 0; q < filters; ++q) {
    T best = last[q];
    std::size_t arg = 0;
    for (std::size_t t = 1; t < t_in; ++t) {
      const T v = last[t * filters + q];
      if (v > best) {
        best = v;
        arg = t;
      }
    }
    tr.argmax[q] = arg;
    pooled[q] = best;
  }
}

template <typename T>
void branch_backward(const BranchParams<T>& p, BranchTrace<T>& tr, const T* dpooled, BranchParams<T>& g,
                     bool embedding_trainable) {
  const std::size_t layers = p.conv.size();
  tr.grad_buf.resize(layers + 1);
  const std::size_t c0 = p.embedding.shape[1];
  const std::size_t len = tr.ids->size();

  // Gradient w.r.t. the last layer's output is nonzero only at each filter's argmax.
  const std::size_t f_last = p.conv.back().kernel.shape[0];
  auto& dlast = tr.grad_buf[layers];
  dlast.assign(tr.acts.back().size(), T(0));
  for (std::size_t q = 0; q < f_last; ++q) dlast[tr.argmax[q] * f_last + q] = dpooled[q];

  for (std::size_t l = layers; l-- > 0;) {
    const T* in = l == 0 ? tr.input.data() : tr.acts[l - 1].data();
    const std::size_t channels = p.conv[l].kernel.shape[2];
    const std::size_t width = p.conv[l].kernel.shape[1];
    const std::size_t filters = p.conv[l].kernel.shape[0];
    const std::size_t t_in = l == 0 ? len : tr.acts[l - 1].size() / channels;
    T* din = nullptr;
    if (l > 0 || embedding_trainable) {
      tr.grad_buf[l].assign(t_in * channels, T(0));
      din = tr.grad_buf[l].data();
    }
    conv_backward(in, t_in, channels, p.conv[l].kernel.ptr(), width, filters, tr.acts[l].data(),
                  tr.grad_buf[l + 1].data(), g.conv[l].kernel.ptr(), g.conv[l].bias.ptr(), din);
  }
  if (!embedding_trainable) return;
  const auto& dx = tr.grad_buf[0];
  const auto& ids = *tr.ids;
  for (std::size_t t = 0; t < len; ++t) {
    if (ids[t] == kPaddingId) continue;
    T* row = g.embedding.ptr() + static_cast<std::size_t>(ids[t]) * c0;
    const T* src = dx.data() + t * c0;
    for (std::size_t c = 0; c < c0; ++c) row[c] += src[c];
  }
}

}  // namespace detail

/// Reusable forward/backward engine for one parameter set. Holds re-laid-out kernels
/// and scratch buffers, so one instance must not be shared across threads.
template <typename T>
class Network {
 public:
  Network(const ModelParams<T>& params, const ModelConfig& cfg) : params_(params), cfg_(cfg) {
    check_shapes(params, cfg);
    if (params.url.present()) url_prep_ = detail::prepare_branch(params.url);
    if (params.html.present()) html_prep_ = detail::prepare_branch(params.html);
  }

  /// Runs one sample and leaves its activations in `trace()`.
  T forward(const EncodedSample& s) {
    check_lengths(s);
    auto& fc_in = trace_.fc_in;
    fc_in.resize(params_.fc.size() + 1);
    fc_in[0].assign(cfg_.concat_width(), T(0));
    std::size_t off = 0;
    if (params_.url.present()) {
      detail::branch_forward(params_.url, url_prep_, s.url_ids, trace_.url, fc_in[0].data() + off);
      off += cfg_.conv_filters;
    }
    if (params_.html.present())
      detail::branch_forward(params_.html, html_prep_, s.html_ids, trace_.html, fc_in[0].data() + off);
    for (std::size_t i = 0; i < params_.fc.size(); ++i) {
      const auto& d = params_.fc[i];
      const std::size_t out = d.weight.shape[0], in = d.weight.shape[1];
      auto& h = fc_in[i + 1];
      h.resize(out);
      for (std::size_t o = 0; o < out; ++o) {
        T acc = d.bias[o];
        const T* w = d.weight.ptr() + o * in;
        for (std::size_t k = 0; k < in; ++k) acc += w[k] * fc_in[i][k];
        h[o] = acc > T(0) ? acc : T(0);
      }
    }
    const auto& last = fc_in.back();
    T q = params_.out_bias[0];
    for (std::size_t k = 0; k < last.size(); ++k) q += params_.out_weight[k] * last[k];
    trace_.logit = q;
    trace_.prob = sigmoid(q);
    return trace_.prob;
  }

  /// Accumulates dLoss/dparams into `grads` given dLoss/dlogit for the sample last run
  /// through forward().
  void backward(T dlogit, ModelParams<T>& grads) {
    const auto& fc_in = trace_.fc_in;
    const auto& last = fc_in.back();
    for (std::size_t k = 0; k < last.size(); ++k) grads.out_weight[k] += dlogit * last[k];
    grads.out_bias[0] += dlogit;
    std::vector<T>& dh = dh_;
    dh.assign(last.size(), T(0));
    for (std::size_t k = 0; k < last.size(); ++k) dh[k] = dlogit * params_.out_weight[k];
    for (std::size_t i = params_.fc.size(); i-- > 0;) {
      const auto& d = params_.fc[i];
      auto& gd = grads.fc[i];
      const std::size_t out = d.weight.shape[0], in = d.weight.shape[1];
      dprev_.assign(in, T(0));
      for (std::size_t o = 0; o < out; ++o) {
        if (!(fc_in[i + 1][o] > T(0))) continue;
        const T g = dh[o];
        if (g == T(0)) continue;
        gd.bias[o] += g;
        T* gw = gd.weight.ptr() + o * in;
        const T* w = d.weight.ptr() + o * in;
        for (std::size_t k = 0; k < in; ++k) {
          gw[k] += g * fc_in[i][k];
          dprev_[k] += g * w[k];
        }
      }
      dh.swap(dprev_);
    }
    const bool train_emb = !params_.frozen_embeddings;
    std::size_t off = 0;
    if (params_.url.present()) {
      detail::branch_backward(params_.url, trace_.url, dh.data() + off, grads.url, train_emb);
      off += cfg_.conv_filters;
    }
    if (params_.html.present()) detail::branch_backward(params_.html, trace_.html, dh.data() + off, grads.html, train_emb);
  }

  const Trace<T>& trace() const { return trace_; }
  const ModelParams<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  void check_lengths(const EncodedSample& s) const {
    if (params_.url.present() && s.url_ids.size() != cfg_.url_len)
      throw NumericError("encoded url length " + std::to_string(s.url_ids.size()) + " != " + std::to_string(cfg_.url_len));
    if (params_.html.present() && s.html_ids.size() != cfg_.html_len)
      throw NumericError("encoded html length " + std::to_string(s.html_ids.size()) + " != " +
                         std::to_string(cfg_.html_len));
  }

  const ModelParams<T>& params_;
  ModelConfig cfg_;
  detail::PreparedBranch<T> url_prep_;
  detail::PreparedBranch<T> html_prep_;
  Trace<T> trace_;
  std::vector<T> dh_, dprev_;
};

/// Probability of the phishing class for each sample.
template <typename T>
std::vector<T> forward(const ModelParams<T>& params, const ModelConfig& cfg, std::span<const EncodedSample> batch) {
  Network<T> net(params, cfg);
  std::vector<T> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(net.forward(s));
  return out;
}

template <typename T>
std::vector<T> forward(const ModelParams<T>& params, const ModelConfig& cfg, const std::vector<EncodedSample>& batch) {
  return forward(params, cfg, std::span<const EncodedSample>(batch));
}

template <typename T>
struct GradientResult {
  ModelParams<T> grads;
  double loss = 0.0;
  std::vector<T> probabilities;
};

/// Exact gradient of the (optionally sample-weighted) mean clamped BCE over the batch.
/// Padding rows of the embeddings receive no gradient; frozen embeddings get none at all.
template <typename T>
GradientResult<T> compute_gradients(const ModelParams<T>& params, const ModelConfig& cfg,
                                    std::span<const EncodedSample> batch, std::span<const double> weights = {}) {
  if (batch.empty()) throw NumericError("gradient of an empty batch");
  if (!weights.empty() && weights.size() != batch.size()) throw NumericError("sample weight count mismatch");
  GradientResult<T> r;
  r.grads = params.zeros_like();
  Network<T> net(params, cfg);
  double wsum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) wsum += weights.empty() ? 1.0 : weights[i];
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const T p = net.forward(batch[i]);
    r.probabilities.push_back(p);
    const double w = (weights.empty() ? 1.0 : weights[i]) / wsum;
    const int y = label_value(batch[i].label);
    const double pc = std::clamp(static_cast<double>(p), kLossClampEpsilon, 1.0 - kLossClampEpsilon);
    loss -= w * (y ? std::log(pc) : std::log(1.0 - pc));
    // d(clamped BCE)/dlogit is p - y inside the clamp window and zero outside it.
    const bool clamped = pc != static_cast<double>(p);
    net.backward(clamped ? T(0) : static_cast<T>(w * (static_cast<double>(p) - y)), r.grads);
  }
  r.loss = loss;
  return r;
}

template <typename T>
GradientResult<T> compute_gradients(const ModelParams<T>& params, const ModelConfig& cfg,
                                    const std::vector<EncodedSample>& batch) {
  return compute_gradients(params, cfg, std::span<const EncodedSample>(batch));
}

struct AdamHyper {
  double lr = 0.0015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Elementwise bias-corrected Adam update for step number `t` (already incremented).
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamHyper& h) {
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    param[i] = static_cast<T>(param[i] - h.lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.epsilon));
  }
}

template <typename T>
struct AdamState {
  ModelParams<T> m;
  ModelParams<T> v;
  std::uint64_t t = 0;
  AdamHyper hyper;

  static AdamState fresh(const ModelParams<T>& params, AdamHyper hyper = {}) {
    return {params.zeros_like(), params.zeros_like(), 0, hyper};
  }
};

template <typename T>
void zero_padding_rows(ModelParams<T>& params) {
  for (auto* b : {&params.url, &params.html})
    if (b->present()) std::fill_n(b->embedding.ptr(), b->embedding.shape[1], T(0));
}

/// One optimizer step over every trainable tensor. Throws NumericError (naming the
/// offending tensor) on a non-finite gradient or update, leaving `params` untouched
/// in the gradient case.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state) {
  auto p = params.named_tensors();
  auto g = grads.named_tensors();
  auto m = state.m.named_tensors();
  auto v = state.v.named_tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw NumericError("optimizer state does not mirror parameters");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].tensor->shape != p[i].tensor->shape || m[i].tensor->shape != p[i].tensor->shape ||
        v[i].tensor->shape != p[i].tensor->shape)
      throw NumericError("gradient shape mismatch for " + p[i].name);
    if (p[i].trainable) {
      for (const auto& x : g[i].tensor->data)
        if (!std::isfinite(x)) throw NumericError("non-finite gradient in " + p[i].name);
    }
  }
  state.t += 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p[i].trainable) continue;
    adam_update<T>(std::span<T>(p[i].tensor->data), std::span<const T>(g[i].tensor->data),
                   std::span<T>(m[i].tensor->data), std::span<T>(v[i].tensor->data), state.t, state.hyper);
  }
  zero_padding_rows(params);
  for (const auto& n : p)
    if (!n.tensor->all_finite()) throw NumericError("non-finite parameter after update in " + n.name);
}

}  // namespace webphish
