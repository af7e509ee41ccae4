#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "webphish/corpus.hpp"
#include "webphish/network.hpp"
#include "webphish/tokenizer.hpp"

namespace webphish {

struct TrainConfig {
  std::size_t batch_size = 20;
  std::size_t max_epochs = 20;
  bool early_stopping = true;
  std::size_t patience = 3;
  double learning_rate = 0.0015;
  bool class_weighting = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (early_stopping && patience < 1) throw ConfigError("patience must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  }
};

/// splitmix64 finalizer; turns one user seed into independent streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // epoch whose parameters were returned
  bool stopped_early = false;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& e : epochs)
      os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << '\n';
    return os.str();
  }
};

/// Stops once the monitored loss has failed to improve for `patience` consecutive epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true if `loss` is a new best.
  bool update(std::size_t epoch, double loss) {
    if (loss < best_loss_) {
      best_loss_ = loss;
      best_epoch_ = epoch;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<float> probabilities;
};

template <typename T>
Evaluation evaluate(const ModelParams<T>& params, const ModelConfig& cfg, const std::vector<EncodedSample>& data) {
  Evaluation ev;
  if (data.empty()) return ev;
  Network<T> net(params, cfg);
  std::vector<int> labels;
  std::size_t correct = 0;
  for (const auto& s : data) {
    const T p = net.forward(s);
    ev.probabilities.push_back(static_cast<float>(p));
    labels.push_back(label_value(s.label));
    correct += static_cast<std::size_t>((p > T(0.5)) == (s.label == Label::phishing));
  }
  ev.loss = bce_loss(ev.probabilities, labels);
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on mean BCE. Batches are drawn in a seeded shuffled order each epoch.
/// With early stopping on, the parameters of the best validation-loss epoch are returned.
template <typename T>
TrainResult<T> train(const ModelConfig& cfg, const TrainConfig& tcfg, const std::vector<EncodedSample>& train_set,
                     const std::vector<EncodedSample>& val_set, ModelParams<T> params,
                     const EpochCallback& on_epoch = {}) {
  tcfg.validate();
  check_shapes(params, cfg);
  if (train_set.empty()) throw DataError("training set is empty");
  if (tcfg.early_stopping && val_set.empty()) throw DataError("early stopping needs a non-empty validation set");

  std::vector<double> weights;
  if (tcfg.class_weighting) {
    std::size_t pos = 0;
    for (const auto& s : train_set) pos += s.label == Label::phishing;
    const std::size_t neg = train_set.size() - pos;
    const double w_pos = pos > 0 && neg > 0 ? static_cast<double>(neg) / static_cast<double>(pos) : 1.0;
    for (const auto& s : train_set) weights.push_back(s.label == Label::phishing ? w_pos : 1.0);
  }

  AdamHyper hyper;
  hyper.lr = tcfg.learning_rate;
  auto adam = AdamState<T>::fresh(params, hyper);
  Rng rng(derive_seed(tcfg.seed, 1));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult<T> result;
  EarlyStopping stopper(tcfg.patience);
  ModelParams<T> best = params;
  std::vector<EncodedSample> batch;
  std::vector<double> batch_w;

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      batch.clear();
      batch_w.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(train_set[order[k]]);
        if (!weights.empty()) batch_w.push_back(weights[order[k]]);
      }
      auto g = compute_gradients<T>(params, cfg, std::span<const EncodedSample>(batch), std::span<const double>(batch_w));
      if (!std::isfinite(g.loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += g.loss * static_cast<double>(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k)
        correct += static_cast<std::size_t>((g.probabilities[k] > T(0.5)) == (batch[k].label == Label::phishing));
      adam_step(params, g.grads, adam);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      const auto ev = evaluate(params, cfg, val_set);
      rec.val_loss = ev.loss;
      rec.val_acc = ev.accuracy;
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (tcfg.early_stopping) {
      if (stopper.update(epoch, rec.val_loss)) best = params;
      if (stopper.should_stop()) {
        result.history.stopped_early = epoch < tcfg.max_epochs;
        break;
      }
    }
  }
  if (tcfg.early_stopping) {
    result.params = std::move(best);
    result.history.best_epoch = stopper.best_epoch();
  } else {
    result.params = std::move(params);
    result.history.best_epoch = result.history.epochs.size();
  }
  return result;
}

/// A trained model: architecture, vocabularies and parameters. Immutable once built;
/// const member functions are safe to call concurrently.
struct Classifier {
  ModelConfig config;
  VocabularyPair vocab;
  ModelParams<float> params;

  EncodedSample encode(const WebPageSample& s) const { return encode_sample(s, vocab, config.encoder()); }

  double score(const WebPageSample& s) const {
    Network<float> net(params, config);
    return net.forward(encode(s));
  }

  Prediction predict(const WebPageSample& s, double threshold = 0.5) const {
    const double sc = score(s);
    return {decide(sc, threshold), sc};
  }

  std::vector<double> scores(const std::vector<WebPageSample>& samples) const {
    Network<float> net(params, config);
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(net.forward(encode(s)));
    return out;
  }
};

struct FitResult {
  Classifier model;
  TrainHistory history;
};

inline VocabSizes vocab_sizes(const VocabularyPair& v) { return {v.url.size(), v.html.size()}; }

/// Builds vocabularies from `train_set`, initializes and trains a fresh model.
inline FitResult fit(const ModelConfig& cfg, const TrainConfig& tcfg, const std::vector<WebPageSample>& train_set,
                     const std::vector<WebPageSample>& val_set, const EpochCallback& on_epoch = {}) {
  if (train_set.empty()) throw DataError("training set is empty");
  FitResult out;
  out.model.config = cfg;
  out.model.vocab = build_vocabularies(train_set);
  auto params = init_params<float>(cfg, vocab_sizes(out.model.vocab), derive_seed(tcfg.seed, 0));
  const auto enc_train = encode_samples(train_set, out.model.vocab, cfg.encoder());
  const auto enc_val = encode_samples(val_set, out.model.vocab, cfg.encoder());
  auto r = train(cfg, tcfg, enc_train, enc_val, std::move(params), on_epoch);
  out.model.params = std::move(r.params);
  out.history = std::move(r.history);
  return out;
}

/// Donor parameters with a freshly initialized output layer; every other tensor is copied.
inline ModelParams<float> transfer_params(const Classifier& donor, std::uint64_t seed) {
  ModelParams<float> p = donor.params;
  Rng rng(derive_seed(seed, 2));
  reset_output_layer(p, rng);
  return p;
}

/// Retrains a donor model on new data after resetting its output layer. The donor's
/// vocabularies are reused and every layer stays trainable.
inline FitResult fine_tune(const Classifier& donor, const TrainConfig& tcfg, const std::vector<WebPageSample>& train_set,
                           const std::vector<WebPageSample>& val_set, const EpochCallback& on_epoch = {}) {
  FitResult out;
  out.model.config = donor.config;
  out.model.vocab = donor.vocab;
  const auto enc_train = encode_samples(train_set, donor.vocab, donor.config.encoder());
  const auto enc_val = encode_samples(val_set, donor.vocab, donor.config.encoder());
  auto r = train(donor.config, tcfg, enc_train, enc_val, transfer_params(donor, tcfg.seed), on_epoch);
  out.model.params = std::move(r.params);
  out.history = std::move(r.history);
  return out;
}

/// As above, but first checks that the requested architecture matches the donor's.
inline FitResult fine_tune(const Classifier& donor, const ModelConfig& requested, const TrainConfig& tcfg,
                           const std::vector<WebPageSample>& train_set, const std::vector<WebPageSample>& val_set,
                           const EpochCallback& on_epoch = {}) {
  if (!(requested == donor.config))
    throw ConfigError("requested model config does not match the donor checkpoint (vocabularies/shapes differ)");
  return fine_tune(donor, tcfg, train_set, val_set, on_epoch);
}

/// Concatenation-layer activations (pooled URL filters, then pooled HTML filters).
inline std::vector<float> extract_concat_features(const Classifier& model, const WebPageSample& s) {
  if (model.config.variant != Variant::full)
    throw ConfigError("concatenation features need the full (url + html) variant");
  Network<float> net(model.params, model.config);
  net.forward(model.encode(s));
  return net.trace().fc_in.front();
}

}  // namespace webphish
