#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "webphish/common.hpp"

namespace webphish {

/// Phishing (label 1) is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size())
    throw DataError("label/prediction length mismatch: " + std::to_string(labels.size()) + " vs " +
                    std::to_string(predictions.size()));
  if (labels.empty()) throw DataError("confusion matrix of an empty evaluation set");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) throw DataError("labels must be 0 or 1");
    if (y == 1) {
      (p == 1 ? cm.tp : cm.fn) += 1;
    } else {
      (p == 1 ? cm.fp : cm.tn) += 1;
    }
  }
  return cm;
}

inline ConfusionMatrix confusion(const std::vector<int>& labels, const std::vector<int>& predictions) {
  return confusion(std::span<const int>(labels), std::span<const int>(predictions));
}

/// Precision/recall/F1 averaged over the two classes.
struct ClassAverage {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

/// Fractions in [0, 1]. A ratio whose denominator is zero is absent rather than 0.
struct MetricsReport {
  ConfusionMatrix cm;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> tpr;
  std::optional<double> fnr;
  std::optional<double> tnr;
  std::optional<double> fpr;
  ClassAverage macro;
  ClassAverage weighted;
};

namespace detail {

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

struct ClassScores {
  std::optional<double> precision, recall, f1;
};

inline ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
  return {ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn)};
}

/// Mean (or support-weighted mean) of the classes where the value is defined.
inline std::optional<double> combine(std::optional<double> a, double wa, std::optional<double> b, double wb) {
  double num = 0.0, den = 0.0;
  if (a) {
    num += wa * *a;
    den += wa;
  }
  if (b) {
    num += wb * *b;
    den += wb;
  }
  if (den == 0.0) return std::nullopt;
  return num / den;
}

}  // namespace detail

inline MetricsReport report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("metrics of an empty confusion matrix");
  using detail::ratio;
  MetricsReport r;
  r.cm = cm;
  r.accuracy = ratio(cm.tp + cm.tn, cm.total());
  r.precision = ratio(cm.tp, cm.tp + cm.fp);
  r.recall = r.tpr = ratio(cm.tp, cm.tp + cm.fn);
  r.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
  r.fnr = ratio(cm.fn, cm.fn + cm.tp);
  r.tnr = ratio(cm.tn, cm.tn + cm.fp);
  r.fpr = ratio(cm.fp, cm.fp + cm.tn);

  const auto pos = detail::class_scores(cm.tp, cm.fp, cm.fn);
  const auto neg = detail::class_scores(cm.tn, cm.fn, cm.fp);
  const double support_pos = static_cast<double>(cm.tp + cm.fn);
  const double support_neg = static_cast<double>(cm.tn + cm.fp);
  r.macro = {detail::combine(pos.precision, 1, neg.precision, 1), detail::combine(pos.recall, 1, neg.recall, 1),
             detail::combine(pos.f1, 1, neg.f1, 1)};
  r.weighted = {detail::combine(pos.precision, support_pos, neg.precision, support_neg),
                detail::combine(pos.recall, support_pos, neg.recall, support_neg),
                detail::combine(pos.f1, support_pos, neg.f1, support_neg)};
  return r;
}

/// {"fraction": x, "percent": 100x} or null when undefined.
inline nlohmann::ordered_json metric_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return nlohmann::ordered_json{{"fraction", *v}, {"percent", *v * 100.0}};
}

inline nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["confusion"] = {{"tp", r.cm.tp}, {"fp", r.cm.fp}, {"tn", r.cm.tn}, {"fn", r.cm.fn}};
  j["accuracy"] = metric_json(r.accuracy);
  j["precision"] = metric_json(r.precision);
  j["recall"] = metric_json(r.recall);
  j["f1"] = metric_json(r.f1);
  j["tpr"] = metric_json(r.tpr);
  j["fnr"] = metric_json(r.fnr);
  j["tnr"] = metric_json(r.tnr);
  j["fpr"] = metric_json(r.fpr);
  for (const auto& [name, avg] : {std::pair{"macro_avg", &r.macro}, std::pair{"weighted_avg", &r.weighted}})
    j[name] = {{"precision", metric_json(avg->precision)},
               {"recall", metric_json(avg->recall)},
               {"f1", metric_json(avg->f1)}};
  return j;
}

struct RocPoint {
  double threshold;  // scores >= threshold are called positive; +inf for the origin
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), fpr non-decreasing
  double auc = 0.0;
};

/// Sweeps thresholds over the distinct scores in descending order, treating equal
/// scores as one step, and integrates the curve with the trapezoid rule. The area
/// equals the Mann-Whitney statistic with half credit for tied pairs.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("score/label length mismatch");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw NumericError("non-finite score at index " + std::to_string(i));
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("ROC needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  // Twice the area in units of (1/neg) x (1/pos), kept integral until the end.
  double area2 = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::size_t tp0 = tp, fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp) += 1;
    area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
    curve.points.push_back(
        {s, static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
  }
  curve.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return roc_auc(std::span<const double>(scores), std::span<const int>(labels));
}

inline void write_roc_csv(std::ostream& out, const RocCurve& c) {
  out << "threshold,fpr,tpr\n";
  out.precision(17);
  for (const auto& p : c.points) {
    if (std::isinf(p.threshold))
      out << "inf";
    else
      out << p.threshold;
    out << ',' << p.fpr << ',' << p.tpr << '\n';
  }
}

}  // namespace webphish
