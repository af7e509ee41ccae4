#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "webphish/common.hpp"
#include "webphish/table.hpp"

namespace webphish {

using Point2 = std::array<double, 2>;

namespace detail {

inline std::size_t check_points(const Matrix& x, std::size_t min_rows) {
  if (x.size() < min_rows)
    throw DataError("projection needs at least " + std::to_string(min_rows) + " rows, got " +
                    std::to_string(x.size()));
  const std::size_t d = x.front().size();
  for (const auto& r : x) {
    if (r.size() != d) throw DataError("ragged input rows");
    for (double v : r)
      if (!std::isfinite(v)) throw NumericError("non-finite input value");
  }
  return d;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Projects centered rows onto the top two principal components, found by power
/// iteration on the covariance with deflation. Component signs are fixed so the
/// largest-magnitude loading is positive.
inline std::vector<Point2> pca_2d(const Matrix& x) {
  const std::size_t d = detail::check_points(x, 2);
  if (d < 2) throw DataError("PCA needs at least 2 columns");
  const std::size_t n = x.size();

  std::vector<double> mean(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& r : x)
    for (std::size_t a = 0; a < d; ++a) {
      const double ca = r[a] - mean[a];
      for (std::size_t b = a; b < d; ++b) cov[a][b] += ca * (r[b] - mean[b]);
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) cov[b][a] = cov[a][b] /= static_cast<double>(n);

  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) trace += cov[a][a];
  if (!(trace > 0.0)) throw DataError("PCA of zero-variance data");

  Rng rng(0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<double>> comps;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> v(d), w(d);
    for (auto& e : v) e = standard_normal(rng);
    auto orthonormalize = [&](std::vector<double>& u) {
      for (const auto& c : comps) {
        const double p = detail::dot(u, c);
        for (std::size_t j = 0; j < d; ++j) u[j] -= p * c[j];
      }
      const double norm = std::sqrt(detail::dot(u, u));
      if (norm == 0.0) return false;
      for (auto& e : u) e /= norm;
      return true;
    };
    orthonormalize(v);
    for (int it = 0; it < 1000; ++it) {
      for (std::size_t a = 0; a < d; ++a) w[a] = detail::dot(cov[a], v);
      // No variance left: any orthogonal direction will do.
      if (!orthonormalize(w)) break;
      double change = 0.0;
      for (std::size_t j = 0; j < d; ++j) change = std::max(change, std::abs(w[j] - v[j]));
      v.swap(w);
      if (change < 1e-9) break;
    }
    std::size_t big = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(v[j]) > std::abs(v[big])) big = j;
    if (v[big] < 0)
      for (auto& e : v) e = -e;
    std::vector<double> cv(d);
    for (std::size_t a = 0; a < d; ++a) cv[a] = detail::dot(cov[a], v);
    const double lambda = detail::dot(v, cv);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov[a][b] -= lambda * v[a] * v[b];
    comps.push_back(std::move(v));
  }

  std::vector<Point2> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 2; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (x[i][j] - mean[j]) * comps[k][j];
      out[i][k] = s;
    }
  return out;
}

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 0;
};

struct Projection {
  std::vector<Point2> coordinates;
  std::vector<double> kl_history;   // KL(P || Q) after each iteration, unexaggerated P
  std::vector<double> perplexities;  // achieved per-point perplexity of the input affinities
  double perplexity = 0.0;           // target after clamping to (N - 1) / 3
};

namespace detail {

struct Affinities {
  std::vector<double> p;  // N x N conditional rows, each summing to 1
  std::vector<double> perplexity;
};

/// Per-row Gaussian bandwidths by bisection on the precision until the entropy
/// matches log(perplexity) within 1e-5 nats (at most 50 steps). Rows whose final
/// entropy is off by more than 1e-3 nats are an error, which covers degenerate
/// inputs such as identical rows.
inline Affinities conditional_affinities(const Matrix& x, double perplexity) {
  const std::size_t n = x.size();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x[i].size(); ++k) {
        const double t = x[i][k] - x[j][k];
        s += t * t;
      }
      dist[i * n + j] = dist[j * n + i] = s;
    }

  const double target = std::log(perplexity);
  Affinities a{std::vector<double>(n * n, 0.0), std::vector<double>(n, 0.0)};
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity(), dsum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) {
        dmin = std::min(dmin, dist[i * n + j]);
        dsum += dist[i * n + j];
      }
    // Start the search at the inverse mean squared distance so it is scale-free.
    const double dmean = dsum / static_cast<double>(n - 1);
    double beta = dmean > 0.0 ? 1.0 / dmean : 1.0;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    auto evaluate = [&] {
      double sum = 0.0, wsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        // Shifting by the nearest distance cancels in the normalization and avoids underflow.
        row[j] = j == i ? 0.0 : std::exp(-beta * (dist[i * n + j] - dmin));
        sum += row[j];
        wsum += row[j] * (dist[i * n + j] - dmin);
      }
      entropy = std::log(sum) + beta * wsum / sum;
      for (auto& v : row) v /= sum;
    };
    for (int it = 0; it < 50; ++it) {
      evaluate();
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    evaluate();
    if (!(std::abs(entropy - target) <= 1e-3))
      throw NumericError("cannot match perplexity " + format_number(perplexity) + " for row " +
                         std::to_string(i) + " (achieved " + format_number(std::exp(entropy)) +
                         "); inputs are degenerate");
    a.perplexity[i] = std::exp(entropy);
    std::copy(row.begin(), row.end(), a.p.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return a;
}

}  // namespace detail

/// Exact t-SNE into two dimensions. The perplexity is clamped to (N - 1) / 3, so
/// at least 12 rows are required for the default target to be feasible.
inline Projection tsne_2d(const Matrix& x, const TsneConfig& cfg = {}) {
  detail::check_points(x, 12);
  if (!(cfg.perplexity > 0.0)) throw ConfigError("perplexity must be positive");
  if (cfg.iterations < 250) throw ConfigError("t-SNE needs at least 250 iterations");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  const std::size_t n = x.size();

  Projection out;
  out.perplexity = std::min(cfg.perplexity, static_cast<double>(n - 1) / 3.0);
  auto cond = detail::conditional_affinities(x, out.perplexity);
  out.perplexities = std::move(cond.perplexity);

  // Symmetrized joint affinities summing to 1; the floor keeps the KL finite.
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j)
        p[i * n + j] = std::max((cond.p[i * n + j] + cond.p[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);

  auto y = pca_2d(x);
  {
    double m = 0.0, v = 0.0;
    for (const auto& pt : y) m += pt[0];
    m /= static_cast<double>(n);
    for (const auto& pt : y) v += (pt[0] - m) * (pt[0] - m);
    const double sd = std::sqrt(v / static_cast<double>(n));
    const double scale = sd > 0.0 ? 1e-4 / sd : 1.0;
    Rng rng(cfg.seed);
    for (auto& pt : y)
      for (auto& c : pt) c = c * scale + 1e-6 * standard_normal(rng);
  }

  std::vector<Point2> update(n, Point2{0.0, 0.0}), gains(n, Point2{1.0, 1.0}), grad(n);
  std::vector<double> num(n * n);
  out.kl_history.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const double exaggeration = iter <= cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = iter < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;

    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = q;
        z += 2.0 * q;
      }
    }

    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = std::max(num[i * n + j] / z, 1e-300);
        const double pij = p[i * n + j];
        kl += pij * std::log(pij / q);
        const double m = (exaggeration * pij - q) * num[i * n + j];
        gx += m * (y[i][0] - y[j][0]);
        gy += m * (y[i][1] - y[j][1]);
      }
      grad[i] = {4.0 * gx, 4.0 * gy};
    }
    out.kl_history.push_back(std::max(kl, 0.0));

    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 2; ++k) {
        const bool same_sign = (grad[i][k] > 0) == (update[i][k] > 0);
        gains[i][k] = std::max(same_sign ? gains[i][k] * 0.8 : gains[i][k] + 0.2, 0.01);
        update[i][k] = momentum * update[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
        y[i][k] += update[i][k];
      }
    Point2 c{0.0, 0.0};
    for (const auto& pt : y) {
      c[0] += pt[0];
      c[1] += pt[1];
    }
    for (auto& pt : y) {
      pt[0] -= c[0] / static_cast<double>(n);
      pt[1] -= c[1] / static_cast<double>(n);
    }
    for (const auto& pt : y)
      if (!std::isfinite(pt[0]) || !std::isfinite(pt[1]))
        throw NumericError("t-SNE diverged at iteration " + std::to_string(iter));
  }
  out.coordinates = std::move(y);
  return out;
}

/// CSV: id,label,x,y.
inline void write_projection_csv(std::ostream& out, const std::vector<std::string>& ids,
                                 const std::vector<int>& labels, const std::vector<Point2>& coords) {
  if (ids.size() != coords.size() || labels.size() != coords.size())
    throw DataError("projection rows do not match ids/labels");
  out << "id,label,x,y\n";
  for (std::size_t i = 0; i < coords.size(); ++i)
    out << csv_field(ids[i]) << ',' << (labels[i] ? "phishing" : "legitimate") << ','
        << format_number(coords[i][0]) << ',' << format_number(coords[i][1]) << '\n';
}

}  // namespace webphish
