#pragma once

// Straight-line reference for the scoring pipeline. Written without any
// library scoring code so the two can be compared value for value.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <set>
#include <vector>

namespace ecnu::testing {

struct OracleScores {
  std::vector<double> median, iqr;
  std::vector<std::vector<double>> a;
  std::vector<double> aggregate;
  std::vector<std::size_t> argmax;
  std::vector<double> smoothed;
};

inline double oracle_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const double below = std::floor(h);
  const std::size_t i = static_cast<std::size_t>(below);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - below) * (v[i + 1] - v[i]);
}

/// val/test rows are per-tick sensor vectors of predictions and truths.
inline OracleScores oracle_scores(const std::vector<std::vector<double>>& val_pred,
                                  const std::vector<std::vector<double>>& val_truth,
                                  const std::vector<std::vector<double>>& pred,
                                  const std::vector<std::vector<double>>& truth, std::size_t m) {
  OracleScores o;
  const std::size_t n = val_pred.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> e;
    for (std::size_t t = 0; t < val_pred.size(); ++t) e.push_back(std::fabs(val_truth[t][i] - val_pred[t][i]));
    o.median.push_back(oracle_quantile(e, 0.5));
    o.iqr.push_back(oracle_quantile(e, 0.75) - oracle_quantile(e, 0.25));
  }
  const double floor = std::max(1e-2 * oracle_quantile(o.iqr, 0.5), 1e-8);
  for (double& q : o.iqr) q = std::max(q, floor);
  for (std::size_t t = 0; t < pred.size(); ++t) {
    std::vector<double> row;
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = (std::fabs(truth[t][i] - pred[t][i]) - o.median[i]) / o.iqr[i];
      row.push_back(a);
      if (i == 0 || a > best) {
        best = a;
        arg = i;
      }
    }
    o.a.push_back(row);
    o.aggregate.push_back(best);
    o.argmax.push_back(arg);
  }
  for (std::size_t t = 0; t < o.aggregate.size(); ++t) {
    const std::size_t first = t + 1 >= m ? t + 1 - m : 0;
    double total = 0.0;
    for (std::size_t u = first; u <= t; ++u) total += o.aggregate[u];
    o.smoothed.push_back(total / static_cast<double>(t - first + 1));
  }
  return o;
}

inline double oracle_f1(const std::vector<double>& scores, const std::vector<int>& labels,
                        double threshold) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const bool flagged = scores[t] > threshold;
    if (flagged && labels[t] == 1) ++tp;
    if (flagged && labels[t] == 0) ++fp;
    if (!flagged && labels[t] == 1) ++fn;
  }
  const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

/// Best F1 over every distinct score used as a threshold.
inline double oracle_best_f1(const std::vector<double>& scores, const std::vector<int>& labels) {
  double best = 0.0;
  for (double c : std::set<double>(scores.begin(), scores.end())) {
    best = std::max(best, oracle_f1(scores, labels, c));
  }
  return best;
}

/// Random prediction/truth matrices plus labels for one scoring instance.
struct ScoreInstance {
  std::vector<std::vector<double>> val_pred, val_truth, pred, truth;
  std::vector<int> labels;
  std::size_t sma_window = 1;
};

inline ScoreInstance random_score_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> n_dist(1, 20), t_dist(4, 200), v_dist(4, 60), m_dist(1, 6);
  std::normal_distribution<double> normal;
  const std::size_t n = n_dist(rng), t = t_dist(rng), v = v_dist(rng);
  ScoreInstance s;
  s.sma_window = m_dist(rng);
  auto fill = [&](std::vector<std::vector<double>>& rows, std::size_t count, double scale) {
    rows.assign(count, std::vector<double>(n));
    for (auto& r : rows)
      for (double& x : r) x = scale * normal(rng);
  };
  fill(s.val_pred, v, 1.0);
  fill(s.val_truth, v, 1.0);
  fill(s.pred, t, 1.0);
  fill(s.truth, t, 1.0);
  std::bernoulli_distribution anomalous(0.15);
  for (std::size_t k = 0; k < t; ++k) {
    s.labels.push_back(anomalous(rng) ? 1 : 0);
    if (s.labels.back() == 1) {
      for (double& x : s.truth[k]) x += 3.0 * normal(rng);
    }
  }
  return s;
}

}  // namespace ecnu::testing
