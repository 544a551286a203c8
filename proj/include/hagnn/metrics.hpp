#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hagnn/cohort.hpp"
#include "hagnn/errors.hpp"

namespace hagnn {

namespace detail {

inline void check_binary_pair(std::size_t n_preds, std::size_t n_labels,
                              const char* who) {
  if (n_preds != n_labels)
    throw DimensionError(std::string(who) + ": " + std::to_string(n_preds) +
                         " predictions vs " + std::to_string(n_labels) +
                         " labels");
  if (n_preds == 0)
    throw MetricError(std::string(who) + ": empty input");
}

}  // namespace detail

inline double accuracy(const std::vector<int>& preds,
                       const std::vector<int>& labels) {
  detail::check_binary_pair(preds.size(), labels.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if ((preds[i] != 0) == (labels[i] != 0)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Mean of sensitivity and specificity.
inline double balanced_accuracy(const std::vector<int>& preds,
                                const std::vector<int>& labels) {
  detail::check_binary_pair(preds.size(), labels.size(), "balanced_accuracy");
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    bool pred = preds[i] != 0, label = labels[i] != 0;
    if (label)
      (pred ? tp : fn)++;
    else
      (pred ? fp : tn)++;
  }
  if (tp + fn == 0 || tn + fp == 0)
    throw MetricError("balanced_accuracy: labels contain a single class");
  double sens = static_cast<double>(tp) / static_cast<double>(tp + fn);
  double spec = static_cast<double>(tn) / static_cast<double>(tn + fp);
  return 0.5 * (sens + spec);
}

// Probability a random positive outscores a random negative, ties half.
inline double auc_roc(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  detail::check_binary_pair(scores.size(), labels.size(), "auc_roc");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] != 0 ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty())
    throw MetricError("auc_roc: labels contain a single class");
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) {
      if (p > n)
        wins += 1.0;
      else if (p == n)
        wins += 0.5;
    }
  return wins / (static_cast<double>(pos.size()) *
                 static_cast<double>(neg.size()));
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

// Empirical ROC curve from (0,0) to (1,1), one point per distinct score.
inline std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
  detail::check_binary_pair(scores.size(), labels.size(), "roc_points");
  std::size_t p_total = 0, n_total = 0;
  for (int l : labels) (l != 0 ? p_total : n_total)++;
  if (p_total == 0 || n_total == 0)
    throw MetricError("roc_points: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] != 0 ? tp : fp)++;
      ++i;
    }
    points.push_back({static_cast<double>(fp) / static_cast<double>(n_total),
                      static_cast<double>(tp) / static_cast<double>(p_total),
                      s});
  }
  return points;
}

inline double auc_trapezoid(const std::vector<RocPoint>& points) {
  if (points.size() < 2)
    throw MetricError("auc_trapezoid: need at least two curve points");
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) *
            (points[i].tpr + points[i - 1].tpr) * 0.5;
  return area;
}

// Fraction of subjects whose last two diagnoses follow the given transition
// and were flagged as converters.
inline double conversion_accuracy(
    const std::vector<int>& predicted_converter,
    const std::vector<std::pair<Diagnosis, Diagnosis>>& last_two,
    Diagnosis from, Diagnosis to) {
  detail::check_binary_pair(predicted_converter.size(), last_two.size(),
                            "conversion_accuracy");
  std::size_t total = 0, flagged = 0;
  for (std::size_t i = 0; i < last_two.size(); ++i) {
    if (last_two[i].first != from || last_two[i].second != to) continue;
    ++total;
    if (predicted_converter[i] != 0) ++flagged;
  }
  if (total == 0)
    throw MetricError("conversion_accuracy: no " +
                      std::string(to_string(from)) + " to " +
                      std::string(to_string(to)) + " subjects in the set");
  return static_cast<double>(flagged) / static_cast<double>(total);
}

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw MetricError("mean_std: empty sample");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

struct FoldMetrics {
  double acc = 0.0;
  double auc_roc = 0.0;
  double ba = 0.0;
  std::optional<double> cn_to_mci;  // absent when the fold holds no such case
  std::optional<double> mci_to_ad;
};

// Per-fold metrics plus mean/std aggregates. Conversion accuracies are pooled
// over every fold's test predictions (their std is reported as zero).
struct MetricsReport {
  std::vector<FoldMetrics> per_fold;
  double mean_acc = 0.0, std_acc = 0.0;
  double mean_auc = 0.0, std_auc = 0.0;
  double mean_ba = 0.0, std_ba = 0.0;
  std::optional<double> cn_to_mci;
  std::optional<double> mci_to_ad;

  void validate() const {
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    for (const FoldMetrics& f : per_fold) {
      if (!in_unit(f.acc) || !in_unit(f.auc_roc) || !in_unit(f.ba))
        throw MetricError("metrics report: fold metric outside [0, 1]");
      if ((f.cn_to_mci && !in_unit(*f.cn_to_mci)) ||
          (f.mci_to_ad && !in_unit(*f.mci_to_ad)))
        throw MetricError("metrics report: conversion metric outside [0, 1]");
    }
    if (!in_unit(mean_acc) || !in_unit(mean_auc) || !in_unit(mean_ba))
      throw MetricError("metrics report: mean outside [0, 1]");
    if (std_acc < 0.0 || std_auc < 0.0 || std_ba < 0.0)
      throw MetricError("metrics report: negative std");
    if ((cn_to_mci && !in_unit(*cn_to_mci)) ||
        (mci_to_ad && !in_unit(*mci_to_ad)))
      throw MetricError("metrics report: pooled conversion outside [0, 1]");
  }
};

}  // namespace hagnn
