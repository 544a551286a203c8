#pragma once

// From a parcellated BOLD time series to a functional-connectivity matrix and
// on to a graph: ROI averaging, Pearson correlation per ROI pair, then edge
// selection by threshold or per-node top-k on |r|.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "hagnn/csv.hpp"
#include "hagnn/errors.hpp"
#include "hagnn/tensor.hpp"

namespace hagnn {

enum class ChannelKind { kVoxel, kRoi };

// T x V signal matrix; rows are timepoints, columns are channels.
struct BoldMatrix {
  Tensor values;
  ChannelKind kind = ChannelKind::kVoxel;

  BoldMatrix(Tensor v, ChannelKind k) : values(std::move(v)), kind(k) {
    if (values.rows() < 3)
      throw PreconditionError("BoldMatrix: need at least 3 timepoints, got " +
                              std::to_string(values.rows()));
    if (values.cols() < 2)
      throw PreconditionError("BoldMatrix: need at least 2 channels, got " +
                              std::to_string(values.cols()));
  }

  std::size_t timepoints() const { return values.rows(); }
  std::size_t channels() const { return values.cols(); }
};

// Assignment of V channels to R ROIs; every ROI must be non-empty.
struct ParcelLabels {
  std::vector<std::size_t> labels;
  std::size_t num_rois = 0;

  ParcelLabels(std::vector<std::size_t> l, std::size_t r)
      : labels(std::move(l)), num_rois(r) {
    if (num_rois == 0) throw LabelError("ParcelLabels: zero ROIs");
    std::vector<std::size_t> count(num_rois, 0);
    for (std::size_t id : labels) {
      if (id >= num_rois)
        throw LabelError("ParcelLabels: ROI id " + std::to_string(id) +
                         " out of range [0, " + std::to_string(num_rois) + ")");
      ++count[id];
    }
    for (std::size_t r2 = 0; r2 < num_rois; ++r2)
      if (count[r2] == 0)
        throw LabelError("ParcelLabels: ROI " + std::to_string(r2) +
                         " has no channels");
  }
};

// R x R Pearson matrix. Zero-variance ROIs are flagged and their whole row
// and column (diagonal included) are zero.
struct FCMatrix {
  Tensor values;
  std::vector<char> degenerate;

  std::size_t num_rois() const { return values.rows(); }
};

struct BrainGraph {
  Tensor node_features;                            // row i = FC row of node i
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j, sorted
  std::vector<double> edge_weights;                // |r| per edge

  std::size_t num_nodes() const { return node_features.rows(); }
};

struct EdgeRule {
  enum class Kind { kThreshold, kTopK };
  Kind kind = Kind::kTopK;
  double tau = 0.0;   // threshold rule
  std::size_t k = 10;  // top-k rule

  static EdgeRule threshold(double tau) {
    EdgeRule r;
    r.kind = Kind::kThreshold;
    r.tau = tau;
    return r;
  }

  static EdgeRule topk(std::size_t k) {
    EdgeRule r;
    r.kind = Kind::kTopK;
    r.k = k;
    return r;
  }

  // Accepts "threshold:<tau>" or "topk:<k>".
  static EdgeRule parse(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos)
      throw ConfigError("edge rule '" + text +
                        "' must look like topk:<k> or threshold:<tau>");
    std::string name = text.substr(0, colon);
    std::string arg = text.substr(colon + 1);
    try {
      if (name == "threshold") return threshold(std::stod(arg));
      if (name == "topk") return topk(std::stoul(arg));
    } catch (const std::exception&) {
      throw ConfigError("edge rule '" + text + "' has a malformed parameter");
    }
    throw ConfigError("unknown edge rule '" + name + "'");
  }

  std::string describe() const {
    return kind == Kind::kThreshold ? "threshold:" + format_double(tau)
                                    : "topk:" + std::to_string(k);
  }
};

// Averages voxel channels into their ROI: output channel r at time t is the
// mean of the voxel channels labeled r.
inline BoldMatrix extract_roi_timeseries(const BoldMatrix& bold,
                                         const ParcelLabels& parcels) {
  if (bold.channels() != parcels.labels.size())
    throw DimensionError("extract_roi_timeseries: " +
                         std::to_string(bold.channels()) + " channels vs " +
                         std::to_string(parcels.labels.size()) + " labels");
  std::size_t T = bold.timepoints();
  std::size_t R = parcels.num_rois;
  std::vector<double> inv_count(R, 0.0);
  for (std::size_t id : parcels.labels) inv_count[id] += 1.0;
  for (std::size_t r = 0; r < R; ++r) inv_count[r] = 1.0 / inv_count[r];
  Tensor out(T, R);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < bold.channels(); ++v)
      out.at(t, parcels.labels[v]) += bold.values.at(t, v);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t r = 0; r < R; ++r) out.at(t, r) *= inv_count[r];
  return BoldMatrix(std::move(out), ChannelKind::kRoi);
}

// Pearson correlation between every pair of columns. The (population vs
// sample) covariance normalization cancels in r, so centered dot products are
// used directly. Entries are clamped to [-1, 1] to absorb rounding.
inline FCMatrix pearson_fc(const BoldMatrix& ts) {
  std::size_t T = ts.timepoints();
  std::size_t R = ts.channels();
  if (T < 3)
    throw PreconditionError("pearson_fc: need at least 3 timepoints, got " +
                            std::to_string(T));
  // Center columns.
  Tensor centered = ts.values;
  for (std::size_t j = 0; j < R; ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += centered.at(t, j);
    mean /= static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) centered.at(t, j) -= mean;
  }
  std::vector<double> ss(R, 0.0);
  for (std::size_t j = 0; j < R; ++j)
    for (std::size_t t = 0; t < T; ++t)
      ss[j] += centered.at(t, j) * centered.at(t, j);

  FCMatrix fc;
  fc.values = Tensor::zeros(R, R);
  fc.degenerate.assign(R, 0);
  for (std::size_t j = 0; j < R; ++j)
    if (ss[j] == 0.0) fc.degenerate[j] = 1;

  for (std::size_t i = 0; i < R; ++i) {
    if (fc.degenerate[i]) continue;
    fc.values.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < R; ++j) {
      if (fc.degenerate[j]) continue;
      double dot = 0.0;
      for (std::size_t t = 0; t < T; ++t)
        dot += centered.at(t, i) * centered.at(t, j);
      double r = dot / std::sqrt(ss[i] * ss[j]);
      r = std::min(1.0, std::max(-1.0, r));
      fc.values.at(i, j) = r;
      fc.values.at(j, i) = r;
    }
  }
  return fc;
}

// Rebuilds an FCMatrix from stored values; a zeroed diagonal entry marks the
// ROI as degenerate (the writer zeroes that whole row and column).
inline FCMatrix fc_from_values(Tensor values) {
  if (values.rows() != values.cols())
    throw DimensionError("fc_from_values: matrix must be square, got " +
                         std::to_string(values.rows()) + "x" +
                         std::to_string(values.cols()));
  FCMatrix fc;
  fc.degenerate.assign(values.rows(), 0);
  for (std::size_t i = 0; i < values.rows(); ++i)
    if (values.at(i, i) == 0.0) fc.degenerate[i] = 1;
  fc.values = std::move(values);
  return fc;
}

// Selects undirected edges from the FC matrix. The threshold rule keeps
// |r| > tau; the top-k rule keeps the union over nodes of each node's k
// strongest neighbors (ties to the smaller neighbor index). Degenerate ROIs
// never receive edges.
inline BrainGraph build_graph(const FCMatrix& fc, const EdgeRule& rule) {
  std::size_t R = fc.num_rois();
  if (rule.kind == EdgeRule::Kind::kThreshold) {
    if (!(rule.tau >= 0.0 && rule.tau < 1.0))
      throw ConfigError("threshold rule needs tau in [0, 1), got " +
                        format_double(rule.tau));
  } else {
    if (rule.k < 1 || rule.k >= R)
      throw ConfigError("topk rule needs 1 <= k < " + std::to_string(R) +
                        ", got " + std::to_string(rule.k));
  }

  std::vector<std::vector<char>> keep(R, std::vector<char>(R, 0));
  if (rule.kind == EdgeRule::Kind::kThreshold) {
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = i + 1; j < R; ++j)
        if (std::abs(fc.values.at(i, j)) > rule.tau) keep[i][j] = 1;
  } else {
    for (std::size_t i = 0; i < R; ++i) {
      if (fc.degenerate[i]) continue;
      std::vector<std::size_t> cand;
      for (std::size_t j = 0; j < R; ++j)
        if (j != i && !fc.degenerate[j]) cand.push_back(j);
      std::size_t take = std::min(rule.k, cand.size());
      std::partial_sort(cand.begin(), cand.begin() + take, cand.end(),
                        [&](std::size_t a, std::size_t b) {
                          double wa = std::abs(fc.values.at(i, a));
                          double wb = std::abs(fc.values.at(i, b));
                          if (wa != wb) return wa > wb;
                          return a < b;
                        });
      for (std::size_t t = 0; t < take; ++t) {
        std::size_t j = cand[t];
        keep[std::min(i, j)][std::max(i, j)] = 1;
      }
    }
  }

  BrainGraph g;
  g.node_features = fc.values;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = i + 1; j < R; ++j)
      if (keep[i][j]) {
        g.edges.emplace_back(i, j);
        g.edge_weights.push_back(std::abs(fc.values.at(i, j)));
      }
  return g;
}

}  // namespace hagnn
