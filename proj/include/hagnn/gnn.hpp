#pragma once

// Graph model over one visit's brain graph: two convolution blocks, each a
// GraphSAGE layer, graph normalization, dropout, and top-k pooling, followed
// by a mean||max readout per block. The concatenated readouts form a
// fixed-length visit embedding independent of graph size. A small affine +
// softmax head on top serves the 3-class diagnosis pretraining task.
//
// All differentiable pieces are built from tape primitives; discrete choices
// (top-k selection, the argmax rows of the max readout, dropout masks) are
// fixed from forward values and enter the graph as constants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hagnn/connectome.hpp"
#include "hagnn/errors.hpp"
#include "hagnn/params.hpp"
#include "hagnn/rng.hpp"
#include "hagnn/tape.hpp"

namespace hagnn {

enum class Mode { kTrain, kEval };

struct GcnConfig {
  std::size_t d_in = 100;  // node feature length (one FC row)
  std::size_t d1 = 64;
  std::size_t d2 = 32;
  double rho1 = 0.5;
  double rho2 = 0.5;
  double dropout = 0.3;
  bool weighted_mean = false;  // aggregate neighbors by |r| edge weight

  std::size_t embedding_dim() const { return 2 * (d1 + d2); }

  void validate() const {
    if (d_in < 1 || d1 < 1 || d2 < 1)
      throw ConfigError("gcn: layer widths must be positive");
    if (!(rho1 > 0.0 && rho1 <= 1.0) || !(rho2 > 0.0 && rho2 <= 1.0))
      throw ConfigError("gcn: pool ratios must be in (0, 1]");
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw ConfigError("gcn: dropout must be in [0, 1)");
  }
};

// Registers all GCN parameters under gcn.block{1,2}.* names.
inline void init_gcn_params(ParamStore& store, const GcnConfig& cfg,
                            RngStream& rng) {
  cfg.validate();
  std::size_t dims[3] = {cfg.d_in, cfg.d1, cfg.d2};
  for (int b = 1; b <= 2; ++b) {
    std::string prefix = "gcn.block" + std::to_string(b) + ".";
    std::size_t din = dims[b - 1];
    std::size_t dout = dims[b];
    store.add(prefix + "sage.w_self", glorot_init(rng, din, dout));
    store.add(prefix + "sage.w_neigh", glorot_init(rng, din, dout));
    store.add(prefix + "sage.bias", Tensor::zeros(1, dout));
    store.add(prefix + "norm.gamma", Tensor::full(1, dout, 1.0));
    store.add(prefix + "norm.beta", Tensor::zeros(1, dout));
    store.add(prefix + "norm.alpha", Tensor::full(1, dout, 1.0));
    store.add(prefix + "pool.p", glorot_init(rng, dout, 1));
  }
}

// Affine + softmax head used during 3-class pretraining.
inline void init_pretrain_head(ParamStore& store, const GcnConfig& cfg,
                               RngStream& rng) {
  store.add("pretrain_head.w", glorot_init(rng, cfg.embedding_dim(), 3));
  store.add("pretrain_head.b", Tensor::zeros(1, 3));
}

// Row-normalized neighbor-mean operator as a dense constant: row i holds
// 1/deg(i) at i's neighbors (or weight_ij / sum of i's weights when
// aggregation is weighted). Isolated nodes keep an all-zero row.
inline Tensor mean_aggregator_matrix(const BrainGraph& graph, bool weighted) {
  std::size_t n = graph.num_nodes();
  Tensor m(n, n);
  std::vector<double> total(n, 0.0);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    auto [i, j] = graph.edges[e];
    double w = weighted ? graph.edge_weights[e] : 1.0;
    m.at(i, j) += w;
    m.at(j, i) += w;
    total[i] += w;
    total[j] += w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (total[i] == 0.0) continue;
    double inv = 1.0 / total[i];
    for (std::size_t j = 0; j < n; ++j) m.at(i, j) *= inv;
  }
  return m;
}

// h'_i = ReLU(W_self h_i + W_neigh mean_{j in N(i)} h_j + bias).
inline Var sage_layer(Tape& tape, const BrainGraph& graph, Var h, Var w_self,
                      Var w_neigh, Var bias, bool weighted_mean = false) {
  if (tape.value(h).rows() != graph.num_nodes())
    throw DimensionError("sage_layer: feature rows " +
                         std::to_string(tape.value(h).rows()) +
                         " != node count " +
                         std::to_string(graph.num_nodes()));
  Var agg = tape.matmul(
      tape.constant(mean_aggregator_matrix(graph, weighted_mean)), h);
  Var pre = tape.add(
      tape.add(tape.matmul(h, w_self), tape.matmul(agg, w_neigh)), bias);
  return tape.relu(pre);
}

// Per-feature standardization over the nodes of one graph:
// h' = gamma * (h - alpha * mu) / sqrt(var + eps) + beta, with mu and var the
// within-graph column mean and (population) variance.
inline Var graph_norm(Tape& tape, Var h, Var gamma, Var beta, Var alpha,
                      double eps = 1e-5) {
  Var mu = tape.mean_rows(h);
  // Variance from the centered matrix: never negative, so the root is safe.
  Var centered = tape.add(h, tape.scalar_mul(mu, -1.0));
  Var var = tape.mean_rows(tape.mul(centered, centered));
  Var inv_sigma = tape.rsqrt(tape.add_scalar(var, eps));
  Var shifted = tape.add(h, tape.scalar_mul(tape.mul(mu, alpha), -1.0));
  return tape.add(tape.mul(tape.mul(shifted, inv_sigma), gamma), beta);
}

// Inverted dropout: zero entries with probability rate and scale survivors by
// 1/(1-rate) in train mode; identity in eval mode or at rate 0.
inline Var dropout_layer(Tape& tape, Var h, double rate, Mode mode,
                         RngStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout: rate must be in [0, 1), got " +
                      std::to_string(rate));
  if (mode == Mode::kEval || rate == 0.0) return h;
  const Tensor& hv = tape.value(h);
  Tensor mask(hv.rows(), hv.cols());
  double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t k = 0; k < mask.size(); ++k)
    mask[k] = rng.uniform() < rate ? 0.0 : keep_scale;
  return tape.mul(h, tape.constant(mask));
}

struct PoolResult {
  BrainGraph graph;  // induced subgraph, endpoints re-indexed
  Var h;             // gated features of the kept nodes
  std::vector<std::size_t> kept;  // original indices in score order
};

// Projection scoring s_i = (h_i . p) / ||p||, keep the ceil(rho*N) highest
// scores (ties to the smaller node index), gate kept features by
// sigmoid(s_i). The ranking itself is constant in the backward pass;
// gradients flow through the gate and the kept rows.
inline PoolResult topk_pool(Tape& tape, const BrainGraph& graph, Var h, Var p,
                            double rho) {
  if (!(rho > 0.0 && rho <= 1.0))
    throw ConfigError("topk_pool: ratio must be in (0, 1], got " +
                      std::to_string(rho));
  const Tensor& pv = tape.value(p);
  if (pv.cols() != 1)
    throw DimensionError("topk_pool: projection must be a column vector");
  if (pv.max_abs() == 0.0)
    throw PreconditionError("topk_pool: projection vector is all zeros");

  Var norm_sq = tape.sum(tape.mul(p, p));
  Var scores = tape.matmul(tape.matmul(h, p), tape.rsqrt(norm_sq));

  const Tensor& sv = tape.value(scores);
  std::size_t n = sv.rows();
  std::size_t k = static_cast<std::size_t>(
      std::ceil(rho * static_cast<double>(n)));
  k = std::min(std::max<std::size_t>(k, 1), n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sv[a] != sv[b]) return sv[a] > sv[b];
    return a < b;
  });
  std::vector<std::size_t> kept(order.begin(), order.begin() + k);

  Var h_kept = tape.gather_rows(h, kept);
  Var gate = tape.sigmoid(tape.gather_rows(scores, kept));  // k x 1
  // Broadcast the gate column across features via a ones row.
  std::size_t d = tape.value(h).cols();
  Var gate_full = tape.matmul(gate, tape.constant(Tensor::full(1, d, 1.0)));
  Var h_gated = tape.mul(h_kept, gate_full);

  std::vector<std::size_t> new_index(n, n);
  for (std::size_t i = 0; i < k; ++i) new_index[kept[i]] = i;
  PoolResult out;
  out.h = h_gated;
  out.kept = std::move(kept);
  out.graph.node_features = Tensor::zeros(k, graph.node_features.cols());
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < graph.node_features.cols(); ++j)
      out.graph.node_features.at(i, j) =
          graph.node_features.at(out.kept[i], j);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    auto [i, j] = graph.edges[e];
    if (new_index[i] == n || new_index[j] == n) continue;
    std::size_t a = new_index[i];
    std::size_t b = new_index[j];
    out.graph.edges.emplace_back(std::min(a, b), std::max(a, b));
    out.graph.edge_weights.push_back(graph.edge_weights[e]);
  }
  return out;
}

// Column-wise max over nodes, differentiable through the argmax entries: a
// 0/1 mask picks each column's largest row (ties to the smaller index), and
// mean_rows * N recovers the selected values.
inline Var max_readout(Tape& tape, Var h) {
  const Tensor& hv = tape.value(h);
  std::size_t n = hv.rows();
  std::size_t d = hv.cols();
  Tensor mask(n, d);
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (hv.at(i, j) > hv.at(best, j)) best = i;
    mask.at(best, j) = 1.0;
  }
  Var picked = tape.mean_rows(tape.mul(h, tape.constant(mask)));
  return tape.scalar_mul(picked, static_cast<double>(n));
}

// mean || max over nodes: [1 x 2d].
inline Var readout(Tape& tape, Var h) {
  return tape.concat_cols(tape.mean_rows(h), max_readout(tape, h));
}

// Full two-block pass; returns the [1 x 2(d1+d2)] visit embedding.
inline Var gcn_forward(Tape& tape, const BrainGraph& graph,
                       const BoundParams& params, const GcnConfig& cfg,
                       Mode mode, RngStream& dropout_rng) {
  cfg.validate();
  if (graph.node_features.cols() != cfg.d_in)
    throw DimensionError("gcn_forward: node feature dim " +
                         std::to_string(graph.node_features.cols()) +
                         " != configured d_in " + std::to_string(cfg.d_in));
  Var h = tape.constant(graph.node_features);
  const BrainGraph* g = &graph;
  BrainGraph pooled_graph;
  std::vector<Var> readouts;
  double rhos[2] = {cfg.rho1, cfg.rho2};
  for (int b = 1; b <= 2; ++b) {
    std::string prefix = "gcn.block" + std::to_string(b) + ".";
    h = sage_layer(tape, *g, h, params[prefix + "sage.w_self"],
                   params[prefix + "sage.w_neigh"], params[prefix + "sage.bias"],
                   cfg.weighted_mean);
    h = graph_norm(tape, h, params[prefix + "norm.gamma"],
                   params[prefix + "norm.beta"], params[prefix + "norm.alpha"]);
    h = dropout_layer(tape, h, cfg.dropout, mode, dropout_rng);
    PoolResult pool =
        topk_pool(tape, *g, h, params[prefix + "pool.p"], rhos[b - 1]);
    h = pool.h;
    pooled_graph = std::move(pool.graph);
    g = &pooled_graph;
    readouts.push_back(readout(tape, h));
  }
  return tape.concat_cols(readouts[0], readouts[1]);
}

// 3-class probabilities for the diagnosis pretraining task.
inline Var pretrain_probs(Tape& tape, Var embedding,
                          const BoundParams& params) {
  Var logits = tape.add(tape.matmul(embedding, params["pretrain_head.w"]),
                        params["pretrain_head.b"]);
  return tape.softmax_rows(logits);
}

}  // namespace hagnn
