#pragma once

// Named finite-difference suite covering every differentiable layer end to
// end: SAGE, GraphNorm, the topK gating path, the full GCN, all three RNN
// cells, both heads, the focal loss, and the whole model composed. Shared by
// the gradcheck subcommand and the acceptance runner.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "hagnn/csv.hpp"
#include "hagnn/gnn.hpp"
#include "hagnn/gradcheck.hpp"
#include "hagnn/loss.hpp"
#include "hagnn/params.hpp"
#include "hagnn/rng.hpp"
#include "hagnn/temporal.hpp"
#include "hagnn/train.hpp"

namespace hagnn {

struct GradSuiteCase {
  std::string name;
  GradCheckReport report;
};

struct GradSuiteResult {
  std::vector<GradSuiteCase> cases;
  bool pass = true;
  double worst = 0.0;
};

namespace detail {

inline BrainGraph suite_graph(RngStream& rng, std::size_t n, std::size_t d) {
  BrainGraph g;
  g.node_features = Tensor(n, d);
  for (std::size_t k = 0; k < g.node_features.size(); ++k)
    g.node_features[k] = rng.normal();
  for (std::size_t i = 0; i + 1 < n; ++i) g.edges.push_back({i, i + 1});
  for (std::size_t i = 0; i + 2 < n; i += 2) g.edges.push_back({i, i + 2});
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    g.edge_weights.push_back(rng.uniform(0.2, 1.0));
  return g;
}

inline std::vector<Tensor> store_values(const ParamStore& store) {
  std::vector<Tensor> values;
  values.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i)
    values.push_back(store.at(i).second);
  return values;
}

// Nudges every parameter off its init. Zero-initialized offsets (biases,
// norm shifts) sit exactly on tie surfaces of max readout and pooling, where
// one-sided derivatives differ and finite differences are meaningless; a
// generic nearby point avoids them without changing what is being checked.
inline void jitter_store(ParamStore& store, RngStream& rng,
                         double scale = 0.05) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor& t = store.tensor_at(i);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] += scale * rng.normal();
  }
}

}  // namespace detail

inline GradSuiteResult run_gradient_suite(std::uint64_t seed,
                                          std::ostream* log = nullptr) {
  GradSuiteResult result;
  auto add = [&](const std::string& name, const ScalarFn& f,
                 const std::vector<Tensor>& params, double h = 1e-5) {
    GradSuiteCase c;
    c.name = name;
    // The 1e-5 denominator floor passes coordinates whose gradient is below
    // the central-difference noise floor instead of judging pure roundoff.
    c.report = finite_diff_check(f, params, h, 1e-4, 1e-5);
    if (!c.report.pass) result.pass = false;
    if (c.report.max_rel_err > result.worst)
      result.worst = c.report.max_rel_err;
    if (log)
      *log << "  " << name << ": max_rel_err "
           << format_double(c.report.max_rel_err)
           << (c.report.pass ? "" : "  FAILED at " + c.report.worst) << '\n';
    result.cases.push_back(std::move(c));
  };

  {
    RngStream rng(derive_seed(seed, "gradsuite", 1));
    BrainGraph g = detail::suite_graph(rng, 8, 6);
    std::vector<Tensor> leaves;
    leaves.push_back(g.node_features);
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{6, 7},
                        {6, 7},
                        {1, 7}}) {
      Tensor t(r, c);
      for (std::size_t k = 0; k < t.size(); ++k) t[k] = rng.normal(0.0, 0.5);
      leaves.push_back(t);
    }
    add("sage_layer",
        [&](Tape& t, const std::vector<Var>& v) {
          Var out = sage_layer(t, g, v[0], v[1], v[2], v[3]);
          return t.sum(t.mul(out, out));
        },
        leaves);
    add("sage_layer_weighted",
        [&](Tape& t, const std::vector<Var>& v) {
          Var out = sage_layer(t, g, v[0], v[1], v[2], v[3], true);
          return t.sum(t.mul(out, out));
        },
        leaves);
  }

  {
    RngStream rng(derive_seed(seed, "gradsuite", 2));
    Tensor h(7, 5), gamma(1, 5), beta(1, 5), alpha(1, 5);
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = rng.normal();
    for (std::size_t k = 0; k < 5; ++k) {
      gamma[k] = rng.uniform(0.5, 1.5);
      beta[k] = rng.normal(0.0, 0.3);
      alpha[k] = rng.uniform(0.5, 1.5);
    }
    add("graph_norm",
        [&](Tape& t, const std::vector<Var>& v) {
          Var out = graph_norm(t, v[0], v[1], v[2], v[3]);
          return t.sum(t.mul(out, out));
        },
        {h, gamma, beta, alpha});
  }

  {
    RngStream rng(derive_seed(seed, "gradsuite", 3));
    BrainGraph g = detail::suite_graph(rng, 8, 6);
    Tensor h(8, 6), p(6, 1);
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = rng.normal();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = rng.normal();
    add("topk_gating",
        [&](Tape& t, const std::vector<Var>& v) {
          PoolResult pool = topk_pool(t, g, v[0], v[1], 0.5);
          Var r = readout(t, pool.h);
          return t.sum(t.mul(r, r));
        },
        {h, p});
  }

  {
    RngStream rng(derive_seed(seed, "gradsuite", 4));
    GcnConfig cfg;
    cfg.d_in = 6;
    cfg.d1 = 8;
    cfg.d2 = 4;
    cfg.dropout = 0.0;
    // Keep-all pooling so the check point sits inside one smooth piece;
    // the selection boundary itself is covered by the topk_gating case.
    cfg.rho1 = 1.0;
    cfg.rho2 = 1.0;
    ParamStore store;
    init_gcn_params(store, cfg, rng);
    detail::jitter_store(store, rng);
    BrainGraph g = detail::suite_graph(rng, 8, 6);
    add("gcn_forward",
        [&](Tape& t, const std::vector<Var>& v) {
          BoundParams params(t, store, v);
          RngStream dummy(0);
          Var emb = gcn_forward(t, g, params, cfg, Mode::kEval, dummy);
          return t.sum(t.mul(emb, emb));
        },
        detail::store_values(store));
  }

  for (RnnKind kind : {RnnKind::kVanilla, RnnKind::kGru, RnnKind::kLstm}) {
    RngStream rng(derive_seed(seed, "gradsuite",
                              5 + static_cast<std::uint64_t>(kind)));
    TemporalConfig cfg{kind, 5, 6};
    ParamStore store;
    init_temporal_params(store, cfg, rng);
    std::vector<Tensor> embeddings(4, Tensor(1, 4));
    for (Tensor& e : embeddings)
      for (std::size_t k = 0; k < e.size(); ++k) e[k] = rng.normal();
    std::vector<double> gaps = {6.0, 12.0, 9.0, 15.0};
    add(std::string("rnn_") + to_string(kind),
        [&](Tape& t, const std::vector<Var>& v) {
          BoundParams params(t, store, v);
          std::vector<Var> embs;
          for (const Tensor& e : embeddings) embs.push_back(t.constant(e));
          Var logit = encode_history_logit(t, cfg, embs, gaps, params);
          return t.mul(logit, logit);
        },
        detail::store_values(store));
  }

  {
    RngStream rng(derive_seed(seed, "gradsuite", 8));
    GcnConfig cfg;
    cfg.d_in = 4;
    cfg.d1 = 3;
    cfg.d2 = 2;
    ParamStore store;
    init_pretrain_head(store, cfg, rng);
    Tensor emb(1, cfg.embedding_dim());
    for (std::size_t k = 0; k < emb.size(); ++k) emb[k] = rng.normal();
    add("pretrain_head",
        [&](Tape& t, const std::vector<Var>& v) {
          BoundParams params(t, store, v);
          return cross_entropy_row(t, pretrain_probs(t, t.constant(emb),
                                                     params), 2);
        },
        detail::store_values(store));
  }

  for (double gamma : {0.0, 3.0}) {
    RngStream rng(derive_seed(seed, "gradsuite",
                              9 + static_cast<std::uint64_t>(gamma)));
    FocalLossConfig focal;
    focal.gamma = gamma;
    std::vector<Tensor> logits = {Tensor::scalar(rng.normal()),
                                  Tensor::scalar(rng.normal()),
                                  Tensor::scalar(rng.normal())};
    std::vector<int> targets = {1, 0, 1};
    char name[32];
    std::snprintf(name, sizeof(name), "focal_loss_gamma%.0f", gamma);
    add(name,
        [&](Tape& t, const std::vector<Var>& v) {
          std::vector<Var> probs;
          for (Var l : v) probs.push_back(t.sigmoid(l));
          return focal_loss_batch(t, probs, targets, focal);
        },
        logits);
  }

  {
    RngStream rng(derive_seed(seed, "gradsuite", 20));
    TrainConfig cfg;
    cfg.gcn.d_in = 5;
    cfg.gcn.d1 = 4;
    cfg.gcn.d2 = 3;
    cfg.gcn.dropout = 0.0;
    cfg.gcn.rho1 = 1.0;
    cfg.gcn.rho2 = 1.0;
    cfg.hidden_dim = 5;
    SequenceSample sample;
    sample.id = "gradsuite";
    sample.graphs.push_back(detail::suite_graph(rng, 6, 5));
    sample.graphs.push_back(detail::suite_graph(rng, 6, 5));
    sample.gaps = {6.0, 9.0};
    sample.label = 1;
    RngStream init_rng(derive_seed(seed, "gradsuite", 21));
    ParamStore store = init_model_params(cfg, init_rng);
    detail::jitter_store(store, init_rng);
    add("full_model",
        [&](Tape& t, const std::vector<Var>& v) {
          BoundParams params(t, store, v);
          RngStream dummy(0);
          Var logit =
              sequence_logit(t, sample, params, cfg, Mode::kEval, dummy);
          return focal_loss_term(t, t.sigmoid(logit), true, cfg.focal);
        },
        detail::store_values(store));
  }

  return result;
}

}  // namespace hagnn
