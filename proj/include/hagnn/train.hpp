#pragma once

// Two-stage protocol: 3-class GCN pretraining on single visits, then
// end-to-end training of GCN + RNN with focal loss under stratified k-fold
// cross-validation. Folds are independent; each derives its own RNG streams
// from (seed, fold index), so serial and parallel execution agree exactly.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hagnn/cohort.hpp"
#include "hagnn/connectome.hpp"
#include "hagnn/errors.hpp"
#include "hagnn/gnn.hpp"
#include "hagnn/loss.hpp"
#include "hagnn/metrics.hpp"
#include "hagnn/params.hpp"
#include "hagnn/rng.hpp"
#include "hagnn/tape.hpp"
#include "hagnn/temporal.hpp"

namespace hagnn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t t = 0;

  static AdamState like(const ParamStore& store) {
    AdamState s;
    s.m.reserve(store.size());
    s.v.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      const Tensor& p = store.at(i).second;
      s.m.push_back(Tensor::zeros(p.rows(), p.cols()));
      s.v.push_back(Tensor::zeros(p.rows(), p.cols()));
    }
    return s;
  }
};

// Bias-corrected Adam update, in place.
inline void adam_step(ParamStore& params, const std::vector<Tensor>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw DimensionError("adam_step: " + std::to_string(grads.size()) +
                         " gradients for " + std::to_string(params.size()) +
                         " parameters");
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.tensor_at(i);
    const Tensor& g = grads[i];
    if (!p.same_shape(g))
      throw DimensionError("adam_step: gradient shape mismatch for '" +
                           params.at(i).first + "'");
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      p[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  RnnKind rnn = RnnKind::kLstm;
  GcnConfig gcn;  // d_in must be set to the ROI count before use
  std::size_t hidden_dim = 64;
  std::uint64_t seed = 7;
  std::size_t patience = 10;
  FocalLossConfig focal;
  double val_frac = 0.15;
  std::size_t pretrain_epochs = 30;
  double pretrain_lr = 1e-3;
  bool prefix_augmentation = false;

  void validate() const {
    gcn.validate();
    focal.validate();
    if (!(lr > 0.0) || !(pretrain_lr > 0.0))
      throw ConfigError("train: learning rates must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (hidden_dim < 1) throw ConfigError("train: hidden_dim must be >= 1");
    if (!(val_frac >= 0.0 && val_frac < 0.5))
      throw ConfigError("train: val_frac must be in [0, 0.5), got " +
                        std::to_string(val_frac));
  }
};

inline TemporalConfig temporal_config(const TrainConfig& cfg) {
  return TemporalConfig{cfg.rnn, cfg.gcn.embedding_dim() + 1, cfg.hidden_dim};
}

// One single-visit pretraining sample: the visit's graph and its diagnosis.
struct VisitSample {
  BrainGraph graph;
  Diagnosis dx = Diagnosis::kCN;
};

// One subject's prediction sample: graphs of the fed visits, the gap after
// each fed visit (the last one is the forecast horizon), and the target.
struct SequenceSample {
  std::string id;
  std::vector<BrainGraph> graphs;
  std::vector<double> gaps;
  int label = 0;  // 1 when the target visit's diagnosis worsens
  std::pair<Diagnosis, Diagnosis> last_two{Diagnosis::kCN, Diagnosis::kCN};
};

namespace detail {

inline const FCMatrix& visit_fc(const Subject& s, std::size_t v) {
  if (!s.visits[v].fc.has_value())
    throw PreconditionError("subject '" + s.id + "' visit " +
                            std::to_string(v) + " has no connectivity matrix");
  return *s.visits[v].fc;
}

}  // namespace detail

inline std::vector<VisitSample> build_visit_samples(
    const std::vector<Subject>& subjects,
    const std::vector<std::size_t>& subject_idx, const EdgeRule& rule) {
  std::vector<VisitSample> out;
  for (std::size_t idx : subject_idx) {
    if (idx >= subjects.size())
      throw PreconditionError("build_visit_samples: subject index " +
                              std::to_string(idx) + " out of range");
    const Subject& s = subjects[idx];
    for (std::size_t v = 0; v < s.visits.size(); ++v)
      out.push_back({build_graph(detail::visit_fc(s, v), rule),
                     s.visits[v].diagnosis});
  }
  return out;
}

// Feeds visits [0, target) and predicts whether the diagnosis worsens at the
// target visit; the gap after each fed visit is part of the input.
inline SequenceSample build_sequence_sample(const Subject& s,
                                            const EdgeRule& rule,
                                            std::size_t target) {
  if (target < 1 || target >= s.visits.size())
    throw PreconditionError("build_sequence_sample: target visit " +
                            std::to_string(target) + " invalid for subject '" +
                            s.id + "'");
  SequenceSample sample;
  sample.id = s.id;
  for (std::size_t v = 0; v < target; ++v) {
    sample.graphs.push_back(build_graph(detail::visit_fc(s, v), rule));
    sample.gaps.push_back(s.visits[v + 1].month_offset -
                          s.visits[v].month_offset);
  }
  Diagnosis prev = s.visits[target - 1].diagnosis;
  Diagnosis cur = s.visits[target].diagnosis;
  sample.label = static_cast<int>(cur) > static_cast<int>(prev) ? 1 : 0;
  sample.last_two = {prev, cur};
  return sample;
}

// One sample per subject (its full history), or every prefix when augmenting.
inline std::vector<SequenceSample> build_sequence_samples(
    const std::vector<Subject>& subjects, const EdgeRule& rule,
    bool prefixes = false) {
  std::vector<SequenceSample> out;
  out.reserve(subjects.size());
  for (const Subject& s : subjects) {
    if (s.visits.size() < 2)
      throw PreconditionError("build_sequence_samples: subject '" + s.id +
                              "' has fewer than two visits");
    if (prefixes) {
      for (std::size_t t = 1; t < s.visits.size(); ++t)
        out.push_back(build_sequence_sample(s, rule, t));
    } else {
      out.push_back(build_sequence_sample(s, rule, s.visits.size() - 1));
    }
  }
  return out;
}

// Proper-prefix samples (every target before the last visit), used as extra
// training material when prefix augmentation is enabled. Two-visit subjects
// contribute nothing; test and validation sets never use these.
inline std::vector<SequenceSample> build_prefix_samples(
    const std::vector<Subject>& subjects, const EdgeRule& rule) {
  std::vector<SequenceSample> out;
  for (const Subject& s : subjects) {
    if (s.visits.size() < 2)
      throw PreconditionError("build_prefix_samples: subject '" + s.id +
                              "' has fewer than two visits");
    for (std::size_t t = 1; t + 1 < s.visits.size(); ++t)
      out.push_back(build_sequence_sample(s, rule, t));
  }
  return out;
}

inline double sigmoid_value(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// Full-model forward for one subject sample; returns the conversion logit.
inline Var sequence_logit(Tape& tape, const SequenceSample& sample,
                          const BoundParams& params, const TrainConfig& cfg,
                          Mode mode, RngStream& dropout_rng) {
  std::vector<Var> embeddings;
  embeddings.reserve(sample.graphs.size());
  for (const BrainGraph& g : sample.graphs)
    embeddings.push_back(
        gcn_forward(tape, g, params, cfg.gcn, mode, dropout_rng));
  return encode_history_logit(tape, temporal_config(cfg), embeddings,
                              sample.gaps, params);
}

// Eval-mode converter probability under fixed parameters.
inline double score_sample(const ParamStore& store,
                           const SequenceSample& sample,
                           const TrainConfig& cfg) {
  Tape tape;
  BoundParams params(tape, store);
  RngStream unused(0);
  Var logit =
      sequence_logit(tape, sample, params, cfg, Mode::kEval, unused);
  return sigmoid_value(tape.value(logit).item());
}

inline ParamStore init_model_params(const TrainConfig& cfg, RngStream& rng) {
  ParamStore store;
  init_gcn_params(store, cfg.gcn, rng);
  init_temporal_params(store, temporal_config(cfg), rng);
  return store;
}

// Stage 1: train GCN + 3-class head on individual visits with cross-entropy.
// Returns the trained store (gcn.* plus pretrain_head.*); the caller keeps
// only the gcn.* entries for the main task.
inline ParamStore pretrain_gcn(const std::vector<VisitSample>& samples,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty())
    throw PreconditionError("pretrain_gcn: no pretraining visits");
  RngStream rng(derive_seed(cfg.seed, "pretrain", 0));
  ParamStore store;
  init_gcn_params(store, cfg.gcn, rng);
  init_pretrain_head(store, cfg.gcn, rng);
  if (cfg.pretrain_epochs == 0) return store;

  AdamState opt = AdamState::like(store);
  AdamConfig opt_cfg;
  opt_cfg.lr = cfg.pretrain_lr;
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      BoundParams params(tape, store);
      Var total{};
      for (std::size_t i = start; i < stop; ++i) {
        const VisitSample& s = samples[order[i]];
        Var emb = gcn_forward(tape, s.graph, params, cfg.gcn, Mode::kTrain,
                              rng);
        Var loss = cross_entropy_row(tape, pretrain_probs(tape, emb, params),
                                     static_cast<std::size_t>(s.dx));
        total = (i == start) ? loss : tape.add(total, loss);
      }
      Var mean =
          tape.scalar_mul(total, 1.0 / static_cast<double>(stop - start));
      tape.backward(mean);
      std::vector<Tensor> grads;
      grads.reserve(store.size());
      for (std::size_t i = 0; i < store.size(); ++i)
        grads.push_back(tape.grad(params.var_at(i)));
      adam_step(store, grads, opt, opt_cfg);
    }
  }
  return store;
}

// Fraction of visits whose predicted class matches the diagnosis.
inline double pretrain_accuracy(const ParamStore& store,
                                const std::vector<VisitSample>& samples,
                                const GcnConfig& gcn) {
  if (samples.empty())
    throw PreconditionError("pretrain_accuracy: no samples");
  std::size_t hits = 0;
  for (const VisitSample& s : samples) {
    Tape tape;
    BoundParams params(tape, store);
    RngStream unused(0);
    Var probs = pretrain_probs(
        tape, gcn_forward(tape, s.graph, params, gcn, Mode::kEval, unused),
        params);
    const Tensor& pv = tape.value(probs);
    std::size_t best = 0;
    for (std::size_t j = 1; j < pv.cols(); ++j)
      if (pv[j] > pv[best]) best = j;
    if (best == static_cast<std::size_t>(s.dx)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

struct FoldOutcome {
  std::size_t fold = 0;
  ParamStore params;
  FoldMetrics metrics;
  std::vector<RocPoint> roc;
  std::vector<std::string> test_ids;
  std::vector<std::string> trained_ids;  // training plus validation subjects
  std::vector<double> test_scores;
  std::vector<int> test_labels;
  std::vector<int> test_preds;
  std::vector<std::pair<Diagnosis, Diagnosis>> test_transitions;
  std::size_t epochs_run = 0;
};

struct TrainOutcome {
  std::vector<FoldOutcome> folds;
  MetricsReport report;
};

namespace detail {

inline std::optional<double> transition_acc_or_none(
    const std::vector<int>& preds,
    const std::vector<std::pair<Diagnosis, Diagnosis>>& last_two,
    Diagnosis from, Diagnosis to) {
  for (const auto& t : last_two)
    if (t.first == from && t.second == to)
      return conversion_accuracy(preds, last_two, from, to);
  return std::nullopt;
}

// Deterministic stratified carve-out of roughly val_frac of the pool.
inline void carve_validation(const std::vector<SequenceSample>& samples,
                             const std::vector<std::size_t>& pool,
                             double val_frac, RngStream& rng,
                             std::vector<std::size_t>& fit,
                             std::vector<std::size_t>& val) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t idx : pool) by_class[samples[idx].label != 0].push_back(idx);
  for (auto& cls : by_class) {
    rng.shuffle(cls);
    std::size_t n_val =
        cls.size() >= 2
            ? std::max<std::size_t>(
                  1, static_cast<std::size_t>(
                         val_frac * static_cast<double>(cls.size())))
            : 0;
    for (std::size_t i = 0; i < cls.size(); ++i)
      (i < n_val ? val : fit).push_back(cls[i]);
  }
  std::sort(fit.begin(), fit.end());
  std::sort(val.begin(), val.end());
}

}  // namespace detail

// Train and evaluate one fold. Only non-test subjects are touched during
// training; 15% of them (stratified) serve as the early-stopping validation
// set, scored with the same focal loss. When prefix augmentation is on, aux
// samples whose subject is in the training split join the gradient batches.
inline FoldOutcome train_fold(const std::vector<SequenceSample>& samples,
                              const std::vector<std::size_t>& test_idx,
                              std::size_t fold_index,
                              const ParamStore* pretrained,
                              const TrainConfig& cfg,
                              const std::vector<SequenceSample>* aux = nullptr) {
  cfg.validate();
  if (test_idx.empty())
    throw SplitError("train_fold: fold " + std::to_string(fold_index) +
                     " has no test subjects");
  std::vector<char> in_test(samples.size(), 0);
  for (std::size_t idx : test_idx) {
    if (idx >= samples.size())
      throw SplitError("train_fold: test index " + std::to_string(idx) +
                       " out of range");
    in_test[idx] = 1;
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!in_test[i]) pool.push_back(i);
  if (pool.empty())
    throw SplitError("train_fold: no training subjects left for fold " +
                     std::to_string(fold_index));

  RngStream init_rng(derive_seed(cfg.seed, "fold_init", fold_index));
  ParamStore store = init_model_params(cfg, init_rng);
  if (pretrained != nullptr) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const std::string& name = store.at(i).first;
      if (name.rfind("gcn.", 0) != 0) continue;
      const Tensor& src = pretrained->get(name);
      if (!src.same_shape(store.at(i).second))
        throw DimensionError("train_fold: pretrained '" + name +
                             "' has a different shape");
      store.tensor_at(i) = src;
    }
  }

  RngStream val_rng(derive_seed(cfg.seed, "fold_val", fold_index));
  std::vector<std::size_t> fit, val;
  detail::carve_validation(samples, pool, cfg.val_frac, val_rng, fit, val);
  if (fit.empty()) {
    fit = pool;
    val.clear();
  }

  RngStream shuffle_rng(derive_seed(cfg.seed, "fold_shuffle", fold_index));
  RngStream dropout_rng(derive_seed(cfg.seed, "fold_dropout", fold_index));
  AdamState opt = AdamState::like(store);
  AdamConfig opt_cfg;
  opt_cfg.lr = cfg.lr;

  auto val_loss = [&]() {
    double total = 0.0;
    for (std::size_t idx : val)
      total += focal_loss(score_sample(store, samples[idx], cfg),
                          samples[idx].label != 0, cfg.focal);
    return total / static_cast<double>(val.size());
  };

  std::vector<const SequenceSample*> fit_samples;
  for (std::size_t idx : fit) fit_samples.push_back(&samples[idx]);
  if (cfg.prefix_augmentation && aux != nullptr) {
    std::unordered_set<std::string> fit_ids;
    for (std::size_t idx : fit) fit_ids.insert(samples[idx].id);
    for (const SequenceSample& s : *aux)
      if (fit_ids.count(s.id) != 0) fit_samples.push_back(&s);
  }

  FoldOutcome out;
  out.fold = fold_index;
  double best_loss = std::numeric_limits<double>::infinity();
  ParamStore best_store = store;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(fit_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ++out.epochs_run;
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      BoundParams params(tape, store);
      std::vector<Var> probs;
      std::vector<int> targets;
      for (std::size_t i = start; i < stop; ++i) {
        const SequenceSample& s = *fit_samples[order[i]];
        probs.push_back(tape.sigmoid(sequence_logit(
            tape, s, params, cfg, Mode::kTrain, dropout_rng)));
        targets.push_back(s.label);
      }
      Var loss = focal_loss_batch(tape, probs, targets, cfg.focal);
      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(store.size());
      for (std::size_t i = 0; i < store.size(); ++i)
        grads.push_back(tape.grad(params.var_at(i)));
      adam_step(store, grads, opt, opt_cfg);
    }
    if (!val.empty()) {
      double loss = val_loss();
      if (loss < best_loss) {
        best_loss = loss;
        best_store = store;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  out.params = val.empty() ? store : best_store;

  for (std::size_t idx : fit) out.trained_ids.push_back(samples[idx].id);
  for (std::size_t idx : val) out.trained_ids.push_back(samples[idx].id);
  std::sort(out.trained_ids.begin(), out.trained_ids.end());

  for (std::size_t idx : test_idx) {
    const SequenceSample& s = samples[idx];
    double p = score_sample(out.params, s, cfg);
    out.test_ids.push_back(s.id);
    out.test_scores.push_back(p);
    out.test_labels.push_back(s.label);
    out.test_preds.push_back(p >= 0.5 ? 1 : 0);
    out.test_transitions.push_back(s.last_two);
  }
  out.metrics.acc = accuracy(out.test_preds, out.test_labels);
  out.metrics.ba = balanced_accuracy(out.test_preds, out.test_labels);
  out.metrics.auc_roc = auc_roc(out.test_scores, out.test_labels);
  out.metrics.cn_to_mci = detail::transition_acc_or_none(
      out.test_preds, out.test_transitions, Diagnosis::kCN, Diagnosis::kMCI);
  out.metrics.mci_to_ad = detail::transition_acc_or_none(
      out.test_preds, out.test_transitions, Diagnosis::kMCI, Diagnosis::kAD);
  out.roc = roc_points(out.test_scores, out.test_labels);
  return out;
}

// Cross-validated training. Conversion accuracies are pooled over all folds'
// test predictions; acc/auc/ba are averaged across folds.
inline TrainOutcome train_ha_gnn(const std::vector<SequenceSample>& samples,
                                 const KFoldSplit& split,
                                 const ParamStore* pretrained,
                                 const TrainConfig& cfg,
                                 std::size_t parallel_folds = 1,
                                 const std::vector<SequenceSample>* aux = nullptr) {
  cfg.validate();
  if (split.folds.empty()) throw SplitError("train_ha_gnn: no folds");
  for (const auto& fold : split.folds)
    if (fold.empty())
      throw SplitError("train_ha_gnn: a fold has no test subjects");

  std::size_t k = split.folds.size();
  TrainOutcome out;
  out.folds.resize(k);

  if (parallel_folds <= 1 || k == 1) {
    for (std::size_t f = 0; f < k; ++f)
      out.folds[f] =
          train_fold(samples, split.folds[f], f, pretrained, cfg, aux);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(k);
    auto worker = [&]() {
      for (;;) {
        std::size_t f = next.fetch_add(1);
        if (f >= k) return;
        try {
          out.folds[f] =
              train_fold(samples, split.folds[f], f, pretrained, cfg, aux);
        } catch (...) {
          errors[f] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(parallel_folds, k); ++t)
      threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<double> accs, aucs, bas;
  std::vector<int> pooled_preds;
  std::vector<std::pair<Diagnosis, Diagnosis>> pooled_transitions;
  for (const FoldOutcome& f : out.folds) {
    out.report.per_fold.push_back(f.metrics);
    accs.push_back(f.metrics.acc);
    aucs.push_back(f.metrics.auc_roc);
    bas.push_back(f.metrics.ba);
    pooled_preds.insert(pooled_preds.end(), f.test_preds.begin(),
                        f.test_preds.end());
    pooled_transitions.insert(pooled_transitions.end(),
                              f.test_transitions.begin(),
                              f.test_transitions.end());
  }
  std::tie(out.report.mean_acc, out.report.std_acc) = mean_std(accs);
  std::tie(out.report.mean_auc, out.report.std_auc) = mean_std(aucs);
  std::tie(out.report.mean_ba, out.report.std_ba) = mean_std(bas);
  out.report.cn_to_mci = detail::transition_acc_or_none(
      pooled_preds, pooled_transitions, Diagnosis::kCN, Diagnosis::kMCI);
  out.report.mci_to_ad = detail::transition_acc_or_none(
      pooled_preds, pooled_transitions, Diagnosis::kMCI, Diagnosis::kAD);
  out.report.validate();
  return out;
}

}  // namespace hagnn
