// Command-line pipeline: generate or ingest a cohort, compute connectivity,
// build graphs, pretrain, train with stratified k-fold CV, evaluate, and
// render reports. Every stage is file-based and reproducible from its
// manifest; all diagnostics go to stderr, machine output to files.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hagnn/bayesopt.hpp"
#include "hagnn/cohort.hpp"
#include "hagnn/connectome.hpp"
#include "hagnn/gradsuite.hpp"
#include "hagnn/io.hpp"
#include "hagnn/report.hpp"
#include "hagnn/synth.hpp"
#include "hagnn/train.hpp"
#include "hagnn/version.hpp"

namespace {

using hagnn::EdgeRule;
using hagnn::Subject;
using ordered_json = nlohmann::ordered_json;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

// Maps library failures onto the documented exit codes: 1 for anything the
// user can fix (flags, paths, malformed or degenerate data), 2 for defects.
int run_guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const hagnn::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const hagnn::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const hagnn::PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const hagnn::LabelError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const hagnn::SplitError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const hagnn::MetricError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const hagnn::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const hagnn::Error& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

EdgeRule parse_edge_rule(const std::string& s) {
  std::size_t colon = s.find(':');
  if (colon != std::string::npos) {
    std::string kind = s.substr(0, colon);
    std::string value = s.substr(colon + 1);
    try {
      if (kind == "topk") return EdgeRule::topk(std::stoul(value));
      if (kind == "threshold") return EdgeRule::threshold(std::stod(value));
    } catch (const std::exception&) {
      throw hagnn::ConfigError("--edge-rule: bad value '" + value + "' in '" +
                               s + "'");
    }
  }
  throw hagnn::ConfigError(
      "--edge-rule must be topk:<k> or threshold:<tau>, got '" + s + "'");
}

void require_fc(const std::vector<Subject>& subjects) {
  for (const Subject& s : subjects)
    for (const hagnn::Visit& v : s.visits)
      if (!v.fc.has_value())
        throw hagnn::PreconditionError(
            "subject '" + s.id +
            "' has a visit without a connectivity matrix; run `hagnn fc "
            "compute` first");
}

std::vector<Subject> subset(const std::vector<Subject>& all,
                            const std::vector<std::size_t>& idx) {
  std::vector<Subject> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

std::string model_name(hagnn::RnnKind kind) {
  switch (kind) {
    case hagnn::RnnKind::kVanilla: return "HA-GNN (RNN)";
    case hagnn::RnnKind::kGru: return "HA-GNN (GRU)";
    default: return "HA-GNN (LSTM)";
  }
}

// Options shared by the model-bearing commands (pretrain/train/eval).
struct ModelOpts {
  std::string rnn = "lstm";
  std::size_t hidden = 64;
  std::size_t gcn_d1 = 64;
  std::size_t gcn_d2 = 32;
  double dropout = 0.3;
  double pool_ratio = 0.5;
  std::string edge_rule = "topk:8";
};

struct TrainOpts {
  std::uint64_t seed = 7;
  std::size_t folds = 5;
  double pretrain_frac = 0.2;
  double alpha = 0.9;
  double gamma = 3.0;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::size_t patience = 10;
  double val_frac = 0.15;
  std::size_t pretrain_epochs = 30;
  double pretrain_lr = 1e-3;
  bool no_pretrain = false;
  bool prefix_aug = false;
  std::size_t parallel_folds = 1;
  std::size_t hyperopt = 0;
};

void add_model_flags(CLI::App* cmd, ModelOpts& m) {
  cmd->add_option("--rnn", m.rnn, "recurrent cell: vanilla|gru|lstm")
      ->check(CLI::IsMember({"vanilla", "gru", "lstm"}))
      ->capture_default_str();
  cmd->add_option("--hidden", m.hidden, "RNN hidden width")
      ->capture_default_str();
  cmd->add_option("--gcn-d1", m.gcn_d1, "first GCN block width")
      ->capture_default_str();
  cmd->add_option("--gcn-d2", m.gcn_d2, "second GCN block width")
      ->capture_default_str();
  cmd->add_option("--dropout", m.dropout, "GCN dropout rate")
      ->capture_default_str();
  cmd->add_option("--pool-ratio", m.pool_ratio,
                  "topK keep ratio for both blocks")
      ->capture_default_str();
  cmd->add_option("--edge-rule", m.edge_rule,
                  "graph sparsifier: topk:<k> or threshold:<tau>")
      ->capture_default_str();
}

hagnn::TrainConfig make_train_config(const ModelOpts& m, const TrainOpts& t,
                                     std::size_t roi_count) {
  hagnn::TrainConfig cfg;
  cfg.gcn.d_in = roi_count;
  cfg.gcn.d1 = m.gcn_d1;
  cfg.gcn.d2 = m.gcn_d2;
  cfg.gcn.dropout = m.dropout;
  cfg.gcn.rho1 = m.pool_ratio;
  cfg.gcn.rho2 = m.pool_ratio;
  cfg.hidden_dim = m.hidden;
  cfg.rnn = hagnn::rnn_kind_from_string(m.rnn);
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch;
  cfg.lr = t.lr;
  cfg.seed = t.seed;
  cfg.patience = t.patience;
  cfg.focal.alpha = t.alpha;
  cfg.focal.gamma = t.gamma;
  cfg.val_frac = t.val_frac;
  cfg.pretrain_epochs = t.pretrain_epochs;
  cfg.pretrain_lr = t.pretrain_lr;
  cfg.prefix_augmentation = t.prefix_aug;
  cfg.validate();
  return cfg;
}

ordered_json model_options_json(const ModelOpts& m) {
  ordered_json j;
  j["rnn"] = m.rnn;
  j["hidden"] = m.hidden;
  j["gcn_d1"] = m.gcn_d1;
  j["gcn_d2"] = m.gcn_d2;
  j["dropout"] = m.dropout;
  j["pool_ratio"] = m.pool_ratio;
  j["edge_rule"] = m.edge_rule;
  return j;
}

ordered_json train_options_json(const ModelOpts& m, const TrainOpts& t) {
  ordered_json j = model_options_json(m);
  j["folds"] = t.folds;
  j["pretrain_frac"] = t.pretrain_frac;
  j["alpha"] = t.alpha;
  j["gamma"] = t.gamma;
  j["epochs"] = t.epochs;
  j["batch"] = t.batch;
  j["lr"] = t.lr;
  j["patience"] = t.patience;
  j["val_frac"] = t.val_frac;
  j["pretrain_epochs"] = t.pretrain_epochs;
  j["pretrain_lr"] = t.pretrain_lr;
  j["no_pretrain"] = t.no_pretrain;
  j["prefix_aug"] = t.prefix_aug;
  j["parallel_folds"] = t.parallel_folds;
  j["hyperopt"] = t.hyperopt;
  return j;
}

void write_predictions_csv(const std::string& path,
                           const hagnn::FoldOutcome& fold) {
  std::ofstream out(path);
  if (!out) throw hagnn::IoError("cannot write " + path);
  out << "id,score,pred,label\n";
  for (std::size_t i = 0; i < fold.test_ids.size(); ++i)
    out << fold.test_ids[i] << ',' << hagnn::format_double(fold.test_scores[i])
        << ',' << fold.test_preds[i] << ',' << fold.test_labels[i] << '\n';
}

// Writes the ROC plot unless the curve is degenerate, which is a warning,
// not an error.
void maybe_write_svg(const std::string& path,
                     const std::vector<hagnn::RocPoint>& points) {
  if (points.size() < 2) {
    std::cerr << "warning: ROC curve has fewer than two points; skipping "
              << path << '\n';
    return;
  }
  hagnn::write_roc_svg(path, points);
}

// ---------------------------------------------------------------------------
// cohort gen

struct CohortGenOpts {
  std::uint64_t seed = 7;
  std::string out;
  std::size_t subjects = 303;
  double converter_frac = 53.0 / 303.0;
  std::size_t rois = 100;
  std::size_t timepoints = 120;
  double effect_size = 1.0;
  double mean_gap = 14.78;
  double gap_cv = 0.7071067811865476;
};

void cmd_cohort_gen(const CohortGenOpts& o) {
  auto start = std::chrono::steady_clock::now();
  hagnn::CohortConfig cfg;
  cfg.n_subjects = o.subjects;
  cfg.converter_fraction = o.converter_frac;
  cfg.roi_count = o.rois;
  cfg.timepoints = o.timepoints;
  cfg.effect_size = o.effect_size;
  cfg.mean_gap_months = o.mean_gap;
  cfg.gap_jitter = o.gap_cv;
  cfg.seed = o.seed;

  hagnn::CohortDir cohort;
  cohort.subjects = hagnn::generate_synthetic_cohort(cfg);
  cohort.roi_count = o.rois;
  for (std::size_t r = 0; r < o.rois; ++r) cohort.channel_rois.push_back(r);
  hagnn::save_cohort(o.out, cohort);

  hagnn::RunManifest manifest;
  manifest.command = "cohort gen";
  manifest.seed = o.seed;
  manifest.options["subjects"] = o.subjects;
  manifest.options["converter_frac"] = o.converter_frac;
  manifest.options["rois"] = o.rois;
  manifest.options["timepoints"] = o.timepoints;
  manifest.options["effect_size"] = o.effect_size;
  manifest.options["mean_gap"] = o.mean_gap;
  manifest.options["gap_cv"] = o.gap_cv;
  hagnn::write_manifest(o.out, manifest);
  hagnn::write_timings(o.out, {{"generate", seconds_since(start)}});

  std::size_t converters = 0, visits = 0;
  for (const Subject& s : cohort.subjects) {
    visits += s.visits.size();
    if (s.label() == hagnn::SubjectLabel::kConverter) ++converters;
  }
  std::cerr << "wrote " << cohort.subjects.size() << " subjects ("
            << converters << " converters, " << visits << " visits) to "
            << o.out << '\n';
}

// ---------------------------------------------------------------------------
// fc compute

struct FcComputeOpts {
  std::string in, out;
};

void cmd_fc_compute(const FcComputeOpts& o) {
  auto start = std::chrono::steady_clock::now();
  hagnn::CohortDir cohort = hagnn::load_cohort(o.in);

  bool identity = cohort.channel_rois.size() == cohort.roi_count;
  if (identity)
    for (std::size_t r = 0; r < cohort.channel_rois.size(); ++r)
      if (cohort.channel_rois[r] != r) identity = false;

  std::size_t computed = 0;
  for (Subject& s : cohort.subjects) {
    for (hagnn::Visit& v : s.visits) {
      if (v.fc.has_value() || !v.bold.has_value()) continue;
      hagnn::BoldMatrix bold(*v.bold, identity ? hagnn::ChannelKind::kRoi
                                               : hagnn::ChannelKind::kVoxel);
      if (!identity) {
        hagnn::ParcelLabels parcels(cohort.channel_rois, cohort.roi_count);
        bold = hagnn::extract_roi_timeseries(bold, parcels);
      }
      v.fc = hagnn::pearson_fc(bold);
      v.bold.reset();
      ++computed;
    }
  }
  hagnn::save_cohort(o.out, cohort);

  hagnn::RunManifest manifest;
  manifest.command = "fc compute";
  manifest.inputs["cohort"] = o.in;
  hagnn::write_manifest(o.out, manifest);
  hagnn::write_timings(o.out, {{"fc", seconds_since(start)}});
  std::cerr << "computed " << computed << " connectivity matrices into "
            << o.out << '\n';
}

// ---------------------------------------------------------------------------
// graph build

struct GraphBuildOpts {
  std::string in, out;
  std::string edge_rule = "topk:8";
};

void cmd_graph_build(const GraphBuildOpts& o) {
  auto start = std::chrono::steady_clock::now();
  EdgeRule rule = parse_edge_rule(o.edge_rule);
  hagnn::CohortDir cohort = hagnn::load_cohort(o.in);
  require_fc(cohort.subjects);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(o.out + "/graphs", ec);
  if (ec)
    throw hagnn::IoError("cannot create " + o.out + "/graphs: " +
                         ec.message());

  std::size_t graphs = 0, edges = 0;
  for (const Subject& s : cohort.subjects) {
    for (std::size_t v = 0; v < s.visits.size(); ++v) {
      hagnn::BrainGraph g = hagnn::build_graph(*s.visits[v].fc, rule);
      std::string path = o.out + "/graphs/" +
                         hagnn::visit_file_stem(s.id, v) + ".csv";
      std::ofstream out_file(path);
      if (!out_file) throw hagnn::IoError("cannot write " + path);
      out_file << "i,j,weight\n";
      for (std::size_t e = 0; e < g.edges.size(); ++e)
        out_file << g.edges[e].first << ',' << g.edges[e].second << ','
                 << hagnn::format_double(g.edge_weights[e]) << '\n';
      ++graphs;
      edges += g.edges.size();
    }
  }

  hagnn::RunManifest manifest;
  manifest.command = "graph build";
  manifest.options["edge_rule"] = o.edge_rule;
  manifest.inputs["cohort"] = o.in;
  hagnn::write_manifest(o.out, manifest);
  hagnn::write_timings(o.out, {{"graphs", seconds_since(start)}});
  std::cerr << "wrote " << graphs << " graphs (mean "
            << (graphs ? static_cast<double>(edges) /
                             static_cast<double>(graphs)
                       : 0.0)
            << " edges) to " << o.out << "/graphs\n";
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainOpts {
  std::string cohort, out;
  ModelOpts model;
  TrainOpts train;
};

void cmd_pretrain(const PretrainOpts& o) {
  auto start = std::chrono::steady_clock::now();
  EdgeRule rule = parse_edge_rule(o.model.edge_rule);
  hagnn::CohortDir cohort = hagnn::load_cohort(o.cohort);
  std::vector<Subject> subjects = hagnn::filter_cohort(cohort.subjects);
  require_fc(subjects);

  hagnn::PretrainSplit split = hagnn::pretrain_split(
      subjects.size(), o.train.pretrain_frac, o.train.seed);
  auto samples = hagnn::build_visit_samples(subjects, split.pretrain, rule);
  hagnn::TrainConfig cfg =
      make_train_config(o.model, o.train, cohort.roi_count);

  hagnn::ParamStore store = hagnn::pretrain_gcn(samples, cfg);
  double acc = hagnn::pretrain_accuracy(store, samples, cfg.gcn);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw hagnn::IoError("cannot create " + o.out + ": " + ec.message());
  hagnn::save_checkpoint(o.out + "/gcn_pretrained.json", store);

  hagnn::RunManifest manifest;
  manifest.command = "pretrain";
  manifest.seed = o.train.seed;
  manifest.options = model_options_json(o.model);
  manifest.options["pretrain_frac"] = o.train.pretrain_frac;
  manifest.options["pretrain_epochs"] = o.train.pretrain_epochs;
  manifest.options["pretrain_lr"] = o.train.pretrain_lr;
  manifest.options["batch"] = o.train.batch;
  manifest.inputs["cohort"] = o.cohort;
  hagnn::write_manifest(o.out, manifest);
  hagnn::write_timings(o.out, {{"pretrain", seconds_since(start)}});
  std::cerr << "pretrained on " << split.pretrain.size() << " subjects ("
            << samples.size() << " visits), training accuracy "
            << hagnn::format_double(acc) << '\n';
}

// ---------------------------------------------------------------------------
// train

struct TrainCmdOpts {
  std::string cohort, out;
  ModelOpts model;
  TrainOpts train;
};

// Search space: learning rate (log), hidden width (discrete), dropout,
// pool ratio.
std::size_t hidden_from_unit(double x) {
  static const std::size_t kWidths[3] = {32, 64, 128};
  auto idx = static_cast<std::size_t>(x);
  return kWidths[idx > 2 ? 2 : idx];
}

void cmd_train(const TrainCmdOpts& o) {
  auto start = std::chrono::steady_clock::now();
  EdgeRule rule = parse_edge_rule(o.model.edge_rule);
  hagnn::CohortDir cohort = hagnn::load_cohort(o.cohort);
  std::vector<Subject> subjects = hagnn::filter_cohort(cohort.subjects);
  if (subjects.size() < cohort.subjects.size())
    std::cerr << "dropped " << cohort.subjects.size() - subjects.size()
              << " subjects (reverters or single-visit)\n";
  require_fc(subjects);

  // The pretraining carve-out is excluded from the CV pool even with
  // --no-pretrain, so both arms cross-validate the same subjects.
  hagnn::PretrainSplit split = hagnn::pretrain_split(
      subjects.size(), o.train.pretrain_frac, o.train.seed);
  std::vector<Subject> main_subjects = subset(subjects, split.main);
  auto samples = hagnn::build_sequence_samples(main_subjects, rule);
  std::vector<hagnn::SequenceSample> aux;
  if (o.train.prefix_aug)
    aux = hagnn::build_prefix_samples(main_subjects, rule);
  hagnn::KFoldSplit kfold =
      hagnn::kfold_split(main_subjects, o.train.folds, o.train.seed);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw hagnn::IoError("cannot create " + o.out + ": " + ec.message());

  hagnn::TrainConfig cfg =
      make_train_config(o.model, o.train, cohort.roi_count);
  double pretrain_elapsed = 0.0;

  // Stage 1, shared by every hyperopt candidate with the same GCN shape.
  auto run_pretrain =
      [&](const hagnn::TrainConfig& c) -> hagnn::ParamStore {
    auto t0 = std::chrono::steady_clock::now();
    auto visits = hagnn::build_visit_samples(subjects, split.pretrain, rule);
    hagnn::ParamStore store = hagnn::pretrain_gcn(visits, c);
    std::cerr << "pretrain: " << visits.size() << " visits, accuracy "
              << hagnn::format_double(
                     hagnn::pretrain_accuracy(store, visits, c.gcn))
              << '\n';
    pretrain_elapsed += seconds_since(t0);
    return store;
  };

  if (o.train.hyperopt > 0) {
    std::vector<hagnn::BoxDim> space = {{"lr", 1e-4, 1e-2, true},
                                        {"hidden", 0.0, 3.0, false},
                                        {"dropout", 0.1, 0.5, false},
                                        {"pool_ratio", 0.3, 0.8, false}};
    auto objective = [&](const std::vector<double>& x) {
      hagnn::TrainConfig c = cfg;
      c.lr = x[0];
      c.hidden_dim = hidden_from_unit(x[1]);
      c.gcn.dropout = x[2];
      c.gcn.rho1 = x[3];
      c.gcn.rho2 = x[3];
      hagnn::ParamStore pre;
      const hagnn::ParamStore* pre_ptr = nullptr;
      if (!o.train.no_pretrain) {
        pre = run_pretrain(c);
        pre_ptr = &pre;
      }
      auto outcome =
          hagnn::train_ha_gnn(samples, kfold, pre_ptr, c,
                              o.train.parallel_folds,
                              aux.empty() ? nullptr : &aux);
      std::cerr << "hyperopt: lr " << hagnn::format_double(c.lr)
                << " hidden " << c.hidden_dim << " dropout "
                << hagnn::format_double(c.gcn.dropout) << " pool "
                << hagnn::format_double(c.gcn.rho1) << " -> BA "
                << hagnn::format_double(outcome.report.mean_ba) << '\n';
      return outcome.report.mean_ba;
    };
    auto result = hagnn::bayes_opt(space, objective, o.train.hyperopt,
                                   o.train.seed);
    cfg.lr = result.best_x[0];
    cfg.hidden_dim = hidden_from_unit(result.best_x[1]);
    cfg.gcn.dropout = result.best_x[2];
    cfg.gcn.rho1 = result.best_x[3];
    cfg.gcn.rho2 = result.best_x[3];

    ordered_json hj;
    hj["budget"] = o.train.hyperopt;
    hj["best"]["lr"] = cfg.lr;
    hj["best"]["hidden"] = cfg.hidden_dim;
    hj["best"]["dropout"] = cfg.gcn.dropout;
    hj["best"]["pool_ratio"] = cfg.gcn.rho1;
    hj["best"]["ba"] = result.best_y;
    hj["evaluated"] = ordered_json::array();
    for (std::size_t i = 0; i < result.evaluated_x.size(); ++i) {
      ordered_json e;
      e["lr"] = result.evaluated_x[i][0];
      e["hidden"] = hidden_from_unit(result.evaluated_x[i][1]);
      e["dropout"] = result.evaluated_x[i][2];
      e["pool_ratio"] = result.evaluated_x[i][3];
      e["ba"] = result.evaluated_y[i];
      hj["evaluated"].push_back(e);
    }
    std::ofstream hout(o.out + "/hyperopt.json");
    if (!hout) throw hagnn::IoError("cannot write " + o.out +
                                    "/hyperopt.json");
    hout << hj.dump(2) << '\n';
    std::cerr << "hyperopt best: BA "
              << hagnn::format_double(result.best_y) << '\n';
  }

  hagnn::ParamStore pretrained;
  const hagnn::ParamStore* pretrained_ptr = nullptr;
  if (!o.train.no_pretrain) {
    pretrained = run_pretrain(cfg);
    pretrained_ptr = &pretrained;
    hagnn::save_checkpoint(o.out + "/gcn_pretrained.json", pretrained);
  }

  auto t_train = std::chrono::steady_clock::now();
  auto outcome = hagnn::train_ha_gnn(samples, kfold, pretrained_ptr, cfg,
                                     o.train.parallel_folds,
                                     aux.empty() ? nullptr : &aux);
  double train_elapsed = seconds_since(t_train);

  hagnn::write_metrics_json(o.out + "/metrics.json", outcome.report);
  std::string table =
      hagnn::render_table(outcome.report, model_name(cfg.rnn));
  {
    std::ofstream tout(o.out + "/metrics_table.txt");
    if (!tout)
      throw hagnn::IoError("cannot write " + o.out + "/metrics_table.txt");
    tout << table;
  }
  for (const hagnn::FoldOutcome& fold : outcome.folds) {
    std::string stem = o.out + "/roc_fold" + std::to_string(fold.fold);
    hagnn::write_roc_csv(stem + ".csv", fold.roc);
    maybe_write_svg(stem + ".svg", fold.roc);
    hagnn::save_checkpoint(
        o.out + "/fold" + std::to_string(fold.fold) + "_params.json",
        fold.params);
    write_predictions_csv(
        o.out + "/fold" + std::to_string(fold.fold) + "_predictions.csv",
        fold);
    std::cerr << "fold " << fold.fold << ": acc "
              << hagnn::format_double(fold.metrics.acc) << " auc "
              << hagnn::format_double(fold.metrics.auc_roc) << " ba "
              << hagnn::format_double(fold.metrics.ba) << " ("
              << fold.epochs_run << " epochs)\n";
  }

  hagnn::RunManifest manifest;
  manifest.command = "train";
  manifest.seed = o.train.seed;
  manifest.options = train_options_json(o.model, o.train);
  manifest.inputs["cohort"] = o.cohort;
  hagnn::write_manifest(o.out, manifest);
  hagnn::write_timings(o.out, {{"pretrain", pretrain_elapsed},
                               {"train", train_elapsed},
                               {"total", seconds_since(start)}});
  std::cerr << table;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string cohort, model, out;
  std::size_t fold = 0;
};

void cmd_eval(const EvalOpts& o) {
  auto start = std::chrono::steady_clock::now();
  hagnn::RunManifest run = hagnn::read_manifest(o.model);
  ModelOpts m;
  try {
    m.rnn = run.options.at("rnn").get<std::string>();
    m.hidden = run.options.at("hidden").get<std::size_t>();
    m.gcn_d1 = run.options.at("gcn_d1").get<std::size_t>();
    m.gcn_d2 = run.options.at("gcn_d2").get<std::size_t>();
    m.dropout = run.options.at("dropout").get<double>();
    m.pool_ratio = run.options.at("pool_ratio").get<double>();
    m.edge_rule = run.options.at("edge_rule").get<std::string>();
  } catch (const ordered_json::exception& e) {
    throw hagnn::IoError(o.model + "/manifest.json: " + e.what());
  }
  TrainOpts t;
  t.seed = run.seed;

  std::string params_path =
      o.model + "/fold" + std::to_string(o.fold) + "_params.json";
  hagnn::ParamStore store = hagnn::load_checkpoint(params_path);

  EdgeRule rule = parse_edge_rule(m.edge_rule);
  hagnn::CohortDir cohort = hagnn::load_cohort(o.cohort);
  std::vector<Subject> subjects = hagnn::filter_cohort(cohort.subjects);
  require_fc(subjects);
  auto samples = hagnn::build_sequence_samples(subjects, rule);
  hagnn::TrainConfig cfg = make_train_config(m, t, cohort.roi_count);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw hagnn::IoError("cannot create " + o.out + ": " + ec.message());

  hagnn::FoldOutcome fold;
  fold.fold = o.fold;
  for (const hagnn::SequenceSample& s : samples) {
    double p = hagnn::score_sample(store, s, cfg);
    fold.test_ids.push_back(s.id);
    fold.test_scores.push_back(p);
    fold.test_labels.push_back(s.label);
    fold.test_preds.push_back(p >= 0.5 ? 1 : 0);
    fold.test_transitions.push_back(s.last_two);
  }
  fold.metrics.acc = hagnn::accuracy(fold.test_preds, fold.test_labels);
  fold.metrics.ba =
      hagnn::balanced_accuracy(fold.test_preds, fold.test_labels);
  fold.metrics.auc_roc =
      hagnn::auc_roc(fold.test_scores, fold.test_labels);
  fold.roc = hagnn::roc_points(fold.test_scores, fold.test_labels);

  fold.metrics.cn_to_mci = hagnn::detail::transition_acc_or_none(
      fold.test_preds, fold.test_transitions, hagnn::Diagnosis::kCN,
      hagnn::Diagnosis::kMCI);
  fold.metrics.mci_to_ad = hagnn::detail::transition_acc_or_none(
      fold.test_preds, fold.test_transitions, hagnn::Diagnosis::kMCI,
      hagnn::Diagnosis::kAD);

  hagnn::MetricsReport report;
  report.per_fold.push_back(fold.metrics);
  report.mean_acc = fold.metrics.acc;
  report.mean_auc = fold.metrics.auc_roc;
  report.mean_ba = fold.metrics.ba;
  report.cn_to_mci = fold.metrics.cn_to_mci;
  report.mci_to_ad = fold.metrics.mci_to_ad;

  write_predictions_csv(o.out + "/predictions.csv", fold);
  hagnn::write_metrics_json(o.out + "/eval_metrics.json", report);
  hagnn::write_roc_csv(o.out + "/roc_eval.csv", fold.roc);
  maybe_write_svg(o.out + "/roc_eval.svg", fold.roc);

  hagnn::RunManifest manifest;
  manifest.command = "eval";
  manifest.seed = run.seed;
  manifest.options = model_options_json(m);
  manifest.options["fold"] = o.fold;
  manifest.inputs["cohort"] = o.cohort;
  manifest.inputs["model"] = o.model;
  hagnn::write_manifest(o.out, manifest);
  hagnn::write_timings(o.out, {{"eval", seconds_since(start)}});
  std::cerr << "evaluated " << samples.size() << " subjects: acc "
            << hagnn::format_double(fold.metrics.acc) << " auc "
            << hagnn::format_double(fold.metrics.auc_roc) << " ba "
            << hagnn::format_double(fold.metrics.ba) << '\n';
}

// ---------------------------------------------------------------------------
// report

struct ReportOpts {
  std::string in, out;
  std::string model = "HA-GNN (LSTM)";
};

void cmd_report(const ReportOpts& o) {
  hagnn::MetricsReport report =
      hagnn::read_metrics_json(o.in + "/metrics.json");

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw hagnn::IoError("cannot create " + o.out + ": " + ec.message());

  hagnn::write_metrics_json(o.out + "/metrics.json", report);
  std::string table = hagnn::render_table(report, o.model);
  {
    std::ofstream tout(o.out + "/metrics_table.txt");
    if (!tout)
      throw hagnn::IoError("cannot write " + o.out + "/metrics_table.txt");
    tout << table;
  }
  for (std::size_t k = 0; k < report.per_fold.size(); ++k) {
    std::string src = o.in + "/roc_fold" + std::to_string(k) + ".csv";
    if (!fs::exists(src)) {
      std::cerr << "warning: " << src << " missing; plot skipped\n";
      continue;
    }
    auto points = hagnn::read_roc_csv(src);
    std::string stem = o.out + "/roc_fold" + std::to_string(k);
    hagnn::write_roc_csv(stem + ".csv", points);
    maybe_write_svg(stem + ".svg", points);
  }
  std::cerr << table;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOpts {
  std::uint64_t seed = 7;
};

void cmd_gradcheck(const GradcheckOpts& o) {
  auto start = std::chrono::steady_clock::now();
  std::cerr << "gradient suite (seed " << o.seed << "):\n";
  hagnn::GradSuiteResult result = hagnn::run_gradient_suite(o.seed,
                                                            &std::cerr);
  std::cerr << (result.pass ? "PASS" : "FAIL") << ": " << result.cases.size()
            << " checks, worst relative error "
            << hagnn::format_double(result.worst) << " ("
            << hagnn::format_double(seconds_since(start)) << " s)\n";
  if (!result.pass)
    throw hagnn::NumericError("gradient suite failed");
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  CLI::App app{std::string("hagnn ") + hagnn::kVersionString +
               " - hierarchical-attention GNN over longitudinal brain "
               "connectivity"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hagnn::kVersionString));
  int rc = 0;

  CohortGenOpts cohort_gen;
  auto* cohort = app.add_subcommand("cohort", "cohort operations");
  cohort->require_subcommand(1);
  auto* gen = cohort->add_subcommand("gen", "generate a synthetic cohort");
  gen->add_option("--seed", cohort_gen.seed, "generator seed")
      ->capture_default_str();
  gen->add_option("--out", cohort_gen.out, "output cohort directory")
      ->required();
  gen->add_option("--subjects", cohort_gen.subjects, "number of subjects")
      ->capture_default_str();
  gen->add_option("--converter-frac", cohort_gen.converter_frac,
                  "fraction of converters")
      ->capture_default_str();
  gen->add_option("--rois", cohort_gen.rois, "ROI count")
      ->capture_default_str();
  gen->add_option("--timepoints", cohort_gen.timepoints,
                  "BOLD timepoints per visit")
      ->capture_default_str();
  gen->add_option("--effect-size", cohort_gen.effect_size,
                  "planted signal strength (0 = null cohort)")
      ->capture_default_str();
  gen->add_option("--mean-gap", cohort_gen.mean_gap,
                  "mean inter-visit gap in months")
      ->capture_default_str();
  gen->add_option("--gap-cv", cohort_gen.gap_cv,
                  "coefficient of variation of visit gaps")
      ->capture_default_str();
  gen->callback([&]() { rc = run_guarded([&]() { cmd_cohort_gen(cohort_gen); }); });

  FcComputeOpts fc_opts;
  auto* fc = app.add_subcommand("fc", "connectivity operations");
  fc->require_subcommand(1);
  auto* fc_compute = fc->add_subcommand(
      "compute", "compute Pearson connectivity for every visit");
  fc_compute->add_option("--in", fc_opts.in, "input cohort directory")
      ->required();
  fc_compute->add_option("--out", fc_opts.out, "output cohort directory")
      ->required();
  fc_compute->callback([&]() { rc = run_guarded([&]() { cmd_fc_compute(fc_opts); }); });

  GraphBuildOpts graph_opts;
  auto* graph = app.add_subcommand("graph", "graph operations");
  graph->require_subcommand(1);
  auto* graph_build =
      graph->add_subcommand("build", "sparsify connectivity into edge lists");
  graph_build->add_option("--in", graph_opts.in, "input cohort directory")
      ->required();
  graph_build->add_option("--out", graph_opts.out, "output directory")
      ->required();
  graph_build
      ->add_option("--edge-rule", graph_opts.edge_rule,
                   "topk:<k> or threshold:<tau>")
      ->capture_default_str();
  graph_build->callback([&]() { rc = run_guarded([&]() { cmd_graph_build(graph_opts); }); });

  PretrainOpts pre_opts;
  auto* pretrain = app.add_subcommand(
      "pretrain", "train the 3-class GCN stage on the pretraining split");
  pretrain->add_option("--cohort", pre_opts.cohort, "cohort directory")
      ->required();
  pretrain->add_option("--out", pre_opts.out, "output directory")->required();
  pretrain->add_option("--seed", pre_opts.train.seed, "run seed")
      ->capture_default_str();
  pretrain
      ->add_option("--pretrain-frac", pre_opts.train.pretrain_frac,
                   "subject fraction for pretraining")
      ->capture_default_str();
  pretrain
      ->add_option("--epochs", pre_opts.train.pretrain_epochs,
                   "pretraining epochs")
      ->capture_default_str();
  pretrain->add_option("--lr", pre_opts.train.pretrain_lr, "learning rate")
      ->capture_default_str();
  pretrain->add_option("--batch", pre_opts.train.batch, "batch size")
      ->capture_default_str();
  add_model_flags(pretrain, pre_opts.model);
  pretrain->callback([&]() { rc = run_guarded([&]() { cmd_pretrain(pre_opts); }); });

  TrainCmdOpts train_opts;
  auto* train = app.add_subcommand(
      "train", "two-stage training with stratified k-fold cross-validation");
  train->add_option("--cohort", train_opts.cohort, "cohort directory")
      ->required();
  train->add_option("--out", train_opts.out, "output run directory")
      ->required();
  train->add_option("--seed", train_opts.train.seed, "run seed")
      ->capture_default_str();
  train->add_option("--folds", train_opts.train.folds, "number of CV folds")
      ->capture_default_str();
  train
      ->add_option("--pretrain-frac", train_opts.train.pretrain_frac,
                   "subject fraction reserved for pretraining")
      ->capture_default_str();
  train->add_option("--alpha", train_opts.train.alpha, "focal loss alpha")
      ->capture_default_str();
  train->add_option("--gamma", train_opts.train.gamma, "focal loss gamma")
      ->capture_default_str();
  train->add_option("--epochs", train_opts.train.epochs, "training epochs")
      ->capture_default_str();
  train->add_option("--batch", train_opts.train.batch, "batch size")
      ->capture_default_str();
  train->add_option("--lr", train_opts.train.lr, "learning rate")
      ->capture_default_str();
  train->add_option("--patience", train_opts.train.patience,
                    "early stopping patience (epochs)")
      ->capture_default_str();
  train->add_option("--val-frac", train_opts.train.val_frac,
                    "validation fraction for early stopping")
      ->capture_default_str();
  train
      ->add_option("--pretrain-epochs", train_opts.train.pretrain_epochs,
                   "pretraining epochs")
      ->capture_default_str();
  train
      ->add_option("--pretrain-lr", train_opts.train.pretrain_lr,
                   "pretraining learning rate")
      ->capture_default_str();
  train->add_flag("--no-pretrain", train_opts.train.no_pretrain,
                  "skip GCN pretraining (CV pool unchanged)");
  train->add_flag("--prefix-aug", train_opts.train.prefix_aug,
                  "augment training batches with visit prefixes");
  train
      ->add_option("--parallel-folds", train_opts.train.parallel_folds,
                   "train up to N folds concurrently")
      ->capture_default_str();
  train
      ->add_option("--hyperopt", train_opts.train.hyperopt,
                   "surrogate-search budget before the final run (0 = off)")
      ->capture_default_str();
  add_model_flags(train, train_opts.model);
  train->callback([&]() { rc = run_guarded([&]() { cmd_train(train_opts); }); });

  EvalOpts eval_opts;
  auto* eval = app.add_subcommand(
      "eval", "score a cohort with one trained fold's parameters");
  eval->add_option("--cohort", eval_opts.cohort, "cohort directory")
      ->required();
  eval->add_option("--model", eval_opts.model,
                   "training run directory (manifest + checkpoints)")
      ->required();
  eval->add_option("--fold", eval_opts.fold, "fold checkpoint to use")
      ->capture_default_str();
  eval->add_option("--out", eval_opts.out, "output directory")->required();
  eval->callback([&]() { rc = run_guarded([&]() { cmd_eval(eval_opts); }); });

  ReportOpts report_opts;
  auto* report = app.add_subcommand(
      "report", "re-render tables and plots from a training run");
  report->add_option("--in", report_opts.in, "training run directory")
      ->required();
  report->add_option("--out", report_opts.out, "output directory")
      ->required();
  report->add_option("--model", report_opts.model, "model label for the table")
      ->capture_default_str();
  report->callback([&]() { rc = run_guarded([&]() { cmd_report(report_opts); }); });

  GradcheckOpts grad_opts;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of every differentiable layer");
  gradcheck->add_option("--seed", grad_opts.seed, "suite seed")
      ->capture_default_str();
  gradcheck->callback([&]() { rc = run_guarded([&]() { cmd_gradcheck(grad_opts); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n'
              << "run with --help for usage\n";
    return 1;
  }
  return rc;
}
