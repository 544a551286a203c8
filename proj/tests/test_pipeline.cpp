#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hagnn/cohort.hpp"
#include "hagnn/connectome.hpp"
#include "hagnn/io.hpp"
#include "hagnn/report.hpp"
#include "hagnn/synth.hpp"
#include "hagnn/train.hpp"
#include "test_util.hpp"

using hagnn::Diagnosis;
using hagnn::EdgeRule;
using hagnn::ParamStore;
using hagnn::RngStream;
using hagnn::Subject;
using hagnn::Tensor;
using hagnn::TrainConfig;
using hagnn::Visit;

namespace {

hagnn::FCMatrix random_fc(RngStream& rng, std::size_t n_rois) {
  Tensor bold = hagnn_test::random_tensor(rng, 24, n_rois);
  return hagnn::pearson_fc(hagnn::BoldMatrix(bold, hagnn::ChannelKind::kRoi));
}

Visit fc_visit(RngStream& rng, std::size_t n_rois, Diagnosis dx,
               double month) {
  Visit v;
  v.fc = random_fc(rng, n_rois);
  v.diagnosis = dx;
  v.month_offset = month;
  return v;
}

std::vector<Subject> small_cohort(std::size_t n, std::size_t n_rois,
                                  std::uint64_t seed, double effect = 1.5) {
  hagnn::CohortConfig cfg;
  cfg.n_subjects = n;
  cfg.converter_fraction = 0.3;
  cfg.roi_count = n_rois;
  cfg.timepoints = 40;
  cfg.effect_size = effect;
  cfg.seed = seed;
  std::vector<Subject> subjects = hagnn::generate_synthetic_cohort(cfg);
  for (Subject& s : subjects) hagnn::compute_fc_in_place(s);
  return subjects;
}

TrainConfig tiny_train_config(std::size_t n_rois) {
  TrainConfig cfg;
  cfg.gcn.d_in = n_rois;
  cfg.gcn.d1 = 6;
  cfg.gcn.d2 = 4;
  cfg.gcn.dropout = 0.2;
  cfg.hidden_dim = 8;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.lr = 3e-3;
  cfg.seed = 11;
  return cfg;
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.at(i).first != b.at(i).first) return false;
    const Tensor& ta = a.at(i).second;
    const Tensor& tb = b.at(i).second;
    if (!ta.same_shape(tb)) return false;
    for (std::size_t k = 0; k < ta.size(); ++k)
      if (ta[k] != tb[k]) return false;
  }
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("sequence samples feed the history and predict the next visit") {
  RngStream rng(7001);
  std::size_t R = 8;
  Subject s = hagnn::make_subject(
      "s01", {fc_visit(rng, R, Diagnosis::kCN, 0.0),
              fc_visit(rng, R, Diagnosis::kCN, 6.0),
              fc_visit(rng, R, Diagnosis::kMCI, 18.0),
              fc_visit(rng, R, Diagnosis::kMCI, 24.0)});
  EdgeRule rule = EdgeRule::topk(3);

  auto full = hagnn::build_sequence_sample(s, rule, 3);
  CHECK(full.id == "s01");
  REQUIRE(full.graphs.size() == 3);
  REQUIRE(full.gaps.size() == 3);
  CHECK(full.gaps[0] == 6.0);
  CHECK(full.gaps[1] == 12.0);
  CHECK(full.gaps[2] == 6.0);  // forecast horizon
  CHECK(full.label == 0);
  CHECK(full.last_two.first == Diagnosis::kMCI);
  CHECK(full.last_two.second == Diagnosis::kMCI);
  // Node features are the connectivity rows.
  CHECK(full.graphs[0].node_features.rows() == R);
  CHECK(full.graphs[0].node_features.at(2, 5) ==
        s.visits[0].fc->values.at(2, 5));

  auto mid = hagnn::build_sequence_sample(s, rule, 2);
  CHECK(mid.graphs.size() == 2);
  CHECK(mid.label == 1);  // CN -> MCI at the target visit
  CHECK(mid.last_two.first == Diagnosis::kCN);
  CHECK(mid.last_two.second == Diagnosis::kMCI);

  CHECK_THROWS_AS(hagnn::build_sequence_sample(s, rule, 0),
                  hagnn::PreconditionError);
  CHECK_THROWS_AS(hagnn::build_sequence_sample(s, rule, 4),
                  hagnn::PreconditionError);

  auto samples = hagnn::build_sequence_samples({s}, rule);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].graphs.size() == 3);

  auto prefixes = hagnn::build_sequence_samples({s}, rule, true);
  REQUIRE(prefixes.size() == 3);
  CHECK(prefixes[0].graphs.size() == 1);
  CHECK(prefixes[2].graphs.size() == 3);

  auto aux = hagnn::build_prefix_samples({s}, rule);
  REQUIRE(aux.size() == 2);
  CHECK(aux[0].graphs.size() == 1);
  CHECK(aux[1].graphs.size() == 2);

  Subject one_visit = hagnn::make_subject(
      "s02", {fc_visit(rng, R, Diagnosis::kCN, 0.0)});
  CHECK_THROWS_AS(hagnn::build_sequence_samples({one_visit}, rule),
                  hagnn::PreconditionError);

  // The target visit needs no connectivity, only a diagnosis.
  Subject tail_ok = hagnn::make_subject(
      "s03", {fc_visit(rng, R, Diagnosis::kCN, 0.0), Visit{{}, {},
              Diagnosis::kMCI, 9.0}});
  CHECK_NOTHROW(hagnn::build_sequence_samples({tail_ok}, rule));

  // A fed visit without connectivity is an error.
  Subject no_fc = hagnn::make_subject(
      "s04", {Visit{{}, {}, Diagnosis::kCN, 0.0},
              fc_visit(rng, R, Diagnosis::kMCI, 9.0)});
  CHECK_THROWS_AS(hagnn::build_sequence_samples({no_fc}, rule),
                  hagnn::PreconditionError);
}

TEST_CASE("visit samples cover every visit of the chosen subjects") {
  RngStream rng(7002);
  std::size_t R = 6;
  std::vector<Subject> subjects;
  subjects.push_back(hagnn::make_subject(
      "a", {fc_visit(rng, R, Diagnosis::kCN, 0.0),
            fc_visit(rng, R, Diagnosis::kMCI, 10.0)}));
  subjects.push_back(hagnn::make_subject(
      "b", {fc_visit(rng, R, Diagnosis::kAD, 0.0),
            fc_visit(rng, R, Diagnosis::kAD, 12.0),
            fc_visit(rng, R, Diagnosis::kAD, 20.0)}));
  EdgeRule rule = EdgeRule::topk(2);

  auto both = hagnn::build_visit_samples(subjects, {0, 1}, rule);
  REQUIRE(both.size() == 5);
  CHECK(both[0].dx == Diagnosis::kCN);
  CHECK(both[1].dx == Diagnosis::kMCI);
  CHECK(both[2].dx == Diagnosis::kAD);

  auto second = hagnn::build_visit_samples(subjects, {1}, rule);
  CHECK(second.size() == 3);

  CHECK_THROWS_AS(hagnn::build_visit_samples(subjects, {2}, rule),
                  hagnn::PreconditionError);
}

TEST_CASE("pretraining is reproducible and does nothing at zero epochs") {
  std::vector<Subject> subjects = small_cohort(10, 10, 41);
  EdgeRule rule = EdgeRule::topk(4);
  std::vector<std::size_t> all_idx;
  for (std::size_t i = 0; i < subjects.size(); ++i) all_idx.push_back(i);
  auto samples = hagnn::build_visit_samples(subjects, all_idx, rule);

  TrainConfig cfg = tiny_train_config(10);
  cfg.pretrain_epochs = 0;
  ParamStore untouched = hagnn::pretrain_gcn(samples, cfg);

  RngStream rng(hagnn::derive_seed(cfg.seed, "pretrain", 0));
  ParamStore expected;
  hagnn::init_gcn_params(expected, cfg.gcn, rng);
  hagnn::init_pretrain_head(expected, cfg.gcn, rng);
  CHECK(stores_equal(untouched, expected));

  cfg.pretrain_epochs = 2;
  ParamStore a = hagnn::pretrain_gcn(samples, cfg);
  ParamStore b = hagnn::pretrain_gcn(samples, cfg);
  CHECK(stores_equal(a, b));
  CHECK_FALSE(stores_equal(a, untouched));

  CHECK_THROWS_AS(hagnn::pretrain_gcn({}, cfg), hagnn::PreconditionError);
}

TEST_CASE("pretraining fits an easy three-class diagnosis problem") {
  std::vector<Subject> subjects = small_cohort(14, 12, 42, 2.5);
  EdgeRule rule = EdgeRule::topk(4);
  std::vector<std::size_t> all_idx;
  for (std::size_t i = 0; i < subjects.size(); ++i) all_idx.push_back(i);
  auto samples = hagnn::build_visit_samples(subjects, all_idx, rule);

  TrainConfig cfg = tiny_train_config(12);
  cfg.pretrain_epochs = 20;
  cfg.pretrain_lr = 3e-3;

  ParamStore init;
  {
    RngStream rng(hagnn::derive_seed(cfg.seed, "pretrain", 0));
    hagnn::init_gcn_params(init, cfg.gcn, rng);
    hagnn::init_pretrain_head(init, cfg.gcn, rng);
  }
  ParamStore trained = hagnn::pretrain_gcn(samples, cfg);
  double acc_init = hagnn::pretrain_accuracy(init, samples, cfg.gcn);
  double acc_trained = hagnn::pretrain_accuracy(trained, samples, cfg.gcn);
  INFO("accuracy " << acc_init << " -> " << acc_trained);
  CHECK(acc_trained >= 0.5);
  CHECK(acc_trained > acc_init - 0.05);
}

TEST_CASE("cross-validated training runs end to end without leakage") {
  std::vector<Subject> subjects = small_cohort(24, 12, 43);
  EdgeRule rule = EdgeRule::topk(4);
  auto samples = hagnn::build_sequence_samples(subjects, rule);
  auto split = hagnn::kfold_split(subjects, 3, 9);

  TrainConfig cfg = tiny_train_config(12);
  auto outcome = hagnn::train_ha_gnn(samples, split, nullptr, cfg);

  REQUIRE(outcome.folds.size() == 3);
  REQUIRE(outcome.report.per_fold.size() == 3);
  std::set<std::string> seen_test;
  for (std::size_t f = 0; f < 3; ++f) {
    const auto& fold = outcome.folds[f];
    CHECK(fold.fold == f);
    CHECK(fold.test_ids.size() == split.folds[f].size());
    CHECK(fold.trained_ids.size() == subjects.size() - fold.test_ids.size());
    CHECK(fold.epochs_run >= 1);
    CHECK(fold.epochs_run <= cfg.epochs);
    for (const std::string& id : fold.test_ids) {
      CHECK_FALSE(std::binary_search(fold.trained_ids.begin(),
                                     fold.trained_ids.end(), id));
      CHECK(seen_test.insert(id).second);  // folds are disjoint
    }
    for (double p : fold.test_scores) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    CHECK(fold.metrics.acc >= 0.0);
    CHECK(fold.metrics.acc <= 1.0);
    CHECK(fold.metrics.ba >= 0.0);
    CHECK(fold.metrics.ba <= 1.0);
    CHECK(fold.metrics.auc_roc >= 0.0);
    CHECK(fold.metrics.auc_roc <= 1.0);
    CHECK(fold.roc.size() >= 2);
  }
  CHECK(seen_test.size() == subjects.size());
  CHECK(outcome.report.mean_ba >= 0.0);
  CHECK(outcome.report.mean_ba <= 1.0);
  CHECK(outcome.report.std_ba >= 0.0);
}

TEST_CASE("repeated and parallel training runs agree exactly") {
  std::vector<Subject> subjects = small_cohort(18, 10, 44);
  EdgeRule rule = EdgeRule::topk(4);
  auto samples = hagnn::build_sequence_samples(subjects, rule);
  auto split = hagnn::kfold_split(subjects, 3, 10);

  TrainConfig cfg = tiny_train_config(10);
  cfg.epochs = 2;

  auto serial1 = hagnn::train_ha_gnn(samples, split, nullptr, cfg);
  auto serial2 = hagnn::train_ha_gnn(samples, split, nullptr, cfg);
  auto parallel = hagnn::train_ha_gnn(samples, split, nullptr, cfg, 3);

  for (const auto& other : {&serial2, &parallel}) {
    REQUIRE(other->folds.size() == serial1.folds.size());
    for (std::size_t f = 0; f < serial1.folds.size(); ++f) {
      const auto& a = serial1.folds[f];
      const auto& b = other->folds[f];
      REQUIRE(a.test_scores.size() == b.test_scores.size());
      for (std::size_t i = 0; i < a.test_scores.size(); ++i)
        CHECK(a.test_scores[i] == b.test_scores[i]);
      CHECK(a.metrics.ba == b.metrics.ba);
      CHECK(a.metrics.auc_roc == b.metrics.auc_roc);
      CHECK(stores_equal(a.params, b.params));
    }
    CHECK(serial1.report.mean_ba == other->report.mean_ba);
    CHECK(serial1.report.std_auc == other->report.std_auc);
  }
}

TEST_CASE("pretrained weights flow into every fold") {
  std::vector<Subject> subjects = small_cohort(12, 10, 45);
  EdgeRule rule = EdgeRule::topk(4);
  std::vector<std::size_t> all_idx;
  for (std::size_t i = 0; i < subjects.size(); ++i) all_idx.push_back(i);
  auto visits = hagnn::build_visit_samples(subjects, all_idx, rule);
  auto samples = hagnn::build_sequence_samples(subjects, rule);

  TrainConfig cfg = tiny_train_config(10);
  cfg.pretrain_epochs = 1;
  ParamStore pretrained = hagnn::pretrain_gcn(visits, cfg);

  cfg.epochs = 0;  // isolate initialization
  auto fold = hagnn::train_fold(samples, {0, 1, 2}, 0, &pretrained, cfg);

  RngStream rng(hagnn::derive_seed(cfg.seed, "fold_init", 0));
  ParamStore fresh = hagnn::init_model_params(cfg, rng);
  REQUIRE(fold.params.size() == fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    const std::string& name = fresh.at(i).first;
    const Tensor& got = fold.params.get(name);
    const Tensor& want = name.rfind("gcn.", 0) == 0 ? pretrained.get(name)
                                                    : fresh.at(i).second;
    REQUIRE(got.same_shape(want));
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == want[k]);
  }

  TrainConfig wider = cfg;
  wider.gcn.d1 = 8;
  CHECK_THROWS_AS(
      hagnn::train_fold(samples, {0, 1, 2}, 0, &pretrained, wider),
      hagnn::DimensionError);
}

TEST_CASE("prefix augmentation adds training material without new subjects") {
  std::vector<Subject> subjects = small_cohort(12, 10, 46);
  EdgeRule rule = EdgeRule::topk(4);
  auto samples = hagnn::build_sequence_samples(subjects, rule);
  auto aux = hagnn::build_prefix_samples(subjects, rule);
  REQUIRE_FALSE(aux.empty());

  TrainConfig cfg = tiny_train_config(10);
  cfg.epochs = 2;

  // Pick a mixed-label test pair so fold metrics stay well defined.
  std::vector<std::size_t> test_idx;
  for (int want : {1, 0})
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].label == want) {
        test_idx.push_back(i);
        break;
      }
  REQUIRE(test_idx.size() == 2);

  auto plain = hagnn::train_fold(samples, test_idx, 0, nullptr, cfg);
  cfg.prefix_augmentation = true;
  auto augmented = hagnn::train_fold(samples, test_idx, 0, nullptr, cfg, &aux);
  auto no_pool = hagnn::train_fold(samples, test_idx, 0, nullptr, cfg);

  CHECK_FALSE(stores_equal(plain.params, augmented.params));
  CHECK(stores_equal(plain.params, no_pool.params));
  CHECK(augmented.trained_ids == plain.trained_ids);
}

TEST_CASE("degenerate splits are rejected") {
  std::vector<Subject> subjects = small_cohort(6, 8, 47);
  EdgeRule rule = EdgeRule::topk(3);
  auto samples = hagnn::build_sequence_samples(subjects, rule);
  TrainConfig cfg = tiny_train_config(8);

  hagnn::KFoldSplit empty;
  CHECK_THROWS_AS(hagnn::train_ha_gnn(samples, empty, nullptr, cfg),
                  hagnn::SplitError);
  hagnn::KFoldSplit with_empty_fold;
  with_empty_fold.folds = {{0, 1}, {}};
  CHECK_THROWS_AS(hagnn::train_ha_gnn(samples, with_empty_fold, nullptr, cfg),
                  hagnn::SplitError);
  CHECK_THROWS_AS(hagnn::train_fold(samples, {99}, 0, nullptr, cfg),
                  hagnn::SplitError);
  std::vector<std::size_t> everything;
  for (std::size_t i = 0; i < samples.size(); ++i) everything.push_back(i);
  CHECK_THROWS_AS(hagnn::train_fold(samples, everything, 0, nullptr, cfg),
                  hagnn::SplitError);
}

TEST_CASE("metrics reports survive the json round trip") {
  hagnn::MetricsReport report;
  hagnn::FoldMetrics f0{0.8, 0.85, 0.775, 0.6875, std::nullopt};
  hagnn::FoldMetrics f1{0.7, 0.9, 0.75, std::nullopt, 1.0};
  report.per_fold = {f0, f1};
  std::tie(report.mean_acc, report.std_acc) = hagnn::mean_std({0.8, 0.7});
  std::tie(report.mean_auc, report.std_auc) = hagnn::mean_std({0.85, 0.9});
  std::tie(report.mean_ba, report.std_ba) = hagnn::mean_std({0.775, 0.75});
  report.cn_to_mci = 0.6875;
  report.mci_to_ad = 1.0;

  std::string path = "metrics_roundtrip_test.json";
  hagnn::write_metrics_json(path, report);
  auto loaded = hagnn::read_metrics_json(path);

  REQUIRE(loaded.per_fold.size() == 2);
  CHECK(loaded.per_fold[0].ba == report.per_fold[0].ba);
  CHECK(loaded.per_fold[0].cn_to_mci == report.per_fold[0].cn_to_mci);
  CHECK_FALSE(loaded.per_fold[0].mci_to_ad.has_value());
  CHECK(loaded.per_fold[1].mci_to_ad == report.per_fold[1].mci_to_ad);
  CHECK(loaded.mean_acc == report.mean_acc);
  CHECK(loaded.std_auc == report.std_auc);
  CHECK(loaded.cn_to_mci == report.cn_to_mci);

  nlohmann::ordered_json j;
  {
    std::ifstream in(path);
    in >> j;
  }
  CHECK(j.at("per_fold").size() == 2);
  CHECK(j.at("per_fold").at(0).at("cn_to_mci").get<double>() == 0.6875);
  CHECK(j.at("per_fold").at(0).at("mci_to_ad").is_null());
  CHECK(j.at("mean").at("ba").get<double>() == report.mean_ba);
  CHECK(j.at("std").at("cn_to_mci").get<double>() == 0.0);
  std::remove(path.c_str());

  CHECK_THROWS_AS(hagnn::read_metrics_json("does_not_exist.json"),
                  hagnn::IoError);
}

TEST_CASE("metric cells and the summary table format as published") {
  CHECK(hagnn::format_metric_cell(0.7714, 0.1136) == "0.771 ± 0.114");
  CHECK(hagnn::format_metric_cell(0.5, 0.0) == "0.500 ± 0.000");

  hagnn::MetricsReport report;
  report.per_fold = {hagnn::FoldMetrics{0.8, 0.85, 0.775, 0.6875, 1.0}};
  report.mean_acc = 0.8;
  report.mean_auc = 0.85;
  report.mean_ba = 0.775;
  report.cn_to_mci = 0.6875;
  std::string table = hagnn::render_table(report, "HA-GNN (LSTM)");
  CHECK(table.find("HA-GNN (LSTM)") != std::string::npos);
  CHECK(table.find("AUC-ROC") != std::string::npos);
  CHECK(table.find("CN to MCI") != std::string::npos);
  CHECK(table.find("0.775 ± 0.000") != std::string::npos);
  CHECK(table.find("0.688") != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);  // missing MCI to AD
}

TEST_CASE("roc curves round trip through csv and render to svg") {
  std::vector<double> scores = {0.9, 0.8, 0.8, 0.3, 0.2, 0.75};
  std::vector<int> labels = {1, 1, 0, 0, 1, 1};
  auto points = hagnn::roc_points(scores, labels);

  std::string csv_path = "roc_roundtrip_test.csv";
  hagnn::write_roc_csv(csv_path, points);
  {
    std::ifstream in(csv_path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "fpr,tpr,threshold");
  }
  auto loaded = hagnn::read_roc_csv(csv_path);
  REQUIRE(loaded.size() == points.size());
  CHECK(std::isinf(loaded.front().threshold));
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(loaded[i].fpr == points[i].fpr);
    CHECK(loaded[i].tpr == points[i].tpr);
    if (std::isfinite(points[i].threshold))
      CHECK(loaded[i].threshold == points[i].threshold);
  }
  std::remove(csv_path.c_str());

  std::string svg_path = "roc_render_test.svg";
  hagnn::write_roc_svg(svg_path, points);
  std::string svg = slurp(svg_path);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  std::remove(svg_path.c_str());

  CHECK_THROWS_AS(hagnn::write_roc_svg("bad.svg", {}),
                  hagnn::PreconditionError);
}

TEST_CASE("cohorts round trip through the directory layout") {
  namespace fs = std::filesystem;
  hagnn::CohortConfig gen;
  gen.n_subjects = 3;
  gen.roi_count = 6;
  gen.timepoints = 12;
  gen.seed = 3;
  std::vector<Subject> subjects = hagnn::generate_synthetic_cohort(gen);

  hagnn::CohortDir cohort;
  cohort.subjects = subjects;
  cohort.roi_count = 6;
  for (std::size_t r = 0; r < 6; ++r) cohort.channel_rois.push_back(r);

  std::string raw_dir = "cohort_io_test_raw";
  hagnn::save_cohort(raw_dir, cohort);
  CHECK(fs::exists(raw_dir + "/cohort.json"));
  CHECK(fs::exists(raw_dir + "/ts/" + subjects[0].id + "_v00.csv"));
  CHECK_FALSE(fs::exists(raw_dir + "/fc"));

  hagnn::CohortDir loaded = hagnn::load_cohort(raw_dir);
  REQUIRE(loaded.subjects.size() == subjects.size());
  CHECK(loaded.roi_count == 6);
  CHECK(loaded.channel_rois == cohort.channel_rois);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const Subject& want = subjects[i];
    const Subject& got = loaded.subjects[i];
    CHECK(got.id == want.id);
    REQUIRE(got.visits.size() == want.visits.size());
    for (std::size_t v = 0; v < want.visits.size(); ++v) {
      CHECK(got.visits[v].month_offset == want.visits[v].month_offset);
      CHECK(got.visits[v].diagnosis == want.visits[v].diagnosis);
      REQUIRE(got.visits[v].bold.has_value());
      const Tensor& wb = *want.visits[v].bold;
      const Tensor& gb = *got.visits[v].bold;
      REQUIRE(gb.same_shape(wb));
      for (std::size_t k = 0; k < wb.size(); ++k) CHECK(gb[k] == wb[k]);
      CHECK_FALSE(got.visits[v].fc.has_value());
    }
  }

  for (Subject& s : cohort.subjects) hagnn::compute_fc_in_place(s);
  std::string fc_dir = "cohort_io_test_fc";
  hagnn::save_cohort(fc_dir, cohort);
  CHECK(fs::exists(fc_dir + "/fc/" + subjects[0].id + "_v00.csv"));
  CHECK_FALSE(fs::exists(fc_dir + "/ts"));
  hagnn::CohortDir loaded_fc = hagnn::load_cohort(fc_dir);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    for (std::size_t v = 0; v < subjects[i].visits.size(); ++v) {
      REQUIRE(loaded_fc.subjects[i].visits[v].fc.has_value());
      const Tensor& wf = cohort.subjects[i].visits[v].fc->values;
      const Tensor& gf = loaded_fc.subjects[i].visits[v].fc->values;
      REQUIRE(gf.same_shape(wf));
      for (std::size_t k = 0; k < wf.size(); ++k) CHECK(gf[k] == wf[k]);
    }
  }

  CHECK_THROWS_AS(hagnn::load_cohort("no_such_cohort_dir"), hagnn::IoError);
  fs::remove_all(raw_dir);
  fs::remove_all(fc_dir);
}

TEST_CASE("run manifests are stable to the byte") {
  namespace fs = std::filesystem;
  hagnn::RunManifest m;
  m.command = "train";
  m.seed = 7;
  m.options["alpha"] = 0.9;
  m.options["rnn"] = "lstm";
  m.inputs["cohort"] = "data/cohort";

  std::string dir_a = "manifest_test_a";
  std::string dir_b = "manifest_test_b";
  fs::create_directories(dir_a);
  fs::create_directories(dir_b);
  hagnn::write_manifest(dir_a, m);
  hagnn::write_manifest(dir_b, m);
  CHECK(slurp(dir_a + "/manifest.json") == slurp(dir_b + "/manifest.json"));

  hagnn::RunManifest loaded = hagnn::read_manifest(dir_a);
  CHECK(loaded.command == "train");
  CHECK(loaded.seed == 7);
  CHECK(loaded.version == hagnn::kVersionString);
  CHECK(loaded.options.at("alpha").get<double>() == 0.9);
  CHECK(loaded.inputs.at("cohort").get<std::string>() == "data/cohort");

  hagnn::write_timings(dir_a, {{"fc", 1.25}, {"train", 30.5}});
  CHECK(fs::exists(dir_a + "/timings.txt"));
  // Timing noise lives outside the manifest, which stays byte-identical.
  CHECK(slurp(dir_a + "/manifest.json") == slurp(dir_b + "/manifest.json"));

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}
