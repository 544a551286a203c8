#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "hagnn/cohort.hpp"
#include "hagnn/synth.hpp"

using hagnn::CohortConfig;
using hagnn::Diagnosis;
using hagnn::Subject;
using hagnn::SubjectLabel;
using hagnn::Visit;

namespace {

Subject quick_subject(const std::string& id,
                      std::initializer_list<Diagnosis> dxs) {
  std::vector<Visit> visits;
  double offset = 0.0;
  for (Diagnosis d : dxs) {
    Visit v;
    v.diagnosis = d;
    v.month_offset = offset;
    offset += 12.0;
    visits.push_back(v);
  }
  return hagnn::make_subject(id, std::move(visits));
}

CohortConfig small_config(std::uint64_t seed) {
  CohortConfig cfg;
  cfg.n_subjects = 40;
  cfg.converter_fraction = 0.25;
  cfg.roi_count = 12;
  cfg.timepoints = 30;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("labeling covers all nine ordered diagnosis pairs") {
  using enum Diagnosis;
  const Diagnosis all[] = {kCN, kMCI, kAD};
  for (Diagnosis prev : all)
    for (Diagnosis last : all) {
      SubjectLabel got = hagnn::label_subject({prev, last});
      if (static_cast<int>(last) > static_cast<int>(prev))
        CHECK(got == SubjectLabel::kConverter);
      else if (static_cast<int>(last) < static_cast<int>(prev))
        CHECK(got == SubjectLabel::kReverter);
      else
        CHECK(got == SubjectLabel::kStable);
    }
}

TEST_CASE("labeling looks only at the final two visits") {
  using enum Diagnosis;
  CHECK(hagnn::label_subject({kCN, kCN, kMCI}) == SubjectLabel::kConverter);
  CHECK(hagnn::label_subject({kCN, kMCI, kMCI}) == SubjectLabel::kStable);
  CHECK(hagnn::label_subject({kMCI, kAD, kMCI}) == SubjectLabel::kReverter);
  CHECK_THROWS_AS(hagnn::label_subject({kCN}), hagnn::PreconditionError);
  CHECK_THROWS_AS(hagnn::label_subject({}), hagnn::PreconditionError);
}

TEST_CASE("diagnosis names round-trip") {
  using enum Diagnosis;
  for (Diagnosis d : {kCN, kMCI, kAD})
    CHECK(hagnn::diagnosis_from_string(hagnn::to_string(d)) == d);
  CHECK_THROWS_AS(hagnn::diagnosis_from_string("SMC"), hagnn::LabelError);
  CHECK(hagnn::subject_label_from_string("converter") ==
        SubjectLabel::kConverter);
  CHECK_THROWS_AS(hagnn::subject_label_from_string("unknown"),
                  hagnn::LabelError);
}

TEST_CASE("filtering removes short histories and reverters, keeps order") {
  using enum Diagnosis;
  std::vector<Subject> cohort;
  cohort.push_back(quick_subject("a", {kCN, kCN}));          // stable, kept
  cohort.push_back(quick_subject("b", {kCN}));               // too short
  cohort.push_back(quick_subject("c", {kMCI, kAD}));         // converter, kept
  cohort.push_back(quick_subject("d", {kAD, kMCI}));         // reverter
  cohort.push_back(quick_subject("e", {kCN, kMCI, kMCI}));   // stable, kept
  auto kept = hagnn::filter_cohort(std::move(cohort));
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].id == "a");
  CHECK(kept[1].id == "c");
  CHECK(kept[2].id == "e");
}

TEST_CASE("visit offsets must start at zero and strictly increase") {
  Visit v0, v1;
  v0.month_offset = 0.0;
  v1.month_offset = 0.0;
  CHECK_THROWS_AS(hagnn::make_subject("x", {v0, v1}),
                  hagnn::PreconditionError);
  v1.month_offset = -2.0;
  CHECK_THROWS_AS(hagnn::make_subject("x", {v0, v1}),
                  hagnn::PreconditionError);
  v0.month_offset = 3.0;
  v1.month_offset = 6.0;
  CHECK_THROWS_AS(hagnn::make_subject("x", {v0, v1}),
                  hagnn::PreconditionError);
  CHECK_THROWS_AS(hagnn::make_subject("x", {}), hagnn::PreconditionError);
}

TEST_CASE("pretraining split partitions subjects at the configured size") {
  auto split = hagnn::pretrain_split(10, 0.2, 99);
  CHECK(split.pretrain.size() == 2);
  CHECK(split.main.size() == 8);
  std::set<std::size_t> seen(split.pretrain.begin(), split.pretrain.end());
  seen.insert(split.main.begin(), split.main.end());
  CHECK(seen.size() == 10);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 9);

  auto again = hagnn::pretrain_split(10, 0.2, 99);
  CHECK(again.pretrain == split.pretrain);
  CHECK(again.main == split.main);
  auto other = hagnn::pretrain_split(10, 0.2, 100);
  CHECK(other.pretrain != split.pretrain);
}

TEST_CASE("pretraining split of 303 subjects takes 61") {
  auto split = hagnn::pretrain_split(303, 0.2, 7);
  CHECK(split.pretrain.size() == 61);
  CHECK(split.main.size() == 242);
}

TEST_CASE("pretraining split rejects bad arguments") {
  CHECK_THROWS_AS(hagnn::pretrain_split(1, 0.2, 0), hagnn::PreconditionError);
  CHECK_THROWS_AS(hagnn::pretrain_split(10, 0.0, 0), hagnn::PreconditionError);
  CHECK_THROWS_AS(hagnn::pretrain_split(10, 1.0, 0), hagnn::PreconditionError);
}

TEST_CASE("stratified folds balance sizes and converters") {
  using enum Diagnosis;
  std::vector<Subject> cohort;
  for (int i = 0; i < 8; ++i)
    cohort.push_back(quick_subject("s" + std::to_string(i), {kCN, kCN}));
  cohort.push_back(quick_subject("c0", {kCN, kMCI}));
  cohort.push_back(quick_subject("c1", {kMCI, kAD}));

  auto split = hagnn::kfold_split(cohort, 5, 11);
  CHECK(split.stratified);
  REQUIRE(split.folds.size() == 5);
  std::set<std::size_t> seen;
  int folds_with_converter = 0;
  for (const auto& fold : split.folds) {
    CHECK(fold.size() == 2);
    int conv = 0;
    for (std::size_t idx : fold) {
      seen.insert(idx);
      if (cohort[idx].label() == SubjectLabel::kConverter) ++conv;
    }
    CHECK(conv <= 1);
    folds_with_converter += conv;
  }
  CHECK(seen.size() == 10);
  CHECK(folds_with_converter == 2);

  auto again = hagnn::kfold_split(cohort, 5, 11);
  CHECK(again.folds == split.folds);
}

TEST_CASE("fold partition law holds across sizes, ks and seeds") {
  using enum Diagnosis;
  for (std::size_t n : {7u, 12u, 23u}) {
    std::vector<Subject> cohort;
    for (std::size_t i = 0; i < n; ++i) {
      bool conv = i % 4 == 0;
      cohort.push_back(quick_subject(
          "s" + std::to_string(i),
          conv ? std::initializer_list<Diagnosis>{kCN, kMCI}
               : std::initializer_list<Diagnosis>{kMCI, kMCI}));
    }
    for (std::size_t k : {2u, 3u, 5u}) {
      if (n < k) continue;
      for (std::uint64_t seed : {1u, 2u}) {
        auto split = hagnn::kfold_split(cohort, k, seed);
        std::set<std::size_t> seen;
        std::size_t smallest = n, largest = 0;
        std::size_t conv_min = n, conv_max = 0;
        for (const auto& fold : split.folds) {
          smallest = std::min(smallest, fold.size());
          largest = std::max(largest, fold.size());
          std::size_t conv = 0;
          for (std::size_t idx : fold) {
            CHECK(seen.insert(idx).second);  // disjoint
            if (cohort[idx].label() == SubjectLabel::kConverter) ++conv;
          }
          conv_min = std::min(conv_min, conv);
          conv_max = std::max(conv_max, conv);
        }
        CHECK(seen.size() == n);  // coverage
        CHECK(largest - smallest <= 1);
        if (split.stratified) CHECK(conv_max - conv_min <= 1);
      }
    }
  }
}

TEST_CASE("too few converters falls back to unstratified folds") {
  using enum Diagnosis;
  std::vector<Subject> cohort;
  for (int i = 0; i < 10; ++i)
    cohort.push_back(quick_subject("s" + std::to_string(i), {kMCI, kMCI}));
  auto split = hagnn::kfold_split(cohort, 5, 3);
  CHECK_FALSE(split.stratified);
  std::set<std::size_t> seen;
  for (const auto& fold : split.folds) {
    CHECK(fold.size() == 2);
    seen.insert(fold.begin(), fold.end());
  }
  CHECK(seen.size() == 10);
}

TEST_CASE("kfold rejects degenerate arguments") {
  using enum Diagnosis;
  std::vector<Subject> cohort;
  for (int i = 0; i < 4; ++i)
    cohort.push_back(quick_subject("s" + std::to_string(i), {kCN, kCN}));
  CHECK_THROWS_AS(hagnn::kfold_split(cohort, 1, 0), hagnn::PreconditionError);
  CHECK_THROWS_AS(hagnn::kfold_split(cohort, 5, 0), hagnn::PreconditionError);
}

TEST_CASE("cohort config validation rejects inconsistent settings") {
  CohortConfig cfg;
  cfg.validate();  // defaults are fine

  CohortConfig bad = cfg;
  bad.n_subjects = 0;
  CHECK_THROWS_AS(bad.validate(), hagnn::ConfigError);
  bad = cfg;
  bad.converter_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), hagnn::ConfigError);  // rounds to zero
  bad = cfg;
  bad.visit_count_weights = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), hagnn::ConfigError);
  bad = cfg;
  bad.visit_count_weights[0] += 0.1;
  CHECK_THROWS_AS(bad.validate(), hagnn::ConfigError);
  bad = cfg;
  bad.mean_gap_months = 0.0;
  CHECK_THROWS_AS(bad.validate(), hagnn::ConfigError);
  bad = cfg;
  bad.effect_size = -1.0;
  CHECK_THROWS_AS(bad.validate(), hagnn::ConfigError);
  bad = cfg;
  bad.timepoints = 2;
  CHECK_THROWS_AS(bad.validate(), hagnn::ConfigError);
}

TEST_CASE("generation is bit-identical for the same seed") {
  auto a = hagnn::generate_synthetic_cohort(small_config(7));
  auto b = hagnn::generate_synthetic_cohort(small_config(7));
  REQUIRE(a.size() == b.size());
  for (std::size_t s = 0; s < a.size(); ++s) {
    CHECK(a[s].id == b[s].id);
    REQUIRE(a[s].visits.size() == b[s].visits.size());
    for (std::size_t i = 0; i < a[s].visits.size(); ++i) {
      const Visit& va = a[s].visits[i];
      const Visit& vb = b[s].visits[i];
      CHECK(va.diagnosis == vb.diagnosis);
      CHECK(va.month_offset == vb.month_offset);
      REQUIRE(va.bold.has_value());
      REQUIRE(vb.bold.has_value());
      REQUIRE(va.bold->same_shape(*vb.bold));
      bool equal = true;
      for (std::size_t k = 0; k < va.bold->size(); ++k)
        if ((*va.bold)[k] != (*vb.bold)[k]) equal = false;
      CHECK(equal);
    }
  }
  auto c = hagnn::generate_synthetic_cohort(small_config(8));
  CHECK((*c[0].visits[0].bold)[0] != (*a[0].visits[0].bold)[0]);
}

TEST_CASE("generated cohorts satisfy the visit and label invariants") {
  auto cohort = hagnn::generate_synthetic_cohort(small_config(21));
  REQUIRE(cohort.size() == 40);
  std::size_t converters = 0;
  for (const Subject& s : cohort) {
    REQUIRE(s.visits.size() >= 2);
    REQUIRE(s.visits.size() <= 10);
    CHECK(s.visits.front().month_offset == 0.0);
    for (std::size_t i = 1; i < s.visits.size(); ++i)
      CHECK(s.visits[i].month_offset > s.visits[i - 1].month_offset);
    // No reverters and no direct CN->AD jumps anywhere in a history.
    for (std::size_t i = 1; i < s.visits.size(); ++i) {
      int step = static_cast<int>(s.visits[i].diagnosis) -
                 static_cast<int>(s.visits[i - 1].diagnosis);
      CHECK(step >= 0);
      CHECK(step <= 1);
    }
    if (s.label() == SubjectLabel::kConverter) ++converters;
  }
  CHECK(converters == 10);  // round(0.25 * 40)
}

TEST_CASE("default cohort reproduces the headline statistics") {
  CohortConfig cfg;
  cfg.seed = 42;
  cfg.timepoints = 10;  // series length does not affect the statistics here
  auto cohort = hagnn::generate_synthetic_cohort(cfg);
  REQUIRE(cohort.size() == 303);

  std::size_t converters = 0;
  std::size_t total_visits = 0;
  double gap_sum = 0.0;
  std::size_t gap_count = 0;
  for (const Subject& s : cohort) {
    if (s.label() == SubjectLabel::kConverter) ++converters;
    total_visits += s.visits.size();
    for (std::size_t i = 1; i < s.visits.size(); ++i) {
      gap_sum += s.visits[i].month_offset - s.visits[i - 1].month_offset;
      ++gap_count;
    }
  }
  CHECK(converters == 53);
  CHECK(std::abs(gap_sum / gap_count - 14.78) < 1.5);
  // Mean history length close to the observed scans-per-subject ratio.
  double mean_visits = static_cast<double>(total_visits) / 303.0;
  CHECK(mean_visits > 3.0);
  CHECK(mean_visits < 4.3);
}

TEST_CASE("gap sample mean converges to the configured mean") {
  hagnn::RngStream rng(5);
  double shape = 2.0;
  double scale = 14.78 / shape;
  double sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) sum += rng.gamma(shape, scale);
  CHECK(std::abs(sum / n - 14.78) / 14.78 < 0.02);
}

TEST_CASE("fc computation in place swaps the series for a matrix") {
  auto cohort = hagnn::generate_synthetic_cohort(small_config(31));
  Subject& s = cohort[0];
  hagnn::compute_fc_in_place(s);
  for (const Visit& v : s.visits) {
    CHECK_FALSE(v.bold.has_value());
    REQUIRE(v.fc.has_value());
    CHECK(v.fc->num_rois() == 12);
  }
  Visit empty;
  Subject broken;
  broken.id = "broken";
  broken.visits.push_back(empty);
  CHECK_THROWS_AS(hagnn::compute_fc_in_place(broken), hagnn::StateError);
}

TEST_CASE("rng streams are independent under tag and index derivation") {
  std::uint64_t s1 = hagnn::derive_seed(7, "alpha", 0);
  std::uint64_t s2 = hagnn::derive_seed(7, "beta", 0);
  std::uint64_t s3 = hagnn::derive_seed(7, "alpha", 1);
  CHECK(s1 != s2);
  CHECK(s1 != s3);
  CHECK(s1 == hagnn::derive_seed(7, "alpha", 0));
}

TEST_CASE("rng distributions have the expected moments") {
  hagnn::RngStream rng(123);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sq += u * u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
  CHECK(std::abs((sq / n - 0.25) - 1.0 / 12.0) < 0.01);

  sum = sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);

  std::vector<double> w = {1.0, 3.0};
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += rng.sample_discrete(w) == 1 ? 1 : 0;
  CHECK(std::abs(static_cast<double>(ones) / n - 0.75) < 0.01);
  CHECK_THROWS_AS(rng.sample_discrete({0.0, 0.0}), hagnn::PreconditionError);
  CHECK_THROWS_AS(rng.sample_discrete({-1.0, 2.0}), hagnn::PreconditionError);
  CHECK_THROWS_AS(rng.uniform_index(0), hagnn::PreconditionError);
  CHECK_THROWS_AS(rng.gamma(0.0, 1.0), hagnn::PreconditionError);
}
