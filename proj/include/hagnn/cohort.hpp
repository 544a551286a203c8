#pragma once

// Longitudinal subject model: visits with diagnoses and month offsets,
// stable/converter/reverter labeling from the last two visits, cohort
// filtering, and leakage-free subject-level splits (pretraining split and
// stratified k-fold).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hagnn/connectome.hpp"
#include "hagnn/errors.hpp"
#include "hagnn/rng.hpp"

namespace hagnn {

// Severity order CN < MCI < AD; the integer values carry the order.
enum class Diagnosis : int { kCN = 0, kMCI = 1, kAD = 2 };

inline const char* to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::kCN: return "CN";
    case Diagnosis::kMCI: return "MCI";
    case Diagnosis::kAD: return "AD";
  }
  return "?";
}

inline Diagnosis diagnosis_from_string(const std::string& s) {
  if (s == "CN") return Diagnosis::kCN;
  if (s == "MCI") return Diagnosis::kMCI;
  if (s == "AD") return Diagnosis::kAD;
  throw LabelError("unknown diagnosis '" + s + "'");
}

enum class SubjectLabel { kStable, kConverter, kReverter };

inline const char* to_string(SubjectLabel l) {
  switch (l) {
    case SubjectLabel::kStable: return "stable";
    case SubjectLabel::kConverter: return "converter";
    case SubjectLabel::kReverter: return "reverter";
  }
  return "?";
}

inline SubjectLabel subject_label_from_string(const std::string& s) {
  if (s == "stable") return SubjectLabel::kStable;
  if (s == "converter") return SubjectLabel::kConverter;
  if (s == "reverter") return SubjectLabel::kReverter;
  throw LabelError("unknown subject label '" + s + "'");
}

// Compares the last two diagnoses under the severity order.
inline SubjectLabel label_subject(const std::vector<Diagnosis>& diagnoses) {
  if (diagnoses.size() < 2)
    throw PreconditionError(
        "label_subject: at least two visits are required, got " +
        std::to_string(diagnoses.size()));
  int last = static_cast<int>(diagnoses[diagnoses.size() - 1]);
  int prev = static_cast<int>(diagnoses[diagnoses.size() - 2]);
  if (last > prev) return SubjectLabel::kConverter;
  if (last < prev) return SubjectLabel::kReverter;
  return SubjectLabel::kStable;
}

struct Visit {
  std::optional<Tensor> bold;  // T x R raw ROI series, present until FC is cut
  std::optional<FCMatrix> fc;
  Diagnosis diagnosis = Diagnosis::kCN;
  double month_offset = 0.0;  // months since the subject's first visit
};

struct Subject {
  std::string id;
  std::vector<Visit> visits;

  std::vector<Diagnosis> diagnoses() const {
    std::vector<Diagnosis> d;
    d.reserve(visits.size());
    for (const Visit& v : visits) d.push_back(v.diagnosis);
    return d;
  }

  SubjectLabel label() const { return label_subject(diagnoses()); }
};

// Validates visit ordering: first offset zero, offsets strictly increasing.
inline Subject make_subject(std::string id, std::vector<Visit> visits) {
  if (visits.empty())
    throw PreconditionError("make_subject: subject '" + id + "' has no visits");
  if (visits.front().month_offset != 0.0)
    throw PreconditionError("make_subject: subject '" + id +
                            "' first visit offset must be 0, got " +
                            std::to_string(visits.front().month_offset));
  for (std::size_t i = 1; i < visits.size(); ++i)
    if (!(visits[i].month_offset > visits[i - 1].month_offset))
      throw PreconditionError("make_subject: subject '" + id +
                              "' visit offsets must strictly increase");
  Subject s;
  s.id = std::move(id);
  s.visits = std::move(visits);
  return s;
}

// Keeps subjects with at least two visits that are not reverters; preserves
// input order.
inline std::vector<Subject> filter_cohort(std::vector<Subject> subjects) {
  std::vector<Subject> kept;
  kept.reserve(subjects.size());
  for (Subject& s : subjects) {
    if (s.visits.size() < 2) continue;
    if (s.label() == SubjectLabel::kReverter) continue;
    kept.push_back(std::move(s));
  }
  return kept;
}

// Index sets into the original subject list; each side sorted ascending.
struct PretrainSplit {
  std::vector<std::size_t> pretrain;
  std::vector<std::size_t> main;
};

// Disjoint subject-level partition; the pretraining side gets
// round(fraction * N) subjects chosen by a seeded shuffle.
inline PretrainSplit pretrain_split(std::size_t n_subjects, double fraction,
                                    std::uint64_t seed) {
  if (n_subjects < 2)
    throw PreconditionError("pretrain_split: need at least 2 subjects, got " +
                            std::to_string(n_subjects));
  if (!(fraction > 0.0 && fraction < 1.0))
    throw PreconditionError("pretrain_split: fraction must be in (0,1), got " +
                            std::to_string(fraction));
  std::size_t n_pre = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n_subjects)));
  std::vector<std::size_t> order(n_subjects);
  for (std::size_t i = 0; i < n_subjects; ++i) order[i] = i;
  RngStream rng(derive_seed(seed, "pretrain_split"));
  rng.shuffle(order);
  PretrainSplit split;
  split.pretrain.assign(order.begin(), order.begin() + n_pre);
  split.main.assign(order.begin() + n_pre, order.end());
  std::sort(split.pretrain.begin(), split.pretrain.end());
  std::sort(split.main.begin(), split.main.end());
  return split;
}

struct KFoldSplit {
  std::vector<std::vector<std::size_t>> folds;  // indices, each sorted
  bool stratified = false;
};

// Stratified k-fold over {stable, converter}: converters are dealt
// round-robin, stables go greedily to the smallest fold, so both fold sizes
// and per-fold converter counts differ by at most one. Fewer converters than
// folds draws a warning (some folds get none); an empty stratum falls back
// to plain balanced folds.
inline KFoldSplit kfold_split(const std::vector<Subject>& subjects,
                              std::size_t k, std::uint64_t seed) {
  std::size_t n = subjects.size();
  if (k < 2)
    throw PreconditionError("kfold_split: k must be at least 2, got " +
                            std::to_string(k));
  if (n < k)
    throw PreconditionError("kfold_split: " + std::to_string(n) +
                            " subjects cannot fill " + std::to_string(k) +
                            " folds");
  std::vector<std::size_t> converters;
  std::vector<std::size_t> stables;
  for (std::size_t i = 0; i < n; ++i) {
    if (subjects[i].label() == SubjectLabel::kConverter)
      converters.push_back(i);
    else
      stables.push_back(i);
  }

  KFoldSplit split;
  split.folds.assign(k, {});
  RngStream rng(derive_seed(seed, "kfold_split"));

  if (converters.empty() || stables.empty()) {
    std::cerr << "kfold_split: a label stratum is empty; folds are balanced "
                 "but not stratified\n";
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < n; ++i) split.folds[i % k].push_back(order[i]);
  } else {
    if (converters.size() < k)
      std::cerr << "kfold_split: only " << converters.size()
                << " converters for " << k
                << " folds; some folds will hold none\n";
    split.stratified = true;
    rng.shuffle(converters);
    rng.shuffle(stables);
    for (std::size_t i = 0; i < converters.size(); ++i)
      split.folds[i % k].push_back(converters[i]);
    for (std::size_t idx : stables) {
      std::size_t smallest = 0;
      for (std::size_t f = 1; f < k; ++f)
        if (split.folds[f].size() < split.folds[smallest].size()) smallest = f;
      split.folds[smallest].push_back(idx);
    }
  }
  for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
  return split;
}

// Replaces each visit's raw series with its Pearson FC matrix and releases
// the series.
inline void compute_fc_in_place(Subject& subject) {
  for (Visit& v : subject.visits) {
    if (v.fc.has_value()) continue;
    if (!v.bold.has_value())
      throw StateError("compute_fc_in_place: visit of '" + subject.id +
                       "' has neither raw series nor FC");
    v.fc = pearson_fc(BoldMatrix(*v.bold, ChannelKind::kRoi));
    v.bold.reset();
  }
}

}  // namespace hagnn
