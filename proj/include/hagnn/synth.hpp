#pragma once

// Seeded synthetic cohort generator. Stands in for restricted longitudinal
// imaging data: it reproduces the cohort's headline statistics (size,
// converter share, visit-count histogram, mean inter-visit gap) and plants a
// latent-factor signal that separates diagnostic stages and gives converters
// a drifting trajectory over their final two visits.
//
// Signal model per visit: x_t = A z_t + e_t with z_t ~ N(0, I_q) latent
// factors, e_t ~ N(0, 1) channel noise, and loading matrix
// A = A0 + effect_size * (P_prev + lambda * (P_next - P_prev)), where P_d is
// a per-stage perturbation. effect_size = 0 collapses every stage to the same
// loading matrix, so labels carry no signal (the null experiment).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "hagnn/cohort.hpp"
#include "hagnn/errors.hpp"
#include "hagnn/rng.hpp"
#include "hagnn/tape.hpp"
#include "hagnn/tensor.hpp"

namespace hagnn {

struct CohortConfig {
  std::size_t n_subjects = 303;
  double converter_fraction = 53.0 / 303.0;
  // Probability of 2, 3, ..., 10 visits; mirrors the observed concentration
  // on short histories with a thin tail past seven.
  std::vector<double> visit_count_weights = {0.32, 0.27, 0.17, 0.09, 0.06,
                                             0.04, 0.03, 0.01, 0.01};
  double mean_gap_months = 14.78;
  // Coefficient of variation of the Gamma gap distribution; the default
  // corresponds to shape 2.
  double gap_jitter = 0.7071067811865476;
  std::size_t roi_count = 100;
  std::size_t timepoints = 120;
  double effect_size = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_subjects == 0)
      throw ConfigError("cohort: n_subjects must be positive");
    if (!(converter_fraction >= 0.0 && converter_fraction < 1.0))
      throw ConfigError("cohort: converter_fraction must be in [0, 1)");
    if (static_cast<std::size_t>(std::llround(
            converter_fraction * static_cast<double>(n_subjects))) < 1)
      throw ConfigError(
          "cohort: converter_fraction * n_subjects rounds below one "
          "converter");
    if (visit_count_weights.size() != 9)
      throw ConfigError("cohort: visit_count_weights must cover 2..10 visits");
    double sum = 0.0;
    for (double w : visit_count_weights) {
      if (w < 0.0) throw ConfigError("cohort: negative visit-count weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("cohort: visit-count weights must sum to 1");
    if (!(mean_gap_months > 0.0))
      throw ConfigError("cohort: mean_gap_months must be positive");
    if (!(gap_jitter > 0.0))
      throw ConfigError("cohort: gap_jitter must be positive");
    if (roi_count < 2) throw ConfigError("cohort: need at least 2 ROIs");
    if (timepoints < 3) throw ConfigError("cohort: need at least 3 timepoints");
    if (effect_size < 0.0)
      throw ConfigError("cohort: effect_size must be non-negative");
  }
};

namespace detail {

inline Tensor gaussian_matrix(RngStream& rng, std::size_t rows,
                              std::size_t cols, double stddev) {
  Tensor m(rows, cols);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = rng.normal(0.0, stddev);
  return m;
}

// Share of converters that go CN->MCI; the rest go MCI->AD. No one converts
// CN->AD directly.
inline constexpr double kCnToMciShare = 16.0 / 53.0;

// Last-diagnosis mix for stable subjects.
inline constexpr double kStableCnShare = 0.42;
inline constexpr double kStableMciShare = 0.38;

// Share of eligible stable subjects whose history contains an already
// completed transition (e.g. CN, MCI, MCI): keeps multi-stage histories from
// existing only among converters.
inline constexpr double kStableTransitionShare = 0.10;

}  // namespace detail

// Deterministic given config.seed. Visit series are emitted at ROI level
// (timepoints x roi_count).
inline std::vector<Subject> generate_synthetic_cohort(const CohortConfig& cfg) {
  cfg.validate();
  const std::size_t R = cfg.roi_count;
  const std::size_t T = cfg.timepoints;
  const std::size_t q = 8;  // latent factors

  // Cohort-level stage structure: one base loading, one perturbation per
  // diagnosis. Scales chosen so channel signal power is near the unit noise
  // power and stage templates differ by a moderate margin at effect_size 1.
  RngStream template_rng(derive_seed(cfg.seed, "templates"));
  const double base_scale = 1.0 / std::sqrt(static_cast<double>(q));
  const double stage_scale = 0.35 / std::sqrt(static_cast<double>(q));
  Tensor base = detail::gaussian_matrix(template_rng, R, q, base_scale);
  std::vector<Tensor> stage;
  for (int d = 0; d < 3; ++d)
    stage.push_back(detail::gaussian_matrix(template_rng, R, q, stage_scale));

  // Converter/stable role per subject slot.
  std::size_t n_conv = static_cast<std::size_t>(std::llround(
      cfg.converter_fraction * static_cast<double>(cfg.n_subjects)));
  std::vector<char> is_converter(cfg.n_subjects, 0);
  for (std::size_t i = 0; i < n_conv; ++i) is_converter[i] = 1;
  RngStream assign_rng(derive_seed(cfg.seed, "assign"));
  assign_rng.shuffle(is_converter);

  std::vector<Subject> cohort;
  cohort.reserve(cfg.n_subjects);
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    RngStream rng(derive_seed(cfg.seed, "subject", s));
    std::size_t m = 2 + rng.sample_discrete(cfg.visit_count_weights);

    double shape = 1.0 / (cfg.gap_jitter * cfg.gap_jitter);
    double scale = cfg.mean_gap_months / shape;
    std::vector<double> offsets(m, 0.0);
    for (std::size_t i = 1; i < m; ++i)
      offsets[i] = offsets[i - 1] + rng.gamma(shape, scale);

    // Script the diagnosis trajectory as (stage before, stage after,
    // first visit at the new stage). lambda interpolates the loading matrix
    // from the old stage to the new one, reaching 0.5 one visit before the
    // switch.
    std::vector<Diagnosis> dx(m);
    std::vector<double> lambda(m, 0.0);
    Diagnosis d_prev, d_next;
    if (is_converter[s]) {
      bool cn_to_mci = rng.uniform() < detail::kCnToMciShare;
      d_prev = cn_to_mci ? Diagnosis::kCN : Diagnosis::kMCI;
      d_next = cn_to_mci ? Diagnosis::kMCI : Diagnosis::kAD;
      for (std::size_t i = 0; i < m; ++i) dx[i] = d_prev;
      dx[m - 1] = d_next;
      lambda[m - 1] = 1.0;
      lambda[m - 2] = 0.5;
    } else {
      double u = rng.uniform();
      Diagnosis last = u < detail::kStableCnShare ? Diagnosis::kCN
                       : u < detail::kStableCnShare + detail::kStableMciShare
                           ? Diagnosis::kMCI
                           : Diagnosis::kAD;
      d_prev = d_next = last;
      for (std::size_t i = 0; i < m; ++i) dx[i] = last;
      bool can_transition = last != Diagnosis::kCN && m >= 3;
      if (can_transition &&
          rng.uniform() < detail::kStableTransitionShare) {
        d_prev = static_cast<Diagnosis>(static_cast<int>(last) - 1);
        // First visit at the new stage; at least two stay there so the
        // subject remains stable.
        std::size_t j = 1 + rng.uniform_index(m - 2);
        for (std::size_t i = 0; i < j; ++i) dx[i] = d_prev;
        for (std::size_t i = 0; i < m; ++i) lambda[i] = i >= j ? 1.0 : 0.0;
        lambda[j - 1] = 0.5;
      } else {
        for (std::size_t i = 0; i < m; ++i) lambda[i] = 1.0;
      }
    }

    std::vector<Visit> visits;
    visits.reserve(m);
    const Tensor& pp = stage[static_cast<int>(d_prev)];
    const Tensor& pn = stage[static_cast<int>(d_next)];
    for (std::size_t i = 0; i < m; ++i) {
      Tensor loading(R, q);
      for (std::size_t k = 0; k < loading.size(); ++k)
        loading[k] = base[k] + cfg.effect_size *
                                   (pp[k] + lambda[i] * (pn[k] - pp[k]));
      Tensor latents(T, q);
      Tensor noise(T, R);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < q; ++f) latents.at(t, f) = rng.normal();
        for (std::size_t r = 0; r < R; ++r) noise.at(t, r) = rng.normal();
      }
      Tensor series(T, R);
      emap(series).noalias() = emap(latents) * emap(loading).transpose();
      for (std::size_t k = 0; k < series.size(); ++k) series[k] += noise[k];

      Visit v;
      v.bold = std::move(series);
      v.diagnosis = dx[i];
      v.month_offset = offsets[i];
      visits.push_back(std::move(v));
    }

    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "sub-%04zu", s + 1);
    cohort.push_back(make_subject(idbuf, std::move(visits)));
  }
  return cohort;
}

}  // namespace hagnn
