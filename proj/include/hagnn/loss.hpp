#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hagnn/errors.hpp"
#include "hagnn/tape.hpp"

namespace hagnn {

// Probabilities are clamped away from {0, 1} before any logarithm.
inline constexpr double kProbClampLo = 1e-7;
inline constexpr double kProbClampHi = 1.0 - 1e-7;

struct FocalLossConfig {
  double alpha = 0.9;  // weight on the converter (minority) class
  double gamma = 3.0;  // focusing exponent

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw ConfigError("focal loss: alpha must be in (0, 1], got " +
                        std::to_string(alpha));
    if (!(gamma >= 0.0))
      throw ConfigError("focal loss: gamma must be non-negative, got " +
                        std::to_string(gamma));
  }
};

// Cross-entropy reshaped to discount easy examples and up-weight the rare
// converter class: alpha (1-p)^gamma on converters, (1-alpha) p^gamma on
// stables, with p the predicted converter probability.
inline double focal_loss(double p, bool converter_target,
                         const FocalLossConfig& cfg) {
  cfg.validate();
  double pc = std::min(std::max(p, kProbClampLo), kProbClampHi);
  if (converter_target)
    return -cfg.alpha * std::pow(1.0 - pc, cfg.gamma) * std::log(pc);
  return -(1.0 - cfg.alpha) * std::pow(pc, cfg.gamma) * std::log(1.0 - pc);
}

// Differentiable counterpart; p is a [1 x 1] converter probability.
inline Var focal_loss_term(Tape& tape, Var p, bool converter_target,
                           const FocalLossConfig& cfg) {
  cfg.validate();
  Var pc = tape.clamp(p, kProbClampLo, kProbClampHi);
  if (converter_target) {
    Var miss = tape.add_scalar(tape.scalar_mul(pc, -1.0), 1.0);  // 1 - p
    Var mod = tape.pow_scalar(miss, cfg.gamma);
    return tape.scalar_mul(tape.mul(mod, tape.log(pc)), -cfg.alpha);
  }
  Var other = tape.add_scalar(tape.scalar_mul(pc, -1.0), 1.0);
  Var mod = tape.pow_scalar(pc, cfg.gamma);
  return tape.scalar_mul(tape.mul(mod, tape.log(other)), -(1.0 - cfg.alpha));
}

// Mean focal loss over a batch of converter probabilities.
inline Var focal_loss_batch(Tape& tape, const std::vector<Var>& probs,
                            const std::vector<int>& targets,
                            const FocalLossConfig& cfg) {
  if (probs.empty())
    throw PreconditionError("focal_loss_batch: empty batch");
  if (probs.size() != targets.size())
    throw DimensionError("focal_loss_batch: " + std::to_string(probs.size()) +
                         " probabilities vs " + std::to_string(targets.size()) +
                         " targets");
  Var total = focal_loss_term(tape, probs[0], targets[0] != 0, cfg);
  for (std::size_t i = 1; i < probs.size(); ++i)
    total = tape.add(total,
                     focal_loss_term(tape, probs[i], targets[i] != 0, cfg));
  return tape.scalar_mul(total, 1.0 / static_cast<double>(probs.size()));
}

// Multiclass cross-entropy -log p[true] on one [1 x C] probability row.
inline Var cross_entropy_row(Tape& tape, Var probs, std::size_t true_class) {
  const Tensor& pv = tape.value(probs);
  if (pv.rows() != 1)
    throw DimensionError("cross_entropy_row: expected one row, got " +
                         std::to_string(pv.rows()));
  if (true_class >= pv.cols())
    throw PreconditionError("cross_entropy_row: class " +
                            std::to_string(true_class) + " out of range " +
                            std::to_string(pv.cols()));
  Var pt = tape.slice(probs, 0, 1, true_class, true_class + 1);
  return tape.scalar_mul(tape.log(tape.clamp(pt, 1e-12, 1.0)), -1.0);
}

}  // namespace hagnn
