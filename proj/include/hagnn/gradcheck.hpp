#pragma once

// Finite-difference oracle for the tape. Given a deterministic scalar
// function built from tape ops, compares backward() gradients against central
// differences coordinate by coordinate.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hagnn/errors.hpp"
#include "hagnn/tape.hpp"
#include "hagnn/tensor.hpp"

namespace hagnn {

// Builds a scalar loss on the tape from the given parameter leaves, in the
// order the parameters were supplied.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst;  // coordinate where max_rel_err occurred
};

namespace detail {

inline double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, false));
  Var loss = f(tape, leaves);
  const Tensor& out = tape.value(loss);
  if (!out.is_scalar())
    throw ContractError("finite_diff_check: f must return a scalar");
  return out.item();
}

}  // namespace detail

// Central differences (f(p+h) - f(p-h)) / 2h against analytic gradients.
// Relative error per coordinate uses denominator max(|a|, |b|, denom_floor);
// raising the floor lets callers ignore coordinates whose true gradient is
// below the finite-difference noise floor. The function is evaluated twice at
// the base point first; if the two values disagree bitwise, f is not
// deterministic and the oracle refuses to judge.
inline GradCheckReport finite_diff_check(const ScalarFn& f,
                                         const std::vector<Tensor>& params,
                                         double h = 1e-5, double tol = 1e-4,
                                         double denom_floor = 1e-8) {
  if (!(h > 0.0)) throw PreconditionError("finite_diff_check: h must be > 0");
  double base_a = detail::eval_scalar(f, params);
  double base_b = detail::eval_scalar(f, params);
  if (base_a != base_b)
    throw OracleError(
        "finite_diff_check: f is not deterministic (two base evaluations "
        "disagree)");

  // Analytic gradients from one taped forward + backward.
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, true));
  Var loss = f(tape, leaves);
  if (!tape.value(loss).is_scalar())
    throw ContractError("finite_diff_check: f must return a scalar");
  tape.backward(loss);

  GradCheckReport report;
  std::vector<Tensor> work = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& analytic = tape.grad(leaves[p]);
    for (std::size_t k = 0; k < work[p].size(); ++k) {
      double saved = work[p][k];
      work[p][k] = saved + h;
      double f_plus = detail::eval_scalar(f, work);
      work[p][k] = saved - h;
      double f_minus = detail::eval_scalar(f, work);
      work[p][k] = saved;
      double numeric = (f_plus - f_minus) / (2.0 * h);
      double a = analytic[k];
      double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
      double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "param " + std::to_string(p) + " elem " +
                       std::to_string(k) + " analytic " + std::to_string(a) +
                       " numeric " + std::to_string(numeric);
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace hagnn
