#pragma once

// Recurrent encoder over a subject's visit embeddings. Each timestep's input
// is the visit embedding with one extra feature: the scaled gap to the next
// visit, so the final step carries the forecast horizon. The classifier head
// maps the last hidden state to the converter probability.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hagnn/errors.hpp"
#include "hagnn/params.hpp"
#include "hagnn/tape.hpp"

namespace hagnn {

inline constexpr double kGapScale = 12.0;  // months per unit of gap feature

enum class RnnKind { kVanilla, kGru, kLstm };

inline const char* to_string(RnnKind k) {
  switch (k) {
    case RnnKind::kVanilla: return "vanilla";
    case RnnKind::kGru: return "gru";
    case RnnKind::kLstm: return "lstm";
  }
  return "?";
}

inline RnnKind rnn_kind_from_string(const std::string& s) {
  if (s == "vanilla") return RnnKind::kVanilla;
  if (s == "gru") return RnnKind::kGru;
  if (s == "lstm") return RnnKind::kLstm;
  throw ConfigError("unknown rnn kind '" + s + "' (vanilla|gru|lstm)");
}

struct TemporalConfig {
  RnnKind kind = RnnKind::kLstm;
  std::size_t input_dim = 0;   // embedding length + 1 gap feature
  std::size_t hidden_dim = 64;

  void validate() const {
    if (input_dim < 2)
      throw ConfigError("rnn: input_dim must cover embedding plus gap");
    if (hidden_dim < 1) throw ConfigError("rnn: hidden_dim must be positive");
  }
};

namespace detail {

inline const char* const kGruGates[] = {"update", "reset", "cand"};
inline const char* const kLstmGates[] = {"input", "forget", "cell", "output"};

}  // namespace detail

// Registers rnn.* (per-gate input/hidden weights and bias) and head.*
// (affine hidden -> 1). The LSTM forget-gate bias starts at 1.0.
inline void init_temporal_params(ParamStore& store, const TemporalConfig& cfg,
                                 RngStream& rng) {
  cfg.validate();
  auto add_gate = [&](const std::string& gate, double bias_init) {
    store.add("rnn." + gate + ".w_x",
              glorot_init(rng, cfg.input_dim, cfg.hidden_dim));
    store.add("rnn." + gate + ".w_h",
              glorot_init(rng, cfg.hidden_dim, cfg.hidden_dim));
    store.add("rnn." + gate + ".b",
              Tensor::full(1, cfg.hidden_dim, bias_init));
  };
  switch (cfg.kind) {
    case RnnKind::kVanilla:
      add_gate("cell", 0.0);
      break;
    case RnnKind::kGru:
      for (const char* g : detail::kGruGates) add_gate(g, 0.0);
      break;
    case RnnKind::kLstm:
      for (const char* g : detail::kLstmGates)
        add_gate(g, std::string(g) == "forget" ? 1.0 : 0.0);
      break;
  }
  store.add("head.w", glorot_init(rng, cfg.hidden_dim, 1));
  store.add("head.b", Tensor::zeros(1, 1));
}

struct RnnState {
  Var h;  // 1 x hidden
  Var c;  // 1 x hidden, LSTM only
};

inline RnnState rnn_zero_state(Tape& tape, const TemporalConfig& cfg) {
  RnnState s;
  s.h = tape.constant(Tensor::zeros(1, cfg.hidden_dim));
  if (cfg.kind == RnnKind::kLstm)
    s.c = tape.constant(Tensor::zeros(1, cfg.hidden_dim));
  return s;
}

// One recurrence step on a [1 x input_dim] input row.
inline RnnState rnn_cell_step(Tape& tape, const TemporalConfig& cfg, Var x,
                              const RnnState& state,
                              const BoundParams& params) {
  const Tensor& xv = tape.value(x);
  if (xv.rows() != 1 || xv.cols() != cfg.input_dim)
    throw DimensionError("rnn_cell_step: input must be 1x" +
                         std::to_string(cfg.input_dim) + ", got " +
                         std::to_string(xv.rows()) + "x" +
                         std::to_string(xv.cols()));
  auto affine = [&](const std::string& gate, Var hidden) {
    return tape.add(tape.add(tape.matmul(x, params["rnn." + gate + ".w_x"]),
                             tape.matmul(hidden, params["rnn." + gate + ".w_h"])),
                    params["rnn." + gate + ".b"]);
  };
  RnnState next;
  switch (cfg.kind) {
    case RnnKind::kVanilla: {
      next.h = tape.tanh(affine("cell", state.h));
      break;
    }
    case RnnKind::kGru: {
      Var z = tape.sigmoid(affine("update", state.h));
      Var r = tape.sigmoid(affine("reset", state.h));
      Var cand = tape.tanh(affine("cand", tape.mul(r, state.h)));
      // h' = (1 - z) (.) h + z (.) cand
      Var keep = tape.mul(tape.add_scalar(tape.scalar_mul(z, -1.0), 1.0),
                          state.h);
      next.h = tape.add(keep, tape.mul(z, cand));
      break;
    }
    case RnnKind::kLstm: {
      Var i = tape.sigmoid(affine("input", state.h));
      Var f = tape.sigmoid(affine("forget", state.h));
      Var g = tape.tanh(affine("cell", state.h));
      Var o = tape.sigmoid(affine("output", state.h));
      next.c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
      next.h = tape.mul(o, tape.tanh(next.c));
      break;
    }
  }
  return next;
}

// Pre-sigmoid logit of the converter probability after consuming the whole
// sequence. embeddings[t] is a [1 x (input_dim - 1)] Var; gaps[t] is months
// to the next visit (the last entry is the forecast horizon).
inline Var encode_history_logit(Tape& tape, const TemporalConfig& cfg,
                                const std::vector<Var>& embeddings,
                                const std::vector<double>& gaps,
                                const BoundParams& params) {
  cfg.validate();
  if (embeddings.empty())
    throw PreconditionError("encode_history: empty visit sequence");
  if (embeddings.size() != gaps.size())
    throw DimensionError("encode_history: " +
                         std::to_string(embeddings.size()) +
                         " embeddings vs " + std::to_string(gaps.size()) +
                         " gaps");
  for (double g : gaps)
    if (!(g > 0.0))
      throw PreconditionError("encode_history: gaps must be positive");
  RnnState state = rnn_zero_state(tape, cfg);
  for (std::size_t t = 0; t < embeddings.size(); ++t) {
    const Tensor& ev = tape.value(embeddings[t]);
    if (ev.rows() != 1 || ev.cols() + 1 != cfg.input_dim)
      throw DimensionError("encode_history: embedding length " +
                           std::to_string(ev.cols()) +
                           " does not match input_dim " +
                           std::to_string(cfg.input_dim) + " minus gap");
    Var gap = tape.constant(Tensor::scalar(gaps[t] / kGapScale));
    Var x = tape.concat_cols(embeddings[t], gap);
    state = rnn_cell_step(tape, cfg, x, state, params);
  }
  return tape.add(tape.matmul(state.h, params["head.w"]), params["head.b"]);
}

// Converter probability in (0, 1).
inline Var encode_history(Tape& tape, const TemporalConfig& cfg,
                          const std::vector<Var>& embeddings,
                          const std::vector<double>& gaps,
                          const BoundParams& params) {
  return tape.sigmoid(encode_history_logit(tape, cfg, embeddings, gaps, params));
}

}  // namespace hagnn
