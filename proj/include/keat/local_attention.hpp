#pragma once

#include <cstddef>
#include <string>

#include "keat/tape.hpp"

namespace keat {

enum class ScoreMode { Original, ImprovedAbs };
enum class WindowSource { Learned, Frequency };

struct LocalAttnMode {
  ScoreMode score = ScoreMode::Original;
  WindowSource window = WindowSource::Learned;
  double omega = 1.0;  // center frequency, Frequency windows only
};

/// Weights of one local self-attention head over inputs of width d.
struct LocalAttnWeights {
  Var w_e, b_e, v_e;  // score: v_e . tanh(u w_e + b_e)       (d x s), (s), (s)
  Var w_beta;         // scalar multiplier on the score        (1)
  Var w_q, v_q;       // center: v_q . tanh(u w_q)             (d x s), (s)
  Var w_d, v_d;       // learned window: v_d . tanh(Kbar w_d)  (d x s), (s)
  Var w_d_freq, u_d;  // frequency window: u_d . tanh(w_d_freq / omega)  (s), (s)
  Var w_v;            // value map                             (d x d_out)
};

LocalAttnWeights local_attn_weights(Tape& tape, const ParamStore& store, const std::string& prefix);

/// e = v_e . tanh(w_e^T u + b_e) for one input vector u (d).
Var score_original(Var u, const LocalAttnWeights& w);
/// |score_original(u)|: strongly negative responses score as high as positive ones.
Var score_improved(Var u, const LocalAttnWeights& w);
/// Scores of every row of U (n x d), as a vector (n).
Var step_scores(Var inputs, const LocalAttnWeights& w, ScoreMode mode);

/// z = u_d . tanh(w_d_freq / omega). Requires omega > 0.
Var window_scalar_frequency(double omega, Var w_d_freq, Var u_d);

inline constexpr double kMinWindow = 1e-3;

struct CenterWindow {
  Var centers;  // Q_t = n * sigmoid(q_t), (n)
  Var window;   // D = max(n * sigmoid(z), kMinWindow), (1)
};

/// Predicted centers per step and the shared window size, scaled by the
/// sequence length n. The learned window reads the mean key `key_mean` (d).
CenterWindow predict_center_window(Var inputs, Var key_mean, const LocalAttnWeights& w,
                                   const LocalAttnMode& mode);

/// G = -(t - center)^2 / (2 sigma^2).
double gaussian_bias(double t, double center, double sigma);

struct LocalAttnResult {
  Var output;  // (d_out)
  Var beta;    // (n), distribution over steps
  Var scores;  // (n)
  Var bias;    // (n), Gaussian bias G_t
  CenterWindow center_window;
};

/// beta = softmax_t(w_beta * e_t + G_t) with steps t = 1..n and
/// sigma = D / 2; output = sum_t beta_t (u_t w_v).
LocalAttnResult local_attention_layer(Var inputs, const LocalAttnWeights& w,
                                      const LocalAttnMode& mode);

}  // namespace keat
