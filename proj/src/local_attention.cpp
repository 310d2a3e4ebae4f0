#include "keat/local_attention.hpp"

#include "keat/errors.hpp"
#include "keat/ops.hpp"

namespace keat {

LocalAttnWeights local_attn_weights(Tape& tape, const ParamStore& store, const std::string& prefix) {
  auto p = [&](const char* name) { return tape.param(store, prefix + name); };
  LocalAttnWeights w;
  w.w_e = p(".w_e");
  w.b_e = p(".b_e");
  w.v_e = p(".v_e");
  w.w_beta = p(".w_beta");
  w.w_q = p(".w_q");
  w.v_q = p(".v_q");
  w.w_d = p(".w_d");
  w.v_d = p(".v_d");
  w.w_d_freq = p(".w_d_freq");
  w.u_d = p(".u_d");
  w.w_v = p(".w_v");
  return w;
}

namespace {

// (n x s) . (s) -> (n)
Var rows_dot(Var m, Var v) {
  const std::size_t n = m.value().rows();
  const std::size_t s = v.value().numel();
  return ops::reshape(ops::matmul(m, ops::reshape(v, {s, 1})), {n});
}

Var as_row(Var u) {
  const Tensor& uv = u.value();
  if (uv.rank() == 2 && uv.rows() == 1) return u;
  return ops::reshape(u, {1, uv.numel()});
}

}  // namespace

Var score_original(Var u, const LocalAttnWeights& w) {
  const Var hidden = ops::tanh(ops::add_bias(ops::matmul(as_row(u), w.w_e), w.b_e));
  return rows_dot(hidden, w.v_e);
}

Var score_improved(Var u, const LocalAttnWeights& w) { return ops::abs(score_original(u, w)); }

Var step_scores(Var inputs, const LocalAttnWeights& w, ScoreMode mode) {
  const Var e = rows_dot(ops::tanh(ops::add_bias(ops::matmul(inputs, w.w_e), w.b_e)), w.v_e);
  return mode == ScoreMode::ImprovedAbs ? ops::abs(e) : e;
}

Var window_scalar_frequency(double omega, Var w_d_freq, Var u_d) {
  if (!(omega > 0.0)) throw ContractError("window_scalar_frequency: omega must be positive");
  return ops::sum(ops::mul(ops::tanh(ops::scale(w_d_freq, 1.0 / omega)), u_d));
}

CenterWindow predict_center_window(Var inputs, Var key_mean, const LocalAttnWeights& w,
                                   const LocalAttnMode& mode) {
  const std::size_t n = inputs.value().rows();
  const double scale = static_cast<double>(n);
  const Var q = rows_dot(ops::tanh(ops::matmul(inputs, w.w_q)), w.v_q);
  Var z;
  if (mode.window == WindowSource::Frequency) {
    z = window_scalar_frequency(mode.omega, w.w_d_freq, w.u_d);
  } else {
    z = rows_dot(ops::tanh(ops::matmul(as_row(key_mean), w.w_d)), w.v_d);
  }
  CenterWindow cw;
  cw.centers = ops::scale(ops::sigmoid(q), scale);
  cw.window = ops::clamp_min(ops::scale(ops::sigmoid(ops::reshape(z, {1})), scale), kMinWindow);
  return cw;
}

double gaussian_bias(double t, double center, double sigma) {
  const double d = t - center;
  return -(d * d) / (2.0 * sigma * sigma);
}

LocalAttnResult local_attention_layer(Var inputs, const LocalAttnWeights& w,
                                      const LocalAttnMode& mode) {
  Tape& tape = inputs.tape();
  const Tensor& uv = inputs.value();
  if (uv.rank() != 2 || uv.rows() == 0) {
    throw DimensionError("local attention needs a non-empty (n x d) input");
  }
  const std::size_t n = uv.rows();
  LocalAttnResult res;
  res.scores = step_scores(inputs, w, mode.score);
  res.center_window = predict_center_window(inputs, ops::mean(inputs, 0), w, mode);

  Tensor positions({n});
  for (std::size_t t = 0; t < n; ++t) positions[t] = static_cast<double>(t + 1);
  const Var offset = ops::sub(tape.constant(std::move(positions)), res.center_window.centers);
  const Var sigma = ops::scale(res.center_window.window, 0.5);
  const Var two_var = ops::broadcast(ops::scale(ops::square(sigma), 2.0), {n});
  res.bias = ops::scale(ops::div(ops::square(offset), two_var), -1.0);

  const Var weighted = ops::mul(ops::broadcast(w.w_beta, {n}), res.scores);
  res.beta = ops::softmax(ops::add(weighted, res.bias), 0);
  const Var values = ops::matmul(inputs, w.w_v);
  const Var out = ops::matmul(ops::reshape(res.beta, {1, n}), values);
  res.output = ops::reshape(out, {out.value().cols()});
  return res;
}

}  // namespace keat
