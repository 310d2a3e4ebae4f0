#include "keat/encoder.hpp"

#include <cmath>

#include "keat/errors.hpp"
#include "keat/ops.hpp"

namespace keat {

Var char_cnn(Var chars, Var weight, Var bias, std::size_t kernel) {
  const Var win = ops::windows(chars, kernel);
  return ops::max_pool(ops::add_bias(ops::matmul(win, weight), bias));
}

Var char_cnn_embed(Tape& tape, const ParamStore& store, std::span<const std::size_t> char_ids,
                   std::size_t kernel) {
  const Var chars = tape.gather_rows(store, "embed.char", char_ids);
  return char_cnn(chars, tape.param(store, "char_cnn.weight"), tape.param(store, "char_cnn.bias"),
                  kernel);
}

Var embed_tokens(Tape& tape, const ParamStore& store, std::span<const std::size_t> word_ids,
                 std::span<const std::vector<std::size_t>> char_ids, std::size_t kernel) {
  if (word_ids.size() != char_ids.size()) {
    throw ContractError("embed_tokens: word and character sequences differ in length");
  }
  const Var words = tape.gather_rows(store, "embed.word", word_ids);
  const Var weight = tape.param(store, "char_cnn.weight");
  const Var bias = tape.param(store, "char_cnn.bias");
  std::vector<Var> char_rows;
  char_rows.reserve(char_ids.size());
  for (const auto& ids : char_ids) {
    const Var chars = tape.gather_rows(store, "embed.char", ids);
    const Var vec = char_cnn(chars, weight, bias, kernel);
    char_rows.push_back(ops::reshape(vec, {1, vec.shape()[0]}));
  }
  return ops::concat(words, ops::concat(char_rows, 0), 1);
}

GruWeights gru_weights(Tape& tape, const ParamStore& store, const std::string& prefix) {
  auto p = [&](const char* name) { return tape.param(store, prefix + name); };
  return {p(".w_z"), p(".u_z"), p(".b_z"), p(".w_r"), p(".u_r"),
          p(".b_r"), p(".w_h"), p(".u_h"), p(".b_h")};
}

Var gru_run(Var x, const GruWeights& w, bool reverse) {
  Tape& tape = x.tape();
  const std::size_t n = x.value().rows();
  const std::size_t hidden = w.u_z.value().rows();
  if (n == 0) throw DimensionError("gru_run: empty sequence");
  // input projections for every step at once
  const Var xz = ops::add_bias(ops::matmul(x, w.w_z), w.b_z);
  const Var xr = ops::add_bias(ops::matmul(x, w.w_r), w.b_r);
  const Var xh = ops::add_bias(ops::matmul(x, w.w_h), w.b_h);
  Var h = tape.constant(Tensor({1, hidden}));
  std::vector<Var> states(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    const Var z = ops::sigmoid(ops::add(ops::row(xz, t), ops::matmul(h, w.u_z)));
    const Var r = ops::sigmoid(ops::add(ops::row(xr, t), ops::matmul(h, w.u_r)));
    const Var c = ops::tanh(ops::add(ops::row(xh, t), ops::matmul(ops::mul(r, h), w.u_h)));
    h = ops::add(h, ops::mul(z, ops::sub(c, h)));
    states[t] = h;
  }
  return ops::concat(states, 0);
}

Var bigru_forward(Var x, const GruWeights& forward, const GruWeights& backward) {
  return ops::concat(gru_run(x, forward, false), gru_run(x, backward, true), 1);
}

Var scaled_dot_attention(Var q, Var k, Var v, Var* weights) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  if (qv.rank() != 2 || kv.rank() != 2 || qv.cols() != kv.cols()) {
    throw DimensionError("attention: query " + shape_str(qv.shape()) + " and key " +
                         shape_str(kv.shape()) + " disagree on d_k");
  }
  if (v.value().rank() != 2 || v.value().rows() != kv.rows()) {
    throw DimensionError("attention: value rows must match key rows");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
  const Var scores = ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt);
  const Var a = ops::softmax(scores, 1);
  if (weights) *weights = a;
  return ops::matmul(a, v);
}

MultiHeadResult multihead_self_attention(Var h, const MultiHeadWeights& w) {
  const std::size_t d_model = h.value().cols();
  const std::size_t proj = w.w_q.value().cols();
  if (w.heads == 0 || proj % w.heads != 0) {
    throw ConfigError("multi-head attention: projection width " + std::to_string(proj) +
                      " is not divisible by " + std::to_string(w.heads) + " heads");
  }
  if (w.w_o.value().cols() != d_model) {
    throw DimensionError("multi-head attention: output projection must map back to d_model");
  }
  const std::size_t d_k = proj / w.heads;
  const std::size_t d_v = w.w_v.value().cols() / w.heads;
  const Var q = ops::matmul(h, w.w_q);
  const Var k = ops::matmul(h, w.w_k);
  const Var v = ops::matmul(h, w.w_v);
  MultiHeadResult res;
  std::vector<Var> heads;
  Var weight_sum;
  for (std::size_t i = 0; i < w.heads; ++i) {
    Var a;
    heads.push_back(scaled_dot_attention(ops::slice(q, 1, i * d_k, (i + 1) * d_k),
                                         ops::slice(k, 1, i * d_k, (i + 1) * d_k),
                                         ops::slice(v, 1, i * d_v, (i + 1) * d_v), &a));
    res.weights.push_back(a);
    weight_sum = weight_sum.valid() ? ops::add(weight_sum, a) : a;
  }
  res.mean_weights = ops::scale(weight_sum, 1.0 / static_cast<double>(w.heads));
  res.output = ops::matmul(ops::concat(heads, 1), w.w_o);
  return res;
}

Var token_weights(Var attention) {
  const Var col_mean = ops::mean(attention, 0);
  const std::size_t n = col_mean.value().numel();
  return ops::div(col_mean, ops::broadcast(ops::sum(col_mean), {n}));
}

PooledText attention_pool(Var h, Var a) {
  const Tensor& av = a.value();
  double total = 0.0;
  for (double x : av.data()) {
    if (x < 0.0) throw ContractError("attention_pool: negative weight");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractError("attention_pool: weights sum to " + std::to_string(total) + ", not 1");
  }
  PooledText out;
  out.weighted = ops::mul_rows(h, a);
  out.pooled = ops::max_pool(out.weighted);
  return out;
}

}  // namespace keat
