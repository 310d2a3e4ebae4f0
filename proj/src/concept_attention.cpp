#include "keat/concept_attention.hpp"

#include "keat/errors.hpp"
#include "keat/ops.hpp"

namespace keat {

FusionWeights fusion_weights(Tape& tape, const ParamStore& store, const std::string& prefix) {
  auto p = [&](const char* name) { return tape.param(store, prefix + name); };
  return {p(".w1"), p(".b1"), p(".v1"), p(".w2"), p(".v2"), p(".b2")};
}

namespace {

Var rows_dot(Var m, Var v) {
  const std::size_t n = m.value().rows();
  const std::size_t s = v.value().numel();
  return ops::reshape(ops::matmul(m, ops::reshape(v, {s, 1})), {n});
}

std::size_t concept_rows(Var concepts) {
  const Tensor& c = concepts.value();
  if (c.rank() != 2) throw DimensionError("concepts must be an (m x d) matrix");
  return c.rows();
}

}  // namespace

Var text_concept_weights(Var q, Var concepts, const FusionWeights& w) {
  const std::size_t m = concept_rows(concepts);
  if (m == 0) throw EmptyConceptSet();
  const Var joint = ops::concat(concepts, ops::repeat_rows(q, m), 1);
  const Var pre = ops::matmul(joint, w.w1);
  const Var hidden = ops::tanh(ops::add(pre, ops::broadcast(w.b1, pre.shape())));
  return ops::softmax(rows_dot(hidden, w.v1), 0);
}

Var concept_self_weights(Var concepts, const FusionWeights& w) {
  const std::size_t m = concept_rows(concepts);
  if (m == 0) throw EmptyConceptSet();
  const Var score = rows_dot(ops::tanh(ops::matmul(concepts, w.w2)), w.v2);
  return ops::softmax(ops::add(score, ops::broadcast(w.b2, {m})), 0);
}

Var fuse_weights(Var alpha, Var beta, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in [0, 1]");
  return ops::softmax(ops::add(ops::scale(alpha, gamma), ops::scale(beta, 1.0 - gamma)), 0);
}

Var concept_feature(Var a, Var concepts) {
  const std::size_t m = concept_rows(concepts);
  const std::size_t d = concepts.value().cols();
  if (m == 0) return concepts.tape().constant(Tensor({d}));
  if (a.value().numel() != m) throw DimensionError("concept_feature: weight count differs from m");
  double total = 0.0;
  for (double x : a.value().data()) {
    if (x < 0.0) throw ContractError("concept_feature: negative weight");
    total += x;
  }
  if (total < 1.0 - 1e-6 || total > 1.0 + 1e-6) {
    throw ContractError("concept_feature: weights are not a distribution");
  }
  return ops::reshape(ops::matmul(ops::reshape(a, {1, m}), concepts), {d});
}

ConceptAttention concept_attention(Var q, Var concepts, const FusionWeights& w, double gamma,
                                   bool use_raw_alpha) {
  ConceptAttention out;
  if (concept_rows(concepts) == 0) {
    out.feature = concept_feature(Var(), concepts);
    return out;
  }
  out.alpha = text_concept_weights(q, concepts, w);
  out.beta = concept_self_weights(concepts, w);
  out.fused = fuse_weights(out.alpha, out.beta, gamma);
  out.feature = concept_feature(use_raw_alpha ? out.alpha : out.fused, concepts);
  return out;
}

}  // namespace keat
