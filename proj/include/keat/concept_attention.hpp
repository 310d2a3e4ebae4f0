#pragma once

#include <string>

#include "keat/errors.hpp"
#include "keat/tape.hpp"

namespace keat {

/// Raised when a concept weighting is asked for over zero concepts.
class EmptyConceptSet : public ContractError {
 public:
  EmptyConceptSet() : ContractError("empty concept set") {}
};

struct FusionWeights {
  Var w1, b1, v1;  // (d+2u x d_a), (1), (d_a)
  Var w2, v2, b2;  // (d x d_b), (d_b), (1)
};

FusionWeights fusion_weights(Tape& tape, const ParamStore& store, const std::string& prefix);

/// alpha_i = softmax_i(v1 . tanh([c_i ; q] w1 + b1)): relevance of each
/// concept (rows of `concepts`, m x d) to the text feature q (2u).
Var text_concept_weights(Var q, Var concepts, const FusionWeights& w);

/// beta_i = softmax_i(v2 . tanh(c_i w2) + b2): importance within the set.
Var concept_self_weights(Var concepts, const FusionWeights& w);

/// a = softmax(gamma * alpha + (1 - gamma) * beta); gamma must lie in [0, 1].
Var fuse_weights(Var alpha, Var beta, double gamma);

/// r = sum_i a_i c_i.
Var concept_feature(Var a, Var concepts);

struct ConceptAttention {
  Var alpha, beta, fused;  // invalid when the set is empty
  Var feature;             // (d); zeros for an empty set
};

/// Full concept branch. With `use_raw_alpha` the feature is weighted by
/// alpha instead of the fused weights.
ConceptAttention concept_attention(Var q, Var concepts, const FusionWeights& w, double gamma,
                                   bool use_raw_alpha = false);

}  // namespace keat
