#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "keat/concept_attention.hpp"
#include "keat/concept_kb.hpp"
#include "keat/corpus.hpp"
#include "keat/encoder.hpp"
#include "keat/hyperparams.hpp"
#include "keat/local_attention.hpp"
#include "keat/tape.hpp"

namespace keat {

/// A document ready for the network: word/char ids plus its concept set.
struct Example {
  std::vector<std::size_t> word_ids;
  std::vector<std::vector<std::size_t>> char_ids;
  ConceptSet concepts;
  std::size_t label = 0;
};

/// Builds an example from tokens. An empty token list becomes a single UNK
/// word so every example has at least one step.
Example make_example(std::span<const std::string> tokens, const Vocab& vocab,
                     const ConceptSource& concepts, const HyperParams& hp, std::size_t label = 0);

struct ModelShape {
  std::size_t vocab = 0;
  std::size_t classes = 0;
  std::size_t concepts = 0;
};

/// Weights ~ Normal(0, init_std), biases zero, local-attention w_beta = 1.
/// Only the attention path selected by hp.local_attn is created.
ParamStore init_params(const HyperParams& hp, const ModelShape& shape, std::mt19937_64& rng);

/// L2 policy: biases are exempt, and so are the UNK/PAD rows of the word table.
bool is_regularized(const std::string& name);
void apply_regularization_policy(ParamStore& store);

/// Intermediate values of one forward pass, for inspection in tests.
struct ForwardTrace {
  Var embedded;  // (n x word_dim+char_dim), after dropout
  Var hidden;    // Bi-GRU states (n x 2u)
  MultiHeadResult multihead;
  Var token_weights;  // (n)
  PooledText pooled;
  std::vector<LocalAttnResult> local;
  Var text_feature;  // q (2u)
  Var concepts;      // (m x d)
  ConceptAttention concept_attn;
  Var logits;
};

/// Class logits (C). Dropout is applied to the token embeddings only when
/// `training` is set, drawing from `rng`.
Var forward_logits(Tape& tape, const ParamStore& store, const HyperParams& hp, const Example& ex,
                   bool training, std::mt19937_64* rng = nullptr, ForwardTrace* trace = nullptr);

}  // namespace keat
