#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "keat/tape.hpp"

namespace keat {

/// Char-CNN word vector: embed characters, slide a centered width-`kernel`
/// window with zero padding (output length = word length), apply the affine
/// map and max-pool over positions.
///   chars: (L x c_in), weight: (kernel*c_in x c_out), bias: (c_out) -> (c_out)
Var char_cnn(Var chars, Var weight, Var bias, std::size_t kernel);

/// char_cnn over the rows of the `embed.char` table selected by `char_ids`.
Var char_cnn_embed(Tape& tape, const ParamStore& store, std::span<const std::size_t> char_ids,
                   std::size_t kernel);

/// Row i = [word embedding of word_ids[i] ; char-CNN vector of word i].
Var embed_tokens(Tape& tape, const ParamStore& store, std::span<const std::size_t> word_ids,
                 std::span<const std::vector<std::size_t>> char_ids, std::size_t kernel);

/// One GRU direction. With x the input row and h the previous state:
///   z = sigmoid(x w_z + h u_z + b_z)
///   r = sigmoid(x w_r + h u_r + b_r)
///   c = tanh(x w_h + (r*h) u_h + b_h)
///   h = (1 - z) * h + z * c
/// This is the usual W[x;h] form with W split into its input and state blocks.
struct GruWeights {
  Var w_z, u_z, b_z;
  Var w_r, u_r, b_r;
  Var w_h, u_h, b_h;
};

GruWeights gru_weights(Tape& tape, const ParamStore& store, const std::string& prefix);

/// Runs one direction from a zero state. Output rows follow input row order,
/// so for reverse = true row t is the state after reading rows n-1 ... t.
Var gru_run(Var x, const GruWeights& w, bool reverse);

/// Bidirectional GRU: row t = [forward state t ; backward state t], (n x 2u).
Var bigru_forward(Var x, const GruWeights& forward, const GruWeights& backward);

/// softmax(q k^T / sqrt(d_k)) v. Optionally hands back the (n x m) weights.
Var scaled_dot_attention(Var q, Var k, Var v, Var* weights = nullptr);

struct MultiHeadWeights {
  Var w_q, w_k, w_v;  // (d_model x heads*d_k)
  Var w_o;            // (heads*d_v x d_model)
  std::size_t heads = 1;
};

struct MultiHeadResult {
  Var output;                 // (n x d_model)
  std::vector<Var> weights;   // per head, (n x n)
  Var mean_weights;           // average over heads, (n x n)
};

/// Self-attention with queries, keys and values all equal to `h`.
MultiHeadResult multihead_self_attention(Var h, const MultiHeadWeights& w);

/// Per-token pooling weights from an (n x n) row-stochastic attention map:
/// the column means, renormalized to sum to one.
Var token_weights(Var attention);

struct PooledText {
  Var weighted;  // (n x d): row t scaled by a_t
  Var pooled;    // (d): column max of `weighted`
};

/// Requires `a` on the probability simplex (sum within 1e-6).
PooledText attention_pool(Var h, Var a);

}  // namespace keat
