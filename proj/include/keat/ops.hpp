#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "keat/tape.hpp"

// Differentiable primitives. Every op records its adjoint rule on the tape of
// its inputs; all inputs of one call must share a tape. Broadcasting is only
// done where the op says so (add_bias, mul_rows, broadcast, repeat_rows).
namespace keat::ops {

// Linear algebra and shape
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var x, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(Var a, Var b, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var row(Var x, std::size_t r);  // 1 x n
Var broadcast(Var scalar, Shape shape);
Var repeat_rows(Var v, std::size_t count);  // v: (d) -> (count x d)

// Elementwise, same shape
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var x, double factor);
Var shift(Var x, double offset);
Var square(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var abs(Var x);
Var clamp_min(Var x, double lo);

// Broadcasting helpers
Var add_bias(Var x, Var bias);  // x: (m x n), bias: (n)
Var mul_rows(Var x, Var w);     // x: (m x n), w: (m); row i scaled by w[i]

// Reductions
Var sum(Var x);
Var mean(Var x, std::size_t axis);  // matrix -> vector
Var max_pool(Var x);                // (n x d) -> (d), ties go to the lowest row

// Normalization and loss
Var softmax(Var x, std::size_t axis);
Var cross_entropy(Var logits, std::size_t label);  // -log softmax(logits)[label]

// Regularization and convolution plumbing
/// Inverted dropout: kept entries are scaled by 1/(1-p). p = 0 is identity.
Var dropout(Var x, double p, std::mt19937_64& rng);
/// Centered sliding windows with zero padding: (n x d) -> (n x width*d).
/// Row j holds rows j-(width-1)/2 ... j+width/2 of x, zeros outside.
Var windows(Var x, std::size_t width);

}  // namespace keat::ops
