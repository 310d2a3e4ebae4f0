#include "keat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "keat/errors.hpp"

namespace keat::ops {
namespace {

Tape& tape_of(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

// c += a * b for (m x k) * (k x n)
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <class F, class D>
Var unary(const char* name, Var x, F f, D dfdx) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return tape.record(name, std::move(out), {x},
                     [xid, dfdx](Tape& t, std::size_t self, const Tensor& g) {
                       if (!t.requires_grad(xid)) return;
                       const Tensor& xv = t.value_of(xid);
                       const Tensor& yv = t.value_of(self);
                       Tensor& gx = t.grad_slot(xid);
                       for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
                     });
}

struct AxisLayout {
  std::size_t groups;
  std::size_t length;
  std::size_t stride;  // distance between consecutive elements along the axis
  std::size_t index(std::size_t g, std::size_t i) const {
    // rank-2 axis 0 groups are columns; everything else groups are contiguous
    return stride == 1 ? g * length + i : g + i * stride;
  }
};

AxisLayout layout_for(const Tensor& t, std::size_t axis, const char* op) {
  if (t.rank() == 1 && axis == 0) return {1, t.dim(0), 1};
  if (t.rank() == 2 && axis == 1) return {t.rows(), t.cols(), 1};
  if (t.rank() == 2 && axis == 0) return {t.cols(), t.rows(), t.cols()};
  throw DimensionError(std::string(op) + ": unsupported axis " + std::to_string(axis) +
                       " for shape " + shape_str(t.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  }
  Tensor out({m, n});
  gemm_acc(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t aid = a.id(), bid = b.id();
  return tape.record("matmul", std::move(out), {a, b},
                     [aid, bid, m, k, n](Tape& t, std::size_t, const Tensor& g) {
                       const Tensor& av = t.value_of(aid);
                       const Tensor& bv = t.value_of(bid);
                       if (t.requires_grad(aid)) {
                         Tensor& ga = t.grad_slot(aid);  // G B^T
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) {
                             const double gij = g[i * n + j];
                             if (gij == 0.0) continue;
                             for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[p * n + j];
                           }
                         }
                       }
                       if (t.requires_grad(bid)) {
                         Tensor& gb = t.grad_slot(bid);  // A^T G
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = av[i * k + p];
                             if (aip == 0.0) continue;
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                           }
                         }
                       }
                     });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix("transpose", av);
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  const std::size_t aid = a.id();
  return a.tape().record("transpose", std::move(out), {a},
                         [aid, m, n](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& ga = t.grad_slot(aid);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
                         });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t xid = x.id();
  return x.tape().record("reshape", std::move(out), {x},
                         [xid](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gx = t.grad_slot(xid);
                           for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
                         });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  Tape& tape = parts[0].tape();
  const Tensor& first = parts[0].value();
  const std::size_t rank = first.rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    throw DimensionError("concat: unsupported axis " + std::to_string(axis) + " for shape " +
                         shape_str(first.shape()));
  }
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (&p.tape() != &tape) throw ContractError("concat: operands on different tapes");
    if (v.rank() != rank) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != axis && v.dim(d) != first.dim(d)) {
        throw DimensionError("concat: extents differ " + shape_str(first.shape()) + " vs " +
                             shape_str(v.shape()));
      }
    }
    ids.push_back(p.id());
    extents.push_back(v.dim(axis));
    total += v.dim(axis);
  }
  Shape shape = first.shape();
  shape[axis] = total;
  Tensor out(shape);
  // rows = outer count, each part contributes extents[i] * inner contiguous values per outer row
  const std::size_t outer = (rank == 2 && axis == 1) ? first.dim(0) : 1;
  const std::size_t inner = (rank == 2 && axis == 0) ? first.dim(1) : 1;
  const std::size_t row_len = total * inner;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    const std::size_t chunk = extents[i] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data().begin() + o * chunk, chunk, out.data().begin() + o * row_len + offset);
    }
    offset += chunk;
  }
  return tape.record("concat", std::move(out), parts,
                     [ids, extents, outer, inner, row_len](Tape& t, std::size_t, const Tensor& g) {
                       std::size_t offset = 0;
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         const std::size_t chunk = extents[i] * inner;
                         if (t.requires_grad(ids[i])) {
                           Tensor& gp = t.grad_slot(ids[i]);
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t c = 0; c < chunk; ++c)
                               gp[o * chunk + c] += g[o * row_len + offset + c];
                         }
                         offset += chunk;
                       }
                     });
}

Var concat(Var a, Var b, std::size_t axis) {
  const Var parts[] = {a, b};
  return concat(std::span<const Var>(parts), axis);
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || xv.rank() > 2 || axis >= xv.rank()) {
    throw DimensionError("slice: unsupported axis for " + shape_str(xv.shape()));
  }
  if (begin > end || end > xv.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for " + shape_str(xv.shape()));
  }
  const std::size_t outer = (xv.rank() == 2 && axis == 1) ? xv.dim(0) : 1;
  const std::size_t inner = (xv.rank() == 2 && axis == 0) ? xv.dim(1) : 1;
  const std::size_t src_len = xv.dim(axis) * inner;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape shape = xv.shape();
  shape[axis] = end - begin;
  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data().begin() + o * src_len + off, chunk, out.data().begin() + o * chunk);
  }
  const std::size_t xid = x.id();
  return x.tape().record("slice", std::move(out), {x},
                         [xid, outer, src_len, chunk, off](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gx = t.grad_slot(xid);
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t c = 0; c < chunk; ++c)
                               gx[o * src_len + off + c] += g[o * chunk + c];
                         });
}

Var row(Var x, std::size_t r) { return slice(x, 0, r, r + 1); }

Var broadcast(Var scalar, Shape shape) {
  if (scalar.value().numel() != 1) {
    throw DimensionError("broadcast: source must hold one value, got " +
                         shape_str(scalar.value().shape()));
  }
  Tensor out(std::move(shape), scalar.value()[0]);
  const std::size_t sid = scalar.id();
  return scalar.tape().record("broadcast", std::move(out), {scalar},
                              [sid](Tape& t, std::size_t, const Tensor& g) {
                                double s = 0.0;
                                for (double v : g.data()) s += v;
                                t.grad_slot(sid)[0] += s;
                              });
}

Var repeat_rows(Var v, std::size_t count) {
  const Tensor& vv = v.value();
  if (vv.rank() != 1) throw DimensionError("repeat_rows: expected a vector");
  const std::size_t d = vv.dim(0);
  Tensor out({count, d});
  for (std::size_t r = 0; r < count; ++r) std::copy_n(vv.data().begin(), d, out.data().begin() + r * d);
  const std::size_t vid = v.id();
  return v.tape().record("repeat_rows", std::move(out), {v},
                         [vid, count, d](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gv = t.grad_slot(vid);
                           for (std::size_t r = 0; r < count; ++r)
                             for (std::size_t c = 0; c < d; ++c) gv[c] += g[r * d + c];
                         });
}

namespace {

template <class F, class DA, class DB>
Var binary(const char* name, Var a, Var b, F f, DA dfa, DB dfb) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(name, av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = f(av[i], bv[i]);
  const std::size_t aid = a.id(), bid = b.id();
  return tape.record(name, std::move(out), {a, b},
                     [aid, bid, dfa, dfb](Tape& t, std::size_t, const Tensor& g) {
                       const Tensor& av = t.value_of(aid);
                       const Tensor& bv = t.value_of(bid);
                       if (t.requires_grad(aid)) {
                         Tensor& ga = t.grad_slot(aid);
                         for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * dfa(av[i], bv[i]);
                       }
                       if (t.requires_grad(bid)) {
                         Tensor& gb = t.grad_slot(bid);
                         for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * dfb(av[i], bv[i]);
                       }
                     });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var scale(Var x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Var shift(Var x, double offset) {
  return unary(
      "shift", x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Var square(Var x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var abs(Var x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var clamp_min(Var x, double lo) {
  return unary(
      "clamp_min", x, [lo](double v) { return v < lo ? lo : v; },
      [lo](double v, double) { return v < lo ? 0.0 : 1.0; });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix("add_bias", xv);
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bv.numel() != n || bv.rank() > 2 || (bv.rank() == 2 && bv.rows() != 1)) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not fit " +
                         shape_str(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bv[j];
  const std::size_t xid = x.id(), bid = bias.id();
  return tape.record("add_bias", std::move(out), {x, bias},
                     [xid, bid, m, n](Tape& t, std::size_t, const Tensor& g) {
                       if (t.requires_grad(xid)) t.grad_slot(xid) += g;
                       if (t.requires_grad(bid)) {
                         Tensor& gb = t.grad_slot(bid);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                       }
                     });
}

Var mul_rows(Var x, Var w) {
  Tape& tape = tape_of(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_matrix("mul_rows", xv);
  const std::size_t m = xv.rows(), n = xv.cols();
  if (wv.numel() != m) {
    throw DimensionError("mul_rows: weights " + shape_str(wv.shape()) + " do not fit " +
                         shape_str(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) *= wv[i];
  const std::size_t xid = x.id(), wid = w.id();
  return tape.record("mul_rows", std::move(out), {x, w},
                     [xid, wid, m, n](Tape& t, std::size_t, const Tensor& g) {
                       const Tensor& xv = t.value_of(xid);
                       const Tensor& wv = t.value_of(wid);
                       if (t.requires_grad(xid)) {
                         Tensor& gx = t.grad_slot(xid);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * wv[i];
                       }
                       if (t.requires_grad(wid)) {
                         Tensor& gw = t.grad_slot(wid);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gw[i] += g[i * n + j] * xv[i * n + j];
                       }
                     });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xid = x.id();
  return x.tape().record("sum", Tensor::scalar(s), {x},
                         [xid](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gx = t.grad_slot(xid);
                           for (double& v : gx.data()) v += g[0];
                         });
}

Var mean(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  require_matrix("mean", xv);
  const AxisLayout lay = layout_for(xv, axis, "mean");
  if (lay.length == 0) throw DimensionError("mean: empty axis");
  Tensor out({lay.groups});
  for (std::size_t gi = 0; gi < lay.groups; ++gi) {
    double s = 0.0;
    for (std::size_t i = 0; i < lay.length; ++i) s += xv[lay.index(gi, i)];
    out[gi] = s / static_cast<double>(lay.length);
  }
  const std::size_t xid = x.id();
  return x.tape().record("mean", std::move(out), {x},
                         [xid, lay](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gx = t.grad_slot(xid);
                           const double inv = 1.0 / static_cast<double>(lay.length);
                           for (std::size_t gi = 0; gi < lay.groups; ++gi)
                             for (std::size_t i = 0; i < lay.length; ++i)
                               gx[lay.index(gi, i)] += g[gi] * inv;
                         });
}

Var max_pool(Var x) {
  const Tensor& xv = x.value();
  require_matrix("max_pool", xv);
  const std::size_t n = xv.rows(), d = xv.cols();
  if (n == 0) throw DimensionError("max_pool: no rows to pool");
  Tensor out({d});
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t c = 0; c < d; ++c) {
    double best = xv.at(0, c);
    for (std::size_t r = 1; r < n; ++r) {
      if (xv.at(r, c) > best) {
        best = xv.at(r, c);
        argmax[c] = r;
      }
    }
    out[c] = best;
  }
  const std::size_t xid = x.id();
  return x.tape().record("max_pool", std::move(out), {x},
                         [xid, argmax, d](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gx = t.grad_slot(xid);
                           for (std::size_t c = 0; c < d; ++c) gx[argmax[c] * d + c] += g[c];
                         });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisLayout lay = layout_for(xv, axis, "softmax");
  if (lay.length == 0) throw DimensionError("softmax: empty axis");
  Tensor out(xv.shape());
  for (std::size_t gi = 0; gi < lay.groups; ++gi) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lay.length; ++i) mx = std::max(mx, xv[lay.index(gi, i)]);
    double z = 0.0;
    for (std::size_t i = 0; i < lay.length; ++i) {
      const double e = std::exp(xv[lay.index(gi, i)] - mx);
      out[lay.index(gi, i)] = e;
      z += e;
    }
    for (std::size_t i = 0; i < lay.length; ++i) out[lay.index(gi, i)] /= z;
  }
  const std::size_t xid = x.id();
  return x.tape().record("softmax", std::move(out), {x},
                         [xid, lay](Tape& t, std::size_t self, const Tensor& g) {
                           const Tensor& y = t.value_of(self);
                           Tensor& gx = t.grad_slot(xid);
                           for (std::size_t gi = 0; gi < lay.groups; ++gi) {
                             double dot = 0.0;
                             for (std::size_t i = 0; i < lay.length; ++i) {
                               const std::size_t k = lay.index(gi, i);
                               dot += y[k] * g[k];
                             }
                             for (std::size_t i = 0; i < lay.length; ++i) {
                               const std::size_t k = lay.index(gi, i);
                               gx[k] += y[k] * (g[k] - dot);
                             }
                           }
                         });
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& lv = logits.value();
  const std::size_t c = lv.numel();
  if (lv.rank() > 2 || (lv.rank() == 2 && lv.rows() != 1)) {
    throw DimensionError("cross_entropy: logits must be a vector, got " + shape_str(lv.shape()));
  }
  if (c == 0) throw DimensionError("cross_entropy: no classes");
  if (label >= c) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                        std::to_string(c) + " classes");
  }
  double mx = lv[0];
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, lv[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < c; ++i) z += std::exp(lv[i] - mx);
  const double lse = mx + std::log(z);
  const std::size_t lid = logits.id();
  return logits.tape().record("cross_entropy", Tensor::scalar(lse - lv[label]), {logits},
                              [lid, label, lse, c](Tape& t, std::size_t, const Tensor& g) {
                                const Tensor& lv = t.value_of(lid);
                                Tensor& gl = t.grad_slot(lid);
                                for (std::size_t i = 0; i < c; ++i) {
                                  const double p = std::exp(lv[i] - lse);
                                  gl[i] += g[0] * (p - (i == label ? 1.0 : 0.0));
                                }
                              });
}

Var dropout(Var x, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
  if (p == 0.0) return x;
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(xv.numel());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    // 53 random bits -> uniform in [0,1), independent of the standard library's distributions
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < p ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  const std::size_t xid = x.id();
  return x.tape().record("dropout", std::move(out), {x},
                         [xid, mask = std::move(mask)](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gx = t.grad_slot(xid);
                           for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * mask[i];
                         });
}

Var windows(Var x, std::size_t width) {
  const Tensor& xv = x.value();
  require_matrix("windows", xv);
  if (width == 0) throw DimensionError("windows: width must be positive");
  const std::size_t n = xv.rows(), d = xv.cols();
  const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((width - 1) / 2);
  Tensor out({n, width * d});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t w = 0; w < width; ++w) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(j) - left + static_cast<std::ptrdiff_t>(w);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      std::copy_n(xv.data().begin() + src * d, d, out.data().begin() + j * width * d + w * d);
    }
  }
  const std::size_t xid = x.id();
  return x.tape().record("windows", std::move(out), {x},
                         [xid, n, d, width, left](Tape& t, std::size_t, const Tensor& g) {
                           Tensor& gx = t.grad_slot(xid);
                           for (std::size_t j = 0; j < n; ++j) {
                             for (std::size_t w = 0; w < width; ++w) {
                               const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(j) - left +
                                                          static_cast<std::ptrdiff_t>(w);
                               if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
                               for (std::size_t c = 0; c < d; ++c)
                                 gx[src * d + c] += g[j * width * d + w * d + c];
                             }
                           }
                         });
}

}  // namespace keat::ops
