#pragma once

// Reverse-mode differentiation over a linear tape, restricted to the op set
// used by the toy encoder, the input transforms and the attack loss.
//
// Nodes are appended in evaluation order and only reference earlier nodes,
// so the recorded graph is acyclic by construction and reverse index order
// is a valid reverse topological order.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "rga/errors.hpp"
#include "rga/rng.hpp"
#include "rga/tensor.hpp"

namespace rga::ad {

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

enum class NormMode {
  NormProduct,         ///< <a,b> / (|a| |b|)
  SquaredNormProduct,  ///< <a,b> / (|a|^2 |b|^2)
};

inline constexpr double kDivisionGuard = 1e-12;

template <typename Scalar>
class Tape {
 public:
  using TensorT = BasicTensor<Scalar>;

  struct Node;
  /// Accumulates d(loss)/d(input_k) into grad_in[k] given d(loss)/d(out).
  using Pullback = std::function<void(const Tape& tape, const Node& node, const TensorT& grad_out,
                                      std::vector<TensorT>& grad_in)>;

  struct Node {
    std::string_view op;
    TensorT value;
    std::vector<Var> inputs;
    Pullback pullback;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(TensorT value) { return push("leaf", std::move(value), {}, nullptr); }

  Var push(std::string_view op, TensorT value, std::vector<Var> inputs, Pullback pullback) {
    for (Var in : inputs)
      if (in.id >= nodes_.size()) throw ContractError("Tape: input does not belong to this tape");
    nodes_.push_back(Node{op, std::move(value), std::move(inputs), std::move(pullback)});
    return Var{nodes_.size() - 1};
  }

  const TensorT& value(Var v) const { return node(v).value; }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("Tape: unknown variable");
    return nodes_[v.id];
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Piecewise ops (relu sign, norm clamp) append one bit per decision.
  /// Two evaluations with equal signatures lie on the same smooth piece.
  void record_branch(bool taken) { branches_.push_back(taken ? 1 : 0); }
  const std::vector<std::uint8_t>& branch_signature() const noexcept { return branches_; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint8_t> branches_;
};

template <typename Scalar>
struct Gradient {
  BasicTensor<Scalar> value;
  /// wrt did not contribute to the loss; value is all zeros.
  bool detached = false;
};

/// Gradients of a scalar node with respect to every node of the tape.
/// Entries for nodes that do not reach the loss are empty.
template <typename Scalar>
std::vector<std::optional<BasicTensor<Scalar>>> backward_all(const Tape<Scalar>& tape, Var loss) {
  using TensorT = BasicTensor<Scalar>;
  const auto& out = tape.value(loss);
  if (out.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + out.shape().str());

  std::vector<std::uint8_t> reaches(loss.id + 1, 0);
  reaches[loss.id] = 1;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!reaches[i]) continue;
    for (Var in : tape.node(Var{i}).inputs) reaches[in.id] = 1;
  }

  std::vector<std::optional<TensorT>> grads(tape.size());
  grads[loss.id] = TensorT::Constant(out.shape(), Scalar(1));
  std::vector<TensorT> grad_in;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!reaches[i]) continue;
    const auto& node = tape.node(Var{i});
    if (!grads[i]) grads[i] = TensorT::Zero(node.value.shape());
    if (!node.pullback || node.inputs.empty()) continue;
    grad_in.clear();
    for (Var in : node.inputs) grad_in.push_back(TensorT::Zero(tape.value(in).shape()));
    node.pullback(tape, node, *grads[i], grad_in);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      auto& slot = grads[node.inputs[k].id];
      if (slot)
        slot->array() += grad_in[k].array();
      else
        slot = std::move(grad_in[k]);
    }
  }
  return grads;
}

/// d(loss)/d(wrt), same shape as wrt.
template <typename Scalar>
Gradient<Scalar> backward(const Tape<Scalar>& tape, Var loss, Var wrt) {
  auto grads = backward_all(tape, loss);
  if (wrt.id >= grads.size() || !grads[wrt.id])
    return {BasicTensor<Scalar>::Zero(tape.value(wrt).shape()), true};
  return {std::move(*grads[wrt.id]), false};
}

// ---------------------------------------------------------------------------
// Elementary ops

template <typename Scalar>
BasicTensor<Scalar> scalar_tensor(Scalar v) {
  return BasicTensor<Scalar>::Constant(Shape{}, v);
}

template <typename Scalar>
Var reshape(Tape<Scalar>& tape, Var x, const Shape& shape) {
  return tape.push("reshape", tape.value(x).reshaped(shape), {x},
                   [](const auto&, const auto&, const auto& g, auto& gin) { gin[0].array() = g.array(); });
}

template <typename Scalar>
Var add(Tape<Scalar>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (!(va.shape() == vb.shape()))
    throw DimensionError("add: shapes " + va.shape().str() + " and " + vb.shape().str());
  BasicTensor<Scalar> out(va.shape(), va.array() + vb.array());
  return tape.push("add", std::move(out), {a, b}, [](const auto&, const auto&, const auto& g, auto& gin) {
    gin[0].array() = g.array();
    gin[1].array() = g.array();
  });
}

template <typename Scalar>
Var sub(Tape<Scalar>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (!(va.shape() == vb.shape()))
    throw DimensionError("sub: shapes " + va.shape().str() + " and " + vb.shape().str());
  BasicTensor<Scalar> out(va.shape(), va.array() - vb.array());
  return tape.push("sub", std::move(out), {a, b}, [](const auto&, const auto&, const auto& g, auto& gin) {
    gin[0].array() = g.array();
    gin[1].array() = -g.array();
  });
}

template <typename Scalar>
Var scale(Tape<Scalar>& tape, Var x, Scalar factor) {
  BasicTensor<Scalar> out(tape.value(x).shape(), tape.value(x).array() * factor);
  return tape.push("scale", std::move(out), {x},
                   [factor](const auto&, const auto&, const auto& g, auto& gin) {
                     gin[0].array() = g.array() * factor;
                   });
}

template <typename Scalar>
Var sum(Tape<Scalar>& tape, Var x) {
  auto out = scalar_tensor<Scalar>(tape.value(x).array().sum());
  return tape.push("sum", std::move(out), {x}, [](const auto&, const auto&, const auto& g, auto& gin) {
    gin[0].array().setConstant(g[0]);
  });
}

template <typename Scalar>
Var dot(Tape<Scalar>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (va.size() != vb.size())
    throw DimensionError("dot: lengths " + std::to_string(va.size()) + " and " + std::to_string(vb.size()));
  auto out = scalar_tensor<Scalar>((va.array() * vb.array()).sum());
  return tape.push("dot", std::move(out), {a, b}, [](const auto& t, const auto& node, const auto& g, auto& gin) {
    gin[0].array() = t.value(node.inputs[1]).array() * g[0];
    gin[1].array() = t.value(node.inputs[0]).array() * g[0];
  });
}

/// Elementwise max(0, x). The subgradient at exactly 0 is 0.
template <typename Scalar>
Var relu(Tape<Scalar>& tape, Var x) {
  const auto& vx = tape.value(x);
  BasicTensor<Scalar> out(vx.shape(), vx.array().max(Scalar(0)));
  for (Index i = 0; i < vx.size(); ++i) tape.record_branch(vx[i] > Scalar(0));
  return tape.push("relu", std::move(out), {x}, [](const auto& t, const auto& node, const auto& g, auto& gin) {
    const auto& in = t.value(node.inputs[0]).array();
    gin[0].array() = (in > Scalar(0)).select(g.array(), Scalar(0));
  });
}

/// Replicate-border padding of an H×W×C tensor.
template <typename Scalar>
Var pad_edge(Tape<Scalar>& tape, Var x, Index top, Index bottom, Index left, Index right) {
  const auto& in = tape.value(x);
  if (in.rank() != 3) throw DimensionError("pad_edge: expected H×W×C, got " + in.shape().str());
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ContractError("pad_edge: negative padding");
  const Index h = in.dim(0), w = in.dim(1), c = in.dim(2);
  if ((h == 0 || w == 0) && (top + bottom + left + right) > 0)
    throw DimensionError("pad_edge: cannot replicate an empty tensor");
  const Index oh = h + top + bottom, ow = w + left + right;
  BasicTensor<Scalar> out(Shape{oh, ow, c});
  auto src_row = [=](Index i) { return std::clamp<Index>(i - top, 0, h - 1); };
  auto src_col = [=](Index j) { return std::clamp<Index>(j - left, 0, w - 1); };
  for (Index i = 0; i < oh; ++i)
    for (Index j = 0; j < ow; ++j)
      for (Index k = 0; k < c; ++k) out(i, j, k) = in(src_row(i), src_col(j), k);
  return tape.push("pad_edge", std::move(out), {x},
                   [=](const auto&, const auto&, const auto& g, auto& gin) {
                     for (Index i = 0; i < oh; ++i)
                       for (Index j = 0; j < ow; ++j)
                         for (Index k = 0; k < c; ++k) gin[0](src_row(i), src_col(j), k) += g(i, j, k);
                   });
}

/// Cross-correlation of input [H,W,Cin] with kernel [k,k,Cin,Cout], zero
/// padding, via an im2col matrix product.
template <typename Scalar>
Var conv2d(Tape<Scalar>& tape, Var input, Var kernel, Index stride, Index pad) {
  using MatrixRM = typename BasicTensor<Scalar>::MatrixRM;
  const auto& in = tape.value(input);
  const auto& ker = tape.value(kernel);
  if (in.rank() != 3) throw DimensionError("conv2d: input must be [H,W,Cin], got " + in.shape().str());
  if (ker.rank() != 4) throw DimensionError("conv2d: kernel must be [k,k,Cin,Cout], got " + ker.shape().str());
  const Index k = ker.dim(0);
  if (ker.dim(1) != k) throw DimensionError("conv2d: kernel axis 1 must equal axis 0 (square kernel)");
  if (k % 2 == 0) throw DimensionError("conv2d: kernel axis 0 extent must be odd");
  if (ker.dim(2) != in.dim(2))
    throw DimensionError("conv2d: channel axis mismatch (input axis 2 = " + std::to_string(in.dim(2)) +
                         ", kernel axis 2 = " + std::to_string(ker.dim(2)) + ")");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (pad < 0) throw ContractError("conv2d: pad must be >= 0");
  const Index h = in.dim(0), w = in.dim(1), cin = in.dim(2), cout = ker.dim(3);
  if (h + 2 * pad < k) throw DimensionError("conv2d: height axis smaller than kernel");
  if (w + 2 * pad < k) throw DimensionError("conv2d: width axis smaller than kernel");
  const Index oh = (h + 2 * pad - k) / stride + 1;
  const Index ow = (w + 2 * pad - k) / stride + 1;
  const Index patch = k * k * cin;

  MatrixRM cols = MatrixRM::Zero(oh * ow, patch);
  for (Index oy = 0; oy < oh; ++oy)
    for (Index ox = 0; ox < ow; ++ox) {
      const Index row = oy * ow + ox;
      for (Index ky = 0; ky < k; ++ky) {
        const Index iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (Index kx = 0; kx < k; ++kx) {
          const Index ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          for (Index c = 0; c < cin; ++c) cols(row, (ky * k + kx) * cin + c) = in(iy, ix, c);
        }
      }
    }

  BasicTensor<Scalar> out(Shape{oh, ow, cout});
  out.matrix(oh * ow, cout).noalias() = cols * ker.matrix(patch, cout);

  return tape.push(
      "conv2d", std::move(out), {input, kernel},
      [cols = std::move(cols), h, w, cin, cout, k, oh, ow, patch, stride, pad](
          const auto& t, const auto& node, const auto& g, auto& gin) {
        const auto gout = g.matrix(oh * ow, cout);
        gin[1].matrix(patch, cout).noalias() = cols.transpose() * gout;
        const MatrixRM gcols = gout * t.value(node.inputs[1]).matrix(patch, cout).transpose();
        auto& gi = gin[0];
        for (Index oy = 0; oy < oh; ++oy)
          for (Index ox = 0; ox < ow; ++ox) {
            const Index row = oy * ow + ox;
            for (Index ky = 0; ky < k; ++ky) {
              const Index iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              for (Index kx = 0; kx < k; ++kx) {
                const Index ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= w) continue;
                for (Index c = 0; c < cin; ++c) gi(iy, ix, c) += gcols(row, (ky * k + kx) * cin + c);
              }
            }
          }
      });
}

/// Each row of [N,D] divided by max(|row|_2, eps_div).
template <typename Scalar>
Var l2_normalize_rows(Tape<Scalar>& tape, Var x, Scalar eps_div) {
  if (!(eps_div > Scalar(0))) throw ContractError("l2_normalize_rows: eps_div must be > 0");
  const auto& in = tape.value(x);
  if (in.rank() != 2) throw DimensionError("l2_normalize_rows: expected [N,D], got " + in.shape().str());
  const Index n = in.dim(0), d = in.dim(1);
  const auto m = in.matrix(n, d);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> denom(n);
  for (Index r = 0; r < n; ++r) {
    const Scalar norm = m.row(r).norm();
    tape.record_branch(norm > eps_div);
    denom[r] = std::max(norm, eps_div);
  }
  BasicTensor<Scalar> out(in.shape());
  out.matrix(n, d) = m.array().colwise() / denom;
  return tape.push(
      "l2_normalize_rows", std::move(out), {x},
      [n, d, eps_div, denom](const auto& t, const auto& node, const auto& g, auto& gin) {
        const auto y = node.value.matrix(n, d);
        const auto gy = g.matrix(n, d);
        auto gx = gin[0].matrix(n, d);
        const auto xin = t.value(node.inputs[0]).matrix(n, d);
        for (Index r = 0; r < n; ++r) {
          if (xin.row(r).norm() > eps_div) {
            const Scalar proj = y.row(r).dot(gy.row(r));
            gx.row(r) = (gy.row(r) - proj * y.row(r)) / denom[r];
          } else {
            gx.row(r) = gy.row(r) / eps_div;
          }
        }
      });
}

/// Scalar cosine-type similarity of two equal-length tensors (flattened).
template <typename Scalar>
Var cosine_similarity(Tape<Scalar>& tape, Var a, Var b, NormMode mode = NormMode::NormProduct) {
  const auto& va = tape.value(a).array();
  const auto& vb = tape.value(b).array();
  if (va.size() < 1) throw DimensionError("cosine_similarity: empty vector");
  if (va.size() != vb.size())
    throw DimensionError("cosine_similarity: lengths " + std::to_string(va.size()) + " and " +
                         std::to_string(vb.size()));
  const Scalar na = std::sqrt((va * va).sum());
  const Scalar nb = std::sqrt((vb * vb).sum());
  if (!(na >= Scalar(kDivisionGuard)) || !(nb >= Scalar(kDivisionGuard)))
    throw DegenerateVectorError("cosine_similarity: vector norm below 1e-12");
  const Scalar ab = (va * vb).sum();
  // value = ab / (na^p nb^p), p = 1 or 2
  const int p = mode == NormMode::NormProduct ? 1 : 2;
  const Scalar da = p == 1 ? na : na * na;
  const Scalar db = p == 1 ? nb : nb * nb;
  const Scalar value = ab / (da * db);
  auto out = scalar_tensor<Scalar>(value);
  return tape.push("cosine_similarity", std::move(out), {a, b},
                   [=](const auto& t, const auto& node, const auto& g, auto& gin) {
                     const auto& xa = t.value(node.inputs[0]).array();
                     const auto& xb = t.value(node.inputs[1]).array();
                     // d/da [ab / (|a|^p |b|^p)] = b/(da db) - p * value * a / |a|^2
                     gin[0].array() = g[0] * (xb / (da * db) - Scalar(p) * value * xa / (na * na));
                     gin[1].array() = g[0] * (xa / (da * db) - Scalar(p) * value * xb / (nb * nb));
                   });
}

// ---------------------------------------------------------------------------
// Bilinear resampling

/// Source coordinate (row, col) for every output pixel, row-major.
struct SampleGrid {
  Index out_height = 0;
  Index out_width = 0;
  std::vector<double> src_row;
  std::vector<double> src_col;
};

namespace detail {

struct BilinearTap {
  Index r0, c0;
  double fr, fc;
};

inline BilinearTap bilinear_tap(double r, double c) {
  const double fr0 = std::floor(r), fc0 = std::floor(c);
  return {static_cast<Index>(fr0), static_cast<Index>(fc0), r - fr0, c - fc0};
}

}  // namespace detail

/// Bilinear sampling of an [H,W,C] tensor on a grid; taps outside the
/// source read 0. Linear in the input.
template <typename Scalar>
Var resample(Tape<Scalar>& tape, Var x, SampleGrid grid) {
  const auto& in = tape.value(x);
  if (in.rank() != 3) throw DimensionError("resample: expected [H,W,C], got " + in.shape().str());
  const Index npix = grid.out_height * grid.out_width;
  if (static_cast<Index>(grid.src_row.size()) != npix || static_cast<Index>(grid.src_col.size()) != npix)
    throw DimensionError("resample: grid coordinate count does not match output extent");
  const Index h = in.dim(0), w = in.dim(1), c = in.dim(2);

  auto for_each_tap = [h, w](double r, double col, auto&& fn) {
    const auto tap = detail::bilinear_tap(r, col);
    const double wr[2] = {1.0 - tap.fr, tap.fr};
    const double wc[2] = {1.0 - tap.fc, tap.fc};
    for (int dr = 0; dr < 2; ++dr)
      for (int dc = 0; dc < 2; ++dc) {
        const Index rr = tap.r0 + dr, cc = tap.c0 + dc;
        const double weight = wr[dr] * wc[dc];
        if (weight == 0.0 || rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        fn(rr, cc, static_cast<Scalar>(weight));
      }
  };

  BasicTensor<Scalar> out(Shape{grid.out_height, grid.out_width, c});
  for (Index i = 0; i < grid.out_height; ++i)
    for (Index j = 0; j < grid.out_width; ++j) {
      const Index p = i * grid.out_width + j;
      for_each_tap(grid.src_row[p], grid.src_col[p], [&](Index rr, Index cc, Scalar wt) {
        for (Index k = 0; k < c; ++k) out(i, j, k) += wt * in(rr, cc, k);
      });
    }
  return tape.push("resample", std::move(out), {x},
                   [grid = std::move(grid), c, for_each_tap](const auto&, const auto&, const auto& g, auto& gin) {
                     for (Index i = 0; i < grid.out_height; ++i)
                       for (Index j = 0; j < grid.out_width; ++j) {
                         const Index p = i * grid.out_width + j;
                         for_each_tap(grid.src_row[p], grid.src_col[p], [&](Index rr, Index cc, Scalar wt) {
                           for (Index k = 0; k < c; ++k) gin[0](rr, cc, k) += wt * g(i, j, k);
                         });
                       }
                   });
}

/// Node whose value and vector-Jacobian product come from outside the tape
/// (for example an out-of-process encoder).
template <typename Scalar>
Var custom(Tape<Scalar>& tape, Var x, BasicTensor<Scalar> value,
           std::type_identity_t<std::function<BasicTensor<Scalar>(const BasicTensor<Scalar>& grad_out)>> vjp,
           std::string_view op = "custom") {
  return tape.push(op, std::move(value), {x},
                   [vjp = std::move(vjp)](const auto& t, const auto& node, const auto& g, auto& gin) {
                     auto gx = vjp(g);
                     if (!(gx.shape() == t.value(node.inputs[0]).shape()))
                       throw DimensionError("custom: vjp returned shape " + gx.shape().str() + ", expected " +
                                            t.value(node.inputs[0]).shape().str());
                     gin[0] = std::move(gx);
                   });
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

struct FdReport {
  double max_rel_error = 0.0;
  int checked = 0;
  /// Coordinates rejected because x ± h·e fell on different smooth pieces.
  int skipped = 0;
};

/// Compares the tape gradient of `f` at `x` with central differences
/// (f(x+h e) - f(x-h e)) / 2h on up to `samples` random coordinates. The
/// relative error denominator is max(|analytic|, |numeric|, 1e-8).
///
/// `f` has signature Var(Tape<Scalar>&, Var x) and must return a scalar node.
/// Coordinates whose ±h evaluations record different branch signatures
/// (a ReLU or norm clamp switching piece) are skipped.
template <typename Scalar, typename Fn>
FdReport finite_diff_check(Fn&& f, const BasicTensor<Scalar>& x, double h, int samples, std::uint64_t seed = 0) {
  if (!(h > 0)) throw ContractError("finite_diff_check: h must be > 0");
  if (samples < 1) throw ContractError("finite_diff_check: samples must be >= 1");

  Tape<Scalar> tape;
  const Var xv = tape.leaf(x);
  const Var loss = f(tape, xv);
  const auto analytic = backward(tape, loss, xv).value;
  const auto base_signature = tape.branch_signature();

  auto eval = [&](const BasicTensor<Scalar>& at, std::vector<std::uint8_t>* sig) {
    Tape<Scalar> t;
    const Var v = t.leaf(at);
    const Var l = f(t, v);
    if (sig) *sig = t.branch_signature();
    return static_cast<double>(t.value(l)[0]);
  };

  std::vector<Index> order(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (Index i = x.size() - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);

  FdReport report;
  std::vector<std::uint8_t> sig_plus, sig_minus;
  for (Index idx : order) {
    if (report.checked >= samples) break;
    BasicTensor<Scalar> xp = x, xm = x;
    xp[idx] += static_cast<Scalar>(h);
    xm[idx] -= static_cast<Scalar>(h);
    const double fp = eval(xp, &sig_plus);
    const double fm = eval(xm, &sig_minus);
    if (sig_plus != base_signature || sig_minus != base_signature) {
      ++report.skipped;
      continue;
    }
    const double step = static_cast<double>(xp[idx]) - static_cast<double>(xm[idx]);
    const double numeric = (fp - fm) / step;
    const double a = static_cast<double>(analytic[idx]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
    ++report.checked;
  }
  return report;
}

}  // namespace rga::ad
