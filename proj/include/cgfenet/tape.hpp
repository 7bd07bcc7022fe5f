#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
// A Tape owns the intermediate values of one forward computation; backward()
// walks the nodes in reverse creation order. Parameters live outside the tape
// and receive accumulated gradients through bound leaf nodes.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cgfenet/common.hpp"

namespace cgfenet::ad {

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Directed edge list in CSR form, sorted by destination node. Built once per
/// mesh topology and shared across forward passes; must outlive any tape that
/// references it.
struct EdgeIndex {
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> offsets;  // size n_nodes + 1, segments of incoming edges
  int n_nodes = 0;

  int num_edges() const { return static_cast<int>(src.size()); }

  static EdgeIndex build(const std::vector<std::array<int, 2>>& edges,
                         int n_nodes, bool add_self_loops) {
    EdgeIndex g;
    g.n_nodes = n_nodes;
    const std::size_t total =
        edges.size() + (add_self_loops ? static_cast<std::size_t>(n_nodes) : 0);
    std::vector<int> count(static_cast<std::size_t>(n_nodes), 0);
    for (const auto& [u, v] : edges) {
      check(u >= 0 && u < n_nodes && v >= 0 && v < n_nodes,
            "EdgeIndex: edge endpoint out of range");
      ++count[static_cast<std::size_t>(v)];
    }
    if (add_self_loops)
      for (int i = 0; i < n_nodes; ++i) ++count[static_cast<std::size_t>(i)];

    g.offsets.resize(static_cast<std::size_t>(n_nodes) + 1, 0);
    for (int i = 0; i < n_nodes; ++i) {
      check(count[static_cast<std::size_t>(i)] > 0,
            "EdgeIndex: node " + std::to_string(i) + " has no incident edges");
      g.offsets[static_cast<std::size_t>(i) + 1] =
          g.offsets[static_cast<std::size_t>(i)] +
          count[static_cast<std::size_t>(i)];
    }
    g.src.resize(total);
    g.dst.resize(total);
    std::vector<int> cursor(g.offsets.begin(), g.offsets.end() - 1);
    auto place = [&](int u, int v) {
      const int at = cursor[static_cast<std::size_t>(v)]++;
      g.src[static_cast<std::size_t>(at)] = u;
      g.dst[static_cast<std::size_t>(at)] = v;
    };
    for (const auto& [u, v] : edges) place(u, v);
    if (add_self_loops)
      for (int i = 0; i < n_nodes; ++i) place(i, i);
    return g;
  }
};

template <typename T>
class Tape {
 public:
  using M = Mat<T>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  const M& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const M& grad_of(Var v) const {
    return nodes_[static_cast<std::size_t>(v.id)].grad;
  }

  // -- leaves ---------------------------------------------------------------

  Var constant(M value) { return Var{push(std::move(value), false, {})}; }

  Var leaf(M value) {
    return Var{push(std::move(value), grad_enabled_, {})};
  }

  Var param(Parameter<T>& p) {
    const int id = push(p.value, grad_enabled_, {});
    nodes_[static_cast<std::size_t>(id)].bound = &p;
    return Var{id};
  }

  Var detach(Var a) { return constant(val(a)); }

  // -- arithmetic -----------------------------------------------------------

  Var matmul(Var a, Var b) {
    M out = val(a) * val(b);
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const M& g = t.node(self).grad;
      if (t.needs(a)) t.accum(a, g * t.val(b).transpose());
      if (t.needs(b)) t.accum(b, t.val(a).transpose() * g);
    });
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    return make(val(a) + val(b), {a, b}, [a, b](Tape& t, int self) {
      const M& g = t.node(self).grad;
      if (t.needs(a)) t.accum(a, g);
      if (t.needs(b)) t.accum(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    return make(val(a) - val(b), {a, b}, [a, b](Tape& t, int self) {
      const M& g = t.node(self).grad;
      if (t.needs(a)) t.accum(a, g);
      if (t.needs(b)) t.accum(b, -g);
    });
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    return make(val(a).cwiseProduct(val(b)), {a, b}, [a, b](Tape& t, int self) {
      const M& g = t.node(self).grad;
      if (t.needs(a)) t.accum(a, g.cwiseProduct(t.val(b)));
      if (t.needs(b)) t.accum(b, g.cwiseProduct(t.val(a)));
    });
  }

  /// alpha * a + beta (element-wise affine by scalars)
  Var affine(Var a, T alpha, T beta) {
    return make((val(a).array() * alpha + beta).matrix(), {a},
                [a, alpha](Tape& t, int self) {
                  if (t.needs(a)) t.accum(a, t.node(self).grad * alpha);
                });
  }

  Var scale(Var a, T alpha) { return affine(a, alpha, T(0)); }

  /// a (R x D) + row vector b (1 x D) broadcast over rows
  Var add_rowvec(Var a, Var b) {
    check(val(b).rows() == 1 && val(a).cols() == val(b).cols(),
          "add_rowvec: shape mismatch");
    M out = val(a);
    out.rowwise() += Eigen::RowVector<T, Eigen::Dynamic>(val(b).row(0));
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const M& g = t.node(self).grad;
      if (t.needs(a)) t.accum(a, g);
      if (t.needs(b)) t.accum(b, g.colwise().sum());
    });
  }

  /// a (R x D) * row vector b (1 x D) broadcast over rows, element-wise
  Var mul_rowvec(Var a, Var b) {
    check(val(b).rows() == 1 && val(a).cols() == val(b).cols(),
          "mul_rowvec: shape mismatch");
    M out = val(a).array().rowwise() * val(b).row(0).array();
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const M& g = t.node(self).grad;
      if (t.needs(a))
        t.accum(a, (g.array().rowwise() * t.val(b).row(0).array()).matrix());
      if (t.needs(b))
        t.accum(b, g.cwiseProduct(t.val(a)).colwise().sum());
    });
  }

  Var sub_rowvec(Var a, Var b) { return add_rowvec(a, scale(b, T(-1))); }

  // -- nonlinearities ---------------------------------------------------------

  Var relu(Var a) {
    return make(val(a).cwiseMax(T(0)), {a}, [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M mask =
          (t.node(self).value.array() > T(0)).template cast<T>().matrix();
      t.accum(a, t.node(self).grad.cwiseProduct(mask));
    });
  }

  Var leaky_relu(Var a, T slope) {
    M out = val(a).unaryExpr([slope](T x) { return x > T(0) ? x : slope * x; });
    return make(std::move(out), {a}, [a, slope](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& x = t.val(a);
      const M d = x.unaryExpr([slope](T v) { return v > T(0) ? T(1) : slope; });
      t.accum(a, t.node(self).grad.cwiseProduct(d));
    });
  }

  Var sigmoid(Var a) {
    M out = val(a).unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
    return make(std::move(out), {a}, [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& y = t.node(self).value;
      t.accum(a, t.node(self).grad.cwiseProduct(
                     y.cwiseProduct((M::Ones(y.rows(), y.cols()) - y))));
    });
  }

  Var tanh_(Var a) {
    M out = val(a).array().tanh().matrix();
    return make(std::move(out), {a}, [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& y = t.node(self).value;
      t.accum(a, t.node(self).grad.cwiseProduct(
                     (M::Ones(y.rows(), y.cols()) - y.cwiseProduct(y))));
    });
  }

  Var square(Var a) {
    return make(val(a).cwiseProduct(val(a)), {a}, [a](Tape& t, int self) {
      if (t.needs(a))
        t.accum(a, T(2) * t.node(self).grad.cwiseProduct(t.val(a)));
    });
  }

  /// (a + eps)^(-1/2), element-wise
  Var rsqrt_eps(Var a, T eps) {
    M out = (val(a).array() + eps).rsqrt().matrix();
    return make(std::move(out), {a}, [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& y = t.node(self).value;
      t.accum(a, (T(-0.5) * t.node(self).grad.array() * y.array().cube())
                     .matrix());
    });
  }

  // -- reductions and shape ops ----------------------------------------------

  Var mean_rows(Var a) {
    const auto r = static_cast<T>(val(a).rows());
    M out = val(a).colwise().sum() / r;
    return make(std::move(out), {a}, [a, r](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& g = t.node(self).grad;  // 1 x D
      const auto rows = t.val(a).rows();
      t.accum(a, (M::Ones(rows, 1) * g) / r);
    });
  }

  Var mean_all(Var a) {
    const auto n = static_cast<T>(val(a).size());
    M out(1, 1);
    out(0, 0) = val(a).sum() / n;
    return make(std::move(out), {a}, [a, n](Tape& t, int self) {
      if (!t.needs(a)) return;
      const T g = t.node(self).grad(0, 0);
      const auto& v = t.val(a);
      t.accum(a, M::Constant(v.rows(), v.cols(), g / n));
    });
  }

  Var broadcast_row(Var a, int rows) {
    check(val(a).rows() == 1, "broadcast_row: input must be a row vector");
    M out = M::Ones(rows, 1) * val(a);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
      if (t.needs(a)) t.accum(a, t.node(self).grad.colwise().sum());
    });
  }

  Var row(Var a, int r) {
    M out = val(a).row(r);
    return make(std::move(out), {a}, [a, r](Tape& t, int self) {
      if (!t.needs(a)) return;
      M g = M::Zero(t.val(a).rows(), t.val(a).cols());
      g.row(r) = t.node(self).grad;
      t.accum(a, std::move(g));
    });
  }

  Var rows_gather(Var a, std::vector<int> idx) {
    M out(static_cast<Eigen::Index>(idx.size()), val(a).cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      out.row(static_cast<Eigen::Index>(r)) = val(a).row(idx[r]);
    auto idx_p = std::make_shared<std::vector<int>>(std::move(idx));
    return make(std::move(out), {a}, [a, idx_p](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& g = t.node(self).grad;
      M acc = M::Zero(t.val(a).rows(), t.val(a).cols());
      for (std::size_t r = 0; r < idx_p->size(); ++r)
        acc.row((*idx_p)[r]) += g.row(static_cast<Eigen::Index>(r));
      t.accum(a, std::move(acc));
    });
  }

  /// Each row of a repeated `reps` times consecutively: row i -> rows
  /// [i*reps, (i+1)*reps)
  Var rows_repeat_each(Var a, int reps) {
    const auto r = val(a).rows();
    M out(r * reps, val(a).cols());
    for (Eigen::Index i = 0; i < r; ++i)
      out.middleRows(i * reps, reps).rowwise() =
          Eigen::RowVector<T, Eigen::Dynamic>(val(a).row(i));
    return make(std::move(out), {a}, [a, reps](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& g = t.node(self).grad;
      M acc(t.val(a).rows(), t.val(a).cols());
      for (Eigen::Index i = 0; i < acc.rows(); ++i)
        acc.row(i) = g.middleRows(i * reps, reps).colwise().sum();
      t.accum(a, std::move(acc));
    });
  }

  /// The whole block repeated `times` times: out row (j*R + r) = a row r
  Var rows_tile(Var a, int times) {
    const auto r = val(a).rows();
    M out(r * times, val(a).cols());
    for (int j = 0; j < times; ++j) out.middleRows(j * r, r) = val(a);
    return make(std::move(out), {a}, [a, times](Tape& t, int self) {
      if (!t.needs(a)) return;
      const M& g = t.node(self).grad;
      const auto rows = t.val(a).rows();
      M acc = M::Zero(rows, t.val(a).cols());
      for (int j = 0; j < times; ++j) acc += g.middleRows(j * rows, rows);
      t.accum(a, std::move(acc));
    });
  }

  Var vstack(const std::vector<Var>& parts) {
    check(!parts.empty(), "vstack: empty input");
    Eigen::Index rows = 0;
    for (Var p : parts) rows += val(p).rows();
    M out(rows, val(parts[0]).cols());
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, val(p).rows()) = val(p);
      at += val(p).rows();
    }
    auto parts_p = std::make_shared<std::vector<Var>>(parts);
    return make(std::move(out), parts, [parts_p](Tape& t, int self) {
      const M& g = t.node(self).grad;
      Eigen::Index at = 0;
      for (Var p : *parts_p) {
        const auto r = t.val(p).rows();
        if (t.needs(p)) t.accum(p, g.middleRows(at, r));
        at += r;
      }
    });
  }

  Var hcat(Var a, Var b) {
    check(val(a).rows() == val(b).rows(), "hcat: row count mismatch");
    M out(val(a).rows(), val(a).cols() + val(b).cols());
    out.leftCols(val(a).cols()) = val(a);
    out.rightCols(val(b).cols()) = val(b);
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const M& g = t.node(self).grad;
      const auto ca = t.val(a).cols();
      if (t.needs(a)) t.accum(a, g.leftCols(ca));
      if (t.needs(b)) t.accum(b, g.rightCols(t.val(b).cols()));
    });
  }

  // -- attention helpers -------------------------------------------------------

  /// Per-head row dot products: out(r, m) = sum_d a(r, m*dh+d) * b(r, m*dh+d)
  Var head_dot(Var a, Var b, int heads) {
    check_same_shape(a, b, "head_dot");
    const auto rows = val(a).rows();
    const int dh = static_cast<int>(val(a).cols()) / heads;
    M out = M::Zero(rows, heads);
    for (int m = 0; m < heads; ++m)
      out.col(m) = val(a)
                       .middleCols(m * dh, dh)
                       .cwiseProduct(val(b).middleCols(m * dh, dh))
                       .rowwise()
                       .sum();
    return make(std::move(out), {a, b}, [a, b, heads, dh](Tape& t, int self) {
      const M& g = t.node(self).grad;  // R x heads
      for (int m = 0; m < heads; ++m) {
        if (t.needs(a))
          t.accum_block(a, 0, m * dh, g.col(m).asDiagonal() *
                                          t.val(b).middleCols(m * dh, dh));
        if (t.needs(b))
          t.accum_block(b, 0, m * dh, g.col(m).asDiagonal() *
                                          t.val(a).middleCols(m * dh, dh));
      }
    });
  }

  /// Per-head scaling: out(r, m*dh+d) = v(r, m*dh+d) * w(r, m)
  Var head_scale(Var v, Var w, int heads) {
    check(val(v).rows() == val(w).rows() && val(w).cols() == heads,
          "head_scale: shape mismatch");
    const int dh = static_cast<int>(val(v).cols()) / heads;
    M out(val(v).rows(), val(v).cols());
    for (int m = 0; m < heads; ++m)
      out.middleCols(m * dh, dh) =
          val(w).col(m).asDiagonal() * val(v).middleCols(m * dh, dh);
    return make(std::move(out), {v, w}, [v, w, heads, dh](Tape& t, int self) {
      const M& g = t.node(self).grad;
      for (int m = 0; m < heads; ++m) {
        if (t.needs(v))
          t.accum_block(v, 0, m * dh,
                        t.val(w).col(m).asDiagonal() * g.middleCols(m * dh, dh));
        if (t.needs(w)) {
          M dw = g.middleCols(m * dh, dh)
                     .cwiseProduct(t.val(v).middleCols(m * dh, dh))
                     .rowwise()
                     .sum();
          t.accum_col(w, m, std::move(dw));
        }
      }
    });
  }

  /// Multi-head GATv2 aggregation. hs/ht/hv are precomputed source/target/value
  /// projections (N x H); att holds one attention vector per head (heads x dh).
  /// Scores use LeakyReLU(hs[dst] + ht[src]) dotted with the head's attention
  /// vector, softmax-normalised over each destination's incoming edges.
  /// Optionally exposes the attention weights (E x heads).
  Var gat_attention(Var hs, Var ht, Var hv, Var att, const EdgeIndex& g,
                    int heads, T slope, Mat<T>* alpha_out = nullptr) {
    const int H = static_cast<int>(val(hs).cols());
    const int dh = H / heads;
    const int E = g.num_edges();
    check(val(att).rows() == heads && val(att).cols() == dh,
          "gat_attention: attention vector shape mismatch");

    const M& vs = val(hs);
    const M& vt = val(ht);
    const M& vv = val(hv);
    const M& va = val(att);

    // scores
    M score(E, heads);
    for (int e = 0; e < E; ++e) {
      const T* prow_s = vs.row(g.dst[static_cast<std::size_t>(e)]).data();
      const T* prow_t = vt.row(g.src[static_cast<std::size_t>(e)]).data();
      for (int m = 0; m < heads; ++m) {
        T s = T(0);
        const T* pa = va.row(m).data();
        for (int d = 0; d < dh; ++d) {
          const T pre = prow_s[m * dh + d] + prow_t[m * dh + d];
          s += pa[d] * (pre > T(0) ? pre : slope * pre);
        }
        score(e, m) = s;
      }
    }

    // segment softmax over incoming edges per destination
    auto alpha = std::make_shared<M>(E, heads);
    for (int i = 0; i < g.n_nodes; ++i) {
      const int lo = g.offsets[static_cast<std::size_t>(i)];
      const int hi = g.offsets[static_cast<std::size_t>(i) + 1];
      for (int m = 0; m < heads; ++m) {
        T mx = score(lo, m);
        for (int e = lo + 1; e < hi; ++e) mx = std::max(mx, score(e, m));
        T z = T(0);
        for (int e = lo; e < hi; ++e) {
          const T w = std::exp(score(e, m) - mx);
          (*alpha)(e, m) = w;
          z += w;
        }
        for (int e = lo; e < hi; ++e) (*alpha)(e, m) /= z;
      }
    }
    if (alpha_out) *alpha_out = *alpha;

    // weighted aggregation
    M out = M::Zero(g.n_nodes, H);
    for (int e = 0; e < E; ++e) {
      T* po = out.row(g.dst[static_cast<std::size_t>(e)]).data();
      const T* pv = vv.row(g.src[static_cast<std::size_t>(e)]).data();
      for (int m = 0; m < heads; ++m) {
        const T a = (*alpha)(e, m);
        for (int d = 0; d < dh; ++d) po[m * dh + d] += a * pv[m * dh + d];
      }
    }

    const EdgeIndex* gp = &g;
    return make(
        std::move(out), {hs, ht, hv, att},
        [hs, ht, hv, att, alpha, gp, heads, dh, slope](Tape& t, int self) {
          const M& gout = t.node(self).grad;
          const M& vs = t.val(hs);
          const M& vt = t.val(ht);
          const M& vv = t.val(hv);
          const M& va = t.val(att);
          const EdgeIndex& g = *gp;
          const int E = g.num_edges();

          M dhs = M::Zero(vs.rows(), vs.cols());
          M dht = M::Zero(vt.rows(), vt.cols());
          M dhv = M::Zero(vv.rows(), vv.cols());
          M datt = M::Zero(va.rows(), va.cols());

          // d(alpha) and value gradient
          M dalpha(E, heads);
          for (int e = 0; e < E; ++e) {
            const int s = g.src[static_cast<std::size_t>(e)];
            const int d_ = g.dst[static_cast<std::size_t>(e)];
            const T* pg = gout.row(d_).data();
            const T* pv = vv.row(s).data();
            T* pdv = dhv.row(s).data();
            for (int m = 0; m < heads; ++m) {
              const T a = (*alpha)(e, m);
              T acc = T(0);
              for (int d = 0; d < dh; ++d) {
                const int c = m * dh + d;
                acc += pg[c] * pv[c];
                pdv[c] += a * pg[c];
              }
              dalpha(e, m) = acc;
            }
          }

          // softmax jacobian per segment -> score gradient
          M dscore(E, heads);
          for (int i = 0; i < g.n_nodes; ++i) {
            const int lo = g.offsets[static_cast<std::size_t>(i)];
            const int hi = g.offsets[static_cast<std::size_t>(i) + 1];
            for (int m = 0; m < heads; ++m) {
              T dot = T(0);
              for (int e = lo; e < hi; ++e)
                dot += (*alpha)(e, m) * dalpha(e, m);
              for (int e = lo; e < hi; ++e)
                dscore(e, m) = (*alpha)(e, m) * (dalpha(e, m) - dot);
            }
          }

          // score -> (hs, ht, att) through the LeakyReLU preactivation
          for (int e = 0; e < E; ++e) {
            const int s = g.src[static_cast<std::size_t>(e)];
            const int d_ = g.dst[static_cast<std::size_t>(e)];
            const T* prow_s = vs.row(d_).data();
            const T* prow_t = vt.row(s).data();
            T* pdhs = dhs.row(d_).data();
            T* pdht = dht.row(s).data();
            for (int m = 0; m < heads; ++m) {
              const T ds = dscore(e, m);
              if (ds == T(0)) continue;
              const T* pa = va.row(m).data();
              T* pda = datt.row(m).data();
              for (int d = 0; d < dh; ++d) {
                const int c = m * dh + d;
                const T pre = prow_s[c] + prow_t[c];
                const T lp = pre > T(0) ? pre : slope * pre;
                const T dpre = ds * pa[d] * (pre > T(0) ? T(1) : slope);
                pda[d] += ds * lp;
                pdhs[c] += dpre;
                pdht[c] += dpre;
              }
            }
          }

          if (t.needs(hs)) t.accum(hs, std::move(dhs));
          if (t.needs(ht)) t.accum(ht, std::move(dht));
          if (t.needs(hv)) t.accum(hv, std::move(dhv));
          if (t.needs(att)) t.accum(att, std::move(datt));
        });
  }

  /// Inverted dropout with a stored mask; identity when not training.
  Var dropout(Var a, T rate, Rng& rng, bool training) {
    if (!training || rate <= T(0)) return a;
    const T keep = T(1) - rate;
    auto mask = std::make_shared<M>(val(a).rows(), val(a).cols());
    for (Eigen::Index i = 0; i < mask->size(); ++i)
      mask->data()[i] = uniform01(rng) < static_cast<double>(keep)
                            ? T(1) / keep
                            : T(0);
    return make(val(a).cwiseProduct(*mask), {a}, [a, mask](Tape& t, int self) {
      if (t.needs(a))
        t.accum(a, t.node(self).grad.cwiseProduct(*mask));
    });
  }

  /// Mean squared error over all elements, as a 1x1 node.
  Var mse(Var pred, Var target) {
    Var d = sub(pred, target);
    return mean_all(square(d));
  }

  // -- backward ---------------------------------------------------------------

  /// Seeds the (1x1) root gradient with 1 and propagates to all leaves;
  /// gradients of bound parameters are accumulated into Parameter::grad.
  void backward(Var root) {
    check(grad_enabled_, "backward: tape built with gradients disabled");
    Node& r = node(root.id);
    check(r.value.rows() == 1 && r.value.cols() == 1,
          "backward: root must be scalar");
    ensure_grad(root.id);
    r.grad(0, 0) = T(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = node(i);
      if (!n.has_grad) continue;
      if (n.backprop) n.backprop(*this, i);
      if (n.bound) n.bound->grad += n.grad;
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    M value;
    M grad;
    bool needs_grad = false;
    bool has_grad = false;
    std::function<void(Tape&, int)> backprop;
    Parameter<T>* bound = nullptr;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  bool needs(Var v) { return node(v.id).needs_grad; }

  void ensure_grad(int id) {
    Node& n = node(id);
    if (!n.has_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
  }

  template <typename Expr>
  void accum(Var v, Expr&& g) {
    ensure_grad(v.id);
    node(v.id).grad += std::forward<Expr>(g);
  }

  template <typename Expr>
  void accum_block(Var v, int row0, int col0, Expr&& g) {
    ensure_grad(v.id);
    node(v.id).grad.block(row0, col0, g.rows(), g.cols()) += g;
  }

  template <typename Expr>
  void accum_col(Var v, int col, Expr&& g) {
    ensure_grad(v.id);
    node(v.id).grad.col(col) += g;
  }

  int push(M value, bool needs_grad, std::function<void(Tape&, int)> bp) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backprop = std::move(bp);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Var make(M value, std::initializer_list<Var> parents,
           std::function<void(Tape&, int)> bp) {
    bool any = false;
    if (grad_enabled_)
      for (Var p : parents) any = any || needs(p);
    return Var{push(std::move(value), any, any ? std::move(bp) : nullptr)};
  }

  Var make(M value, const std::vector<Var>& parents,
           std::function<void(Tape&, int)> bp) {
    bool any = false;
    if (grad_enabled_)
      for (Var p : parents) any = any || needs(p);
    return Var{push(std::move(value), any, any ? std::move(bp) : nullptr)};
  }

  void check_same_shape(Var a, Var b, const char* op) {
    check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          std::string(op) + ": shape mismatch");
  }
};

}  // namespace cgfenet::ad
