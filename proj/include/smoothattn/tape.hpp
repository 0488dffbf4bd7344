#ifndef SMOOTHATTN_TAPE_HPP
#define SMOOTHATTN_TAPE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "smoothattn/array.hpp"
#include "smoothattn/common.hpp"

namespace smoothattn {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Array& val() const;
    double scalar() const;
};

// One recorded operation. `backward` reads the node's own gradient off the
// tape and accumulates vector-Jacobian products into its parents' gradients.
struct Node {
    Array value;
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;  // null for leaves
};

// Append-only operation record. Parents always have strictly smaller ids, so
// a single reverse sweep is a valid topological order. Node values are
// reference-stable: appending never moves earlier nodes, so a held val()
// reference stays valid for the tape's lifetime. Not shareable across
// threads; independent evaluations use independent tapes.
class Tape {
  public:
    std::deque<Node> nodes;
    std::vector<Array> grads;
    std::vector<char> touched;

    Var leaf(Array value) {
        Node n;
        n.value = std::move(value);
        nodes.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes.size()) - 1};
    }

    Var constant(double v) { return leaf(Array::scalar(v)); }

    Var emit(Array value, std::vector<int> parents, std::function<void(Tape&, int)> bw) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backward = std::move(bw);
        nodes.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes.size()) - 1};
    }

    const Array& value(int id) const { return nodes[static_cast<std::size_t>(id)].value; }

    Array& grad(int id) {
        auto i = static_cast<std::size_t>(id);
        if (!touched[i]) {
            grads[i] = Array::zeros(nodes[i].value.shape);
            touched[i] = 1;
        }
        return grads[i];
    }

    bool has_grad(int id) const { return touched[static_cast<std::size_t>(id)] != 0; }

    std::size_t size() const { return nodes.size(); }
};

inline const Array& Var::val() const { return tape->value(id); }
inline double Var::scalar() const {
    check(val().size() == 1, "Var::scalar: node is not scalar, shape ", val().shape_str());
    return val().data[0];
}

// Populates gradients of every node reachable from `root`; unreachable nodes
// keep a zero gradient. `root` must be scalar-shaped.
inline void backward(Tape& t, Var root) {
    check(root.tape == &t, "backward: root does not belong to this tape");
    check(root.val().size() == 1, "backward: root must be scalar-shaped, got ",
          root.val().shape_str());
    t.grads.assign(t.nodes.size(), Array{});
    t.touched.assign(t.nodes.size(), 0);
    t.grad(root.id).data[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        auto idx = static_cast<std::size_t>(i);
        if (!t.touched[idx]) continue;
        if (t.nodes[idx].backward) t.nodes[idx].backward(t, i);
    }
    // Guarantee zero buffers exist for untouched nodes up to the root.
    for (int i = 0; i <= root.id; ++i) t.grad(i);
}

// ---------------------------------------------------------------------------
// Elementwise operations. Broadcasting is restricted to scalar-with-array;
// anything else must match shapes exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_tape(Var a, Var b, const char* op) {
    check(a.tape == b.tape, op, ": operands live on different tapes");
}

enum class BinShape { Equal, ScalarLeft, ScalarRight };

inline BinShape binary_shape(const Array& a, const Array& b, const char* op) {
    if (a.same_shape(b)) return BinShape::Equal;
    if (a.is_scalar()) return BinShape::ScalarLeft;
    if (b.is_scalar()) return BinShape::ScalarRight;
    fail(op, ": shape mismatch ", a.shape_str(), " vs ", b.shape_str(),
         " (only equal shapes or scalar-with-array broadcast)");
}

// Accumulate g into the gradient of parent `pid`; if the parent is a
// broadcast scalar, sum g into its single slot.
inline void accum_grad(Tape& t, int pid, const double* g, std::size_t n) {
    Array& dst = t.grad(pid);
    if (dst.size() == 1 && n > 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g[i];
        dst.data[0] += s;
    } else {
        for (std::size_t i = 0; i < n; ++i) dst.data[i] += g[i];
    }
}

template <typename FwdFn, typename BwdFn>
Var binary_op(const char* name, Var a, Var b, FwdFn fwd, BwdFn bwd) {
    require_same_tape(a, b, name);
    Tape& t = *a.tape;
    const Array& av = a.val();
    const Array& bv = b.val();
    BinShape bs = binary_shape(av, bv, name);
    const Array& big = (bs == BinShape::ScalarLeft) ? bv : av;
    std::size_t n = big.size();
    Array out = Array::zeros(big.shape);
    for (std::size_t i = 0; i < n; ++i) {
        double x = av.data[bs == BinShape::ScalarLeft ? 0 : i];
        double y = bv.data[bs == BinShape::ScalarRight ? 0 : i];
        out.data[i] = fwd(x, y);
    }
    int aid = a.id, bid = b.id;
    return t.emit(std::move(out), {aid, bid}, [aid, bid, bs, n, bwd](Tape& tt, int self) {
        const Array& g = tt.grad(self);
        const Array& av2 = tt.value(aid);
        const Array& bv2 = tt.value(bid);
        std::vector<double> ga(n), gb(n);
        for (std::size_t i = 0; i < n; ++i) {
            double x = av2.data[bs == BinShape::ScalarLeft ? 0 : i];
            double y = bv2.data[bs == BinShape::ScalarRight ? 0 : i];
            auto [dx, dy] = bwd(x, y);
            ga[i] = dx * g.data[i];
            gb[i] = dy * g.data[i];
        }
        accum_grad(tt, aid, ga.data(), n);
        accum_grad(tt, bid, gb.data(), n);
    });
}

template <typename FwdFn, typename BwdFn>
Var unary_op(const char* /*name*/, Var a, FwdFn fwd, BwdFn bwd) {
    Tape& t = *a.tape;
    const Array& av = a.val();
    std::size_t n = av.size();
    Array out = Array::zeros(av.shape);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = fwd(av.data[i]);
    int aid = a.id;
    return t.emit(std::move(out), {aid}, [aid, n, bwd](Tape& tt, int self) {
        const Array& g = tt.grad(self);
        const Array& av2 = tt.value(aid);
        const Array& yv = tt.value(self);
        Array& ga = tt.grad(aid);
        for (std::size_t i = 0; i < n; ++i)
            ga.data[i] += bwd(av2.data[i], yv.data[i]) * g.data[i];
    });
}

}  // namespace detail

inline Var add(Var a, Var b) {
    return detail::binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

inline Var sub(Var a, Var b) {
    return detail::binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

inline Var mul(Var a, Var b) {
    return detail::binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y) { return std::pair<double, double>{y, x}; });
}

inline Var div(Var a, Var b) {
    return detail::binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double x, double y) {
            return std::pair<double, double>{1.0 / y, -x / (y * y)};
        });
}

inline Var neg(Var a) {
    return detail::unary_op(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Var exp(Var a) {
    return detail::unary_op(
        "exp", a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

inline Var log(Var a) {
    for (double v : a.val().data)
        check(v > 0.0, "log: non-positive input ", v);
    return detail::unary_op(
        "log", a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

inline Var sqrt(Var a) {
    for (double v : a.val().data)
        check(v > 0.0, "sqrt: non-positive input ", v);
    return detail::unary_op(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

// sqrt clamped at zero with zero subgradient there; used by the total
// variation loss where the argument can be exactly zero.
inline Var sqrt_or_zero(Var a) {
    return detail::unary_op(
        "sqrt_or_zero", a, [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
        [](double x, double y) { return x > 0.0 ? 0.5 / y : 0.0; });
}

inline Var tanh(Var a) {
    return detail::unary_op(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Var square(Var a) {
    return detail::unary_op(
        "square", a, [](double x) { return x * x; },
        [](double x, double) { return 2.0 * x; });
}

inline Var sigmoid(Var a) {
    return detail::unary_op(
        "sigmoid", a,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                       : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------
// Matrix / structural operations
// ---------------------------------------------------------------------------

namespace detail {

// C += A(m x k) * B(k x n), all row-major.
inline void gemm_acc(const double* A, const double* B, double* C, std::size_t m,
                     std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = A + i * k;
        double* crow = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double a = arow[p];
            if (a == 0.0) continue;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C += A^T(k x m -> m x k view) * B(k stored as rows) : C(m x n) += sum_r A[r,i]*B[r,j]
inline void gemm_at_b_acc(const double* A, const double* B, double* C, std::size_t r,
                          std::size_t m, std::size_t n) {
    for (std::size_t p = 0; p < r; ++p) {
        const double* arow = A + p * m;
        const double* brow = B + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            double a = arow[i];
            if (a == 0.0) continue;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C += A(m x k) * B^T(n x k) : C(m x n) += sum_p A[i,p]*B[j,p]
inline void gemm_a_bt_acc(const double* A, const double* B, double* C, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = A + i * k;
        double* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = B + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

inline void require_rank2(const Array& a, const char* op) {
    check(a.rank() == 2, op, ": expected rank-2 array, got ", a.shape_str());
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
    detail::require_same_tape(a, b, "matmul");
    const Array& av = a.val();
    const Array& bv = b.val();
    detail::require_rank2(av, "matmul");
    detail::require_rank2(bv, "matmul");
    check(av.shape[1] == bv.shape[0], "matmul: inner dimensions differ: ",
          av.shape_str(), " vs ", bv.shape_str());
    std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Array out = Array::zeros({m, n});
    detail::gemm_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    int aid = a.id, bid = b.id;
    return a.tape->emit(std::move(out), {aid, bid}, [aid, bid, m, k, n](Tape& t, int self) {
        const Array& g = t.grad(self);
        const Array& av2 = t.value(aid);
        const Array& bv2 = t.value(bid);
        // dA = G * B^T, dB = A^T * G
        detail::gemm_a_bt_acc(g.data.data(), bv2.data.data(), t.grad(aid).data.data(), m, n, k);
        detail::gemm_at_b_acc(av2.data.data(), g.data.data(), t.grad(bid).data.data(), m, k, n);
    });
}

// y = x*W + b with b broadcast across rows.
inline Var affine(Var x, Var W, Var b) {
    detail::require_same_tape(x, W, "affine");
    detail::require_same_tape(x, b, "affine");
    const Array& xv = x.val();
    const Array& wv = W.val();
    const Array& bv = b.val();
    detail::require_rank2(xv, "affine");
    detail::require_rank2(wv, "affine");
    check(xv.shape[1] == wv.shape[0], "affine: inner dimensions differ: ", xv.shape_str(),
          " vs ", wv.shape_str());
    check(bv.size() == wv.shape[1], "affine: bias length ", bv.size(),
          " does not match output width ", wv.shape[1]);
    std::size_t m = xv.shape[0], k = xv.shape[1], n = wv.shape[1];
    Array out = Array::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = bv.data[j];
    detail::gemm_acc(xv.data.data(), wv.data.data(), out.data.data(), m, k, n);
    int xid = x.id, wid = W.id, bid = b.id;
    return x.tape->emit(std::move(out), {xid, wid, bid},
                        [xid, wid, bid, m, k, n](Tape& t, int self) {
        const Array& g = t.grad(self);
        const Array& xv2 = t.value(xid);
        const Array& wv2 = t.value(wid);
        detail::gemm_a_bt_acc(g.data.data(), wv2.data.data(), t.grad(xid).data.data(), m, n, k);
        detail::gemm_at_b_acc(xv2.data.data(), g.data.data(), t.grad(wid).data.data(), m, k, n);
        Array& gb = t.grad(bid);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
    });
}

inline Var concat(const std::vector<Var>& parts, int axis) {
    check(!parts.empty(), "concat: no parts");
    Tape& t = *parts[0].tape;
    for (const Var& p : parts) detail::require_same_tape(parts[0], p, "concat");
    const Array& first = parts[0].val();
    std::size_t rank = first.rank();
    check(rank >= 1 && rank <= 2, "concat: rank must be 1 or 2, got ", first.shape_str());
    check(axis >= 0 && static_cast<std::size_t>(axis) < rank, "concat: axis ", axis,
          " out of range for ", first.shape_str());

    std::vector<int> pids;
    pids.reserve(parts.size());
    for (const Var& p : parts) pids.push_back(p.id);

    if (rank == 1 || axis == 0) {
        // Stack along rows (or plain vector concatenation).
        std::size_t ncols = rank == 2 ? first.shape[1] : 1;
        std::size_t total = 0;
        for (const Var& p : parts) {
            const Array& v = p.val();
            check(v.rank() == rank, "concat: rank mismatch ", v.shape_str());
            if (rank == 2)
                check(v.shape[1] == ncols, "concat: column extent mismatch ",
                      v.shape_str(), " vs ", first.shape_str());
            total += v.shape[0];
        }
        Array out = rank == 2 ? Array::zeros({total, ncols}) : Array::zeros({total});
        std::size_t off = 0;
        for (const Var& p : parts) {
            const Array& v = p.val();
            std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<long>(off));
            off += v.size();
        }
        return t.emit(std::move(out), pids, [pids](Tape& tt, int self) {
            const Array& g = tt.grad(self);
            std::size_t off2 = 0;
            for (int pid : pids) {
                Array& gp = tt.grad(pid);
                for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += g.data[off2 + i];
                off2 += gp.size();
            }
        });
    }

    // axis == 1: concatenate columns of rank-2 arrays.
    std::size_t nrows = first.shape[0];
    std::size_t total_cols = 0;
    std::vector<std::size_t> widths;
    for (const Var& p : parts) {
        const Array& v = p.val();
        check(v.rank() == 2, "concat: rank mismatch ", v.shape_str());
        check(v.shape[0] == nrows, "concat: row extent mismatch ", v.shape_str(), " vs ",
              first.shape_str());
        widths.push_back(v.shape[1]);
        total_cols += v.shape[1];
    }
    Array out = Array::zeros({nrows, total_cols});
    std::size_t coff = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const Array& v = parts[pi].val();
        for (std::size_t r = 0; r < nrows; ++r)
            std::copy(v.data.begin() + static_cast<long>(r * widths[pi]),
                      v.data.begin() + static_cast<long>((r + 1) * widths[pi]),
                      out.data.begin() + static_cast<long>(r * total_cols + coff));
        coff += widths[pi];
    }
    return t.emit(std::move(out), pids,
                  [pids, widths, nrows, total_cols](Tape& tt, int self) {
        const Array& g = tt.grad(self);
        std::size_t coff2 = 0;
        for (std::size_t pi = 0; pi < pids.size(); ++pi) {
            Array& gp = tt.grad(pids[pi]);
            for (std::size_t r = 0; r < nrows; ++r)
                for (std::size_t c = 0; c < widths[pi]; ++c)
                    gp.data[r * widths[pi] + c] += g.data[r * total_cols + coff2 + c];
            coff2 += widths[pi];
        }
    });
}

inline Var gather_rows(Var x, std::vector<int> idx) {
    const Array& xv = x.val();
    detail::require_rank2(xv, "gather_rows");
    std::size_t ncols = xv.shape[1];
    for (int i : idx)
        check(i >= 0 && static_cast<std::size_t>(i) < xv.shape[0],
              "gather_rows: index ", i, " out of range for ", xv.shape_str());
    Array out = Array::zeros({idx.size(), ncols});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(xv.data.begin() + idx[r] * static_cast<long>(ncols),
                  xv.data.begin() + (idx[r] + 1) * static_cast<long>(ncols),
                  out.data.begin() + static_cast<long>(r * ncols));
    int xid = x.id;
    return x.tape->emit(std::move(out), {xid},
                        [xid, idx = std::move(idx), ncols](Tape& t, int self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad(xid);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < ncols; ++c)
                gx.data[static_cast<std::size_t>(idx[r]) * ncols + c] += g.data[r * ncols + c];
    });
}

inline Var slice_rows(Var x, std::size_t begin, std::size_t count) {
    const Array& xv = x.val();
    detail::require_rank2(xv, "slice_rows");
    check(begin + count <= xv.shape[0], "slice_rows: range [", begin, ", ", begin + count,
          ") out of bounds for ", xv.shape_str());
    std::size_t ncols = xv.shape[1];
    Array out({count, ncols},
              std::vector<double>(xv.data.begin() + static_cast<long>(begin * ncols),
                                  xv.data.begin() + static_cast<long>((begin + count) * ncols)));
    int xid = x.id;
    return x.tape->emit(std::move(out), {xid}, [xid, begin, count, ncols](Tape& t, int self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad(xid);
        for (std::size_t i = 0; i < count * ncols; ++i) gx.data[begin * ncols + i] += g.data[i];
    });
}

inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const Array& xv = x.val();
    detail::require_rank2(xv, "slice_cols");
    check(begin + count <= xv.shape[1], "slice_cols: range [", begin, ", ", begin + count,
          ") out of bounds for ", xv.shape_str());
    std::size_t nrows = xv.shape[0], ncols = xv.shape[1];
    Array out = Array::zeros({nrows, count});
    for (std::size_t r = 0; r < nrows; ++r)
        for (std::size_t c = 0; c < count; ++c) out.data[r * count + c] = xv.data[r * ncols + begin + c];
    int xid = x.id;
    return x.tape->emit(std::move(out), {xid},
                        [xid, begin, count, nrows, ncols](Tape& t, int self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad(xid);
        for (std::size_t r = 0; r < nrows; ++r)
            for (std::size_t c = 0; c < count; ++c)
                gx.data[r * ncols + begin + c] += g.data[r * count + c];
    });
}

// [R x C] -> [R x 1] sum along each row.
inline Var rowsum(Var x) {
    const Array& xv = x.val();
    detail::require_rank2(xv, "rowsum");
    std::size_t nrows = xv.shape[0], ncols = xv.shape[1];
    Array out = Array::zeros({nrows, 1});
    for (std::size_t r = 0; r < nrows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < ncols; ++c) s += xv.data[r * ncols + c];
        out.data[r] = s;
    }
    int xid = x.id;
    return x.tape->emit(std::move(out), {xid}, [xid, nrows, ncols](Tape& t, int self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad(xid);
        for (std::size_t r = 0; r < nrows; ++r)
            for (std::size_t c = 0; c < ncols; ++c) gx.data[r * ncols + c] += g.data[r];
    });
}

// Full reduction to a scalar.
inline Var sum(Var x) {
    const Array& xv = x.val();
    double s = 0.0;
    for (double v : xv.data) s += v;
    int xid = x.id;
    std::size_t n = xv.size();
    return x.tape->emit(Array::scalar(s), {xid}, [xid, n](Tape& t, int self) {
        double g = t.grad(self).data[0];
        Array& gx = t.grad(xid);
        for (std::size_t i = 0; i < n; ++i) gx.data[i] += g;
    });
}

inline Var inner(Var a, Var b) {
    detail::require_same_tape(a, b, "inner");
    const Array& av = a.val();
    const Array& bv = b.val();
    check(av.size() == bv.size(), "inner: length mismatch ", av.shape_str(), " vs ",
          bv.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av.data[i] * bv.data[i];
    int aid = a.id, bid = b.id;
    std::size_t n = av.size();
    return a.tape->emit(Array::scalar(s), {aid, bid}, [aid, bid, n](Tape& t, int self) {
        double g = t.grad(self).data[0];
        const Array& av2 = t.value(aid);
        const Array& bv2 = t.value(bid);
        Array& ga = t.grad(aid);
        Array& gb = t.grad(bid);
        for (std::size_t i = 0; i < n; ++i) {
            ga.data[i] += bv2.data[i] * g;
            gb.data[i] += av2.data[i] * g;
        }
    });
}

// Softmax over all entries, stabilized by max subtraction. The normalizer is
// accumulated in ascending value order so the result does not depend on how
// the logits happen to be indexed (needed for exact permutation equivariance
// of the attention distribution).
inline Var softmax(Var logits) {
    const Array& lv = logits.val();
    check(lv.size() >= 1, "softmax: empty logits");
    for (double v : lv.data) check(std::isfinite(v), "softmax: non-finite logit ", v);
    std::size_t n = lv.size();
    double mx = lv.data[0];
    for (double v : lv.data) mx = std::max(mx, v);
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = std::exp(lv.data[i] - mx);
    std::vector<double> sorted = e;
    std::sort(sorted.begin(), sorted.end());
    double denom = 0.0;
    for (double v : sorted) denom += v;
    Array out = Array::zeros(lv.shape);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = e[i] / denom;
    int lid = logits.id;
    return logits.tape->emit(std::move(out), {lid}, [lid, n](Tape& t, int self) {
        const Array& g = t.grad(self);
        const Array& y = t.value(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g.data[i] * y.data[i];
        Array& gl = t.grad(lid);
        for (std::size_t i = 0; i < n; ++i) gl.data[i] += y.data[i] * (g.data[i] - dot);
    });
}

// Attention-weighted mix of feature rows: theta [K x 1] (or [K]) against
// feats [K x H] -> [1 x H]. Per output column the K products are summed in
// ascending value order, making the mix independent of agent ordering.
inline Var attention_mix(Var theta, Var feats) {
    detail::require_same_tape(theta, feats, "attention_mix");
    const Array& tv = theta.val();
    const Array& fv = feats.val();
    detail::require_rank2(fv, "attention_mix");
    std::size_t k = fv.shape[0], h = fv.shape[1];
    check(tv.size() == k, "attention_mix: weight count ", tv.size(),
          " does not match feature rows ", k);
    Array out = Array::zeros({1, h});
    std::vector<double> terms(k);
    for (std::size_t c = 0; c < h; ++c) {
        for (std::size_t r = 0; r < k; ++r) terms[r] = tv.data[r] * fv.data[r * h + c];
        std::sort(terms.begin(), terms.end());
        double s = 0.0;
        for (double v : terms) s += v;
        out.data[c] = s;
    }
    int tid = theta.id, fid = feats.id;
    return theta.tape->emit(std::move(out), {tid, fid}, [tid, fid, k, h](Tape& t, int self) {
        const Array& g = t.grad(self);
        const Array& tv2 = t.value(tid);
        const Array& fv2 = t.value(fid);
        Array& gt = t.grad(tid);
        Array& gf = t.grad(fid);
        for (std::size_t r = 0; r < k; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < h; ++c) {
                s += g.data[c] * fv2.data[r * h + c];
                gf.data[r * h + c] += tv2.data[r] * g.data[c];
            }
            gt.data[r] += s;
        }
    });
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_TAPE_HPP
