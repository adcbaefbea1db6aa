#include "tape.hpp"

#include <algorithm>
#include <cmath>

namespace dveslt {

namespace {

void check_finite(const Tensor& t, const char* opname) {
    for (double v : t.data)
        if (!std::isfinite(v)) fail(std::string(opname) + ": non-finite output");
}

void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) fail("vars from different tapes");
}

} // namespace

Var Tape::emit(Tensor value, std::vector<int> inputs,
               std::function<void(Tape&, int)> bw, const char* opname) {
    check_finite(value, opname);
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(bw);
    for (int i : n.inputs)
        if (i < 0 || i >= static_cast<int>(nodes_.size()))
            fail(std::string(opname) + ": input index out of range");
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor v) { return emit(std::move(v), {}, nullptr, "leaf"); }

Var Tape::param(ParamStore& ps, const std::string& name) {
    Var v = emit(ps.value(name), {}, nullptr, "param");
    Node& n = node(v);
    n.store = &ps;
    n.pname = name;
    return v;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = node(id);
    if (n.grad.data.empty() && n.value.size() > 0) n.grad = Tensor::zeros(n.value.shape);
    if (n.grad.data.empty() && n.value.size() == 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.data.size() != n.value.data.size())
        fail("grad not computed for this node");
    return n.grad;
}

void Tape::backward(Var loss) {
    if (!node(loss).value.is_scalar()) fail("backward: loss must be scalar");
    backward_seeded({{loss, Tensor::scalar(1.0)}});
}

void Tape::backward_seeded(const std::vector<std::pair<Var, Tensor>>& seeds) {
    int top = -1;
    for (auto& [v, seed] : seeds) {
        Node& n = node(v);
        if (seed.shape != n.value.shape) fail("backward: seed shape mismatch");
        Tensor& g = grad_buf(v.id);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += seed.data[i];
        top = std::max(top, v.id);
    }
    for (int id = top; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.data.size() != n.value.data.size()) continue; // unreached
        if (n.backward) n.backward(*this, id);
        if (n.store) {
            Tensor& pg = n.store->grad(n.pname);
            for (size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += n.grad.data[i];
        }
    }
}

// ---- elementwise ---------------------------------------------------------

Var add(Var a, Var b) {
    require_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.shape != B.shape)
        fail("add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    int ia = a.id, ib = b.id;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gb = tp.grad_buf(ib);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i];
            gb.data[i] += g.data[i];
        }
    }, "add");
}

Var sub(Var a, Var b) {
    require_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.shape != B.shape)
        fail("sub: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
    int ia = a.id, ib = b.id;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gb = tp.grad_buf(ib);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i];
            gb.data[i] -= g.data[i];
        }
    }, "sub");
}

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.shape != B.shape)
        fail("mul: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    int ia = a.id, ib = b.id;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& A = tp.node(ia).value;
        const Tensor& B = tp.node(ib).value;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gb = tp.grad_buf(ib);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i] * B.data[i];
            gb.data[i] += g.data[i] * A.data[i];
        }
    }, "mul");
}

Var scalar_mul(Var a, double c) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.data) v *= c;
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, c](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
    }, "scalar_mul");
}

Var mul_scalar_var(Var a, Var s) {
    require_same_tape(a, s);
    Tape& t = *a.tape;
    if (!t.value(s).is_scalar()) fail("mul_scalar_var: s must be scalar");
    double sv = t.value(s).item();
    Tensor out = t.value(a);
    for (double& v : out.data) v *= sv;
    int ia = a.id, is = s.id;
    return t.emit(std::move(out), {ia, is}, [ia, is, sv](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& A = tp.node(ia).value;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gs = tp.grad_buf(is);
        double acc = 0.0;
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += sv * g.data[i];
            acc += g.data[i] * A.data[i];
        }
        gs.data[0] += acc;
    }, "mul_scalar_var");
}

Var reciprocal(Var a) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.data) v = 1.0 / v;
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value;
        Tensor& ga = tp.grad_buf(ia);
        for (size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] -= g.data[i] * y.data[i] * y.data[i];
    }, "reciprocal");
}

Var exp_op(Var a) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.data) v = std::exp(v);
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value;
        Tensor& ga = tp.grad_buf(ia);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
    }, "exp");
}

Var log_op(Var a) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.data) v = std::log(v);
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& x = tp.node(ia).value;
        Tensor& ga = tp.grad_buf(ia);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / x.data[i];
    }, "log");
}

Var neg(Var a) { return scalar_mul(a, -1.0); }

Var relu(Var a) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& x = tp.node(ia).value;
        Tensor& ga = tp.grad_buf(ia);
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] > 0.0) ga.data[i] += g.data[i];
    }, "relu");
}

Var clamp_min(Var a, double m) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.data) v = v > m ? v : m;
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, m](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& x = tp.node(ia).value;
        Tensor& ga = tp.grad_buf(ia);
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] > m) ga.data[i] += g.data[i];
    }, "clamp_min");
}

// ---- reductions / shaping ------------------------------------------------

Var sum_all(Var a) {
    Tape& t = *a.tape;
    double s = 0.0;
    for (double v : t.value(a).data) s += v;
    int ia = a.id;
    return t.emit(Tensor::scalar(s), {ia}, [ia](Tape& tp, int self) {
        double g = tp.node(self).grad.data[0];
        Tensor& ga = tp.grad_buf(ia);
        for (double& v : ga.data) v += g;
    }, "sum_all");
}

Var mean_rows(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() != 2) fail("mean_rows: expected rank-2, got " + shape_str(A.shape));
    int64_t L = A.dim(0), d = A.dim(1);
    if (L < 1) fail("mean_rows: empty sequence");
    Tensor out = Tensor::zeros({d});
    for (int64_t i = 0; i < L; ++i)
        for (int64_t j = 0; j < d; ++j) out.data[j] += A.data[i * d + j];
    for (double& v : out.data) v /= static_cast<double>(L);
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, L, d](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        double inv = 1.0 / static_cast<double>(L);
        for (int64_t i = 0; i < L; ++i)
            for (int64_t j = 0; j < d; ++j) ga.data[i * d + j] += g.data[j] * inv;
    }, "mean_rows");
}

Var mean_trailing(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() < 3) fail("mean_trailing: expected rank>=3, got " + shape_str(A.shape));
    int64_t N = A.dim(0), C = A.dim(1);
    int64_t rest = 1;
    for (size_t i = 2; i < A.rank(); ++i) rest *= A.dim(i);
    Tensor out = Tensor::zeros({N, C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double* p = &A.data[(n * C + c) * rest];
            double s = 0.0;
            for (int64_t r = 0; r < rest; ++r) s += p[r];
            out.data[n * C + c] = s / static_cast<double>(rest);
        }
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, N, C, rest](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        double inv = 1.0 / static_cast<double>(rest);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                double gv = g.data[n * C + c] * inv;
                double* p = &ga.data[(n * C + c) * rest];
                for (int64_t r = 0; r < rest; ++r) p[r] += gv;
            }
    }, "mean_trailing");
}

Var reshape(Var a, Shape s) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (shape_size(s) != A.size())
        fail("reshape: size mismatch " + shape_str(A.shape) + " -> " + shape_str(s));
    Tensor out{std::move(s), A.data};
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    }, "reshape");
}

Var transpose2(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() != 2) fail("transpose2: expected rank-2, got " + shape_str(A.shape));
    int64_t m = A.dim(0), n = A.dim(1);
    Tensor out = Tensor::zeros({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.data[j * m + i] = A.data[i * n + j];
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, m, n](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) ga.data[i * n + j] += g.data[j * m + i];
    }, "transpose2");
}

Var permute3(Var a, int p0, int p1, int p2) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() != 3) fail("permute3: expected rank-3, got " + shape_str(A.shape));
    int perm[3] = {p0, p1, p2};
    int64_t od[3] = {A.dim(static_cast<size_t>(p0)), A.dim(static_cast<size_t>(p1)),
                     A.dim(static_cast<size_t>(p2))};
    int64_t id0 = A.dim(0), id1 = A.dim(1), id2 = A.dim(2);
    Tensor out = Tensor::zeros({od[0], od[1], od[2]});
    int64_t idx[3];
    for (idx[0] = 0; idx[0] < id0; ++idx[0])
        for (idx[1] = 0; idx[1] < id1; ++idx[1])
            for (idx[2] = 0; idx[2] < id2; ++idx[2]) {
                int64_t o0 = idx[perm[0]], o1 = idx[perm[1]], o2 = idx[perm[2]];
                out.data[(o0 * od[1] + o1) * od[2] + o2] =
                    A.data[(idx[0] * id1 + idx[1]) * id2 + idx[2]];
            }
    int ia = a.id;
    int q0 = p0, q1 = p1, q2 = p2;
    return t.emit(std::move(out), {ia},
                  [ia, q0, q1, q2, id0, id1, id2](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        int perm[3] = {q0, q1, q2};
        int64_t od[3] = {g.shape[0], g.shape[1], g.shape[2]};
        int64_t idx[3];
        for (idx[0] = 0; idx[0] < id0; ++idx[0])
            for (idx[1] = 0; idx[1] < id1; ++idx[1])
                for (idx[2] = 0; idx[2] < id2; ++idx[2]) {
                    int64_t o0 = idx[perm[0]], o1 = idx[perm[1]], o2 = idx[perm[2]];
                    ga.data[(idx[0] * id1 + idx[1]) * id2 + idx[2]] +=
                        g.data[(o0 * od[1] + o1) * od[2] + o2];
                }
    }, "permute3");
}

Var concat_cols(Var a, Var b) {
    require_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(0) != B.dim(0))
        fail("concat_cols: incompatible shapes " + shape_str(A.shape) + " vs " +
             shape_str(B.shape));
    int64_t L = A.dim(0), d1 = A.dim(1), d2 = B.dim(1);
    Tensor out = Tensor::zeros({L, d1 + d2});
    for (int64_t i = 0; i < L; ++i) {
        std::copy_n(&A.data[i * d1], d1, &out.data[i * (d1 + d2)]);
        std::copy_n(&B.data[i * d2], d2, &out.data[i * (d1 + d2) + d1]);
    }
    int ia = a.id, ib = b.id;
    return t.emit(std::move(out), {ia, ib}, [ia, ib, L, d1, d2](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t i = 0; i < L; ++i) {
            for (int64_t j = 0; j < d1; ++j) ga.data[i * d1 + j] += g.data[i * (d1 + d2) + j];
            for (int64_t j = 0; j < d2; ++j)
                gb.data[i * d2 + j] += g.data[i * (d1 + d2) + d1 + j];
        }
    }, "concat_cols");
}

Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) fail("stack_rows: empty input");
    Tape& t = *rows[0].tape;
    int64_t d = t.value(rows[0]).size();
    int64_t k = static_cast<int64_t>(rows.size());
    Tensor out = Tensor::zeros({k, d});
    std::vector<int> ids;
    for (int64_t i = 0; i < k; ++i) {
        const Tensor& R = t.value(rows[static_cast<size_t>(i)]);
        if (R.rank() != 1 || R.dim(0) != d)
            fail("stack_rows: row " + std::to_string(i) + " has shape " + shape_str(R.shape));
        std::copy_n(R.data.data(), d, &out.data[i * d]);
        ids.push_back(rows[static_cast<size_t>(i)].id);
    }
    return t.emit(std::move(out), ids, [ids, d](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        for (size_t i = 0; i < ids.size(); ++i) {
            Tensor& gr = tp.grad_buf(ids[i]);
            for (int64_t j = 0; j < d; ++j)
                gr.data[static_cast<size_t>(j)] += g.data[i * static_cast<size_t>(d) + static_cast<size_t>(j)];
        }
    }, "stack_rows");
}

Var diag_sum(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() != 2 || A.dim(0) != A.dim(1))
        fail("diag_sum: expected square matrix, got " + shape_str(A.shape));
    int64_t n = A.dim(0);
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += A.data[i * n + i];
    int ia = a.id;
    return t.emit(Tensor::scalar(s), {ia}, [ia, n](Tape& tp, int self) {
        double g = tp.node(self).grad.data[0];
        Tensor& ga = tp.grad_buf(ia);
        for (int64_t i = 0; i < n; ++i) ga.data[i * n + i] += g;
    }, "diag_sum");
}

Var repeat_to_length(Var a, int64_t stride, int64_t total) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() != 2) fail("repeat_to_length: expected rank-2, got " + shape_str(A.shape));
    if (stride < 1 || total < 1) fail("repeat_to_length: bad stride/total");
    int64_t W = A.dim(0), d = A.dim(1);
    Tensor out = Tensor::zeros({total, d});
    for (int64_t ti = 0; ti < total; ++ti) {
        int64_t w = std::min(ti / stride, W - 1);
        std::copy_n(&A.data[w * d], d, &out.data[ti * d]);
    }
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, stride, total, W, d](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        for (int64_t ti = 0; ti < total; ++ti) {
            int64_t w = std::min(ti / stride, W - 1);
            for (int64_t j = 0; j < d; ++j) ga.data[w * d + j] += g.data[ti * d + j];
        }
    }, "repeat_to_length");
}

// ---- broadcast add -------------------------------------------------------

Var add_rowvec(Var x, Var b) {
    require_same_tape(x, b);
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const Tensor& B = t.value(b);
    if (B.rank() != 1 || X.rank() < 1 || X.shape.back() != B.dim(0))
        fail("add_rowvec: shapes " + shape_str(X.shape) + " vs " + shape_str(B.shape));
    int64_t d = B.dim(0);
    int64_t rows = X.size() / d;
    Tensor out = X;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j) out.data[r * d + j] += B.data[j];
    int ix = x.id, ib = b.id;
    return t.emit(std::move(out), {ix, ib}, [ix, ib, rows, d](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& gx = tp.grad_buf(ix);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < d; ++j) {
                gx.data[r * d + j] += g.data[r * d + j];
                gb.data[j] += g.data[r * d + j];
            }
    }, "add_rowvec");
}

Var add_bcast_last2(Var a, Var m) {
    require_same_tape(a, m);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& M = t.value(m);
    if (A.rank() != 3 || M.rank() != 2 || A.dim(1) != M.dim(0) || A.dim(2) != M.dim(1))
        fail("add_bcast_last2: shapes " + shape_str(A.shape) + " vs " + shape_str(M.shape));
    int64_t h = A.dim(0), n = M.size();
    Tensor out = A;
    for (int64_t k = 0; k < h; ++k)
        for (int64_t i = 0; i < n; ++i) out.data[k * n + i] += M.data[static_cast<size_t>(i)];
    int ia = a.id, im = m.id;
    return t.emit(std::move(out), {ia, im}, [ia, im, h, n](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gm = tp.grad_buf(im);
        for (int64_t k = 0; k < h; ++k)
            for (int64_t i = 0; i < n; ++i) {
                ga.data[k * n + i] += g.data[k * n + i];
                gm.data[static_cast<size_t>(i)] += g.data[k * n + i];
            }
    }, "add_bcast_last2");
}

// ---- linear algebra ------------------------------------------------------

namespace {

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            double a = A[i * k + p];
            const double* brow = &B[p * n];
            double* crow = &C[i * n];
            for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
}

// C[m,n] += A[m,k] * B^T where Bt is [n,k]
void mm_bt_acc(const double* A, const double* Bt, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            const double* arow = &A[i * k];
            const double* brow = &Bt[j * k];
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            C[i * n + j] += s;
        }
}

// C[k,n] += A^T * B where A is [m,k], B is [m,n]
void mm_at_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            double a = A[i * k + p];
            const double* brow = &B[i * n];
            double* crow = &C[p * n];
            for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
}

} // namespace

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        fail("matmul: shape mismatch " + shape_str(A.shape) + " x " + shape_str(B.shape));
    int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out = Tensor::zeros({m, n});
    mm_acc(A.data.data(), B.data.data(), out.data.data(), m, k, n);
    int ia = a.id, ib = b.id;
    return t.emit(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& A = tp.node(ia).value;
        const Tensor& B = tp.node(ib).value;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gb = tp.grad_buf(ib);
        // dA = g * B^T ; dB = A^T * g
        mm_bt_acc(g.data.data(), B.data.data(), ga.data.data(), m, n, k);
        mm_at_acc(A.data.data(), g.data.data(), gb.data.data(), m, k, n);
    }, "matmul");
}

Var bmm(Var a, Var b) {
    require_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) || A.dim(2) != B.dim(1))
        fail("bmm: shape mismatch " + shape_str(A.shape) + " x " + shape_str(B.shape));
    int64_t h = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(2);
    Tensor out = Tensor::zeros({h, m, n});
    for (int64_t q = 0; q < h; ++q)
        mm_acc(&A.data[q * m * k], &B.data[q * k * n], &out.data[q * m * n], m, k, n);
    int ia = a.id, ib = b.id;
    return t.emit(std::move(out), {ia, ib}, [ia, ib, h, m, k, n](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& A = tp.node(ia).value;
        const Tensor& B = tp.node(ib).value;
        Tensor& ga = tp.grad_buf(ia);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t q = 0; q < h; ++q) {
            mm_bt_acc(&g.data[q * m * n], &B.data[q * k * n], &ga.data[q * m * k], m, n, k);
            mm_at_acc(&A.data[q * m * k], &g.data[q * m * n], &gb.data[q * k * n], m, k, n);
        }
    }, "bmm");
}

// ---- nn ops ---------------------------------------------------------------

Var softmax_last(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() < 1) fail("softmax_last: scalar input");
    int64_t V = A.shape.back();
    int64_t rows = A.size() / V;
    Tensor out = A;
    for (int64_t r = 0; r < rows; ++r) {
        double* p = &out.data[r * V];
        double mx = p[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, p[j]);
        double s = 0.0;
        for (int64_t j = 0; j < V; ++j) {
            p[j] = std::exp(p[j] - mx);
            s += p[j];
        }
        for (int64_t j = 0; j < V; ++j) p[j] /= s;
    }
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, rows, V](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value;
        Tensor& ga = tp.grad_buf(ia);
        for (int64_t r = 0; r < rows; ++r) {
            const double* gr = &g.data[r * V];
            const double* yr = &y.data[r * V];
            double dot = 0.0;
            for (int64_t j = 0; j < V; ++j) dot += gr[j] * yr[j];
            for (int64_t j = 0; j < V; ++j) ga.data[r * V + j] += yr[j] * (gr[j] - dot);
        }
    }, "softmax_last");
}

Var log_softmax_last(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rank() < 1) fail("log_softmax_last: scalar input");
    int64_t V = A.shape.back();
    int64_t rows = A.size() / V;
    Tensor out = A;
    for (int64_t r = 0; r < rows; ++r) {
        double* p = &out.data[r * V];
        double mx = p[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, p[j]);
        double s = 0.0;
        for (int64_t j = 0; j < V; ++j) s += std::exp(p[j] - mx);
        double lse = mx + std::log(s);
        for (int64_t j = 0; j < V; ++j) p[j] -= lse;
    }
    int ia = a.id;
    return t.emit(std::move(out), {ia}, [ia, rows, V](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value; // log-probs
        Tensor& ga = tp.grad_buf(ia);
        for (int64_t r = 0; r < rows; ++r) {
            const double* gr = &g.data[r * V];
            const double* yr = &y.data[r * V];
            double gs = 0.0;
            for (int64_t j = 0; j < V; ++j) gs += gr[j];
            for (int64_t j = 0; j < V; ++j)
                ga.data[r * V + j] += gr[j] - std::exp(yr[j]) * gs;
        }
    }, "log_softmax_last");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    require_same_tape(x, gain);
    require_same_tape(x, bias);
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const Tensor& G = t.value(gain);
    const Tensor& B = t.value(bias);
    if (X.rank() < 1) fail("layer_norm: scalar input");
    int64_t d = X.shape.back();
    if (G.shape != Shape{d} || B.shape != Shape{d})
        fail("layer_norm: gain/bias must have shape (" + std::to_string(d) + ")");
    int64_t rows = X.size() / d;
    Tensor out = Tensor::zeros(X.shape);
    std::vector<double> inv_sigma(static_cast<size_t>(rows));
    std::vector<double> xhat(X.data.size());
    for (int64_t r = 0; r < rows; ++r) {
        const double* p = &X.data[r * d];
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += p[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) var += (p[j] - mu) * (p[j] - mu);
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(r)] = is;
        for (int64_t j = 0; j < d; ++j) {
            double xh = (p[j] - mu) * is;
            xhat[static_cast<size_t>(r * d + j)] = xh;
            out.data[r * d + j] = G.data[j] * xh + B.data[j];
        }
    }
    int ix = x.id, ig = gain.id, ib = bias.id;
    return t.emit(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, rows, d, inv_sigma = std::move(inv_sigma),
                   xhat = std::move(xhat)](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& G = tp.node(ig).value;
        Tensor& gx = tp.grad_buf(ix);
        Tensor& gg = tp.grad_buf(ig);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t r = 0; r < rows; ++r) {
            const double* gr = &g.data[r * d];
            const double* xh = &xhat[static_cast<size_t>(r * d)];
            double m1 = 0.0, m2 = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                double dxh = gr[j] * G.data[j];
                m1 += dxh;
                m2 += dxh * xh[j];
                gg.data[j] += gr[j] * xh[j];
                gb.data[j] += gr[j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            double is = inv_sigma[static_cast<size_t>(r)];
            for (int64_t j = 0; j < d; ++j) {
                double dxh = gr[j] * G.data[j];
                gx.data[r * d + j] += is * (dxh - m1 - xh[j] * m2);
            }
        }
    }, "layer_norm");
}

Var batch_norm_seq(Var x, Var gamma, Var beta, ParamStore& ps,
                   const std::string& mean_name, const std::string& var_name,
                   bool train, double momentum, double eps) {
    require_same_tape(x, gamma);
    require_same_tape(x, beta);
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    if (X.rank() != 2) fail("batch_norm_seq: expected [L,C], got " + shape_str(X.shape));
    int64_t L = X.dim(0), C = X.dim(1);
    const Tensor& G = t.value(gamma);
    const Tensor& B = t.value(beta);
    if (G.shape != Shape{C} || B.shape != Shape{C})
        fail("batch_norm_seq: gamma/beta must have shape (" + std::to_string(C) + ")");
    Tensor out = Tensor::zeros(X.shape);
    int ix = x.id, ig = gamma.id, ib = beta.id;

    if (train) {
        std::vector<double> mu(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
        for (int64_t l = 0; l < L; ++l)
            for (int64_t c = 0; c < C; ++c) mu[static_cast<size_t>(c)] += X.data[l * C + c];
        for (int64_t c = 0; c < C; ++c) mu[static_cast<size_t>(c)] /= static_cast<double>(L);
        for (int64_t l = 0; l < L; ++l)
            for (int64_t c = 0; c < C; ++c) {
                double dv = X.data[l * C + c] - mu[static_cast<size_t>(c)];
                var[static_cast<size_t>(c)] += dv * dv;
            }
        for (int64_t c = 0; c < C; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(L);
        // running statistics update (deterministic, sequential over samples)
        Tensor& rm = ps.value(mean_name);
        Tensor& rv = ps.value(var_name);
        require_shape(rm, {C}, "batch_norm_seq running mean");
        require_shape(rv, {C}, "batch_norm_seq running var");
        for (int64_t c = 0; c < C; ++c) {
            rm.data[c] = (1.0 - momentum) * rm.data[c] + momentum * mu[static_cast<size_t>(c)];
            rv.data[c] = (1.0 - momentum) * rv.data[c] + momentum * var[static_cast<size_t>(c)];
        }
        std::vector<double> inv_s(static_cast<size_t>(C));
        std::vector<double> xhat(X.data.size());
        for (int64_t c = 0; c < C; ++c)
            inv_s[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
        for (int64_t l = 0; l < L; ++l)
            for (int64_t c = 0; c < C; ++c) {
                double xh = (X.data[l * C + c] - mu[static_cast<size_t>(c)]) *
                            inv_s[static_cast<size_t>(c)];
                xhat[static_cast<size_t>(l * C + c)] = xh;
                out.data[l * C + c] = G.data[c] * xh + B.data[c];
            }
        return t.emit(std::move(out), {ix, ig, ib},
                      [ix, ig, ib, L, C, inv_s = std::move(inv_s),
                       xhat = std::move(xhat)](Tape& tp, int self) {
            const Tensor& g = tp.node(self).grad;
            const Tensor& G = tp.node(ig).value;
            Tensor& gx = tp.grad_buf(ix);
            Tensor& gg = tp.grad_buf(ig);
            Tensor& gb = tp.grad_buf(ib);
            for (int64_t c = 0; c < C; ++c) {
                double m1 = 0.0, m2 = 0.0;
                for (int64_t l = 0; l < L; ++l) {
                    double gr = g.data[l * C + c];
                    double xh = xhat[static_cast<size_t>(l * C + c)];
                    m1 += gr;
                    m2 += gr * xh;
                    gg.data[c] += gr * xh;
                    gb.data[c] += gr;
                }
                m1 /= static_cast<double>(L);
                m2 /= static_cast<double>(L);
                double gs = G.data[c] * inv_s[static_cast<size_t>(c)];
                for (int64_t l = 0; l < L; ++l) {
                    double gr = g.data[l * C + c];
                    double xh = xhat[static_cast<size_t>(l * C + c)];
                    gx.data[l * C + c] += gs * (gr - m1 - xh * m2);
                }
            }
        }, "batch_norm_seq");
    }

    // eval mode: per-sample, batch-size invariant affine transform
    const Tensor& rm = ps.value(mean_name);
    const Tensor& rv = ps.value(var_name);
    std::vector<double> inv_s(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c)
        inv_s[static_cast<size_t>(c)] = 1.0 / std::sqrt(rv.data[c] + eps);
    std::vector<double> mu(rm.data.begin(), rm.data.end());
    for (int64_t l = 0; l < L; ++l)
        for (int64_t c = 0; c < C; ++c)
            out.data[l * C + c] =
                G.data[c] * (X.data[l * C + c] - mu[static_cast<size_t>(c)]) *
                    inv_s[static_cast<size_t>(c)] +
                B.data[c];
    return t.emit(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, L, C, inv_s = std::move(inv_s),
                   mu = std::move(mu)](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& X = tp.node(ix).value;
        const Tensor& G = tp.node(ig).value;
        Tensor& gx = tp.grad_buf(ix);
        Tensor& gg = tp.grad_buf(ig);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t l = 0; l < L; ++l)
            for (int64_t c = 0; c < C; ++c) {
                double gr = g.data[l * C + c];
                double xh = (X.data[l * C + c] - mu[static_cast<size_t>(c)]) *
                            inv_s[static_cast<size_t>(c)];
                gx.data[l * C + c] += gr * G.data[c] * inv_s[static_cast<size_t>(c)];
                gg.data[c] += gr * xh;
                gb.data[c] += gr;
            }
    }, "batch_norm_seq");
}

Var l2norm_rows(Var x) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    Tensor X2 = X;
    Shape orig = X.shape;
    if (X.rank() == 1) X2.shape = {1, X.dim(0)};
    if (X2.rank() != 2) fail("l2norm_rows: expected rank-1 or rank-2, got " + shape_str(orig));
    int64_t n = X2.dim(0), d = X2.dim(1);
    Tensor out = Tensor::zeros(orig);
    std::vector<double> norms(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += X2.data[r * d + j] * X2.data[r * d + j];
        double nm = std::sqrt(s);
        if (nm < 1e-12) fail("l2norm_rows: degenerate (near-zero) embedding in row " +
                             std::to_string(r));
        norms[static_cast<size_t>(r)] = nm;
        for (int64_t j = 0; j < d; ++j) out.data[r * d + j] = X2.data[r * d + j] / nm;
    }
    int ix = x.id;
    return t.emit(std::move(out), {ix},
                  [ix, n, d, norms = std::move(norms)](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value;
        Tensor& gx = tp.grad_buf(ix);
        for (int64_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (int64_t j = 0; j < d; ++j) dot += g.data[r * d + j] * y.data[r * d + j];
            double inv = 1.0 / norms[static_cast<size_t>(r)];
            for (int64_t j = 0; j < d; ++j)
                gx.data[r * d + j] += (g.data[r * d + j] - y.data[r * d + j] * dot) * inv;
        }
    }, "l2norm_rows");
}

Var embedding(Var table, const std::vector<int>& ids) {
    Tape& t = *table.tape;
    const Tensor& T = t.value(table);
    if (T.rank() != 2) fail("embedding: table must be [V,d]");
    int64_t V = T.dim(0), d = T.dim(1);
    int64_t n = static_cast<int64_t>(ids.size());
    if (n == 0) fail("embedding: empty id list");
    Tensor out = Tensor::zeros({n, d});
    for (int64_t i = 0; i < n; ++i) {
        int id = ids[static_cast<size_t>(i)];
        if (id < 0 || id >= V) fail("embedding: id " + std::to_string(id) + " out of range");
        std::copy_n(&T.data[static_cast<int64_t>(id) * d], d, &out.data[i * d]);
    }
    int it = table.id;
    return t.emit(std::move(out), {it}, [it, ids, d](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& gt = tp.grad_buf(it);
        for (size_t i = 0; i < ids.size(); ++i) {
            double* row = &gt.data[static_cast<int64_t>(ids[i]) * d];
            const double* gr = &g.data[static_cast<int64_t>(i) * d];
            for (int64_t j = 0; j < d; ++j) row[j] += gr[j];
        }
    }, "embedding");
}

Var cross_entropy(Var logits, const std::vector<int>& targets, int ignore_index) {
    Tape& t = *logits.tape;
    const Tensor& X = t.value(logits);
    if (X.rank() != 2) fail("cross_entropy: logits must be [L,V]");
    int64_t L = X.dim(0), V = X.dim(1);
    if (static_cast<int64_t>(targets.size()) != L)
        fail("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
             std::to_string(L) + " rows");
    std::vector<double> logp(X.data.size());
    int64_t count = 0;
    double total = 0.0;
    for (int64_t r = 0; r < L; ++r) {
        const double* p = &X.data[r * V];
        double mx = p[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, p[j]);
        double s = 0.0;
        for (int64_t j = 0; j < V; ++j) s += std::exp(p[j] - mx);
        double lse = mx + std::log(s);
        for (int64_t j = 0; j < V; ++j) logp[static_cast<size_t>(r * V + j)] = p[j] - lse;
        int tgt = targets[static_cast<size_t>(r)];
        if (tgt == ignore_index) continue;
        if (tgt < 0 || tgt >= V) fail("cross_entropy: target id out of range");
        total -= logp[static_cast<size_t>(r * V + tgt)];
        ++count;
    }
    if (count == 0) fail("cross_entropy: all positions ignored");
    int ix = logits.id;
    double inv = 1.0 / static_cast<double>(count);
    return t.emit(Tensor::scalar(total * inv), {ix},
                  [ix, targets, ignore_index, L, V, inv,
                   logp = std::move(logp)](Tape& tp, int self) {
        double g = tp.node(self).grad.data[0];
        Tensor& gx = tp.grad_buf(ix);
        for (int64_t r = 0; r < L; ++r) {
            int tgt = targets[static_cast<size_t>(r)];
            if (tgt == ignore_index) continue;
            for (int64_t j = 0; j < V; ++j) {
                double soft = std::exp(logp[static_cast<size_t>(r * V + j)]);
                double delta = (j == tgt) ? 1.0 : 0.0;
                gx.data[r * V + j] += g * inv * (soft - delta);
            }
        }
    }, "cross_entropy");
}

} // namespace dveslt
