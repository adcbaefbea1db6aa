#include <algorithm>
#include <cmath>

#include "tape.hpp"

namespace dveslt {

namespace {
void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) fail("vars from different tapes");
}
} // namespace

Var conv1d_same(Var x, Var w, Var b) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const Tensor& B = t.value(b);
    if (X.rank() != 2 || W.rank() != 3)
        fail("conv1d_same: x must be [L,Cin], w [Cout,Cin,K]; got " + shape_str(X.shape) +
             " and " + shape_str(W.shape));
    int64_t L = X.dim(0), Cin = X.dim(1);
    int64_t Cout = W.dim(0), K = W.dim(2);
    if (W.dim(1) != Cin)
        fail("conv1d_same: channel mismatch " + shape_str(X.shape) + " vs " + shape_str(W.shape));
    if (K % 2 == 0) fail("conv1d_same: kernel size must be odd");
    if (B.shape != Shape{Cout}) fail("conv1d_same: bias must be (Cout)");
    int64_t P = K / 2;
    Tensor out = Tensor::zeros({L, Cout});
    for (int64_t l = 0; l < L; ++l)
        for (int64_t co = 0; co < Cout; ++co) {
            double s = B.data[co];
            for (int64_t k = 0; k < K; ++k) {
                int64_t src = l + k - P;
                if (src < 0 || src >= L) continue;
                const double* xr = &X.data[src * Cin];
                const double* wr = &W.data[(co * Cin) * K + k];
                for (int64_t ci = 0; ci < Cin; ++ci) s += xr[ci] * wr[ci * K];
            }
            out.data[l * Cout + co] = s;
        }
    int ix = x.id, iw = w.id, ib = b.id;
    return t.emit(std::move(out), {ix, iw, ib},
                  [ix, iw, ib, L, Cin, Cout, K, P](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& X = tp.node(ix).value;
        const Tensor& W = tp.node(iw).value;
        Tensor& gx = tp.grad_buf(ix);
        Tensor& gw = tp.grad_buf(iw);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t l = 0; l < L; ++l)
            for (int64_t co = 0; co < Cout; ++co) {
                double gv = g.data[l * Cout + co];
                gb.data[co] += gv;
                for (int64_t k = 0; k < K; ++k) {
                    int64_t src = l + k - P;
                    if (src < 0 || src >= L) continue;
                    for (int64_t ci = 0; ci < Cin; ++ci) {
                        gx.data[src * Cin + ci] += gv * W.data[(co * Cin + ci) * K + k];
                        gw.data[(co * Cin + ci) * K + k] += gv * X.data[src * Cin + ci];
                    }
                }
            }
    }, "conv1d_same");
}

Var maxpool1d2(Var x) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    if (X.rank() != 2) fail("maxpool1d2: expected [L,C], got " + shape_str(X.shape));
    int64_t L = X.dim(0), C = X.dim(1);
    int64_t Lo = L / 2;
    if (Lo < 1) fail("maxpool1d2: sequence too short (L=" + std::to_string(L) + ")");
    Tensor out = Tensor::zeros({Lo, C});
    std::vector<int64_t> arg(static_cast<size_t>(Lo * C));
    for (int64_t l = 0; l < Lo; ++l)
        for (int64_t c = 0; c < C; ++c) {
            double a = X.data[(2 * l) * C + c];
            double b = X.data[(2 * l + 1) * C + c];
            if (a >= b) {
                out.data[l * C + c] = a;
                arg[static_cast<size_t>(l * C + c)] = (2 * l) * C + c;
            } else {
                out.data[l * C + c] = b;
                arg[static_cast<size_t>(l * C + c)] = (2 * l + 1) * C + c;
            }
        }
    int ix = x.id;
    return t.emit(std::move(out), {ix}, [ix, arg = std::move(arg)](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& gx = tp.grad_buf(ix);
        for (size_t i = 0; i < g.data.size(); ++i) gx.data[static_cast<size_t>(arg[i])] += g.data[i];
    }, "maxpool1d2");
}

namespace {

// shared pooling over flat index blocks: pool factor 2 on each of `nd`
// trailing spatial dims
struct PoolPlan {
    Shape out_shape;
    std::vector<int64_t> argmax;
    Tensor out;
};

} // namespace

Var conv2d_same(Var x, Var w, Var b) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const Tensor& B = t.value(b);
    if (X.rank() != 4 || W.rank() != 4)
        fail("conv2d_same: x must be [N,Cin,H,W], w [Cout,Cin,K,K]; got " +
             shape_str(X.shape) + " and " + shape_str(W.shape));
    int64_t N = X.dim(0), Cin = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    int64_t Cout = W.dim(0), K = W.dim(2);
    if (W.dim(1) != Cin || W.dim(3) != K)
        fail("conv2d_same: weight shape mismatch " + shape_str(X.shape) + " vs " +
             shape_str(W.shape));
    if (K % 2 == 0) fail("conv2d_same: kernel size must be odd");
    if (B.shape != Shape{Cout}) fail("conv2d_same: bias must be (Cout)");
    int64_t P = K / 2;
    Tensor out = Tensor::zeros({N, Cout, H, Wd});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Cout; ++co) {
            double* oplane = &out.data[((n * Cout) + co) * H * Wd];
            double bv = B.data[co];
            for (int64_t i = 0; i < H * Wd; ++i) oplane[i] = bv;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const double* xplane = &X.data[((n * Cin) + ci) * H * Wd];
                for (int64_t ki = 0; ki < K; ++ki)
                    for (int64_t kj = 0; kj < K; ++kj) {
                        double wv = W.data[(((co * Cin) + ci) * K + ki) * K + kj];
                        int64_t di = ki - P, dj = kj - P;
                        int64_t i0 = std::max<int64_t>(0, -di), i1 = std::min(H, H - di);
                        int64_t j0 = std::max<int64_t>(0, -dj), j1 = std::min(Wd, Wd - dj);
                        for (int64_t i = i0; i < i1; ++i) {
                            const double* xr = &xplane[(i + di) * Wd + dj];
                            double* orow = &oplane[i * Wd];
                            for (int64_t j = j0; j < j1; ++j) orow[j] += wv * xr[j];
                        }
                    }
            }
        }
    int ix = x.id, iw = w.id, ib = b.id;
    return t.emit(std::move(out), {ix, iw, ib},
                  [ix, iw, ib, N, Cin, Cout, H, Wd, K, P](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& X = tp.node(ix).value;
        const Tensor& W = tp.node(iw).value;
        Tensor& gx = tp.grad_buf(ix);
        Tensor& gw = tp.grad_buf(iw);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t co = 0; co < Cout; ++co) {
                const double* gplane = &g.data[((n * Cout) + co) * H * Wd];
                double bacc = 0.0;
                for (int64_t i = 0; i < H * Wd; ++i) bacc += gplane[i];
                gb.data[co] += bacc;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const double* xplane = &X.data[((n * Cin) + ci) * H * Wd];
                    double* gxplane = &gx.data[((n * Cin) + ci) * H * Wd];
                    for (int64_t ki = 0; ki < K; ++ki)
                        for (int64_t kj = 0; kj < K; ++kj) {
                            int64_t widx = (((co * Cin) + ci) * K + ki) * K + kj;
                            double wv = W.data[widx];
                            double wacc = 0.0;
                            int64_t di = ki - P, dj = kj - P;
                            int64_t i0 = std::max<int64_t>(0, -di), i1 = std::min(H, H - di);
                            int64_t j0 = std::max<int64_t>(0, -dj), j1 = std::min(Wd, Wd - dj);
                            for (int64_t i = i0; i < i1; ++i) {
                                const double* grow = &gplane[i * Wd];
                                const double* xr = &xplane[(i + di) * Wd + dj];
                                double* gxr = &gxplane[(i + di) * Wd + dj];
                                for (int64_t j = j0; j < j1; ++j) {
                                    gxr[j] += wv * grow[j];
                                    wacc += grow[j] * xr[j];
                                }
                            }
                            gw.data[widx] += wacc;
                        }
                }
            }
    }, "conv2d_same");
}

Var maxpool2d2(Var x) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    if (X.rank() != 4) fail("maxpool2d2: expected [N,C,H,W], got " + shape_str(X.shape));
    int64_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    int64_t Ho = H / 2, Wo = W / 2;
    if (Ho < 1 || Wo < 1) fail("maxpool2d2: input too small " + shape_str(X.shape));
    Tensor out = Tensor::zeros({N, C, Ho, Wo});
    std::vector<int64_t> arg(out.data.size());
    int64_t oi = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double* plane = &X.data[((n * C) + c) * H * W];
            int64_t base = ((n * C) + c) * H * W;
            for (int64_t i = 0; i < Ho; ++i)
                for (int64_t j = 0; j < Wo; ++j, ++oi) {
                    int64_t best = (2 * i) * W + 2 * j;
                    double bv = plane[best];
                    int64_t cand[3] = {(2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j,
                                       (2 * i + 1) * W + 2 * j + 1};
                    for (int64_t cidx : cand)
                        if (plane[cidx] > bv) {
                            bv = plane[cidx];
                            best = cidx;
                        }
                    out.data[static_cast<size_t>(oi)] = bv;
                    arg[static_cast<size_t>(oi)] = base + best;
                }
        }
    int ix = x.id;
    return t.emit(std::move(out), {ix}, [ix, arg = std::move(arg)](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& gx = tp.grad_buf(ix);
        for (size_t i = 0; i < g.data.size(); ++i) gx.data[static_cast<size_t>(arg[i])] += g.data[i];
    }, "maxpool2d2");
}

Var conv3d_same(Var x, Var w, Var b) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const Tensor& B = t.value(b);
    if (X.rank() != 5 || W.rank() != 5)
        fail("conv3d_same: x must be [N,Cin,D,H,W], w [Cout,Cin,K,K,K]; got " +
             shape_str(X.shape) + " and " + shape_str(W.shape));
    int64_t N = X.dim(0), Cin = X.dim(1), D = X.dim(2), H = X.dim(3), Wd = X.dim(4);
    int64_t Cout = W.dim(0), K = W.dim(2);
    if (W.dim(1) != Cin || W.dim(3) != K || W.dim(4) != K)
        fail("conv3d_same: weight shape mismatch " + shape_str(X.shape) + " vs " +
             shape_str(W.shape));
    if (K % 2 == 0) fail("conv3d_same: kernel size must be odd");
    if (B.shape != Shape{Cout}) fail("conv3d_same: bias must be (Cout)");
    int64_t P = K / 2;
    int64_t HW = H * Wd, DHW = D * HW;
    Tensor out = Tensor::zeros({N, Cout, D, H, Wd});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Cout; ++co) {
            double* ovol = &out.data[((n * Cout) + co) * DHW];
            double bv = B.data[co];
            for (int64_t i = 0; i < DHW; ++i) ovol[i] = bv;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const double* xvol = &X.data[((n * Cin) + ci) * DHW];
                for (int64_t kd = 0; kd < K; ++kd)
                    for (int64_t ki = 0; ki < K; ++ki)
                        for (int64_t kj = 0; kj < K; ++kj) {
                            double wv = W.data[((((co * Cin) + ci) * K + kd) * K + ki) * K + kj];
                            int64_t dd = kd - P, di = ki - P, dj = kj - P;
                            int64_t d0 = std::max<int64_t>(0, -dd), d1 = std::min(D, D - dd);
                            int64_t i0 = std::max<int64_t>(0, -di), i1 = std::min(H, H - di);
                            int64_t j0 = std::max<int64_t>(0, -dj), j1 = std::min(Wd, Wd - dj);
                            for (int64_t dz = d0; dz < d1; ++dz)
                                for (int64_t i = i0; i < i1; ++i) {
                                    const double* xr = &xvol[(dz + dd) * HW + (i + di) * Wd + dj];
                                    double* orow = &ovol[dz * HW + i * Wd];
                                    for (int64_t j = j0; j < j1; ++j) orow[j] += wv * xr[j];
                                }
                        }
            }
        }
    int ix = x.id, iw = w.id, ib = b.id;
    return t.emit(std::move(out), {ix, iw, ib},
                  [ix, iw, ib, N, Cin, Cout, D, H, Wd, K, P, HW, DHW](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& X = tp.node(ix).value;
        const Tensor& W = tp.node(iw).value;
        Tensor& gx = tp.grad_buf(ix);
        Tensor& gw = tp.grad_buf(iw);
        Tensor& gb = tp.grad_buf(ib);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t co = 0; co < Cout; ++co) {
                const double* gvol = &g.data[((n * Cout) + co) * DHW];
                double bacc = 0.0;
                for (int64_t i = 0; i < DHW; ++i) bacc += gvol[i];
                gb.data[co] += bacc;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const double* xvol = &X.data[((n * Cin) + ci) * DHW];
                    double* gxvol = &gx.data[((n * Cin) + ci) * DHW];
                    for (int64_t kd = 0; kd < K; ++kd)
                        for (int64_t ki = 0; ki < K; ++ki)
                            for (int64_t kj = 0; kj < K; ++kj) {
                                int64_t widx =
                                    ((((co * Cin) + ci) * K + kd) * K + ki) * K + kj;
                                double wv = W.data[widx];
                                double wacc = 0.0;
                                int64_t dd = kd - P, di = ki - P, dj = kj - P;
                                int64_t d0 = std::max<int64_t>(0, -dd), d1 = std::min(D, D - dd);
                                int64_t i0 = std::max<int64_t>(0, -di), i1 = std::min(H, H - di);
                                int64_t j0 = std::max<int64_t>(0, -dj), j1 = std::min(Wd, Wd - dj);
                                for (int64_t dz = d0; dz < d1; ++dz)
                                    for (int64_t i = i0; i < i1; ++i) {
                                        const double* grow = &gvol[dz * HW + i * Wd];
                                        const double* xr =
                                            &xvol[(dz + dd) * HW + (i + di) * Wd + dj];
                                        double* gxr =
                                            &gxvol[(dz + dd) * HW + (i + di) * Wd + dj];
                                        for (int64_t j = j0; j < j1; ++j) {
                                            gxr[j] += wv * grow[j];
                                            wacc += grow[j] * xr[j];
                                        }
                                    }
                                gw.data[widx] += wacc;
                            }
                }
            }
    }, "conv3d_same");
}

Var maxpool3d2(Var x) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    if (X.rank() != 5) fail("maxpool3d2: expected [N,C,D,H,W], got " + shape_str(X.shape));
    int64_t N = X.dim(0), C = X.dim(1), D = X.dim(2), H = X.dim(3), W = X.dim(4);
    int64_t Do = D / 2, Ho = H / 2, Wo = W / 2;
    if (Do < 1 || Ho < 1 || Wo < 1) fail("maxpool3d2: input too small " + shape_str(X.shape));
    int64_t HW = H * W;
    Tensor out = Tensor::zeros({N, C, Do, Ho, Wo});
    std::vector<int64_t> arg(out.data.size());
    int64_t oi = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double* vol = &X.data[((n * C) + c) * D * HW];
            int64_t base = ((n * C) + c) * D * HW;
            for (int64_t dz = 0; dz < Do; ++dz)
                for (int64_t i = 0; i < Ho; ++i)
                    for (int64_t j = 0; j < Wo; ++j, ++oi) {
                        int64_t best = -1;
                        double bv = -1e300;
                        for (int64_t od = 0; od < 2; ++od)
                            for (int64_t oii = 0; oii < 2; ++oii)
                                for (int64_t oj = 0; oj < 2; ++oj) {
                                    int64_t idx =
                                        (2 * dz + od) * HW + (2 * i + oii) * W + 2 * j + oj;
                                    if (vol[idx] > bv) {
                                        bv = vol[idx];
                                        best = idx;
                                    }
                                }
                        out.data[static_cast<size_t>(oi)] = bv;
                        arg[static_cast<size_t>(oi)] = base + best;
                    }
        }
    int ix = x.id;
    return t.emit(std::move(out), {ix}, [ix, arg = std::move(arg)](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& gx = tp.grad_buf(ix);
        for (size_t i = 0; i < g.data.size(); ++i) gx.data[static_cast<size_t>(arg[i])] += g.data[i];
    }, "maxpool3d2");
}

} // namespace dveslt
