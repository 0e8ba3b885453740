#include "rainsar/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rainsar/error.hpp"

namespace rainsar::nn {

namespace {

template <typename Scalar>
using ConstMap = Eigen::Map<const Buffer<Scalar>>;
template <typename Scalar>
using StridedMap = Eigen::Map<const Buffer<Scalar>, 0, Eigen::InnerStride<>>;

Index ceil_div(Index a, Index b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
Index floor_div(Index a, Index b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Loop indices o in [0, count) with o * stride + offset in [0, limit).
struct Range {
    Index lo, hi;  // inclusive; empty when hi < lo
};
Range valid_range(Index offset, Index stride, Index limit, Index count) {
    const Index lo = offset >= 0 ? 0 : ceil_div(-offset, stride);
    const Index hi = std::min(floor_div(limit - 1 - offset, stride), count - 1);
    return {lo, hi};
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeMismatch(what);
}

void require_rank4(const Shape& s, const char* op) {
    require(s.size() == 4, std::string(op) + " expects NCHW input, got " + to_string(s));
}

}  // namespace

namespace kernels {

ConvDims conv_dims(const Shape& x, const Shape& w, Index stride, Index padding) {
    require_rank4(x, "conv2d");
    require(w.size() == 4 && w[1] == x[1] && w[2] == w[3],
            "conv2d weight " + to_string(w) + " incompatible with input " + to_string(x));
    require(stride >= 1 && padding >= 0, "conv2d stride/padding");
    ConvDims d{x[0], x[1], x[2], x[3], w[0], w[2], stride, padding, 0, 0};
    require(d.h + 2 * padding >= d.k && d.w + 2 * padding >= d.k, "conv2d window larger than padded input");
    d.ho = (d.h + 2 * padding - d.k) / stride + 1;
    d.wo = (d.w + 2 * padding - d.k) / stride + 1;
    return d;
}

template <typename Scalar>
void conv2d_reference(const ConvDims& d, const Scalar* x, const Scalar* w, const Scalar* b, Scalar* out) {
    for (Index n = 0; n < d.n; ++n)
        for (Index co = 0; co < d.co; ++co)
            for (Index oy = 0; oy < d.ho; ++oy)
                for (Index ox = 0; ox < d.wo; ++ox) {
                    Scalar acc = b ? b[co] : Scalar(0);
                    for (Index ci = 0; ci < d.ci; ++ci)
                        for (Index ky = 0; ky < d.k; ++ky)
                            for (Index kx = 0; kx < d.k; ++kx) {
                                const Index iy = oy * d.stride + ky - d.padding;
                                const Index ix = ox * d.stride + kx - d.padding;
                                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                                acc += w[((co * d.ci + ci) * d.k + ky) * d.k + kx] * x[((n * d.ci + ci) * d.h + iy) * d.w + ix];
                            }
                    out[((n * d.co + co) * d.ho + oy) * d.wo + ox] = acc;
                }
}

template <typename Scalar>
void conv2d_fast(const ConvDims& d, const Scalar* x, const Scalar* w, const Scalar* b, Scalar* out) {
    const Index plane_in = d.h * d.w, plane_out = d.ho * d.wo;
    for (Index n = 0; n < d.n; ++n)
        for (Index co = 0; co < d.co; ++co) {
            Scalar* o = out + (n * d.co + co) * plane_out;
            std::fill(o, o + plane_out, b ? b[co] : Scalar(0));
            for (Index ci = 0; ci < d.ci; ++ci) {
                const Scalar* xp = x + (n * d.ci + ci) * plane_in;
                const Scalar* wp = w + (co * d.ci + ci) * d.k * d.k;
                for (Index ky = 0; ky < d.k; ++ky) {
                    const Range ry = valid_range(ky - d.padding, d.stride, d.h, d.ho);
                    for (Index kx = 0; kx < d.k; ++kx) {
                        const Range rx = valid_range(kx - d.padding, d.stride, d.w, d.wo);
                        const Scalar wv = wp[ky * d.k + kx];
                        for (Index oy = ry.lo; oy <= ry.hi; ++oy) {
                            Scalar* orow = o + oy * d.wo;
                            const Scalar* xrow = xp + (oy * d.stride + ky - d.padding) * d.w + kx - d.padding;
                            if (d.stride == 1) {
                                for (Index ox = rx.lo; ox <= rx.hi; ++ox) orow[ox] += wv * xrow[ox];
                            } else {
                                for (Index ox = rx.lo; ox <= rx.hi; ++ox) orow[ox] += wv * xrow[ox * d.stride];
                            }
                        }
                    }
                }
            }
        }
}

template void conv2d_reference<float>(const ConvDims&, const float*, const float*, const float*, float*);
template void conv2d_reference<double>(const ConvDims&, const double*, const double*, const double*, double*);
template void conv2d_fast<float>(const ConvDims&, const float*, const float*, const float*, float*);
template void conv2d_fast<double>(const ConvDims&, const double*, const double*, const double*, double*);

}  // namespace kernels

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias, Conv2dOptions opt) {
    const auto d = kernels::conv_dims(x.shape(), weight.shape(), opt.stride, opt.padding);
    if (bias.defined()) require(bias.numel() == d.co, "conv2d bias size");
    Buffer<Scalar> out(d.n * d.co * d.ho * d.wo);
    kernels::conv2d_fast(d, x.data(), weight.data(), bias.defined() ? bias.data() : nullptr, out.data());

    std::vector<Tensor<Scalar>> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return Tensor<Scalar>::result({d.n, d.co, d.ho, d.wo}, std::move(out), parents, "conv2d", [d](Node<Scalar>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const Scalar* go = self.grad.data();
        const Scalar* xv = px.value.data();
        const Scalar* wv = pw.value.data();
        const Index plane_in = d.h * d.w, plane_out = d.ho * d.wo;
        if (px.requires_grad) {
            Scalar* gx = px.ensure_grad().data();
            for (Index n = 0; n < d.n; ++n)
                for (Index co = 0; co < d.co; ++co) {
                    const Scalar* gop = go + (n * d.co + co) * plane_out;
                    for (Index ci = 0; ci < d.ci; ++ci) {
                        Scalar* gxp = gx + (n * d.ci + ci) * plane_in;
                        const Scalar* wp = wv + (co * d.ci + ci) * d.k * d.k;
                        for (Index ky = 0; ky < d.k; ++ky) {
                            const Range ry = valid_range(ky - d.padding, d.stride, d.h, d.ho);
                            for (Index kx = 0; kx < d.k; ++kx) {
                                const Range rx = valid_range(kx - d.padding, d.stride, d.w, d.wo);
                                const Scalar wk = wp[ky * d.k + kx];
                                for (Index oy = ry.lo; oy <= ry.hi; ++oy) {
                                    const Scalar* grow = gop + oy * d.wo;
                                    Scalar* xrow = gxp + (oy * d.stride + ky - d.padding) * d.w + kx - d.padding;
                                    for (Index ox = rx.lo; ox <= rx.hi; ++ox) xrow[ox * d.stride] += wk * grow[ox];
                                }
                            }
                        }
                    }
                }
        }
        if (pw.requires_grad) {
            Scalar* gw = pw.ensure_grad().data();
            for (Index n = 0; n < d.n; ++n)
                for (Index co = 0; co < d.co; ++co) {
                    const Scalar* gop = go + (n * d.co + co) * plane_out;
                    for (Index ci = 0; ci < d.ci; ++ci) {
                        const Scalar* xp = xv + (n * d.ci + ci) * plane_in;
                        Scalar* gwp = gw + (co * d.ci + ci) * d.k * d.k;
                        for (Index ky = 0; ky < d.k; ++ky) {
                            const Range ry = valid_range(ky - d.padding, d.stride, d.h, d.ho);
                            for (Index kx = 0; kx < d.k; ++kx) {
                                const Range rx = valid_range(kx - d.padding, d.stride, d.w, d.wo);
                                if (rx.hi < rx.lo) continue;
                                const Index len = rx.hi - rx.lo + 1;
                                Scalar acc = 0;
                                for (Index oy = ry.lo; oy <= ry.hi; ++oy) {
                                    const Scalar* grow = gop + oy * d.wo + rx.lo;
                                    const Scalar* xrow = xp + (oy * d.stride + ky - d.padding) * d.w + kx - d.padding + rx.lo * d.stride;
                                    if (d.stride == 1)
                                        acc += (ConstMap<Scalar>(grow, len) * ConstMap<Scalar>(xrow, len)).sum();
                                    else
                                        acc += (ConstMap<Scalar>(grow, len) *
                                                StridedMap<Scalar>(xrow, len, Eigen::InnerStride<>(d.stride))).sum();
                                }
                                gwp[ky * d.k + kx] += acc;
                            }
                        }
                    }
                }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            Scalar* gb = self.parents[2]->ensure_grad().data();
            for (Index n = 0; n < d.n; ++n)
                for (Index co = 0; co < d.co; ++co) gb[co] += ConstMap<Scalar>(go + (n * d.co + co) * plane_out, plane_out).sum();
        }
    });
}

template <typename Scalar>
Tensor<Scalar> conv_transpose2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                                Conv2dOptions opt) {
    require_rank4(x.shape(), "conv_transpose2d");
    const Shape& ws = weight.shape();
    require(ws.size() == 4 && ws[0] == x.dim(1) && ws[2] == ws[3],
            "conv_transpose2d weight " + to_string(ws) + " incompatible with input " + to_string(x.shape()));
    const Index N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = ws[1], K = ws[2];
    const Index s = opt.stride, p = opt.padding;
    const Index Ho = (H - 1) * s - 2 * p + K, Wo = (W - 1) * s - 2 * p + K;
    require(s >= 1 && p >= 0 && Ho > 0 && Wo > 0, "conv_transpose2d geometry");
    if (bias.defined()) require(bias.numel() == Co, "conv_transpose2d bias size");

    const Scalar* xv = x.data();
    const Scalar* wv = weight.data();
    Buffer<Scalar> out(N * Co * Ho * Wo);
    for (Index n = 0; n < N; ++n)
        for (Index co = 0; co < Co; ++co) {
            Scalar* o = out.data() + (n * Co + co) * Ho * Wo;
            std::fill(o, o + Ho * Wo, bias.defined() ? bias.value()(co) : Scalar(0));
            for (Index ci = 0; ci < Ci; ++ci) {
                const Scalar* xp = xv + (n * Ci + ci) * H * W;
                for (Index ky = 0; ky < K; ++ky) {
                    const Range ry = valid_range(ky - p, s, Ho, H);
                    for (Index kx = 0; kx < K; ++kx) {
                        const Range rx = valid_range(kx - p, s, Wo, W);
                        const Scalar wk = wv[((ci * Co + co) * K + ky) * K + kx];
                        for (Index iy = ry.lo; iy <= ry.hi; ++iy) {
                            Scalar* orow = o + (iy * s + ky - p) * Wo + kx - p;
                            const Scalar* xrow = xp + iy * W;
                            for (Index ix = rx.lo; ix <= rx.hi; ++ix) orow[ix * s] += wk * xrow[ix];
                        }
                    }
                }
            }
        }

    std::vector<Tensor<Scalar>> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return Tensor<Scalar>::result({N, Co, Ho, Wo}, std::move(out), parents, "conv_transpose2d",
                                  [=](Node<Scalar>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const Scalar* go = self.grad.data();
        const Scalar* xval = px.value.data();
        const Scalar* wval = pw.value.data();
        Scalar* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
        Scalar* gw = pw.requires_grad ? pw.ensure_grad().data() : nullptr;
        for (Index n = 0; n < N; ++n)
            for (Index co = 0; co < Co; ++co) {
                const Scalar* gop = go + (n * Co + co) * Ho * Wo;
                for (Index ci = 0; ci < Ci; ++ci) {
                    const Scalar* xp = xval + (n * Ci + ci) * H * W;
                    Scalar* gxp = gx ? gx + (n * Ci + ci) * H * W : nullptr;
                    for (Index ky = 0; ky < K; ++ky) {
                        const Range ry = valid_range(ky - p, s, Ho, H);
                        for (Index kx = 0; kx < K; ++kx) {
                            const Range rx = valid_range(kx - p, s, Wo, W);
                            const Index widx = ((ci * Co + co) * K + ky) * K + kx;
                            const Scalar wk = wval[widx];
                            Scalar acc = 0;
                            for (Index iy = ry.lo; iy <= ry.hi; ++iy) {
                                const Scalar* grow = gop + (iy * s + ky - p) * Wo + kx - p;
                                const Scalar* xrow = xp + iy * W;
                                if (gxp) {
                                    Scalar* gxrow = gxp + iy * W;
                                    for (Index ix = rx.lo; ix <= rx.hi; ++ix) gxrow[ix] += wk * grow[ix * s];
                                }
                                for (Index ix = rx.lo; ix <= rx.hi; ++ix) acc += xrow[ix] * grow[ix * s];
                            }
                            if (gw) gw[widx] += acc;
                        }
                    }
                }
            }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            Scalar* gb = self.parents[2]->ensure_grad().data();
            for (Index n = 0; n < N; ++n)
                for (Index co = 0; co < Co; ++co) gb[co] += ConstMap<Scalar>(go + (n * Co + co) * Ho * Wo, Ho * Wo).sum();
        }
    });
}

template <typename Scalar>
Tensor<Scalar> max_pool2d(const Tensor<Scalar>& x, Index k) {
    require_rank4(x.shape(), "max_pool2d");
    const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(k >= 1 && H % k == 0 && W % k == 0, "max_pool2d window must tile input " + to_string(x.shape()));
    const Index Ho = H / k, Wo = W / k;
    Buffer<Scalar> out(N * C * Ho * Wo);
    auto argmax = std::make_shared<std::vector<Index>>(out.size());
    const Scalar* xv = x.data();
    for (Index nc = 0; nc < N * C; ++nc)
        for (Index oy = 0; oy < Ho; ++oy)
            for (Index ox = 0; ox < Wo; ++ox) {
                Index best = nc * H * W + (oy * k) * W + ox * k;
                for (Index dy = 0; dy < k; ++dy)
                    for (Index dx = 0; dx < k; ++dx) {
                        const Index idx = nc * H * W + (oy * k + dy) * W + ox * k + dx;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                const Index o = (nc * Ho + oy) * Wo + ox;
                out(o) = xv[best];
                (*argmax)[o] = best;
            }
    return Tensor<Scalar>::result({N, C, Ho, Wo}, std::move(out), {x}, "max_pool2d", [argmax](Node<Scalar>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t o = 0; o < argmax->size(); ++o) g((*argmax)[o]) += self.grad(static_cast<Index>(o));
    });
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& parts) {
    require(!parts.empty(), "concat of nothing");
    for (const auto& t : parts) require_rank4(t.shape(), "concat_channels");
    const Index N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
    std::vector<Index> channels;
    Index C = 0;
    for (const auto& t : parts) {
        require(t.dim(0) == N && t.dim(2) == H && t.dim(3) == W, "concat_channels shape " + to_string(t.shape()));
        channels.push_back(t.dim(1));
        C += t.dim(1);
    }
    const Index plane = H * W;
    Buffer<Scalar> out(N * C * plane);
    for (Index n = 0; n < N; ++n) {
        Index offset = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const Index len = channels[i] * plane;
            out.segment((n * C + offset) * plane, len) = parts[i].value().segment(n * len, len);
            offset += channels[i];
        }
    }
    return Tensor<Scalar>::result({N, C, H, W}, std::move(out), parts, "concat_channels", [=](Node<Scalar>& self) {
        for (Index n = 0; n < N; ++n) {
            Index offset = 0;
            for (std::size_t i = 0; i < channels.size(); ++i) {
                const Index len = channels[i] * plane;
                if (self.parents[i]->requires_grad)
                    self.parents[i]->ensure_grad().segment(n * len, len) += self.grad.segment((n * C + offset) * plane, len);
                offset += channels[i];
            }
        }
    });
}

template <typename Scalar>
Tensor<Scalar> broadcast_to_map(const Tensor<Scalar>& s, Index H, Index W) {
    require(s.rank() == 2, "broadcast_to_map expects [N,C], got " + to_string(s.shape()));
    const Index N = s.dim(0), C = s.dim(1), plane = H * W;
    Buffer<Scalar> out(N * C * plane);
    for (Index i = 0; i < N * C; ++i) out.segment(i * plane, plane).setConstant(s.value()(i));
    return Tensor<Scalar>::result({N, C, H, W}, std::move(out), {s}, "broadcast_to_map", [=](Node<Scalar>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (Index i = 0; i < N * C; ++i) g(i) += self.grad.segment(i * plane, plane).sum();
    });
}

namespace {

// y = f(x); dx = g * df(x, y)
template <typename Scalar, typename F, typename DF>
Tensor<Scalar> unary(const Tensor<Scalar>& x, const char* op, F f, DF df) {
    Buffer<Scalar> y = x.value().unaryExpr(f);
    return Tensor<Scalar>::result(x.shape(), std::move(y), {x}, op, [df](Node<Scalar>& self) {
        auto& px = *self.parents[0];
        px.ensure_grad() += self.grad * px.value.binaryExpr(self.value, df);
    });
}

template <typename Scalar>
Scalar softplus_value(Scalar v) {
    return v > Scalar(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

template <typename Scalar>
Scalar sigmoid_value(Scalar v) {
    if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
}

enum class BinOp { Add, Sub, Mul, Div };

template <typename Scalar>
Tensor<Scalar> binary(const Tensor<Scalar>& a, const Tensor<Scalar>& b, BinOp op) {
    const bool same = a.numel() == b.numel();
    require(same || a.numel() == 1 || b.numel() == 1,
            "elementwise shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
    const bool a_scalar = !same && a.numel() == 1;
    const bool b_scalar = !same && b.numel() == 1;
    if (same) require(a.shape() == b.shape() || a.numel() == 1, "elementwise shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
    const Shape shape = a_scalar ? b.shape() : a.shape();
    const Index n = numel(shape);
    auto av = [&]() -> Buffer<Scalar> { return a_scalar ? Buffer<Scalar>::Constant(n, a.value()(0)) : a.value(); };
    auto bv = [&]() -> Buffer<Scalar> { return b_scalar ? Buffer<Scalar>::Constant(n, b.value()(0)) : b.value(); };
    Buffer<Scalar> A = av(), B = bv(), y;
    switch (op) {
        case BinOp::Add: y = A + B; break;
        case BinOp::Sub: y = A - B; break;
        case BinOp::Mul: y = A * B; break;
        case BinOp::Div: y = A / B; break;
    }
    static const char* names[] = {"add", "sub", "mul", "div"};
    return Tensor<Scalar>::result(shape, std::move(y), {a, b}, names[int(op)], [=](Node<Scalar>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const Buffer<Scalar>& g = self.grad;
        auto expand = [&](const Node<Scalar>& p, bool is_scalar) -> Buffer<Scalar> {
            return is_scalar ? Buffer<Scalar>::Constant(n, p.value(0)) : p.value;
        };
        auto accumulate = [&](Node<Scalar>& p, bool is_scalar, const Buffer<Scalar>& d) {
            if (!p.requires_grad) return;
            if (is_scalar) p.ensure_grad()(0) += d.sum();
            else p.ensure_grad() += d;
        };
        switch (op) {
            case BinOp::Add:
                accumulate(pa, a_scalar, g);
                accumulate(pb, b_scalar, g);
                break;
            case BinOp::Sub:
                accumulate(pa, a_scalar, g);
                accumulate(pb, b_scalar, -g);
                break;
            case BinOp::Mul:
                accumulate(pa, a_scalar, g * expand(pb, b_scalar));
                accumulate(pb, b_scalar, g * expand(pa, a_scalar));
                break;
            case BinOp::Div: {
                const Buffer<Scalar> Bv = expand(pb, b_scalar);
                accumulate(pa, a_scalar, g / Bv);
                accumulate(pb, b_scalar, -g * expand(pa, a_scalar) / (Bv * Bv));
                break;
            }
        }
    });
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
    return unary(x, "relu", [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
                 [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
    return unary(x, "sigmoid", [](Scalar v) { return sigmoid_value(v); },
                 [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& x) {
    return unary(x, "softplus", [](Scalar v) { return softplus_value(v); },
                 [](Scalar v, Scalar) { return sigmoid_value(v); });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& x) {
    return unary(x, "log", [](Scalar v) { return std::log(v); }, [](Scalar v, Scalar) { return Scalar(1) / v; });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
    return unary(x, "square", [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

template <typename Scalar>
Tensor<Scalar> sqrt(const Tensor<Scalar>& x) {
    return unary(x, "sqrt", [](Scalar v) { return std::sqrt(v); },
                 [](Scalar, Scalar y) { return y > Scalar(0) ? Scalar(0.5) / y : Scalar(0); });
}

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& x) {
    return unary(x, "abs", [](Scalar v) { return std::abs(v); },
                 [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0)); });
}

template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return binary(a, b, BinOp::Add); }
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return binary(a, b, BinOp::Sub); }
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return binary(a, b, BinOp::Mul); }
template <typename Scalar> Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return binary(a, b, BinOp::Div); }

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar k) {
    return Tensor<Scalar>::result(a.shape(), a.value() * k, {a}, "scale",
                                  [k](Node<Scalar>& self) { self.parents[0]->ensure_grad() += k * self.grad; });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar k) {
    return Tensor<Scalar>::result(a.shape(), a.value() + k, {a}, "add_scalar",
                                  [](Node<Scalar>& self) { self.parents[0]->ensure_grad() += self.grad; });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
    Buffer<Scalar> y(1);
    y(0) = x.value().sum();
    return Tensor<Scalar>::result({1}, std::move(y), {x}, "sum",
                                  [](Node<Scalar>& self) { self.parents[0]->ensure_grad() += self.grad(0); });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
    const Scalar n = static_cast<Scalar>(x.numel());
    Buffer<Scalar> y(1);
    y(0) = x.value().sum() / n;
    return Tensor<Scalar>::result({1}, std::move(y), {x}, "mean",
                                  [n](Node<Scalar>& self) { self.parents[0]->ensure_grad() += self.grad(0) / n; });
}

template <typename Scalar>
Tensor<Scalar> mean_per_sample(const Tensor<Scalar>& x) {
    require(x.rank() >= 1 && x.dim(0) > 0, "mean_per_sample of empty tensor");
    const Index N = x.dim(0), P = x.numel() / N;
    Buffer<Scalar> y(N);
    for (Index n = 0; n < N; ++n) y(n) = x.value().segment(n * P, P).sum() / static_cast<Scalar>(P);
    return Tensor<Scalar>::result({N}, std::move(y), {x}, "mean_per_sample", [N, P](Node<Scalar>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (Index n = 0; n < N; ++n) g.segment(n * P, P) += self.grad(n) / static_cast<Scalar>(P);
    });
}

template <typename Scalar>
Tensor<Scalar> masked_mean(const Tensor<Scalar>& x, const Buffer<Scalar>& mask) {
    require(mask.size() == x.numel() && x.rank() >= 1, "masked_mean mask size");
    const Index N = x.dim(0), P = x.numel() / N;
    Buffer<Scalar> y(N), count(N);
    for (Index n = 0; n < N; ++n) {
        count(n) = mask.segment(n * P, P).sum();
        y(n) = count(n) > Scalar(0) ? (x.value().segment(n * P, P) * mask.segment(n * P, P)).sum() / count(n) : Scalar(0);
    }
    return Tensor<Scalar>::result({N}, std::move(y), {x}, "masked_mean", [mask, count, N, P](Node<Scalar>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (Index n = 0; n < N; ++n)
            if (count(n) > Scalar(0)) g.segment(n * P, P) += mask.segment(n * P, P) * (self.grad(n) / count(n));
    });
}

template <typename Scalar>
Tensor<Scalar> masked_max(const Tensor<Scalar>& x, const Buffer<Scalar>& mask) {
    require(mask.size() == x.numel() && x.rank() >= 1, "masked_max mask size");
    const Index N = x.dim(0), P = x.numel() / N;
    Buffer<Scalar> y = Buffer<Scalar>::Zero(N);
    std::vector<Index> where(N, -1);
    for (Index n = 0; n < N; ++n)
        for (Index i = n * P; i < (n + 1) * P; ++i)
            if (mask(i) > Scalar(0) && (where[n] < 0 || x.value()(i) > y(n))) {
                y(n) = x.value()(i);
                where[n] = i;
            }
    return Tensor<Scalar>::result({N}, std::move(y), {x}, "masked_max", [where](Node<Scalar>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t n = 0; n < where.size(); ++n)
            if (where[n] >= 0) g(where[n]) += self.grad(static_cast<Index>(n));
    });
}

template <typename Scalar>
Tensor<Scalar> weighted_mean(const Tensor<Scalar>& x, const Buffer<Scalar>& w) {
    require(w.size() == x.numel(), "weighted_mean weight size");
    const Scalar total = w.sum();
    Buffer<Scalar> y(1);
    y(0) = total > Scalar(0) ? (x.value() * w).sum() / total : Scalar(0);
    return Tensor<Scalar>::result({1}, std::move(y), {x}, "weighted_mean", [w, total](Node<Scalar>& self) {
        if (total > Scalar(0)) self.parents[0]->ensure_grad() += w * (self.grad(0) / total);
    });
}

#define RAINSAR_INSTANTIATE_OPS(S)                                                                          \
    template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Conv2dOptions);         \
    template Tensor<S> conv_transpose2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Conv2dOptions); \
    template Tensor<S> max_pool2d(const Tensor<S>&, Index);                                                 \
    template Tensor<S> concat_channels(const std::vector<Tensor<S>>&);                                      \
    template Tensor<S> broadcast_to_map(const Tensor<S>&, Index, Index);                                    \
    template Tensor<S> relu(const Tensor<S>&);                                                              \
    template Tensor<S> sigmoid(const Tensor<S>&);                                                           \
    template Tensor<S> softplus(const Tensor<S>&);                                                          \
    template Tensor<S> log(const Tensor<S>&);                                                               \
    template Tensor<S> square(const Tensor<S>&);                                                            \
    template Tensor<S> sqrt(const Tensor<S>&);                                                              \
    template Tensor<S> abs(const Tensor<S>&);                                                               \
    template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                             \
    template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                             \
    template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                             \
    template Tensor<S> div(const Tensor<S>&, const Tensor<S>&);                                             \
    template Tensor<S> scale(const Tensor<S>&, S);                                                          \
    template Tensor<S> add_scalar(const Tensor<S>&, S);                                                     \
    template Tensor<S> sum(const Tensor<S>&);                                                               \
    template Tensor<S> mean(const Tensor<S>&);                                                              \
    template Tensor<S> mean_per_sample(const Tensor<S>&);                                                   \
    template Tensor<S> masked_mean(const Tensor<S>&, const Buffer<S>&);                                     \
    template Tensor<S> masked_max(const Tensor<S>&, const Buffer<S>&);                                      \
    template Tensor<S> weighted_mean(const Tensor<S>&, const Buffer<S>&);

RAINSAR_INSTANTIATE_OPS(float)
RAINSAR_INSTANTIATE_OPS(double)

}  // namespace rainsar::nn
