#include "uidiff/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "uidiff/error.hpp"

namespace uidiff::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool wants(const Node& self, size_t i) { return i < self.parents.size() && self.parents[i] && self.parents[i]->requires_grad; }

std::vector<double>& pgrad(Node& self, size_t i) { return self.parents[i]->ensure_grad(); }

const std::vector<double>& pval(const Node& self, size_t i) { return self.parents[i]->value; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw Error(ErrorCode::ShapeMismatch, fmt::format("{}: {} vs {}", op, shape_str(a.shape()), shape_str(b.shape())));
}

void require_ndim(const Tensor& t, int n, const char* op) {
    if (t.ndim() != n)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("{}: expected {}-d tensor, got {}", op, n, shape_str(t.shape())));
}

template <typename F>
Tensor unary(const Tensor& x, F&& f, std::function<void(Node&)> bw) {
    std::vector<double> out(x.numel());
    const auto& in = x.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return make_result(x.shape(), std::move(out), {x}, std::move(bw));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (size_t p = 0; p < 2; ++p) {
            if (!wants(self, p)) continue;
            auto& g = pgrad(self, p);
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        if (wants(self, 0)) {
            auto& g = pgrad(self, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = pgrad(self, 1);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto &av = pval(self, 0), &bv = pval(self, 1);
        if (wants(self, 0)) {
            auto& g = pgrad(self, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (wants(self, 1)) {
            auto& g = pgrad(self, 1);
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, [s](double v) { return v * s; }, [s](Node& self) {
        auto& g = pgrad(self, 0);
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

Tensor add_lastdim(const Tensor& x, const Tensor& v) {
    const int d = x.dim(-1);
    if (v.numel() != static_cast<size_t>(d))
        throw Error(ErrorCode::ShapeMismatch, fmt::format("add_lastdim: {} + {}", shape_str(x.shape()), shape_str(v.shape())));
    std::vector<double> out = x.values();
    const auto& vv = v.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += vv[i % static_cast<size_t>(d)];
    return make_result(x.shape(), std::move(out), {x, v}, [d](Node& self) {
        if (wants(self, 0)) {
            auto& g = pgrad(self, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = pgrad(self, 1);
            for (size_t i = 0; i < self.grad.size(); ++i) g[i % static_cast<size_t>(d)] += self.grad[i];
        }
    });
}

Tensor add_per_row(const Tensor& x, const Tensor& v) {
    require_ndim(x, 3, "add_per_row");
    const int B = x.dim(0), N = x.dim(1), D = x.dim(2);
    if (v.numel() != static_cast<size_t>(B) * D)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("add_per_row: {} + {}", shape_str(x.shape()), shape_str(v.shape())));
    std::vector<double> out = x.values();
    const auto& vv = v.values();
    for (int b = 0; b < B; ++b)
        for (int n = 0; n < N; ++n)
            for (int j = 0; j < D; ++j) out[(static_cast<size_t>(b) * N + n) * D + j] += vv[static_cast<size_t>(b) * D + j];
    return make_result(x.shape(), std::move(out), {x, v}, [B, N, D](Node& self) {
        if (wants(self, 0)) {
            auto& g = pgrad(self, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = pgrad(self, 1);
            for (int b = 0; b < B; ++b)
                for (int n = 0; n < N; ++n)
                    for (int j = 0; j < D; ++j)
                        g[static_cast<size_t>(b) * D + j] += self.grad[(static_cast<size_t>(b) * N + n) * D + j];
        }
    });
}

Tensor add_channel(const Tensor& x, const Tensor& v) {
    require_ndim(x, 4, "add_channel");
    const int B = x.dim(0), C = x.dim(1);
    const size_t HW = static_cast<size_t>(x.dim(2)) * x.dim(3);
    if (v.numel() != static_cast<size_t>(B) * C)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("add_channel: {} + {}", shape_str(x.shape()), shape_str(v.shape())));
    std::vector<double> out = x.values();
    const auto& vv = v.values();
    for (size_t bc = 0; bc < static_cast<size_t>(B) * C; ++bc)
        for (size_t i = 0; i < HW; ++i) out[bc * HW + i] += vv[bc];
    return make_result(x.shape(), std::move(out), {x, v}, [B, C, HW](Node& self) {
        if (wants(self, 0)) {
            auto& g = pgrad(self, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = pgrad(self, 1);
            for (size_t bc = 0; bc < static_cast<size_t>(B) * C; ++bc) {
                double acc = 0;
                for (size_t i = 0; i < HW; ++i) acc += self.grad[bc * HW + i];
                g[bc] += acc;
            }
        }
    });
}

Tensor silu(const Tensor& x) {
    return unary(x, [](double v) { return v / (1.0 + std::exp(-v)); }, [](Node& self) {
        const auto& xv = pval(self, 0);
        auto& g = pgrad(self, 0);
        for (size_t i = 0; i < g.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-xv[i]));
            g[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](Node& self) {
        auto& g = pgrad(self, 0);
        for (size_t i = 0; i < g.size(); ++i) {
            const double s = self.value[i];
            g[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor tanh(const Tensor& x) {
    return unary(x, [](double v) { return std::tanh(v); }, [](Node& self) {
        auto& g = pgrad(self, 0);
        for (size_t i = 0; i < g.size(); ++i) {
            const double t = self.value[i];
            g[i] += self.grad[i] * (1.0 - t * t);
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_ndim(weight, 2, "linear weight");
    const int out_f = weight.dim(0), in_f = weight.dim(1);
    if (x.dim(-1) != in_f)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("linear: input {} vs weight {}", shape_str(x.shape()), shape_str(weight.shape())));
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != static_cast<size_t>(out_f)) throw Error(ErrorCode::ShapeMismatch, "linear bias size");
    const int M = static_cast<int>(x.numel() / static_cast<size_t>(in_f));

    Shape out_shape = x.shape();
    out_shape.back() = out_f;
    std::vector<double> out(static_cast<size_t>(M) * out_f);
    {
        CMapR X(x.values().data(), M, in_f);
        CMapR W(weight.values().data(), out_f, in_f);
        MapR Y(out.data(), M, out_f);
        if (fp32_matmul_enabled() && !grad_enabled()) {
            const MatF Xf = X.cast<float>();
            const MatF Wf = W.cast<float>();
            MatF Yf(M, out_f);
            Yf.noalias() = Xf * Wf.transpose();
            Y = Yf.cast<double>();
        } else {
            Y.noalias() = X * W.transpose();
        }
        if (has_bias) Y.rowwise() += CVecMap(bias.values().data(), out_f).transpose();
    }
    auto bw = [M, in_f, out_f, has_bias](Node& self) {
        CMapR dY(self.grad.data(), M, out_f);
        if (wants(self, 0)) {
            MapR dX(pgrad(self, 0).data(), M, in_f);
            dX.noalias() += dY * CMapR(pval(self, 1).data(), out_f, in_f);
        }
        if (wants(self, 1)) {
            MapR dW(pgrad(self, 1).data(), out_f, in_f);
            dW.noalias() += dY.transpose() * CMapR(pval(self, 0).data(), M, in_f);
        }
        if (has_bias && wants(self, 2)) {
            VecMap db(pgrad(self, 2).data(), out_f);
            db += dY.colwise().sum().transpose();
        }
    };
    if (has_bias) return make_result(std::move(out_shape), std::move(out), {x, weight, bias}, bw);
    return make_result(std::move(out_shape), std::move(out), {x, weight}, bw);
}

namespace {

struct ConvGeom {
    int B, Ci, H, W, Co, k, stride, pad, Ho, Wo;
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
    int rows() const { return Ci * k * k; }
    int cols() const { return Ho * Wo; }
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
    const int ncols = g.cols();
    for (int c = 0; c < g.Ci; ++c) {
        const double* xc = x + static_cast<size_t>(c) * g.H * g.W;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                double* row = cols + static_cast<size_t>((c * g.k + ki) * g.k + kj) * ncols;
                for (int oy = 0; oy < g.Ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    double* dst = row + static_cast<size_t>(oy) * g.Wo;
                    if (iy < 0 || iy >= g.H) {
                        std::fill(dst, dst + g.Wo, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<size_t>(iy) * g.W;
                    for (int ox = 0; ox < g.Wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        dst[ox] = (ix >= 0 && ix < g.W) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* cols, const ConvGeom& g, double* dx) {
    const int ncols = g.cols();
    for (int c = 0; c < g.Ci; ++c) {
        double* xc = dx + static_cast<size_t>(c) * g.H * g.W;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                const double* row = cols + static_cast<size_t>((c * g.k + ki) * g.k + kj) * ncols;
                for (int oy = 0; oy < g.Ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.H) continue;
                    const double* src = row + static_cast<size_t>(oy) * g.Wo;
                    double* dst = xc + static_cast<size_t>(iy) * g.W;
                    for (int ox = 0; ox < g.Wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    require_ndim(x, 4, "conv2d input");
    require_ndim(weight, 4, "conv2d weight");
    ConvGeom g{};
    g.B = x.dim(0);
    g.Ci = x.dim(1);
    g.H = x.dim(2);
    g.W = x.dim(3);
    g.Co = weight.dim(0);
    g.k = weight.dim(2);
    g.stride = stride;
    g.pad = padding;
    if (weight.dim(1) != g.Ci || weight.dim(3) != g.k)
        throw Error(ErrorCode::ShapeMismatch,
                    fmt::format("conv2d: input {} vs weight {}", shape_str(x.shape()), shape_str(weight.shape())));
    g.Ho = (g.H + 2 * padding - g.k) / stride + 1;
    g.Wo = (g.W + 2 * padding - g.k) / stride + 1;
    if (g.Ho <= 0 || g.Wo <= 0) throw Error(ErrorCode::ShapeMismatch, "conv2d: empty output");
    const bool has_bias = bias.defined();

    const size_t in_sz = static_cast<size_t>(g.Ci) * g.H * g.W;
    const size_t out_sz = static_cast<size_t>(g.Co) * g.Ho * g.Wo;
    std::vector<double> out(static_cast<size_t>(g.B) * out_sz);
    std::vector<double> cols(g.pointwise() ? 0 : static_cast<size_t>(g.rows()) * g.cols());
    CMapR Wm(weight.values().data(), g.Co, g.rows());
    for (int b = 0; b < g.B; ++b) {
        const double* xb = x.values().data() + b * in_sz;
        const double* colp = xb;
        if (!g.pointwise()) {
            im2col(xb, g, cols.data());
            colp = cols.data();
        }
        MapR Y(out.data() + b * out_sz, g.Co, g.cols());
        Y.noalias() = Wm * CMapR(colp, g.rows(), g.cols());
        if (has_bias) Y.colwise() += CVecMap(bias.values().data(), g.Co);
    }

    auto bw = [g, in_sz, out_sz, has_bias](Node& self) {
        const bool need_x = wants(self, 0), need_w = wants(self, 1), need_b = has_bias && wants(self, 2);
        const auto& xv = pval(self, 0);
        CMapR Wm(pval(self, 1).data(), g.Co, g.rows());
        std::vector<double> cols(g.pointwise() ? 0 : static_cast<size_t>(g.rows()) * g.cols());
        std::vector<double> dcols(need_x && !g.pointwise() ? cols.size() : 0);
        for (int b = 0; b < g.B; ++b) {
            CMapR dY(self.grad.data() + b * out_sz, g.Co, g.cols());
            if (need_w) {
                const double* colp = xv.data() + b * in_sz;
                if (!g.pointwise()) {
                    im2col(colp, g, cols.data());
                    colp = cols.data();
                }
                MapR dW(pgrad(self, 1).data(), g.Co, g.rows());
                dW.noalias() += dY * CMapR(colp, g.rows(), g.cols()).transpose();
            }
            if (need_x) {
                double* dxb = pgrad(self, 0).data() + b * in_sz;
                if (g.pointwise()) {
                    MapR(dxb, g.rows(), g.cols()).noalias() += Wm.transpose() * dY;
                } else {
                    MapR dC(dcols.data(), g.rows(), g.cols());
                    dC.noalias() = Wm.transpose() * dY;
                    col2im(dcols.data(), g, dxb);
                }
            }
            if (need_b) {
                VecMap db(pgrad(self, 2).data(), g.Co);
                db += dY.rowwise().sum();
            }
        }
    };
    Shape out_shape{g.B, g.Co, g.Ho, g.Wo};
    if (has_bias) return make_result(std::move(out_shape), std::move(out), {x, weight, bias}, bw);
    return make_result(std::move(out_shape), std::move(out), {x, weight}, bw);
}

Tensor upsample2x(const Tensor& x) {
    require_ndim(x, 4, "upsample2x");
    const int BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = 2 * H, Wo = 2 * W;
    std::vector<double> out(static_cast<size_t>(BC) * Ho * Wo);
    const auto& xv = x.values();
    for (int p = 0; p < BC; ++p)
        for (int y = 0; y < Ho; ++y)
            for (int xx = 0; xx < Wo; ++xx)
                out[(static_cast<size_t>(p) * Ho + y) * Wo + xx] = xv[(static_cast<size_t>(p) * H + y / 2) * W + xx / 2];
    return make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x}, [BC, H, W, Ho, Wo](Node& self) {
        auto& g = pgrad(self, 0);
        for (int p = 0; p < BC; ++p)
            for (int y = 0; y < Ho; ++y)
                for (int xx = 0; xx < Wo; ++xx)
                    g[(static_cast<size_t>(p) * H + y / 2) * W + xx / 2] += self.grad[(static_cast<size_t>(p) * Ho + y) * Wo + xx];
    });
}

Tensor avgpool2x(const Tensor& x) {
    require_ndim(x, 4, "avgpool2x");
    const int BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) throw Error(ErrorCode::ShapeMismatch, "avgpool2x needs even spatial dims");
    const int Ho = H / 2, Wo = W / 2;
    std::vector<double> out(static_cast<size_t>(BC) * Ho * Wo, 0.0);
    const auto& xv = x.values();
    for (int p = 0; p < BC; ++p)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                out[(static_cast<size_t>(p) * Ho + y / 2) * Wo + xx / 2] += 0.25 * xv[(static_cast<size_t>(p) * H + y) * W + xx];
    return make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x}, [BC, H, W, Ho, Wo](Node& self) {
        auto& g = pgrad(self, 0);
        for (int p = 0; p < BC; ++p)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    g[(static_cast<size_t>(p) * H + y) * W + xx] += 0.25 * self.grad[(static_cast<size_t>(p) * Ho + y / 2) * Wo + xx / 2];
    });
}

namespace {

// Per-group statistics saved by the forward pass.
struct NormStats {
    std::vector<double> mean, rstd;
};

}  // namespace

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
    require_ndim(x, 4, "group_norm");
    const int B = x.dim(0), C = x.dim(1);
    const size_t HW = static_cast<size_t>(x.dim(2)) * x.dim(3);
    if (groups <= 0 || C % groups) throw Error(ErrorCode::ShapeMismatch, fmt::format("group_norm: {} channels / {} groups", C, groups));
    if (gamma.numel() != static_cast<size_t>(C) || beta.numel() != static_cast<size_t>(C))
        throw Error(ErrorCode::ShapeMismatch, "group_norm affine size");
    const int Cg = C / groups;
    const size_t n = static_cast<size_t>(Cg) * HW;

    NormStats st;
    st.mean.resize(static_cast<size_t>(B) * groups);
    st.rstd.resize(st.mean.size());
    const auto& xv = x.values();
    const auto &gv = gamma.values(), &bv = beta.values();
    std::vector<double> out(xv.size());
    for (int b = 0; b < B; ++b) {
        for (int gi = 0; gi < groups; ++gi) {
            const size_t base = (static_cast<size_t>(b) * C + static_cast<size_t>(gi) * Cg) * HW;
            double mean = 0;
            for (size_t i = 0; i < n; ++i) mean += xv[base + i];
            mean /= static_cast<double>(n);
            double var = 0;
            for (size_t i = 0; i < n; ++i) {
                const double d = xv[base + i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            const double rstd = 1.0 / std::sqrt(var + eps);
            st.mean[static_cast<size_t>(b) * groups + gi] = mean;
            st.rstd[static_cast<size_t>(b) * groups + gi] = rstd;
            for (int c = 0; c < Cg; ++c) {
                const int ch = gi * Cg + c;
                const size_t cb = base + static_cast<size_t>(c) * HW;
                for (size_t i = 0; i < HW; ++i) out[cb + i] = (xv[cb + i] - mean) * rstd * gv[static_cast<size_t>(ch)] + bv[static_cast<size_t>(ch)];
            }
        }
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta}, [B, C, HW, groups, Cg, n, st](Node& self) {
        const auto& xv = pval(self, 0);
        const auto& gv = pval(self, 1);
        const bool need_x = wants(self, 0), need_g = wants(self, 1), need_b = wants(self, 2);
        std::vector<double> xhat(n), dxhat(n);
        for (int b = 0; b < B; ++b) {
            for (int gi = 0; gi < groups; ++gi) {
                const size_t base = (static_cast<size_t>(b) * C + static_cast<size_t>(gi) * Cg) * HW;
                const double mean = st.mean[static_cast<size_t>(b) * groups + gi];
                const double rstd = st.rstd[static_cast<size_t>(b) * groups + gi];
                double sum1 = 0, sum2 = 0;
                for (int c = 0; c < Cg; ++c) {
                    const size_t ch = static_cast<size_t>(gi * Cg + c);
                    for (size_t i = 0; i < HW; ++i) {
                        const size_t li = static_cast<size_t>(c) * HW + i;
                        const double dy = self.grad[base + li];
                        xhat[li] = (xv[base + li] - mean) * rstd;
                        dxhat[li] = dy * gv[ch];
                        sum1 += dxhat[li];
                        sum2 += dxhat[li] * xhat[li];
                        if (need_g) pgrad(self, 1)[ch] += dy * xhat[li];
                        if (need_b) pgrad(self, 2)[ch] += dy;
                    }
                }
                if (need_x) {
                    auto& gx = pgrad(self, 0);
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (size_t li = 0; li < n; ++li)
                        gx[base + li] += rstd * (dxhat[li] - sum1 * inv_n - xhat[li] * sum2 * inv_n);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int D = x.dim(-1);
    if (gamma.numel() != static_cast<size_t>(D) || beta.numel() != static_cast<size_t>(D))
        throw Error(ErrorCode::ShapeMismatch, "layer_norm affine size");
    const size_t rows = x.numel() / static_cast<size_t>(D);
    NormStats st;
    st.mean.resize(rows);
    st.rstd.resize(rows);
    const auto& xv = x.values();
    const auto &gv = gamma.values(), &bv = beta.values();
    std::vector<double> out(xv.size());
    for (size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * D;
        double mean = 0;
        for (int j = 0; j < D; ++j) mean += row[j];
        mean /= D;
        double var = 0;
        for (int j = 0; j < D; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= D;
        const double rstd = 1.0 / std::sqrt(var + eps);
        st.mean[r] = mean;
        st.rstd[r] = rstd;
        for (int j = 0; j < D; ++j) out[r * D + j] = (row[j] - mean) * rstd * gv[static_cast<size_t>(j)] + bv[static_cast<size_t>(j)];
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta}, [rows, D, st](Node& self) {
        const auto& xv = pval(self, 0);
        const auto& gv = pval(self, 1);
        const bool need_x = wants(self, 0), need_g = wants(self, 1), need_b = wants(self, 2);
        std::vector<double> xhat(static_cast<size_t>(D)), dxhat(static_cast<size_t>(D));
        for (size_t r = 0; r < rows; ++r) {
            double sum1 = 0, sum2 = 0;
            for (int j = 0; j < D; ++j) {
                const size_t i = r * D + j;
                const double dy = self.grad[i];
                xhat[static_cast<size_t>(j)] = (xv[i] - st.mean[r]) * st.rstd[r];
                dxhat[static_cast<size_t>(j)] = dy * gv[static_cast<size_t>(j)];
                sum1 += dxhat[static_cast<size_t>(j)];
                sum2 += dxhat[static_cast<size_t>(j)] * xhat[static_cast<size_t>(j)];
                if (need_g) pgrad(self, 1)[static_cast<size_t>(j)] += dy * xhat[static_cast<size_t>(j)];
                if (need_b) pgrad(self, 2)[static_cast<size_t>(j)] += dy;
            }
            if (need_x) {
                auto& gx = pgrad(self, 0);
                for (int j = 0; j < D; ++j)
                    gx[r * D + j] += st.rstd[r] * (dxhat[static_cast<size_t>(j)] - sum1 / D - xhat[static_cast<size_t>(j)] * sum2 / D);
            }
        }
    });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids, Shape out_shape) {
    require_ndim(table, 2, "embedding");
    const int V = table.dim(0), D = table.dim(1);
    if (out_shape.empty() || out_shape.back() != D || shape_numel(out_shape) != ids.size() * static_cast<size_t>(D))
        throw Error(ErrorCode::ShapeMismatch, "embedding output shape " + shape_str(out_shape));
    std::vector<double> out(ids.size() * static_cast<size_t>(D));
    const auto& tv = table.values();
    for (size_t n = 0; n < ids.size(); ++n) {
        if (ids[n] < 0 || ids[n] >= V) throw Error(ErrorCode::InvalidArgument, fmt::format("embedding id {} outside [0,{})", ids[n], V));
        std::copy_n(tv.data() + static_cast<size_t>(ids[n]) * D, D, out.data() + n * D);
    }
    return make_result(std::move(out_shape), std::move(out), {table}, [ids, D](Node& self) {
        auto& g = pgrad(self, 0);
        for (size_t n = 0; n < ids.size(); ++n)
            for (int j = 0; j < D; ++j) g[static_cast<size_t>(ids[n]) * D + j] += self.grad[n * D + j];
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_ndim(a, 4, "concat a");
    require_ndim(b, 4, "concat b");
    const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    if (b.dim(0) != B || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw Error(ErrorCode::ShapeMismatch, fmt::format("concat_channels {} + {}", shape_str(a.shape()), shape_str(b.shape())));
    const size_t HW = static_cast<size_t>(a.dim(2)) * a.dim(3);
    const size_t sa = Ca * HW, sb = Cb * HW;
    std::vector<double> out(static_cast<size_t>(B) * (sa + sb));
    for (int i = 0; i < B; ++i) {
        std::copy_n(a.values().data() + i * sa, sa, out.data() + i * (sa + sb));
        std::copy_n(b.values().data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
    }
    return make_result({B, Ca + Cb, a.dim(2), a.dim(3)}, std::move(out), {a, b}, [B, sa, sb](Node& self) {
        for (int i = 0; i < B; ++i) {
            const double* g = self.grad.data() + i * (sa + sb);
            if (wants(self, 0)) {
                double* ga = pgrad(self, 0).data() + i * sa;
                for (size_t j = 0; j < sa; ++j) ga[j] += g[j];
            }
            if (wants(self, 1)) {
                double* gb = pgrad(self, 1).data() + i * sb;
                for (size_t j = 0; j < sb; ++j) gb[j] += g[sa + j];
            }
        }
    });
}

Tensor to_tokens(const Tensor& x) {
    require_ndim(x, 4, "to_tokens");
    const int B = x.dim(0), C = x.dim(1);
    const int N = x.dim(2) * x.dim(3);
    std::vector<double> out(x.numel());
    const auto& xv = x.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < N; ++i)
                out[(static_cast<size_t>(b) * N + i) * C + c] = xv[(static_cast<size_t>(b) * C + c) * N + i];
    return make_result({B, N, C}, std::move(out), {x}, [B, C, N](Node& self) {
        auto& g = pgrad(self, 0);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < N; ++i)
                    g[(static_cast<size_t>(b) * C + c) * N + i] += self.grad[(static_cast<size_t>(b) * N + i) * C + c];
    });
}

Tensor from_tokens(const Tensor& x, int height, int width) {
    require_ndim(x, 3, "from_tokens");
    const int B = x.dim(0), N = x.dim(1), C = x.dim(2);
    if (N != height * width) throw Error(ErrorCode::ShapeMismatch, "from_tokens spatial size");
    std::vector<double> out(x.numel());
    const auto& xv = x.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < N; ++i)
                out[(static_cast<size_t>(b) * C + c) * N + i] = xv[(static_cast<size_t>(b) * N + i) * C + c];
    return make_result({B, C, height, width}, std::move(out), {x}, [B, C, N](Node& self) {
        auto& g = pgrad(self, 0);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < N; ++i)
                    g[(static_cast<size_t>(b) * N + i) * C + c] += self.grad[(static_cast<size_t>(b) * C + c) * N + i];
    });
}

Tensor mean_tokens(const Tensor& x) {
    require_ndim(x, 3, "mean_tokens");
    const int B = x.dim(0), N = x.dim(1), D = x.dim(2);
    std::vector<double> out(static_cast<size_t>(B) * D, 0.0);
    const auto& xv = x.values();
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < D; ++j) out[static_cast<size_t>(b) * D + j] += xv[(static_cast<size_t>(b) * N + i) * D + j] / N;
    return make_result({B, D}, std::move(out), {x}, [B, N, D](Node& self) {
        auto& g = pgrad(self, 0);
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j) g[(static_cast<size_t>(b) * N + i) * D + j] += self.grad[static_cast<size_t>(b) * D + j] / N;
    });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    require_ndim(q, 3, "attention q");
    require_ndim(k, 3, "attention k");
    require_same_shape(k, v, "attention k/v");
    const int B = q.dim(0), Nq = q.dim(1), D = q.dim(2), Nk = k.dim(1);
    if (k.dim(0) != B || k.dim(2) != D || heads <= 0 || D % heads)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("attention q {} k {} heads {}", shape_str(q.shape()), shape_str(k.shape()), heads));
    const int dh = D / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

    // Softmax weights are kept for the backward pass: [B, heads, Nq, Nk].
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(B) * heads * Nq * Nk);
    std::vector<double> out(static_cast<size_t>(B) * Nq * D);
    for (int b = 0; b < B; ++b) {
        CMapR Q(q.values().data() + static_cast<size_t>(b) * Nq * D, Nq, D);
        CMapR K(k.values().data() + static_cast<size_t>(b) * Nk * D, Nk, D);
        CMapR V(v.values().data() + static_cast<size_t>(b) * Nk * D, Nk, D);
        MapR O(out.data() + static_cast<size_t>(b) * Nq * D, Nq, D);
        for (int h = 0; h < heads; ++h) {
            MapR P(probs->data() + (static_cast<size_t>(b) * heads + h) * Nq * Nk, Nq, Nk);
            P.noalias() = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * inv;
            for (int r = 0; r < Nq; ++r) {
                const double mx = P.row(r).maxCoeff();
                P.row(r) = (P.row(r).array() - mx).exp();
                P.row(r) /= P.row(r).sum();
            }
            O.middleCols(h * dh, dh).noalias() = P * V.middleCols(h * dh, dh);
        }
    }
    return make_result(q.shape(), std::move(out), {q, k, v}, [B, Nq, Nk, D, heads, dh, inv, probs](Node& self) {
        const bool nq = wants(self, 0), nk = wants(self, 1), nv = wants(self, 2);
        MatR dP(Nq, Nk), dS(Nq, Nk);
        for (int b = 0; b < B; ++b) {
            CMapR Q(pval(self, 0).data() + static_cast<size_t>(b) * Nq * D, Nq, D);
            CMapR K(pval(self, 1).data() + static_cast<size_t>(b) * Nk * D, Nk, D);
            CMapR V(pval(self, 2).data() + static_cast<size_t>(b) * Nk * D, Nk, D);
            CMapR dO(self.grad.data() + static_cast<size_t>(b) * Nq * D, Nq, D);
            for (int h = 0; h < heads; ++h) {
                CMapR P(probs->data() + (static_cast<size_t>(b) * heads + h) * Nq * Nk, Nq, Nk);
                if (nv) {
                    MapR dV(pgrad(self, 2).data() + static_cast<size_t>(b) * Nk * D, Nk, D);
                    dV.middleCols(h * dh, dh).noalias() += P.transpose() * dO.middleCols(h * dh, dh);
                }
                if (!nq && !nk) continue;
                dP.noalias() = dO.middleCols(h * dh, dh) * V.middleCols(h * dh, dh).transpose();
                for (int r = 0; r < Nq; ++r) {
                    const double dot = (dP.row(r).array() * P.row(r).array()).sum();
                    dS.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
                }
                dS *= inv;
                if (nq) {
                    MapR dQ(pgrad(self, 0).data() + static_cast<size_t>(b) * Nq * D, Nq, D);
                    dQ.middleCols(h * dh, dh).noalias() += dS * K.middleCols(h * dh, dh);
                }
                if (nk) {
                    MapR dK(pgrad(self, 1).data() + static_cast<size_t>(b) * Nk * D, Nk, D);
                    dK.middleCols(h * dh, dh).noalias() += dS.transpose() * Q.middleCols(h * dh, dh);
                }
            }
        }
    });
}

Tensor sum_all(const Tensor& x) {
    double s = 0;
    for (double v : x.values()) s += v;
    return make_result({1}, {s}, {x}, [](Node& self) {
        auto& g = pgrad(self, 0);
        for (auto& gi : g) gi += self.grad[0];
    });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse_loss");
    const auto &p = pred.values(), &t = target.values();
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
    const double n = static_cast<double>(p.size());
    return make_result({1}, {s / n}, {pred, target}, [n](Node& self) {
        const auto &p = pval(self, 0), &t = pval(self, 1);
        const double g0 = self.grad[0] * 2.0 / n;
        if (wants(self, 0)) {
            auto& g = pgrad(self, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += g0 * (p[i] - t[i]);
        }
        if (wants(self, 1)) {
            auto& g = pgrad(self, 1);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= g0 * (p[i] - t[i]);
        }
    });
}

Tensor cross_entropy_sum(const Tensor& logits, const std::vector<int>& targets) {
    require_ndim(logits, 2, "cross_entropy_sum");
    const int N = logits.dim(0), V = logits.dim(1);
    if (targets.size() != static_cast<size_t>(N)) throw Error(ErrorCode::ShapeMismatch, "cross_entropy_sum targets");
    const auto& lv = logits.values();
    double total = 0;
    for (int r = 0; r < N; ++r) {
        const int t = targets[static_cast<size_t>(r)];
        if (t < 0) continue;
        if (t >= V) throw Error(ErrorCode::InvalidArgument, fmt::format("target {} outside [0,{})", t, V));
        const double* row = lv.data() + static_cast<size_t>(r) * V;
        const double mx = *std::max_element(row, row + V);
        double z = 0;
        for (int j = 0; j < V; ++j) z += std::exp(row[j] - mx);
        total += mx + std::log(z) - row[t];
    }
    return make_result({1}, {total}, {logits}, [N, V, targets](Node& self) {
        const auto& lv = pval(self, 0);
        auto& g = pgrad(self, 0);
        const double g0 = self.grad[0];
        for (int r = 0; r < N; ++r) {
            const int t = targets[static_cast<size_t>(r)];
            if (t < 0) continue;
            const double* row = lv.data() + static_cast<size_t>(r) * V;
            const double mx = *std::max_element(row, row + V);
            double z = 0;
            for (int j = 0; j < V; ++j) z += std::exp(row[j] - mx);
            for (int j = 0; j < V; ++j) {
                const double p = std::exp(row[j] - mx) / z;
                g[static_cast<size_t>(r) * V + j] += g0 * (p - (j == t ? 1.0 : 0.0));
            }
        }
    });
}

std::vector<double> softmax_rows(const Tensor& logits) {
    require_ndim(logits, 2, "softmax_rows");
    const int N = logits.dim(0), V = logits.dim(1);
    std::vector<double> out(logits.values());
    for (int r = 0; r < N; ++r) {
        double* row = out.data() + static_cast<size_t>(r) * V;
        const double mx = *std::max_element(row, row + V);
        double z = 0;
        for (int j = 0; j < V; ++j) z += (row[j] = std::exp(row[j] - mx));
        for (int j = 0; j < V; ++j) row[j] /= z;
    }
    return out;
}

}  // namespace uidiff::nn
