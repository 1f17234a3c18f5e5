#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "relharm/nn/tensor.hpp"

namespace relharm::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

// Small and matrix-vector products pick their summation order from operand
// alignment, and heap addresses vary between runs, so those run on Eigen-owned
// copies. The blocked path packs its operands and needs no copy.
template <class T, class A, class B>
RowMat<T> product(const A& a, const B& b) {
    const bool blocked = a.rows() > 1 && b.cols() > 1 && a.rows() + a.cols() + b.cols() >= 64;
    if (blocked) return a * b;
    const RowMat<T> ac = a, bc = b;
    return ac * bc;
}

template <class T>
T row_sum(const T* p, std::size_t n) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s;
}

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// cols is (cin*k*k) x (oh*ow), row-major.
template <class T>
void im2col(const T* x, int cin, int h, int w, int k, int stride, int pad, int oh, int ow, T* cols) {
    const std::size_t hw = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < cin; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * hw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix < 0 || ix >= w) ? T(0) : src[ix];
                    }
                }
            }
}

template <class T>
void col2im(const T* cols, int cin, int h, int w, int k, int stride, int pad, int oh, int ow, T* dx) {
    const std::size_t hw = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < cin; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * hw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = dx + (static_cast<std::size_t>(c) * h + iy) * w;
                    const T* src = row + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace detail

/// 2-D convolution, weight [cout, cin, k, k], optional bias [1, cout, 1, 1].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
    const Shape xs = x.shape(), ws = weight.shape();
    if (ws.c != xs.c || ws.h != ws.w) throw ShapeMismatch("conv2d: input " + xs.str() + " vs weight " + ws.str());
    const int k = ws.h, cout = ws.n;
    const int oh = detail::conv_out(xs.h, k, stride, pad), ow = detail::conv_out(xs.w, k, stride, pad);
    if (oh < 1 || ow < 1) throw ShapeMismatch("conv2d: empty output for input " + xs.str());
    const Shape os{xs.n, cout, oh, ow};
    const int kk = xs.c * k * k;
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    const bool direct = k == 1 && stride == 1 && pad == 0;

    std::vector<T> out(os.numel());
    std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk) * ohw);
    ConstMatMap<T> wm(weight.data(), cout, kk);
    for (int n = 0; n < xs.n; ++n) {
        const T* xn = x.data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
        if (!direct) detail::im2col(xn, xs.c, xs.h, xs.w, k, stride, pad, oh, ow, cols.data());
        ConstMatMap<T> cm(direct ? xn : cols.data(), kk, static_cast<Eigen::Index>(ohw));
        MatMap<T> om(out.data() + static_cast<std::size_t>(n) * cout * ohw, cout, static_cast<Eigen::Index>(ohw));
        om = detail::product<T>(wm, cm);
        if (bias.defined())
            for (int c = 0; c < cout; ++c) om.row(c).array() += bias.data()[c];
    }

    return make_result<T>(os, std::move(out), {x, weight, bias}, [=](Node<T>& self) mutable {
        std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk) * ohw);
        std::vector<T> dcols(static_cast<std::size_t>(kk) * ohw);
        ConstMatMap<T> wm(weight.data(), cout, kk);
        for (int n = 0; n < xs.n; ++n) {
            ConstMatMap<T> g(self.grad.data() + static_cast<std::size_t>(n) * cout * ohw, cout,
                             static_cast<Eigen::Index>(ohw));
            const T* xn = x.data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
            if (weight.requires_grad()) {
                if (!direct) detail::im2col(xn, xs.c, xs.h, xs.w, k, stride, pad, oh, ow, cols.data());
                ConstMatMap<T> cm(direct ? xn : cols.data(), kk, static_cast<Eigen::Index>(ohw));
                MatMap<T> gw(weight.grad().data(), cout, kk);
                gw += detail::product<T>(g, cm.transpose());
            }
            if (bias.defined() && bias.requires_grad()) {
                auto& gb = bias.grad();
                for (int c = 0; c < cout; ++c) gb[c] += detail::row_sum(g.data() + static_cast<std::size_t>(c) * ohw, ohw);
            }
            if (x.requires_grad()) {
                T* dx = x.grad().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
                if (direct) {
                    MatMap<T> dxm(dx, kk, static_cast<Eigen::Index>(ohw));
                    dxm += detail::product<T>(wm.transpose(), g);
                } else {
                    MatMap<T> dcm(dcols.data(), kk, static_cast<Eigen::Index>(ohw));
                    dcm = detail::product<T>(wm.transpose(), g);
                    detail::col2im(dcols.data(), xs.c, xs.h, xs.w, k, stride, pad, oh, ow, dx);
                }
            }
        }
    });
}

/// x [n, in, 1, 1] -> [n, out, 1, 1] with weight [out, in, 1, 1].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    const Shape xs = x.shape(), ws = weight.shape();
    const int in = xs.c * xs.h * xs.w;
    if (ws.c * ws.h * ws.w != in) throw ShapeMismatch("linear: input " + xs.str() + " vs weight " + ws.str());
    const int out_f = ws.n;
    const Shape os{xs.n, out_f, 1, 1};
    std::vector<T> out(os.numel());
    ConstMatMap<T> xm(x.data(), xs.n, in);
    ConstMatMap<T> wm(weight.data(), out_f, in);
    MatMap<T> om(out.data(), xs.n, out_f);
    om = detail::product<T>(xm, wm.transpose());
    if (bias.defined())
        for (int n = 0; n < xs.n; ++n)
            for (int o = 0; o < out_f; ++o) om(n, o) += bias.data()[o];
    return make_result<T>(os, std::move(out), {x, weight, bias}, [=](Node<T>& self) mutable {
        ConstMatMap<T> g(self.grad.data(), xs.n, out_f);
        ConstMatMap<T> xm(x.data(), xs.n, in);
        ConstMatMap<T> wm(weight.data(), out_f, in);
        if (weight.requires_grad()) {
            MatMap<T> gw(weight.grad().data(), out_f, in);
            gw += detail::product<T>(g.transpose(), xm);
        }
        if (bias.defined() && bias.requires_grad()) {
            auto& gb = bias.grad();
            for (int n = 0; n < xs.n; ++n)
                for (int o = 0; o < out_f; ++o) gb[o] += g(n, o);
        }
        if (x.requires_grad()) {
            MatMap<T> gx(x.grad().data(), xs.n, in);
            gx += detail::product<T>(g, wm);
        }
    });
}

template <class T>
Tensor<T> silu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.data()[i];
        out[i] = v / (T(1) + std::exp(-v));
    }
    return make_result<T>(x.shape(), std::move(out), {x}, [x](Node<T>& self) mutable {
        if (!x.requires_grad()) return;
        auto& g = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = x.data()[i];
            const T s = T(1) / (T(1) + std::exp(-v));
            g[i] += self.grad[i] * s * (T(1) + v * (T(1) - s));
        }
    });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    expect_shape(b.shape(), a.shape(), "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) mutable {
        if (a.requires_grad()) {
            auto& g = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (b.requires_grad()) {
            auto& g = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

/// Per-sample blend wx[n] * x[n] + wy[n] * y[n]; the weights are constants.
template <class T>
Tensor<T> blend_per_sample(const Tensor<T>& x, const std::vector<T>& wx, const Tensor<T>& y, const std::vector<T>& wy) {
    const Shape xs = x.shape();
    expect_shape(y.shape(), xs, "blend_per_sample");
    if (wx.size() != static_cast<std::size_t>(xs.n) || wy.size() != wx.size())
        throw ShapeMismatch("blend_per_sample: one weight per sample expected");
    const std::size_t per = xs.numel() / xs.n;
    std::vector<T> out(xs.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = wx[i / per] * x.data()[i] + wy[i / per] * y.data()[i];
    return make_result<T>(xs, std::move(out), {x, y}, [=](Node<T>& self) mutable {
        for (auto [in, w] : {std::pair{x, &wx}, std::pair{y, &wy}}) {
            if (!in.requires_grad()) continue;
            auto& g = in.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*w)[i / per] * self.grad[i];
        }
    });
}

/// x [n, c, h, w] + v [n, c, 1, 1] broadcast over space.
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& v) {
    const Shape xs = x.shape();
    expect_shape(v.shape(), Shape{xs.n, xs.c, 1, 1}, "add_channel_bias");
    const std::size_t plane = xs.plane();
    std::vector<T> out(x.values());
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(xs.n) * xs.c; ++nc)
        for (std::size_t p = 0; p < plane; ++p) out[nc * plane + p] += v.data()[nc];
    return make_result<T>(xs, std::move(out), {x, v}, [=](Node<T>& self) mutable {
        if (x.requires_grad()) {
            auto& g = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (v.requires_grad()) {
            auto& g = v.grad();
            for (std::size_t nc = 0; nc < g.size(); ++nc) {
                T s(0);
                for (std::size_t p = 0; p < plane; ++p) s += self.grad[nc * plane + p];
                g[nc] += s;
            }
        }
    });
}

/// Concatenate along channels.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_channels: no inputs");
    const Shape s0 = parts[0].shape();
    int c_total = 0;
    for (const auto& p : parts) {
        const Shape s = p.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw ShapeMismatch("concat_channels: " + s.str() + " vs " + s0.str());
        c_total += s.c;
    }
    const Shape os{s0.n, c_total, s0.h, s0.w};
    const std::size_t plane = s0.plane();
    std::vector<T> out(os.numel());
    for (int n = 0; n < s0.n; ++n) {
        std::size_t off = static_cast<std::size_t>(n) * c_total * plane;
        for (const auto& p : parts) {
            const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
            std::copy_n(p.data() + n * len, len, out.begin() + off);
            off += len;
        }
    }
    auto out_node = make_result<T>(os, std::move(out), {}, [](Node<T>&) {});
    // make_result takes an initializer_list, so wire variadic parents here.
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (grad_enabled() && any) {
        Node<T>* self = out_node.node();
        self->requires_grad = true;
        for (const auto& p : parts) self->parents.push_back(p.node_ptr());
        self->backward = [self, parts, c_total, plane]() mutable {
            const int batch = self->shape.n;
            for (int n = 0; n < batch; ++n) {
                std::size_t off = static_cast<std::size_t>(n) * c_total * plane;
                for (auto& p : parts) {
                    const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
                    if (p.requires_grad()) {
                        T* g = p.grad().data() + n * len;
                        for (std::size_t i = 0; i < len; ++i) g[i] += self->grad[off + i];
                    }
                    off += len;
                }
            }
        };
    }
    return out_node;
}

/// Nearest-neighbour resize to (oh, ow): source index floor(i * in / out).
template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int oh, int ow) {
    const Shape xs = x.shape();
    const Shape os{xs.n, xs.c, oh, ow};
    std::vector<int> ys(oh), xs_idx(ow);
    for (int i = 0; i < oh; ++i) ys[i] = static_cast<int>(static_cast<long>(i) * xs.h / oh);
    for (int j = 0; j < ow; ++j) xs_idx[j] = static_cast<int>(static_cast<long>(j) * xs.w / ow);
    std::vector<T> out(os.numel());
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(xs.n) * xs.c; ++nc)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                out[(nc * oh + i) * ow + j] = x.data()[(nc * xs.h + ys[i]) * xs.w + xs_idx[j]];
    return make_result<T>(os, std::move(out), {x}, [=](Node<T>& self) mutable {
        if (!x.requires_grad()) return;
        auto& g = x.grad();
        for (std::size_t nc = 0; nc < static_cast<std::size_t>(xs.n) * xs.c; ++nc)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j)
                    g[(nc * xs.h + ys[i]) * xs.w + xs_idx[j]] += self.grad[(nc * oh + i) * ow + j];
    });
}

/// Group normalisation with per-channel affine gamma/beta [1, c, 1, 1].
template <class T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, int groups, T eps = T(1e-5)) {
    const Shape xs = x.shape();
    if (xs.c % groups != 0) throw ShapeMismatch("group_norm: channels not divisible by groups");
    expect_shape(gamma.shape(), Shape{1, xs.c, 1, 1}, "group_norm gamma");
    const int cpg = xs.c / groups;
    const std::size_t plane = xs.plane();
    const std::size_t m = static_cast<std::size_t>(cpg) * plane;
    std::vector<T> out(x.numel());
    std::vector<T> xhat(x.numel());
    std::vector<T> rstd(static_cast<std::size_t>(xs.n) * groups);
    for (int n = 0; n < xs.n; ++n)
        for (int g = 0; g < groups; ++g) {
            const std::size_t base = (static_cast<std::size_t>(n) * xs.c + g * cpg) * plane;
            T mean(0);
            for (std::size_t i = 0; i < m; ++i) mean += x.data()[base + i];
            mean /= T(m);
            T var(0);
            for (std::size_t i = 0; i < m; ++i) {
                const T d = x.data()[base + i] - mean;
                var += d * d;
            }
            var /= T(m);
            const T r = T(1) / std::sqrt(var + eps);
            rstd[n * groups + g] = r;
            for (int cc = 0; cc < cpg; ++cc) {
                const int c = g * cpg + cc;
                for (std::size_t p = 0; p < plane; ++p) {
                    const std::size_t i = base + cc * plane + p;
                    xhat[i] = (x.data()[i] - mean) * r;
                    out[i] = xhat[i] * gamma.data()[c] + beta.data()[c];
                }
            }
        }
    return make_result<T>(xs, std::move(out), {x, gamma, beta},
                          [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) mutable {
                              const T* dy = self.grad.data();
                              if (gamma.requires_grad() || beta.requires_grad()) {
                                  auto& gg = gamma.grad();
                                  auto& gb = beta.grad();
                                  for (int n = 0; n < xs.n; ++n)
                                      for (int c = 0; c < xs.c; ++c) {
                                          const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
                                          T sg(0), sb(0);
                                          for (std::size_t p = 0; p < plane; ++p) {
                                              sg += dy[base + p] * xhat[base + p];
                                              sb += dy[base + p];
                                          }
                                          gg[c] += sg;
                                          gb[c] += sb;
                                      }
                              }
                              if (!x.requires_grad()) return;
                              auto& gx = x.grad();
                              for (int n = 0; n < xs.n; ++n)
                                  for (int g = 0; g < groups; ++g) {
                                      const std::size_t base = (static_cast<std::size_t>(n) * xs.c + g * cpg) * plane;
                                      T s1(0), s2(0);
                                      for (int cc = 0; cc < cpg; ++cc) {
                                          const T gm = gamma.data()[g * cpg + cc];
                                          for (std::size_t p = 0; p < plane; ++p) {
                                              const std::size_t i = base + cc * plane + p;
                                              const T d = dy[i] * gm;
                                              s1 += d;
                                              s2 += d * xhat[i];
                                          }
                                      }
                                      const T r = rstd[n * groups + g];
                                      const T inv_m = T(1) / T(m);
                                      for (int cc = 0; cc < cpg; ++cc) {
                                          const T gm = gamma.data()[g * cpg + cc];
                                          for (std::size_t p = 0; p < plane; ++p) {
                                              const std::size_t i = base + cc * plane + p;
                                              gx[i] += r * (dy[i] * gm - inv_m * (s1 + xhat[i] * s2));
                                          }
                                      }
                                  }
                          });
}

/// Mean squared error against a constant target; returns a scalar.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const std::vector<T>& target) {
    if (target.size() != pred.numel()) throw ShapeMismatch("mse_loss: size mismatch");
    T s(0);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const T d = pred.data()[i] - target[i];
        s += d * d;
    }
    const T inv = T(1) / T(target.size());
    return make_result<T>(Shape{}, {s * inv}, {pred}, [pred, target, inv](Node<T>& self) mutable {
        if (!pred.requires_grad()) return;
        auto& g = pred.grad();
        const T k = T(2) * inv * self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (pred.data()[i] - target[i]);
    });
}

/// Mean absolute error against a constant target; returns a scalar.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const std::vector<T>& target) {
    if (target.size() != pred.numel()) throw ShapeMismatch("l1_loss: size mismatch");
    T s(0);
    for (std::size_t i = 0; i < target.size(); ++i) s += std::abs(pred.data()[i] - target[i]);
    const T inv = T(1) / T(target.size());
    return make_result<T>(Shape{}, {s * inv}, {pred}, [pred, target, inv](Node<T>& self) mutable {
        if (!pred.requires_grad()) return;
        auto& g = pred.grad();
        const T k = inv * self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T d = pred.data()[i] - target[i];
            g[i] += d > T(0) ? k : (d < T(0) ? -k : T(0));
        }
    });
}

}  // namespace relharm::nn
