#ifndef CASGAN_NN_OPS_HPP
#define CASGAN_NN_OPS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <memory>
#include <vector>

#include "casgan/tape.hpp"

namespace casgan {
namespace ops {

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                                 std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// col is (Cin*kh*kw) x (Hout*Wout), zero padding.
template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Hout,
            std::int64_t Wout, T* col) {
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t ki = 0; ki < kh; ++ki) {
            for (std::int64_t kj = 0; kj < kw; ++kj) {
                T* dst = col + ((c * kh + ki) * kw + kj) * (Hout * Wout);
                for (std::int64_t ho = 0; ho < Hout; ++ho) {
                    const std::int64_t hi = ho * stride - pad + ki;
                    if (hi < 0 || hi >= H) {
                        for (std::int64_t wo = 0; wo < Wout; ++wo)
                            dst[ho * Wout + wo] = T(0);
                        continue;
                    }
                    const T* src = x + (c * H + hi) * W;
                    for (std::int64_t wo = 0; wo < Wout; ++wo) {
                        const std::int64_t wi = wo * stride - pad + kj;
                        dst[ho * Wout + wo] = (wi >= 0 && wi < W) ? src[wi] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Hout,
                std::int64_t Wout, T* x) {
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t ki = 0; ki < kh; ++ki) {
            for (std::int64_t kj = 0; kj < kw; ++kj) {
                const T* src = col + ((c * kh + ki) * kw + kj) * (Hout * Wout);
                for (std::int64_t ho = 0; ho < Hout; ++ho) {
                    const std::int64_t hi = ho * stride - pad + ki;
                    if (hi < 0 || hi >= H)
                        continue;
                    T* dst = x + (c * H + hi) * W;
                    for (std::int64_t wo = 0; wo < Wout; ++wo) {
                        const std::int64_t wi = wo * stride - pad + kj;
                        if (wi >= 0 && wi < W)
                            dst[wi] += src[ho * Wout + wo];
                    }
                }
            }
        }
    }
}

} // namespace detail

// 2D convolution, zero padding. x (N,Cin,H,W), w (Cout,Cin,kh,kw), optional
// bias (Cout). Reflection padding is a separate op composed in front.
template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, std::int64_t stride, std::int64_t pad) {
    const Tensor<T>& xv = t.val(x);
    const Tensor<T>& wv = t.val(w);
    CASGAN_CHECK(xv.rank() == 4, "conv2d input must be NCHW, got ", xv.shape_str());
    CASGAN_CHECK(wv.rank() == 4, "conv2d weight must be OIHW, got ", wv.shape_str());
    CASGAN_CHECK(xv.dim(1) == wv.dim(1), "conv2d channel mismatch: input ", xv.shape_str(),
                 " vs weight ", wv.shape_str());
    const std::int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::int64_t Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const std::int64_t Hout = detail::conv_out_dim(H, kh, stride, pad);
    const std::int64_t Wout = detail::conv_out_dim(W, kw, stride, pad);
    CASGAN_CHECK(Hout >= 1 && Wout >= 1, "conv2d output would be empty for input ", xv.shape_str());
    const bool has_bias = b.valid();
    if (has_bias) {
        CASGAN_CHECK(t.val(b).numel() == Cout, "conv2d bias size mismatch");
    }

    const std::int64_t K = Cin * kh * kw;
    const std::int64_t L = Hout * Wout;
    Tensor<T> out({N, Cout, Hout, Wout});
    std::vector<T> col(static_cast<std::size_t>(K * L));
    Eigen::Map<const detail::MatRM<T>> Wm(wv.data(), Cout, K);
    for (std::int64_t n = 0; n < N; ++n) {
        detail::im2col(xv.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Hout, Wout,
                       col.data());
        Eigen::Map<const detail::MatRM<T>> Cm(col.data(), K, L);
        Eigen::Map<detail::MatRM<T>> Ym(out.data() + n * Cout * L, Cout, L);
        Ym.noalias() = Wm * Cm;
        if (has_bias) {
            const Tensor<T>& bv = t.val(b);
            for (std::int64_t co = 0; co < Cout; ++co)
                Ym.row(co).array() += bv[co];
        }
    }

    const bool ng = t.needs_grad(x) || t.needs_grad(w) || (has_bias && t.needs_grad(b));
    return t.emit(std::move(out), ng, [x, w, b, stride, pad, has_bias](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& xv = tp.val(x);
        const Tensor<T>& wv = tp.val(w);
        const std::int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const std::int64_t Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const std::int64_t Hout = g.dim(2), Wout = g.dim(3);
        const std::int64_t K = Cin * kh * kw;
        const std::int64_t L = Hout * Wout;

        const bool need_x = tp.needs_grad(x);
        const bool need_w = tp.needs_grad(w);
        const bool need_b = has_bias && tp.needs_grad(b);

        std::vector<T> col(static_cast<std::size_t>(K * L));
        std::vector<T> dcol(need_x ? static_cast<std::size_t>(K * L) : 0);
        Eigen::Map<const detail::MatRM<T>> Wm(wv.data(), Cout, K);

        for (std::int64_t n = 0; n < N; ++n) {
            Eigen::Map<const detail::MatRM<T>> Gm(g.data() + n * Cout * L, Cout, L);
            if (need_w || need_x) {
                if (need_w) {
                    // dW += dY * col^T, col recomputed from the stored input
                    detail::im2col(xv.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad,
                                   Hout, Wout, col.data());
                    Eigen::Map<const detail::MatRM<T>> Cm(col.data(), K, L);
                    Eigen::Map<detail::MatRM<T>> dWm(tp.grad(w).data(), Cout, K);
                    dWm.noalias() += Gm * Cm.transpose();
                }
                if (need_x) {
                    Eigen::Map<detail::MatRM<T>> dCm(dcol.data(), K, L);
                    dCm.noalias() = Wm.transpose() * Gm;
                    detail::col2im_add(dcol.data(), Cin, H, W, kh, kw, stride, pad, Hout, Wout,
                                       tp.grad(x).data() + n * Cin * H * W);
                }
            }
            if (need_b) {
                Tensor<T>& gb = tp.grad(b);
                for (std::int64_t co = 0; co < Cout; ++co)
                    gb[co] += Gm.row(co).sum();
            }
        }
    });
}

// Reflection padding (no edge repeat); requires pad <= dim-1.
template <typename T>
Var pad_reflect(Tape<T>& t, Var x, std::int64_t pad) {
    const Tensor<T>& xv = t.val(x);
    CASGAN_CHECK(xv.rank() == 4, "pad_reflect input must be NCHW");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    CASGAN_CHECK(pad >= 0 && pad <= H - 1 && pad <= W - 1, "reflection pad ", pad,
                 " too large for ", xv.shape_str());
    auto mirror = [](std::int64_t i, std::int64_t n) {
        if (i < 0)
            return -i;
        if (i >= n)
            return 2 * n - 2 - i;
        return i;
    };
    const std::int64_t Ho = H + 2 * pad, Wo = W + 2 * pad;
    Tensor<T> out({N, C, Ho, Wo});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < Ho; ++h) {
                const std::int64_t hi = mirror(h - pad, H);
                const T* src = xv.data() + ((n * C + c) * H + hi) * W;
                T* dst = out.data() + ((n * C + c) * Ho + h) * Wo;
                for (std::int64_t w = 0; w < Wo; ++w)
                    dst[w] = src[mirror(w - pad, W)];
            }
    return t.emit(std::move(out), t.needs_grad(x), [x, pad, mirror](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        const std::int64_t N = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
        const std::int64_t Ho = H + 2 * pad, Wo = W + 2 * pad;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t h = 0; h < Ho; ++h) {
                    const std::int64_t hi = mirror(h - pad, H);
                    const T* src = g.data() + ((n * C + c) * Ho + h) * Wo;
                    T* dst = gx.data() + ((n * C + c) * H + hi) * W;
                    for (std::int64_t w = 0; w < Wo; ++w)
                        dst[mirror(w - pad, W)] += src[w];
                }
    });
}

template <typename T>
Var upsample_nearest2(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.val(x);
    CASGAN_CHECK(xv.rank() == 4, "upsample input must be NCHW");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor<T> out({N, C, 2 * H, 2 * W});
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * H * W;
        T* dst = out.data() + nc * 4 * H * W;
        for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w) {
                const T v = src[h * W + w];
                T* d0 = dst + (2 * h) * (2 * W) + 2 * w;
                T* d1 = dst + (2 * h + 1) * (2 * W) + 2 * w;
                d0[0] = v;
                d0[1] = v;
                d1[0] = v;
                d1[1] = v;
            }
    }
    return t.emit(std::move(out), t.needs_grad(x), [x](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        const std::int64_t N = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* src = g.data() + nc * 4 * H * W;
            T* dst = gx.data() + nc * H * W;
            for (std::int64_t h = 0; h < H; ++h)
                for (std::int64_t w = 0; w < W; ++w) {
                    const T* s0 = src + (2 * h) * (2 * W) + 2 * w;
                    const T* s1 = src + (2 * h + 1) * (2 * W) + 2 * w;
                    dst[h * W + w] += s0[0] + s0[1] + s1[0] + s1[1];
                }
        }
    });
}

// 2x2 max pooling, stride 2; input dims must be even.
template <typename T>
Var maxpool2(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.val(x);
    CASGAN_CHECK(xv.rank() == 4, "maxpool input must be NCHW");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    CASGAN_CHECK(H % 2 == 0 && W % 2 == 0, "maxpool2 needs even spatial dims, got ",
                 xv.shape_str());
    const std::int64_t Ho = H / 2, Wo = W / 2;
    Tensor<T> out({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(N * C * Ho * Wo));
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * H * W;
        T* dst = out.data() + nc * Ho * Wo;
        std::int64_t* am = argmax->data() + nc * Ho * Wo;
        for (std::int64_t ho = 0; ho < Ho; ++ho)
            for (std::int64_t wo = 0; wo < Wo; ++wo) {
                const std::int64_t base = (2 * ho) * W + 2 * wo;
                std::int64_t best = base;
                T bv = src[base];
                const std::int64_t cands[3] = {base + 1, base + W, base + W + 1};
                for (std::int64_t cand : cands)
                    if (src[cand] > bv) {
                        bv = src[cand];
                        best = cand;
                    }
                dst[ho * Wo + wo] = bv;
                am[ho * Wo + wo] = best;
            }
    }
    return t.emit(std::move(out), t.needs_grad(x), [x, argmax](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        const std::int64_t N = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
        const std::int64_t Ho = H / 2, Wo = W / 2;
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* src = g.data() + nc * Ho * Wo;
            T* dst = gx.data() + nc * H * W;
            const std::int64_t* am = argmax->data() + nc * Ho * Wo;
            for (std::int64_t i = 0; i < Ho * Wo; ++i)
                dst[am[i]] += src[i];
        }
    });
}

// Affine-free instance normalization over each (n, c) plane.
template <typename T>
Var instance_norm(Tape<T>& t, Var x, T eps = T(1e-5)) {
    const Tensor<T>& xv = t.val(x);
    CASGAN_CHECK(xv.rank() == 4, "instance_norm input must be NCHW");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::int64_t plane = H * W;
    CASGAN_CHECK(plane > 0, "instance_norm on empty plane");
    Tensor<T> out(xv.shape());
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N * C));
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * plane;
        T* dst = out.data() + nc * plane;
        T mean = T(0);
        for (std::int64_t i = 0; i < plane; ++i)
            mean += src[i];
        mean /= static_cast<T>(plane);
        T var = T(0);
        for (std::int64_t i = 0; i < plane; ++i) {
            const T d = src[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(plane);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(nc)] = is;
        for (std::int64_t i = 0; i < plane; ++i)
            dst[i] = (src[i] - mean) * is;
    }
    return t.emit(std::move(out), t.needs_grad(x), [x, inv_std](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& y = tp.val(self);
        Tensor<T>& gx = tp.grad(x);
        const std::int64_t N = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
        const std::int64_t plane = H * W;
        const T invp = T(1) / static_cast<T>(plane);
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* gp = g.data() + nc * plane;
            const T* yp = y.data() + nc * plane;
            T* dst = gx.data() + nc * plane;
            T gmean = T(0), gymean = T(0);
            for (std::int64_t i = 0; i < plane; ++i) {
                gmean += gp[i];
                gymean += gp[i] * yp[i];
            }
            gmean *= invp;
            gymean *= invp;
            const T is = (*inv_std)[static_cast<std::size_t>(nc)];
            for (std::int64_t i = 0; i < plane; ++i)
                dst[i] += is * (gp[i] - gmean - yp[i] * gymean);
        }
    });
}

// Global average pooling to (N,C,1,1).
template <typename T>
Var global_avg_pool(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.val(x);
    CASGAN_CHECK(xv.rank() == 4, "global_avg_pool input must be NCHW");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    CASGAN_CHECK(plane > 0, "global_avg_pool on empty plane");
    Tensor<T> out({N, C, 1, 1});
    const T inv = T(1) / static_cast<T>(plane);
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * plane;
        T s = T(0);
        for (std::int64_t i = 0; i < plane; ++i)
            s += src[i];
        out[nc] = s * inv;
    }
    return t.emit(std::move(out), t.needs_grad(x), [x, plane, inv](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        const std::int64_t NC = g.numel();
        for (std::int64_t nc = 0; nc < NC; ++nc) {
            const T gv = g[nc] * inv;
            T* dst = gx.data() + nc * plane;
            for (std::int64_t i = 0; i < plane; ++i)
                dst[i] += gv;
        }
    });
}

// Channel concatenation for skip connections.
template <typename T>
Var concat_ch(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.val(a);
    const Tensor<T>& bv = t.val(b);
    CASGAN_CHECK(av.rank() == 4 && bv.rank() == 4 && av.dim(0) == bv.dim(0) &&
                     av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
                 "concat_ch shape mismatch ", av.shape_str(), " vs ", bv.shape_str());
    const std::int64_t N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
    const std::int64_t plane = H * W;
    Tensor<T> out({N, Ca + Cb, H, W});
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy(av.data() + n * Ca * plane, av.data() + (n + 1) * Ca * plane,
                  out.data() + n * (Ca + Cb) * plane);
        std::copy(bv.data() + n * Cb * plane, bv.data() + (n + 1) * Cb * plane,
                  out.data() + n * (Ca + Cb) * plane + Ca * plane);
    }
    return t.emit(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [a, b, Ca, Cb, plane](Tape<T>& tp, Var self) {
                      const Tensor<T>& g = tp.grad(self);
                      const std::int64_t N = g.dim(0);
                      if (tp.needs_grad(a)) {
                          Tensor<T>& ga = tp.grad(a);
                          for (std::int64_t n = 0; n < N; ++n) {
                              const T* src = g.data() + n * (Ca + Cb) * plane;
                              T* dst = ga.data() + n * Ca * plane;
                              for (std::int64_t i = 0; i < Ca * plane; ++i)
                                  dst[i] += src[i];
                          }
                      }
                      if (tp.needs_grad(b)) {
                          Tensor<T>& gb = tp.grad(b);
                          for (std::int64_t n = 0; n < N; ++n) {
                              const T* src = g.data() + n * (Ca + Cb) * plane + Ca * plane;
                              T* dst = gb.data() + n * Cb * plane;
                              for (std::int64_t i = 0; i < Cb * plane; ++i)
                                  dst[i] += src[i];
                          }
                      }
                  });
}

} // namespace ops
} // namespace casgan

#endif
