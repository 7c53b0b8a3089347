#ifndef CASGAN_TAPE_HPP
#define CASGAN_TAPE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "casgan/tensor.hpp"

namespace casgan {

// Define-by-run reverse-mode autodiff. A Tape owns every intermediate value of
// one evaluation; ops append nodes and register backward closures. Parameters
// enter as leaves whose gradients accumulate into an external sink, so the tape
// itself is discarded after each step. Nodes are appended in evaluation order,
// which is a valid topological order for the reverse sweep.

struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
public:
    using BackFn = std::function<void(Tape&, Var)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        BackFn back;
        bool needs_grad = false;
        Tensor<T>* sink = nullptr;
    };

    Var leaf(const Tensor<T>& value, Tensor<T>* grad_sink) {
        Node n;
        n.value = value;
        n.needs_grad = grad_sink != nullptr;
        n.sink = grad_sink;
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Var constant(Tensor<T> value) {
        Node n;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Var constant_scalar(T v) { return constant(Tensor<T>::scalar(v)); }

    Var emit(Tensor<T> value, bool needs_grad, BackFn back) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        if (needs_grad)
            n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    const Tensor<T>& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

    bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

    // Gradient buffer of a node, allocated on first touch.
    Tensor<T>& grad(Var v) {
        Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.grad.numel() != n.value.numel())
            n.grad = Tensor<T>::zeros(n.value.shape());
        return n.grad;
    }

    // Reverse sweep from a scalar root; parameter sinks receive their gradients.
    void backward(Var root) {
        Node& r = nodes_[static_cast<std::size_t>(root.id)];
        CASGAN_CHECK(r.value.numel() == 1, "backward root must be scalar");
        CASGAN_CHECK(r.needs_grad, "backward root does not depend on any parameter");
        grad(root)[0] += T(1);
        for (std::int32_t i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || n.grad.numel() == 0)
                continue;
            if (n.back)
                n.back(*this, Var{i});
            if (n.sink) {
                CASGAN_CHECK(n.sink->same_shape(n.grad), "parameter sink shape mismatch");
                for (std::int64_t k = 0; k < n.grad.numel(); ++k)
                    (*n.sink)[k] += n.grad[k];
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Pointwise, broadcast and reduction ops
// ---------------------------------------------------------------------------

namespace ops {

// (N,C,H,W) against (N,1,H,W): attention masks broadcast over channels.
template <typename T>
inline bool channel_broadcast(const Tensor<T>& big, const Tensor<T>& small) {
    return big.rank() == 4 && small.rank() == 4 && small.dim(1) == 1 && big.dim(1) != 1 &&
           big.dim(0) == small.dim(0) && big.dim(2) == small.dim(2) && big.dim(3) == small.dim(3);
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.val(a);
    const Tensor<T>& bv = t.val(b);
    CASGAN_CHECK(av.same_shape(bv), "add shape mismatch ", av.shape_str(), " vs ", bv.shape_str());
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = av[i] + bv[i];
    return t.emit(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        if (tp.needs_grad(a)) {
            Tensor<T>& ga = tp.grad(a);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                ga[i] += g[i];
        }
        if (tp.needs_grad(b)) {
            Tensor<T>& gb = tp.grad(b);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                gb[i] += g[i];
        }
    });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.val(a);
    const Tensor<T>& bv = t.val(b);
    CASGAN_CHECK(av.same_shape(bv), "sub shape mismatch ", av.shape_str(), " vs ", bv.shape_str());
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = av[i] - bv[i];
    return t.emit(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        if (tp.needs_grad(a)) {
            Tensor<T>& ga = tp.grad(a);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                ga[i] += g[i];
        }
        if (tp.needs_grad(b)) {
            Tensor<T>& gb = tp.grad(b);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                gb[i] -= g[i];
        }
    });
}

// Elementwise product; either operand may be a single-channel map broadcast
// over the channels of the other.
template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.val(a);
    const Tensor<T>& bv = t.val(b);
    const bool a_big = channel_broadcast(av, bv);
    const bool b_big = channel_broadcast(bv, av);
    CASGAN_CHECK(av.same_shape(bv) || a_big || b_big, "mul shape mismatch ", av.shape_str(), " vs ",
                 bv.shape_str());

    auto bcast_apply = [](const Tensor<T>& big, const Tensor<T>& small, Tensor<T>& out) {
        const std::int64_t N = big.dim(0), C = big.dim(1), H = big.dim(2), W = big.dim(3);
        const std::int64_t plane = H * W;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* bp = big.data() + (n * C + c) * plane;
                const T* sp = small.data() + n * plane;
                T* op = out.data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i)
                    op[i] = bp[i] * sp[i];
            }
    };

    Tensor<T> out(av.shape().size() >= bv.shape().size() && av.numel() >= bv.numel() ? av.shape()
                                                                                     : bv.shape());
    if (av.same_shape(bv)) {
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = av[i] * bv[i];
    } else if (a_big) {
        bcast_apply(av, bv, out);
    } else {
        bcast_apply(bv, av, out);
    }

    return t.emit(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [a, b, a_big, b_big](Tape<T>& tp, Var self) {
                      const Tensor<T>& g = tp.grad(self);
                      const Tensor<T>& av = tp.val(a);
                      const Tensor<T>& bv = tp.val(b);
                      auto acc_big = [&g](const Tensor<T>& other_small, Tensor<T>& gbig) {
                          const std::int64_t N = gbig.dim(0), C = gbig.dim(1), H = gbig.dim(2),
                                             W = gbig.dim(3);
                          const std::int64_t plane = H * W;
                          for (std::int64_t n = 0; n < N; ++n)
                              for (std::int64_t c = 0; c < C; ++c) {
                                  const T* gp = g.data() + (n * C + c) * plane;
                                  const T* sp = other_small.data() + n * plane;
                                  T* dst = gbig.data() + (n * C + c) * plane;
                                  for (std::int64_t i = 0; i < plane; ++i)
                                      dst[i] += gp[i] * sp[i];
                              }
                      };
                      auto acc_small = [&g](const Tensor<T>& other_big, Tensor<T>& gsmall) {
                          const std::int64_t N = other_big.dim(0), C = other_big.dim(1),
                                             H = other_big.dim(2), W = other_big.dim(3);
                          const std::int64_t plane = H * W;
                          for (std::int64_t n = 0; n < N; ++n)
                              for (std::int64_t c = 0; c < C; ++c) {
                                  const T* gp = g.data() + (n * C + c) * plane;
                                  const T* bp = other_big.data() + (n * C + c) * plane;
                                  T* dst = gsmall.data() + n * plane;
                                  for (std::int64_t i = 0; i < plane; ++i)
                                      dst[i] += gp[i] * bp[i];
                              }
                      };
                      if (av.same_shape(bv)) {
                          if (tp.needs_grad(a)) {
                              Tensor<T>& ga = tp.grad(a);
                              for (std::int64_t i = 0; i < g.numel(); ++i)
                                  ga[i] += g[i] * bv[i];
                          }
                          if (tp.needs_grad(b)) {
                              Tensor<T>& gb = tp.grad(b);
                              for (std::int64_t i = 0; i < g.numel(); ++i)
                                  gb[i] += g[i] * av[i];
                          }
                      } else if (a_big) {
                          if (tp.needs_grad(a))
                              acc_big(bv, tp.grad(a));
                          if (tp.needs_grad(b))
                              acc_small(av, tp.grad(b));
                      } else {
                          (void)b_big;
                          if (tp.needs_grad(b))
                              acc_big(av, tp.grad(b));
                          if (tp.needs_grad(a))
                              acc_small(bv, tp.grad(a));
                      }
                  });
}

// y = scale * x + shift
template <typename T>
Var affine(Tape<T>& t, Var a, T scale, T shift) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = scale * av[i] + shift;
    return t.emit(std::move(out), t.needs_grad(a), [a, scale](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            ga[i] += scale * g[i];
    });
}

template <typename T>
Var one_minus(Tape<T>& t, Var a) {
    return affine(t, a, T(-1), T(1));
}

template <typename T>
Var square(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = av[i] * av[i];
    return t.emit(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& av = tp.val(a);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            ga[i] += T(2) * av[i] * g[i];
    });
}

template <typename T>
Var abs_val(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::abs(av[i]);
    return t.emit(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& av = tp.val(a);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const T s = av[i] > T(0) ? T(1) : (av[i] < T(0) ? T(-1) : T(0));
            ga[i] += s * g[i];
        }
    });
}

template <typename T>
Var relu(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = av[i] > T(0) ? av[i] : T(0);
    return t.emit(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& av = tp.val(a);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            if (av[i] > T(0))
                ga[i] += g[i];
    });
}

template <typename T>
Var leaky_relu(Tape<T>& t, Var a, T slope) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = av[i] > T(0) ? av[i] : slope * av[i];
    return t.emit(std::move(out), t.needs_grad(a), [a, slope](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& av = tp.val(a);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            ga[i] += (av[i] > T(0) ? T(1) : slope) * g[i];
    });
}

template <typename T>
inline T stable_sigmoid(T x) {
    if (x >= T(0))
        return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Var sigmoid(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = stable_sigmoid(av[i]);
    return t.emit(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& y = tp.val(self);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            ga[i] += y[i] * (T(1) - y[i]) * g[i];
    });
}

template <typename T>
Var tanh_act(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::tanh(av[i]);
    return t.emit(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& y = tp.val(self);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            ga[i] += (T(1) - y[i] * y[i]) * g[i];
    });
}

// log(1 + exp(x)), evaluated stably; derivative is sigmoid(x).
template <typename T>
Var softplus(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const T x = av[i];
        out[i] = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
    }
    return t.emit(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, Var self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& av = tp.val(a);
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            ga[i] += stable_sigmoid(av[i]) * g[i];
    });
}

template <typename T>
Var sum_all(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    T s = T(0);
    for (std::int64_t i = 0; i < av.numel(); ++i)
        s += av[i];
    return t.emit(Tensor<T>::scalar(s), t.needs_grad(a), [a](Tape<T>& tp, Var self) {
        const T g = tp.grad(self)[0];
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < ga.numel(); ++i)
            ga[i] += g;
    });
}

template <typename T>
Var mean_all(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.val(a);
    CASGAN_CHECK(av.numel() > 0, "mean of empty tensor");
    T s = T(0);
    for (std::int64_t i = 0; i < av.numel(); ++i)
        s += av[i];
    const T inv = T(1) / static_cast<T>(av.numel());
    return t.emit(Tensor<T>::scalar(s * inv), t.needs_grad(a), [a, inv](Tape<T>& tp, Var self) {
        const T g = tp.grad(self)[0] * inv;
        Tensor<T>& ga = tp.grad(a);
        for (std::int64_t i = 0; i < ga.numel(); ++i)
            ga[i] += g;
    });
}

// Weighted sum of scalar vars: y = sum_i w_i * x_i
template <typename T>
Var weighted_sum(Tape<T>& t, const std::vector<std::pair<T, Var>>& terms) {
    CASGAN_CHECK(!terms.empty(), "weighted_sum of nothing");
    T s = T(0);
    bool ng = false;
    for (const auto& [w, v] : terms) {
        CASGAN_CHECK(t.val(v).numel() == 1, "weighted_sum expects scalar vars");
        s += w * t.val(v)[0];
        ng = ng || t.needs_grad(v);
    }
    auto terms_copy = terms;
    return t.emit(Tensor<T>::scalar(s), ng, [terms_copy](Tape<T>& tp, Var self) {
        const T g = tp.grad(self)[0];
        for (const auto& [w, v] : terms_copy)
            if (tp.needs_grad(v))
                tp.grad(v)[0] += w * g;
    });
}

// Scalar division a / b for {1}-shaped vars.
template <typename T>
Var div_scalar(Tape<T>& t, Var a, Var b) {
    CASGAN_CHECK(t.val(a).numel() == 1 && t.val(b).numel() == 1, "div_scalar expects scalars");
    const T bv = t.val(b)[0];
    CASGAN_CHECK(bv != T(0), "division by zero");
    return t.emit(Tensor<T>::scalar(t.val(a)[0] / bv), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](Tape<T>& tp, Var self) {
                      const T g = tp.grad(self)[0];
                      const T av = tp.val(a)[0];
                      const T bv = tp.val(b)[0];
                      if (tp.needs_grad(a))
                          tp.grad(a)[0] += g / bv;
                      if (tp.needs_grad(b))
                          tp.grad(b)[0] -= g * av / (bv * bv);
                  });
}

// Cut the graph: value flows on, gradient does not.
template <typename T>
Var detach(Tape<T>& t, Var a) {
    return t.constant(t.val(a));
}

} // namespace ops

} // namespace casgan

#endif
