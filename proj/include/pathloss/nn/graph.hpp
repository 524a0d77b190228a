#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "pathloss/nn/gemm.hpp"
#include "pathloss/nn/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pathloss::nn {

/// Reverse-mode autodiff node. Values are computed eagerly; each op records
/// a closure that accumulates into the input gradients.
template <typename T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;
    bool requires_grad = false;
    bool from_op = false;
    std::vector<std::shared_ptr<NodeT<T>>> inputs;
    std::function<void(NodeT<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.data.empty()) grad = TensorT<T>::zeros(value.shape);
    }
};

template <typename T>
class VarT {
public:
    VarT() = default;

    static VarT parameter(TensorT<T> value) {
        VarT v;
        v.node_ = std::make_shared<NodeT<T>>();
        v.node_->value = std::move(value);
        v.node_->requires_grad = true;
        return v;
    }

    static VarT constant(TensorT<T> value) {
        VarT v;
        v.node_ = std::make_shared<NodeT<T>>();
        v.node_->value = std::move(value);
        return v;
    }

    bool valid() const { return node_ != nullptr; }
    const TensorT<T>& value() const { return node_->value; }
    TensorT<T>& mutable_value() { return node_->value; }
    TensorT<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad() {
        if (node_) node_->grad.data.assign(node_->value.data.size(), T(0));
    }
    std::shared_ptr<NodeT<T>> node() const { return node_; }

    static VarT from_node(std::shared_ptr<NodeT<T>> n) {
        VarT v;
        v.node_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<NodeT<T>> node_;
};

using Var = VarT<float>;

namespace detail {

template <typename T>
VarT<T> make_op(TensorT<T> value, std::vector<std::shared_ptr<NodeT<T>>> inputs,
                std::function<void(NodeT<T>&)> backward_fn) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->from_op = true;
    for (const auto& in : inputs)
        if (in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backward_fn = std::move(backward_fn);
    }
    return VarT<T>::from_node(n);
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise and shape ops
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> add(VarT<T> a, VarT<T> b) {
    if (!same_shape(a.value(), b.value())) throw ShapeMismatch("add: shape mismatch");
    TensorT<T> out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(std::move(out), {an, bn}, [an, bn](NodeT<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                an->grad.data[i] += self.grad.data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                bn->grad.data[i] += self.grad.data[i];
        }
    });
}

template <typename T>
VarT<T> sub(VarT<T> a, VarT<T> b) {
    if (!same_shape(a.value(), b.value())) throw ShapeMismatch("sub: shape mismatch");
    TensorT<T> out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(std::move(out), {an, bn}, [an, bn](NodeT<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                an->grad.data[i] += self.grad.data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                bn->grad.data[i] -= self.grad.data[i];
        }
    });
}

template <typename T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
    if (!same_shape(a.value(), b.value())) throw ShapeMismatch("mul: shape mismatch");
    TensorT<T> out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(std::move(out), {an, bn}, [an, bn](NodeT<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                an->grad.data[i] += self.grad.data[i] * bn->value.data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                bn->grad.data[i] += self.grad.data[i] * an->value.data[i];
        }
    });
}

template <typename T>
VarT<T> scale(VarT<T> a, double s) {
    TensorT<T> out = a.value();
    for (T& v : out.data) v = static_cast<T>(v * s);
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an, s](NodeT<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            an->grad.data[i] += static_cast<T>(self.grad.data[i] * s);
    });
}

template <typename T>
VarT<T> add_scalar(VarT<T> a, double s) {
    TensorT<T> out = a.value();
    for (T& v : out.data) v = static_cast<T>(v + s);
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an](NodeT<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            an->grad.data[i] += self.grad.data[i];
    });
}

template <typename T>
VarT<T> relu(VarT<T> a) {
    TensorT<T> out = a.value();
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an](NodeT<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            if (an->value.data[i] > T(0)) an->grad.data[i] += self.grad.data[i];
    });
}

template <typename T>
VarT<T> reshape(VarT<T> a, std::vector<int> shape) {
    TensorT<T> out = TensorT<T>::from_vector(std::move(shape), a.value().data);
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an](NodeT<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            an->grad.data[i] += self.grad.data[i];
    });
}

namespace detail {

template <typename T>
void permute4_copy(const TensorT<T>& in, const std::array<int, 4>& perm, TensorT<T>& out,
                   bool accumulate_into_in, TensorT<T>* grad_in = nullptr) {
    // out[idx[perm]] = in[idx] when forward; backward scatters back
    const auto& s = in.shape;
    int d0 = s[0], d1 = s[1], d2 = s[2], d3 = s[3];
    std::array<int, 4> os{};
    for (int i = 0; i < 4; ++i) os[i] = s[static_cast<size_t>(perm[i])];
    std::array<int64_t, 4> ostride{};
    ostride[3] = 1;
    ostride[2] = os[3];
    ostride[1] = static_cast<int64_t>(os[2]) * os[3];
    ostride[0] = static_cast<int64_t>(os[1]) * os[2] * os[3];

    std::array<int, 4> inv{};
    for (int i = 0; i < 4; ++i) inv[perm[i]] = i;

    size_t idx = 0;
    std::array<int, 4> c{};
    for (c[0] = 0; c[0] < d0; ++c[0])
        for (c[1] = 0; c[1] < d1; ++c[1])
            for (c[2] = 0; c[2] < d2; ++c[2])
                for (c[3] = 0; c[3] < d3; ++c[3], ++idx) {
                    int64_t o = c[0] * ostride[inv[0]] + c[1] * ostride[inv[1]] +
                                c[2] * ostride[inv[2]] + c[3] * ostride[inv[3]];
                    if (accumulate_into_in)
                        grad_in->data[idx] += out.data[static_cast<size_t>(o)];
                    else
                        out.data[static_cast<size_t>(o)] = in.data[idx];
                }
}

} // namespace detail

template <typename T>
VarT<T> permute4(VarT<T> a, std::array<int, 4> perm) {
    if (a.value().ndim() != 4) throw ShapeMismatch("permute4 needs a 4-d tensor");
    std::vector<int> out_shape(4);
    for (int i = 0; i < 4; ++i) out_shape[i] = a.value().shape[static_cast<size_t>(perm[i])];
    TensorT<T> out = TensorT<T>::zeros(out_shape);
    detail::permute4_copy(a.value(), perm, out, false);
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an, perm](NodeT<T>& self) {
        an->ensure_grad();
        detail::permute4_copy(an->value, perm, self.grad, true, &an->grad);
    });
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

/// [m, k] x [k, n] -> [m, n]
template <typename T>
VarT<T> matmul(VarT<T> a, VarT<T> b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
        throw ShapeMismatch("matmul: incompatible shapes");
    int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    TensorT<T> out = TensorT<T>::zeros({m, n});
    gemm(false, false, m, n, k, T(1), av.data.data(), bv.data.data(), T(0), out.data.data());
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(std::move(out), {an, bn}, [an, bn, m, k, n](NodeT<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            // dA += dY * B^T
            gemm(false, true, m, k, n, T(1), self.grad.data.data(),
                 bn->value.data.data(), T(1), an->grad.data.data());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            // dB += A^T * dY
            gemm(true, false, k, n, m, T(1), an->value.data.data(),
                 self.grad.data.data(), T(1), bn->grad.data.data());
        }
    });
}

/// y[i][j] = x[i][j] + b[j]
template <typename T>
VarT<T> add_rowvec(VarT<T> x, VarT<T> b) {
    const auto& xv = x.value();
    const auto& bv = b.value();
    if (xv.ndim() != 2 || bv.ndim() != 1 || xv.dim(1) != bv.dim(0))
        throw ShapeMismatch("add_rowvec: incompatible shapes");
    int n = xv.dim(0), m = xv.dim(1);
    TensorT<T> out = xv;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.data[static_cast<size_t>(i) * m + j] += bv.data[j];
    auto xn = x.node(), bn = b.node();
    return detail::make_op<T>(std::move(out), {xn, bn}, [xn, bn, n, m](NodeT<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                xn->grad.data[i] += self.grad.data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i)
                    acc += self.grad.data[static_cast<size_t>(i) * m + j];
                bn->grad.data[j] += static_cast<T>(acc);
            }
        }
    });
}

namespace detail {

// tiny batched matmuls (attention over two tokens); plain loops with double
// accumulation
template <typename T>
void bmm_accum(const T* A, const T* B, T* C, int m, int n, int k, bool tb, bool accumulate) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                T b = tb ? B[static_cast<size_t>(j) * k + p] : B[static_cast<size_t>(p) * n + j];
                acc += static_cast<double>(A[static_cast<size_t>(i) * k + p]) * b;
            }
            size_t idx = static_cast<size_t>(i) * n + j;
            C[idx] = accumulate ? C[idx] + static_cast<T>(acc) : static_cast<T>(acc);
        }
}

// C[m x n] += A^T[m x k_rows] ... helper for bmm backward: C += A^T * B with
// A stored [k x m], B stored [k x n]
template <typename T>
void bmm_accum_ta(const T* A, const T* B, T* C, int m, int n, int k) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p)
                acc += static_cast<double>(A[static_cast<size_t>(p) * m + i]) *
                       B[static_cast<size_t>(p) * n + j];
            C[static_cast<size_t>(i) * n + j] += static_cast<T>(acc);
        }
}

} // namespace detail

/// [B, m, k] x [B, k, n] -> [B, m, n]; transpose_b reads b as [B, n, k].
template <typename T>
VarT<T> bmm(VarT<T> a, VarT<T> b, bool transpose_b = false) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(0) != bv.dim(0))
        throw ShapeMismatch("bmm: batch mismatch");
    int batch = av.dim(0), m = av.dim(1), k = av.dim(2);
    int n = transpose_b ? bv.dim(1) : bv.dim(2);
    int bk = transpose_b ? bv.dim(2) : bv.dim(1);
    if (bk != k) throw ShapeMismatch("bmm: inner dimension mismatch");

    TensorT<T> out = TensorT<T>::zeros({batch, m, n});
    for (int s = 0; s < batch; ++s)
        detail::bmm_accum(av.data.data() + static_cast<size_t>(s) * m * k,
                          bv.data.data() + static_cast<size_t>(s) * k * n,
                          out.data.data() + static_cast<size_t>(s) * m * n, m, n, k,
                          transpose_b, false);

    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(
        std::move(out), {an, bn}, [an, bn, batch, m, n, k, transpose_b](NodeT<T>& self) {
            for (int s = 0; s < batch; ++s) {
                const T* dy = self.grad.data.data() + static_cast<size_t>(s) * m * n;
                const T* A = an->value.data.data() + static_cast<size_t>(s) * m * k;
                const T* B = bn->value.data.data() + static_cast<size_t>(s) * (transpose_b ? n * k : k * n);
                if (an->requires_grad) {
                    an->ensure_grad();
                    T* da = an->grad.data.data() + static_cast<size_t>(s) * m * k;
                    // y = A * op(B): dA += dY * op(B)^T
                    detail::bmm_accum(dy, B, da, m, k, n, !transpose_b, true);
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    T* db = bn->grad.data.data() + static_cast<size_t>(s) * (transpose_b ? n * k : k * n);
                    if (transpose_b) {
                        // y = A * B^T: dB += dY^T * A  ([n x m] x [m x k])
                        for (int j = 0; j < n; ++j)
                            for (int p = 0; p < k; ++p) {
                                double acc = 0.0;
                                for (int i = 0; i < m; ++i)
                                    acc += static_cast<double>(dy[static_cast<size_t>(i) * n + j]) *
                                           A[static_cast<size_t>(i) * k + p];
                                db[static_cast<size_t>(j) * k + p] += static_cast<T>(acc);
                            }
                    } else {
                        // dB += A^T * dY
                        detail::bmm_accum_ta(A, dy, db, k, n, m);
                    }
                }
            }
        });
}

/// Row-wise softmax over the last dimension.
template <typename T>
VarT<T> softmax_lastdim(VarT<T> a) {
    const auto& av = a.value();
    if (av.ndim() < 1) throw ShapeMismatch("softmax needs at least 1-d input");
    int m = av.dim(av.ndim() - 1);
    int64_t rows = av.numel() / m;
    TensorT<T> out = av;
    for (int64_t r = 0; r < rows; ++r) {
        T* p = out.data.data() + r * m;
        T mx = p[0];
        for (int j = 1; j < m; ++j) mx = std::max(mx, p[j]);
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            p[j] = static_cast<T>(std::exp(static_cast<double>(p[j] - mx)));
            sum += p[j];
        }
        for (int j = 0; j < m; ++j) p[j] = static_cast<T>(p[j] / sum);
    }
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an, rows, m](NodeT<T>& self) {
        an->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* y = self.value.data.data() + r * m;
            const T* dy = self.grad.data.data() + r * m;
            T* dx = an->grad.data.data() + r * m;
            double dot = 0.0;
            for (int j = 0; j < m; ++j) dot += static_cast<double>(dy[j]) * y[j];
            for (int j = 0; j < m; ++j)
                dx[j] += static_cast<T>((static_cast<double>(dy[j]) - dot) * y[j]);
        }
    });
}

/// Two [N, D] tensors stacked into a [N, 2, D] token sequence.
template <typename T>
VarT<T> stack_tokens(VarT<T> a, VarT<T> b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.ndim() != 2 || !same_shape(av, bv))
        throw ShapeMismatch("stack_tokens needs two equal [N, D] tensors");
    int n = av.dim(0), d = av.dim(1);
    TensorT<T> out = TensorT<T>::zeros({n, 2, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            out.data[(static_cast<size_t>(i) * 2 + 0) * d + j] = av.data[static_cast<size_t>(i) * d + j];
            out.data[(static_cast<size_t>(i) * 2 + 1) * d + j] = bv.data[static_cast<size_t>(i) * d + j];
        }
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(std::move(out), {an, bn}, [an, bn, n, d](NodeT<T>& self) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                if (an->requires_grad) {
                    an->ensure_grad();
                    an->grad.data[static_cast<size_t>(i) * d + j] +=
                        self.grad.data[(static_cast<size_t>(i) * 2 + 0) * d + j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    bn->grad.data[static_cast<size_t>(i) * d + j] +=
                        self.grad.data[(static_cast<size_t>(i) * 2 + 1) * d + j];
                }
            }
    });
}

/// [N, T, D] -> [N, D] token mean.
template <typename T>
VarT<T> mean_tokens(VarT<T> a) {
    const auto& av = a.value();
    if (av.ndim() != 3) throw ShapeMismatch("mean_tokens needs [N, T, D]");
    int n = av.dim(0), t = av.dim(1), d = av.dim(2);
    TensorT<T> out = TensorT<T>::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int s = 0; s < t; ++s)
                acc += av.data[(static_cast<size_t>(i) * t + s) * d + j];
            out.data[static_cast<size_t>(i) * d + j] = static_cast<T>(acc / t);
        }
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an, n, t, d](NodeT<T>& self) {
        an->ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int s = 0; s < t; ++s)
                for (int j = 0; j < d; ++j)
                    an->grad.data[(static_cast<size_t>(i) * t + s) * d + j] +=
                        self.grad.data[static_cast<size_t>(i) * d + j] / static_cast<T>(t);
    });
}

// ---------------------------------------------------------------------------
// convolution and pooling
// ---------------------------------------------------------------------------

namespace detail {

inline int conv_out_dim(int d) { return (d + 1) / 2; } // 3x3, stride 2, pad 1

template <typename T>
void im2col_chunk(const TensorT<T>& x, int s0, int s1, TensorT<T>& col) {
    int C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int H2 = conv_out_dim(H), W2 = conv_out_dim(W);
    int64_t plane = static_cast<int64_t>(H2) * W2;
    int64_t cols = (s1 - s0) * plane;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int s = s0; s < s1; ++s) {
        const T* xp = x.data.data() + static_cast<size_t>(s) * C * H * W;
        int64_t base = (s - s0) * plane;
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    T* row = col.data.data() + (static_cast<size_t>(c) * 9 + ky * 3 + kx) * cols;
                    for (int oy = 0; oy < H2; ++oy) {
                        int iy = oy * 2 + ky - 1;
                        for (int ox = 0; ox < W2; ++ox) {
                            int ix = ox * 2 + kx - 1;
                            T v = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                      ? xp[(static_cast<size_t>(c) * H + iy) * W + ix]
                                      : T(0);
                            row[base + oy * W2 + ox] = v;
                        }
                    }
                }
    }
}

} // namespace detail

/// 3x3 convolution, stride 2, zero padding 1: [N,C,H,W] -> [N,O,ceil(H/2),ceil(W/2)].
template <typename T>
VarT<T> conv2d_s2(VarT<T> x, VarT<T> weight, VarT<T> bias) {
    const auto& xv = x.value();
    const auto& wv = weight.value();
    const auto& bv = bias.value();
    if (xv.ndim() != 4 || wv.ndim() != 4 || wv.dim(2) != 3 || wv.dim(3) != 3)
        throw ShapeMismatch("conv2d_s2 needs [N,C,H,W] input and [O,C,3,3] weights");
    if (xv.dim(1) != wv.dim(1)) throw ShapeMismatch("conv2d_s2: channel mismatch");
    if (bv.ndim() != 1 || bv.dim(0) != wv.dim(0))
        throw ShapeMismatch("conv2d_s2: bias mismatch");

    int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int O = wv.dim(0);
    int H2 = detail::conv_out_dim(H), W2 = detail::conv_out_dim(W);
    int64_t plane = static_cast<int64_t>(H2) * W2;

    // chunk samples so the im2col buffer stays bounded
    int64_t budget = 8ll << 20; // floats
    int chunk = static_cast<int>(std::clamp<int64_t>(budget / std::max<int64_t>(1, C * 9 * plane), 1, N));

    TensorT<T> out = TensorT<T>::zeros({N, O, H2, W2});
    for (int s0 = 0; s0 < N; s0 += chunk) {
        int s1 = std::min(N, s0 + chunk);
        int64_t cols = (s1 - s0) * plane;
        TensorT<T> col = TensorT<T>::zeros({C * 9, static_cast<int>(cols)});
        detail::im2col_chunk(xv, s0, s1, col);
        TensorT<T> prod = TensorT<T>::zeros({O, static_cast<int>(cols)});
        gemm(false, false, O, static_cast<int>(cols), C * 9, T(1), wv.data.data(),
             col.data.data(), T(0), prod.data.data());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int s = s0; s < s1; ++s)
            for (int o = 0; o < O; ++o) {
                const T* src = prod.data.data() + static_cast<size_t>(o) * cols + (s - s0) * plane;
                T* dst = out.data.data() + (static_cast<size_t>(s) * O + o) * plane;
                T bo = bv.data[o];
                for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + bo;
            }
    }

    auto xn = x.node(), wn = weight.node(), bn = bias.node();
    return detail::make_op<T>(
        std::move(out), {xn, wn, bn},
        [xn, wn, bn, N, C, H, W, O, H2, W2, plane, chunk](NodeT<T>& self) {
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int o = 0; o < O; ++o) {
                    double acc = 0.0;
                    for (int s = 0; s < N; ++s) {
                        const T* dy = self.grad.data.data() + (static_cast<size_t>(s) * O + o) * plane;
                        for (int64_t i = 0; i < plane; ++i) acc += dy[i];
                    }
                    bn->grad.data[o] += static_cast<T>(acc);
                }
            }
            if (!xn->requires_grad && !wn->requires_grad) return;
            if (wn->requires_grad) wn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();

            for (int s0 = 0; s0 < N; s0 += chunk) {
                int s1 = std::min(N, s0 + chunk);
                int64_t cols = (s1 - s0) * plane;
                // gather dY for the chunk as [O, cols]
                TensorT<T> dymat = TensorT<T>::zeros({O, static_cast<int>(cols)});
                for (int s = s0; s < s1; ++s)
                    for (int o = 0; o < O; ++o) {
                        const T* src = self.grad.data.data() + (static_cast<size_t>(s) * O + o) * plane;
                        T* dst = dymat.data.data() + static_cast<size_t>(o) * cols + (s - s0) * plane;
                        std::copy(src, src + plane, dst);
                    }
                if (wn->requires_grad) {
                    TensorT<T> col = TensorT<T>::zeros({C * 9, static_cast<int>(cols)});
                    detail::im2col_chunk(xn->value, s0, s1, col);
                    // dW += dY * col^T
                    gemm(false, true, O, C * 9, static_cast<int>(cols), T(1),
                         dymat.data.data(), col.data.data(), T(1), wn->grad.data.data());
                }
                if (xn->requires_grad) {
                    // dcol = W^T * dY, then scatter back (col2im)
                    TensorT<T> dcol = TensorT<T>::zeros({C * 9, static_cast<int>(cols)});
                    gemm(true, false, C * 9, static_cast<int>(cols), O, T(1),
                         wn->value.data.data(), dymat.data.data(), T(0), dcol.data.data());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                    for (int s = s0; s < s1; ++s) {
                        T* dxp = xn->grad.data.data() + static_cast<size_t>(s) * C * H * W;
                        int64_t base = (s - s0) * plane;
                        for (int c = 0; c < C; ++c)
                            for (int ky = 0; ky < 3; ++ky)
                                for (int kx = 0; kx < 3; ++kx) {
                                    const T* row = dcol.data.data() +
                                                   (static_cast<size_t>(c) * 9 + ky * 3 + kx) * cols;
                                    for (int oy = 0; oy < H2; ++oy) {
                                        int iy = oy * 2 + ky - 1;
                                        if (iy < 0 || iy >= H) continue;
                                        for (int ox = 0; ox < W2; ++ox) {
                                            int ix = ox * 2 + kx - 1;
                                            if (ix < 0 || ix >= W) continue;
                                            dxp[(static_cast<size_t>(c) * H + iy) * W + ix] +=
                                                row[base + oy * W2 + ox];
                                        }
                                    }
                                }
                    }
                }
            }
        });
}

/// [N, C, H, W] -> [N, C] global average.
template <typename T>
VarT<T> global_avg_pool(VarT<T> x) {
    const auto& xv = x.value();
    if (xv.ndim() != 4) throw ShapeMismatch("global_avg_pool needs [N,C,H,W]");
    int N = xv.dim(0), C = xv.dim(1);
    int64_t plane = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    TensorT<T> out = TensorT<T>::zeros({N, C});
    for (int s = 0; s < N; ++s)
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data.data() + (static_cast<size_t>(s) * C + c) * plane;
            double acc = 0.0;
            for (int64_t i = 0; i < plane; ++i) acc += p[i];
            out.data[static_cast<size_t>(s) * C + c] = static_cast<T>(acc / plane);
        }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {xn}, [xn, N, C, plane](NodeT<T>& self) {
        xn->ensure_grad();
        for (int s = 0; s < N; ++s)
            for (int c = 0; c < C; ++c) {
                T g = self.grad.data[static_cast<size_t>(s) * C + c] / static_cast<T>(plane);
                T* p = xn->grad.data.data() + (static_cast<size_t>(s) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) p[i] += g;
            }
    });
}

// ---------------------------------------------------------------------------
// losses and reductions
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> sum_all(VarT<T> a) {
    double acc = 0.0;
    for (T v : a.value().data) acc += v;
    TensorT<T> out = TensorT<T>::from_vector({1}, {static_cast<T>(acc)});
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {an}, [an](NodeT<T>& self) {
        an->ensure_grad();
        for (T& g : an->grad.data) g += self.grad.data[0];
    });
}

/// sqrt(mean((pred - target)^2)); gradient is zero at an exact fit.
template <typename T>
VarT<T> rmse_loss(VarT<T> pred, const TensorT<T>& target) {
    const auto& pv = pred.value();
    if (pv.data.size() != target.data.size() || pv.data.empty())
        throw ShapeMismatch("rmse_loss: length mismatch or empty input");
    int64_t n = pv.numel();
    double sse = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(pv.data[static_cast<size_t>(i)]) -
                   target.data[static_cast<size_t>(i)];
        sse += d * d;
    }
    double loss = std::sqrt(sse / static_cast<double>(n));
    TensorT<T> out = TensorT<T>::from_vector({1}, {static_cast<T>(loss)});
    auto pn = pred.node();
    TensorT<T> tgt = target;
    return detail::make_op<T>(std::move(out), {pn}, [pn, tgt, n, loss](NodeT<T>& self) {
        if (loss <= 0.0) return; // subgradient choice at the exact fit
        pn->ensure_grad();
        double up = self.grad.data[0];
        for (int64_t i = 0; i < n; ++i) {
            double d = static_cast<double>(pn->value.data[static_cast<size_t>(i)]) -
                       tgt.data[static_cast<size_t>(i)];
            pn->grad.data[static_cast<size_t>(i)] +=
                static_cast<T>(up * d / (static_cast<double>(n) * loss));
        }
    });
}

// ---------------------------------------------------------------------------
// backward driver
// ---------------------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Throws NoGraph when the value was
/// not produced by recorded ops.
template <typename T>
void backward(VarT<T> loss) {
    if (!loss.valid() || !loss.node()->from_op)
        throw NoGraph("backward called without a recorded forward");
    if (loss.value().numel() != 1)
        throw ShapeMismatch("backward needs a scalar loss");

    // iterative topological order over the recorded graph
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    std::vector<std::pair<NodeT<T>*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            NodeT<T>* next = node->inputs[idx++].get();
            if (!seen.count(next)) {
                seen.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad.data[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* node = *it;
        if (node->from_op && node->requires_grad && node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

} // namespace pathloss::nn
