#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pathloss/nn/graph.hpp"
#include "pathloss/rng.hpp"

namespace pathloss::nn {

template <typename T>
struct NamedParam {
    std::string name;
    VarT<T> var;
};

/// Kaiming-uniform fan-in fill: U(-sqrt(6/fan_in), +sqrt(6/fan_in)), drawn
/// from the portable generator so initialization is identical everywhere.
template <typename T>
void kaiming_fill(TensorT<T>& t, int fan_in, Pcg32& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct LinearT {
    VarT<T> weight; // [in, out]
    VarT<T> bias;   // [out]
    int in = 0, out = 0;

    static LinearT create(int in, int out, Pcg32& rng) {
        LinearT l;
        l.in = in;
        l.out = out;
        TensorT<T> w = TensorT<T>::zeros({in, out});
        kaiming_fill(w, in, rng);
        l.weight = VarT<T>::parameter(std::move(w));
        l.bias = VarT<T>::parameter(TensorT<T>::zeros({out}));
        return l;
    }

    VarT<T> forward(VarT<T> x) const { return add_rowvec(matmul(x, weight), bias); }

    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
        out.push_back({prefix + ".w", weight});
        out.push_back({prefix + ".b", bias});
    }
};

/// Affine + ReLU between hidden layers, final layer affine.
template <typename T>
struct MlpT {
    std::vector<LinearT<T>> layers;

    static MlpT create(const std::vector<int>& sizes, Pcg32& rng) {
        if (sizes.size() < 2) throw ShapeMismatch("mlp needs at least two sizes");
        MlpT m;
        for (size_t i = 0; i + 1 < sizes.size(); ++i)
            m.layers.push_back(LinearT<T>::create(sizes[i], sizes[i + 1], rng));
        return m;
    }

    VarT<T> forward(VarT<T> x) const {
        for (size_t i = 0; i < layers.size(); ++i) {
            x = layers[i].forward(x);
            if (i + 1 < layers.size()) x = relu(x);
        }
        return x;
    }

    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
        for (size_t i = 0; i < layers.size(); ++i)
            layers[i].collect(prefix + ".l" + std::to_string(i), out);
    }
};

/// Multi-head self-attention over a short token sequence; bias-free
/// projections, no positional encoding.
template <typename T>
struct MhsaT {
    int dim = 256;
    int heads = 8;
    VarT<T> wq, wk, wv, wo; // [dim, dim]

    static MhsaT create(int dim, int heads, Pcg32& rng) {
        if (dim % heads != 0) throw ShapeMismatch("model_dim must be divisible by heads");
        MhsaT m;
        m.dim = dim;
        m.heads = heads;
        for (VarT<T>* w : {&m.wq, &m.wk, &m.wv, &m.wo}) {
            TensorT<T> t = TensorT<T>::zeros({dim, dim});
            kaiming_fill(t, dim, rng);
            *w = VarT<T>::parameter(std::move(t));
        }
        return m;
    }

    /// tokens: [N, T, dim] -> [N, T, dim]
    VarT<T> forward(VarT<T> tokens) const {
        const auto& shape = tokens.value().shape;
        if (shape.size() != 3 || shape[2] != dim)
            throw ShapeMismatch("mhsa expects [N, T, model_dim] tokens");
        int n = shape[0], t = shape[1];
        int dh = dim / heads;

        auto flat = reshape(tokens, {n * t, dim});
        auto split_heads = [&](VarT<T> proj) {
            return reshape(permute4(reshape(proj, {n, t, heads, dh}), {0, 2, 1, 3}),
                           {n * heads, t, dh});
        };
        auto q = split_heads(matmul(flat, wq));
        auto k = split_heads(matmul(flat, wk));
        auto v = split_heads(matmul(flat, wv));

        auto scores = scale(bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(double(dh)));
        auto attn = softmax_lastdim(scores);
        auto ctx = bmm(attn, v); // [N*heads, T, dh]

        auto merged = reshape(permute4(reshape(ctx, {n, heads, t, dh}), {0, 2, 1, 3}),
                              {n * t, dim});
        return reshape(matmul(merged, wo), {n, t, dim});
    }

    /// attention weights only, for inspection/tests: [N*heads, T, T]
    TensorT<T> attention(VarT<T> tokens) const {
        const auto& shape = tokens.value().shape;
        int n = shape[0], t = shape[1];
        int dh = dim / heads;
        auto flat = reshape(tokens, {n * t, dim});
        auto split_heads = [&](VarT<T> proj) {
            return reshape(permute4(reshape(proj, {n, t, heads, dh}), {0, 2, 1, 3}),
                           {n * heads, t, dh});
        };
        auto q = split_heads(matmul(flat, wq));
        auto k = split_heads(matmul(flat, wk));
        auto scores = scale(bmm(q, k, true), 1.0 / std::sqrt(double(dh)));
        return softmax_lastdim(scores).value();
    }

    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
        out.push_back({prefix + ".wq", wq});
        out.push_back({prefix + ".wk", wk});
        out.push_back({prefix + ".wv", wv});
        out.push_back({prefix + ".wo", wo});
    }
};

/// Stride-2 conv stack with a global average pool and linear projection, so
/// any input height/width maps to a fixed-width feature vector.
template <typename T>
struct ConvEncoderT {
    int in_channels = 4;
    int out_dim = 256;
    std::vector<int> channels;
    std::vector<VarT<T>> conv_w; // [O, C, 3, 3]
    std::vector<VarT<T>> conv_b; // [O]
    LinearT<T> proj;

    static ConvEncoderT create(int in_channels, std::vector<int> channels, int out_dim,
                               Pcg32& rng) {
        if (channels.empty()) throw ShapeMismatch("conv encoder needs at least one block");
        ConvEncoderT e;
        e.in_channels = in_channels;
        e.out_dim = out_dim;
        e.channels = channels;
        int c = in_channels;
        for (int o : channels) {
            TensorT<T> w = TensorT<T>::zeros({o, c, 3, 3});
            kaiming_fill(w, c * 9, rng);
            e.conv_w.push_back(VarT<T>::parameter(std::move(w)));
            e.conv_b.push_back(VarT<T>::parameter(TensorT<T>::zeros({o})));
            c = o;
        }
        e.proj = LinearT<T>::create(c, out_dim, rng);
        return e;
    }

    /// [N, C, H, W] -> [N, out_dim]
    VarT<T> forward(VarT<T> x) const {
        if (x.value().ndim() != 4 || x.value().dim(1) != in_channels)
            throw ShapeMismatch("conv encoder input channel mismatch");
        for (size_t i = 0; i < conv_w.size(); ++i)
            x = relu(conv2d_s2(x, conv_w[i], conv_b[i]));
        return proj.forward(global_avg_pool(x));
    }

    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
        for (size_t i = 0; i < conv_w.size(); ++i) {
            out.push_back({prefix + ".conv" + std::to_string(i) + ".w", conv_w[i]});
            out.push_back({prefix + ".conv" + std::to_string(i) + ".b", conv_b[i]});
        }
        proj.collect(prefix + ".proj", out);
    }
};

using Linear = LinearT<float>;
using Mlp = MlpT<float>;
using Mhsa = MhsaT<float>;
using ConvEncoder = ConvEncoderT<float>;

} // namespace pathloss::nn
