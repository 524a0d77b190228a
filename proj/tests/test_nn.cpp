#include "doctest.h"

#include "pathloss/nn/adam.hpp"
#include "pathloss/nn/graph.hpp"
#include "pathloss/nn/layers.hpp"
#include "gradcheck.hpp"
#include "reference.hpp"

#include <bit>
#include <cmath>

using namespace pathloss;
using namespace pathloss::nn;

namespace {

template <typename T>
TensorT<T> random_tensor(std::vector<int> shape, Pcg32& rng, double lo = -1.0, double hi = 1.0) {
    TensorT<T> t = TensorT<T>::zeros(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

} // namespace

TEST_CASE("mlp with zero weights produces zero output") {
    Pcg32 rng(1, 0);
    MlpT<float> mlp = MlpT<float>::create({6, 16, 8}, rng);
    for (auto& layer : mlp.layers)
        for (float& v : layer.weight.mutable_value().data) v = 0.0f;
    auto x = Var::constant(random_tensor<float>({3, 6}, rng));
    auto y = mlp.forward(x);
    for (float v : y.value().data) CHECK(v == 0.0f);
}

TEST_CASE("identity 1-to-1 layer passes its input through") {
    Pcg32 rng(1, 0);
    LinearT<float> l = LinearT<float>::create(1, 1, rng);
    l.weight.mutable_value().data[0] = 1.0f;
    l.bias.mutable_value().data[0] = 0.0f;
    auto y = l.forward(Var::constant(Tensor::from_vector({1, 1}, {3.0f})));
    CHECK(y.value().data[0] == 3.0f);
}

TEST_CASE("mlp 6-128-256 matches a straight-line reference") {
    Pcg32 rng(7, 0);
    MlpT<float> mlp = MlpT<float>::create({6, 128, 256}, rng);
    Pcg32 input_rng(8, 0);
    std::vector<double> x(6);
    for (double& v : x) v = input_rng.uniform(-2.0, 2.0);

    std::vector<std::vector<std::vector<double>>> weights;
    std::vector<std::vector<double>> biases;
    for (auto& layer : mlp.layers) {
        std::vector<std::vector<double>> w(layer.in, std::vector<double>(layer.out));
        for (int i = 0; i < layer.in; ++i)
            for (int j = 0; j < layer.out; ++j)
                w[i][j] = layer.weight.value().data[static_cast<size_t>(i) * layer.out + j];
        weights.push_back(std::move(w));
        std::vector<double> b(layer.out);
        for (int j = 0; j < layer.out; ++j) b[j] = layer.bias.value().data[j];
        biases.push_back(std::move(b));
    }
    std::vector<double> expected = testref::mlp_forward(weights, biases, x);

    Tensor xt = Tensor::zeros({1, 6});
    for (int i = 0; i < 6; ++i) xt.data[i] = static_cast<float>(x[i]);
    auto y = mlp.forward(Var::constant(xt));
    REQUIRE(y.value().numel() == 256);
    for (int j = 0; j < 256; ++j) {
        double got = y.value().data[j];
        CHECK(std::abs(got - expected[j]) <= 1e-5 * std::max(1.0, std::abs(expected[j])));
    }
}

TEST_CASE("single-token attention reduces to the value-output projection") {
    Pcg32 rng(11, 0);
    const int dim = 32, heads = 4;
    MhsaT<float> mhsa = MhsaT<float>::create(dim, heads, rng);
    Tensor x = random_tensor<float>({1, 1, dim}, rng);
    auto y = mhsa.forward(Var::constant(x));

    // attention over one token is the identity: y = (x * Wv) * Wo
    std::vector<double> xv(x.data.begin(), x.data.end());
    std::vector<double> v(dim, 0.0), out(dim, 0.0);
    for (int j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (int i = 0; i < dim; ++i)
            acc += xv[i] * mhsa.wv.value().data[static_cast<size_t>(i) * dim + j];
        v[j] = acc;
    }
    for (int j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (int i = 0; i < dim; ++i)
            acc += v[i] * mhsa.wo.value().data[static_cast<size_t>(i) * dim + j];
        out[j] = acc;
    }
    for (int j = 0; j < dim; ++j)
        CHECK(std::abs(y.value().data[j] - out[j]) <= 1e-5 * std::max(1.0, std::abs(out[j])));
}

TEST_CASE("attention is equivariant to token permutation") {
    Pcg32 rng(12, 0);
    const int dim = 64, heads = 8;
    MhsaT<float> mhsa = MhsaT<float>::create(dim, heads, rng);
    Tensor x = random_tensor<float>({1, 2, dim}, rng);
    Tensor swapped = x;
    for (int j = 0; j < dim; ++j)
        std::swap(swapped.data[j], swapped.data[dim + j]);

    auto y = mhsa.forward(Var::constant(x));
    auto z = mhsa.forward(Var::constant(swapped));
    for (int j = 0; j < dim; ++j) {
        CHECK(y.value().data[j] == doctest::Approx(z.value().data[dim + j]).epsilon(1e-5));
        CHECK(y.value().data[dim + j] == doctest::Approx(z.value().data[j]).epsilon(1e-5));
    }
}

TEST_CASE("attention rows are probability vectors and match the reference") {
    Pcg32 rng(13, 0);
    const int dim = 256, heads = 8;
    MhsaT<float> mhsa = MhsaT<float>::create(dim, heads, rng);
    Tensor x = random_tensor<float>({1, 2, dim}, rng);
    auto attn = mhsa.attention(Var::constant(x));
    REQUIRE(attn.shape == std::vector<int>{heads, 2, 2});
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < 2; ++i) {
            double row = attn.data[(static_cast<size_t>(h) * 2 + i) * 2] +
                         attn.data[(static_cast<size_t>(h) * 2 + i) * 2 + 1];
            CHECK(std::abs(row - 1.0) <= 1e-6);
            CHECK(attn.data[(static_cast<size_t>(h) * 2 + i) * 2] >= 0.0f);
        }

    auto copy_mat = [&](const Var& w) {
        std::vector<std::vector<double>> m(dim, std::vector<double>(dim));
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                m[i][j] = w.value().data[static_cast<size_t>(i) * dim + j];
        return m;
    };
    std::vector<std::vector<double>> tokens(2, std::vector<double>(dim));
    for (int t = 0; t < 2; ++t)
        for (int j = 0; j < dim; ++j) tokens[t][j] = x.data[static_cast<size_t>(t) * dim + j];
    auto expected = testref::mhsa_forward(tokens, copy_mat(mhsa.wq), copy_mat(mhsa.wk),
                                          copy_mat(mhsa.wv), copy_mat(mhsa.wo), heads);

    auto y = mhsa.forward(Var::constant(x));
    for (int t = 0; t < 2; ++t)
        for (int j = 0; j < dim; ++j) {
            double got = y.value().data[static_cast<size_t>(t) * dim + j];
            CHECK(std::abs(got - expected[t][j]) <=
                  1e-5 * std::max(1.0, std::abs(expected[t][j])));
        }
}

TEST_CASE("zero image with zero biases encodes to the zero vector") {
    Pcg32 rng(21, 0);
    ConvEncoderT<float> enc = ConvEncoderT<float>::create(4, {8, 16}, 32, rng);
    auto y = enc.forward(Var::constant(Tensor::zeros({2, 4, 24, 24})));
    for (float v : y.value().data) CHECK(v == 0.0f);
}

TEST_CASE("encoder output width is invariant to input width") {
    Pcg32 rng(22, 0);
    ConvEncoderT<float> enc = ConvEncoderT<float>::create(4, {8, 16, 16, 16}, 256, rng);
    for (int w : {160, 320, 660, 2048}) {
        Pcg32 in_rng(100 + w, 0);
        auto y = enc.forward(Var::constant(random_tensor<float>({1, 4, 160, w}, in_rng)));
        CHECK(y.value().shape == std::vector<int>{1, 256});
    }
}

TEST_CASE("one conv block matches the direct reference and shifts with its input") {
    Pcg32 rng(23, 0);
    const int C = 2, O = 3, H = 17, W = 17;
    Tensor weight = random_tensor<float>({O, C, 3, 3}, rng);
    Tensor bias = random_tensor<float>({O}, rng);

    Tensor img = Tensor::zeros({1, C, H, W});
    for (float& v : img.data) v = 0.25f; // constant background
    // bright blob away from the borders
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                img.data[(static_cast<size_t>(c) * H + 6 + dy) * W + 6 + dx] = 4.0f;

    auto run = [&](const Tensor& x) {
        return conv2d_s2(Var::constant(x), Var::constant(weight), Var::constant(bias)).value();
    };
    Tensor out = run(img);

    // direct reference
    std::vector<std::vector<std::vector<double>>> xr(
        C, std::vector<std::vector<double>>(H, std::vector<double>(W)));
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                xr[c][y][x] = img.data[(static_cast<size_t>(c) * H + y) * W + x];
    std::vector<std::vector<std::vector<std::vector<double>>>> wr(
        O, std::vector<std::vector<std::vector<double>>>(
               C, std::vector<std::vector<double>>(3, std::vector<double>(3))));
    for (int o = 0; o < O; ++o)
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    wr[o][c][ky][kx] =
                        weight.data[((static_cast<size_t>(o) * C + c) * 3 + ky) * 3 + kx];
    std::vector<double> br(bias.data.begin(), bias.data.end());
    auto ref = testref::conv2d_s2(xr, wr, br);

    int H2 = (H + 1) / 2, W2 = (W + 1) / 2;
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < H2; ++y)
            for (int x = 0; x < W2; ++x) {
                double got = out.data[(static_cast<size_t>(o) * H2 + y) * W2 + x];
                CHECK(std::abs(got - ref[o][y][x]) <= 1e-5 * std::max(1.0, std::abs(ref[o][y][x])));
            }

    // shifting the blob by one stride shifts the response map by one pixel
    Tensor shifted = Tensor::zeros({1, C, H, W});
    for (float& v : shifted.data) v = 0.25f;
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                shifted.data[(static_cast<size_t>(c) * H + 6 + dy) * W + 8 + dx] = 4.0f;
    Tensor out2 = run(shifted);
    for (int o = 0; o < O; ++o)
        for (int y = 2; y < H2 - 2; ++y)
            for (int x = 2; x < W2 - 2; ++x) {
                double a = out.data[(static_cast<size_t>(o) * H2 + y) * W2 + x];
                double b = out2.data[(static_cast<size_t>(o) * H2 + y) * W2 + x + 1];
                CHECK(std::abs(a - b) <= 1e-4 * std::max(1.0, std::abs(a)));
            }
}

TEST_CASE("backward of a parameter sum is all ones") {
    Pcg32 rng(31, 0);
    auto p = Var::parameter(random_tensor<float>({4, 5}, rng));
    auto loss = sum_all(p);
    backward(loss);
    for (float g : p.grad().data) CHECK(g == 1.0f);
}

TEST_CASE("backward of half the squared norm is the input itself") {
    Pcg32 rng(32, 0);
    auto x = Var::parameter(random_tensor<float>({7}, rng));
    auto loss = scale(sum_all(mul(x, x)), 0.5);
    backward(loss);
    for (size_t i = 0; i < x.value().data.size(); ++i)
        CHECK(x.grad().data[i] == doctest::Approx(x.value().data[i]).epsilon(1e-6));
}

TEST_CASE("backward without a recorded forward raises NoGraph") {
    auto leaf = Var::parameter(Tensor::from_vector({1}, {2.0f}));
    CHECK_THROWS_AS(backward(leaf), NoGraph);
}

TEST_CASE("shape errors are rejected") {
    Pcg32 rng(33, 0);
    auto a = Var::constant(random_tensor<float>({2, 3}, rng));
    auto b = Var::constant(random_tensor<float>({2, 3}, rng));
    CHECK_THROWS_AS(matmul(a, b), ShapeMismatch);
    auto c = Var::constant(random_tensor<float>({3, 2}, rng));
    CHECK_THROWS_AS(add(a, c), ShapeMismatch);
    auto img = Var::constant(random_tensor<float>({1, 3, 8, 8}, rng));
    auto w = Var::constant(random_tensor<float>({4, 2, 3, 3}, rng));
    auto bias = Var::constant(random_tensor<float>({4}, rng));
    CHECK_THROWS_AS(conv2d_s2(img, w, bias), ShapeMismatch);
}

TEST_CASE("linear layer gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Pcg32 rng(seed, 3);
        LinearT<double> l = LinearT<double>::create(5, 4, rng);
        auto x = VarT<double>::parameter(random_tensor<double>({3, 5}, rng));
        auto make_loss = [&]() { return sum_all(mul(l.forward(x), l.forward(x))); };
        auto r = testref::check_gradients({l.weight, l.bias, x}, make_loss, 1e-4);
        CHECK(r.failed == 0);
        CHECK(r.checked > 0);
    }
}

TEST_CASE("mlp gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Pcg32 rng(seed, 4);
        MlpT<double> mlp = MlpT<double>::create({6, 12, 8, 1}, rng);
        auto x = VarT<double>::parameter(random_tensor<double>({4, 6}, rng));
        std::vector<VarT<double>> params{x};
        std::vector<NamedParam<double>> named;
        mlp.collect("mlp", named);
        for (auto& p : named) params.push_back(p.var);
        auto make_loss = [&]() { return sum_all(mul(mlp.forward(x), mlp.forward(x))); };
        auto r = testref::check_gradients(params, make_loss, 1e-4);
        CHECK(r.failed == 0);
    }
}

TEST_CASE("attention gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Pcg32 rng(seed, 5);
        MhsaT<double> mhsa = MhsaT<double>::create(16, 4, rng);
        auto x = VarT<double>::parameter(random_tensor<double>({2, 2, 16}, rng));
        std::vector<VarT<double>> params{x, mhsa.wq, mhsa.wk, mhsa.wv, mhsa.wo};
        auto make_loss = [&]() {
            auto y = mhsa.forward(x);
            return sum_all(mul(y, y));
        };
        auto r = testref::check_gradients(params, make_loss, 1e-4, 1e-3, 1e-6, 40, seed);
        CHECK(r.failed == 0);
    }
}

TEST_CASE("conv block gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Pcg32 rng(seed, 6);
        auto w = VarT<double>::parameter(random_tensor<double>({3, 2, 3, 3}, rng));
        auto b = VarT<double>::parameter(random_tensor<double>({3}, rng));
        auto x = VarT<double>::parameter(random_tensor<double>({2, 2, 7, 7}, rng));
        auto make_loss = [&]() {
            auto y = conv2d_s2(x, w, b);
            return sum_all(mul(y, y));
        };
        auto r = testref::check_gradients({w, b, x}, make_loss, 1e-4);
        CHECK(r.failed == 0);
    }
}

TEST_CASE("pooling gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Pcg32 rng(seed, 7);
        auto x = VarT<double>::parameter(random_tensor<double>({2, 3, 5, 6}, rng));
        auto make_loss = [&]() {
            auto y = global_avg_pool(x);
            return sum_all(mul(y, y));
        };
        auto r = testref::check_gradients({x}, make_loss, 1e-4);
        CHECK(r.failed == 0);
    }
}

TEST_CASE("softmax and relu gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Pcg32 rng(seed, 8);
        auto x = VarT<double>::parameter(random_tensor<double>({4, 5}, rng));
        auto make_soft = [&]() {
            auto y = softmax_lastdim(x);
            return sum_all(mul(y, y));
        };
        auto r = testref::check_gradients({x}, make_soft, 1e-5);
        CHECK(r.failed == 0);

        // keep pre-activations away from the kink for the difference quotient
        auto z = VarT<double>::parameter(random_tensor<double>({30}, rng));
        for (double& v : z.mutable_value().data)
            if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
        auto make_relu = [&]() {
            auto y = relu(z);
            return sum_all(mul(y, y));
        };
        auto r2 = testref::check_gradients({z}, make_relu, 1e-4);
        CHECK(r2.failed == 0);
    }
}

TEST_CASE("rmse loss gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Pcg32 rng(seed, 9);
        auto pred = VarT<double>::parameter(random_tensor<double>({16}, rng, -4.0, 4.0));
        TensorT<double> target = random_tensor<double>({16}, rng, -4.0, 4.0);
        auto make_loss = [&]() { return rmse_loss(pred, target); };
        auto r = testref::check_gradients({pred}, make_loss, 1e-5);
        CHECK(r.failed == 0);
    }
}

TEST_CASE("rmse loss values") {
    auto p0 = Var::constant(Tensor::from_vector({3}, {1.0f, -2.0f, 0.5f}));
    TensorT<float> t0 = Tensor::from_vector({3}, {1.0f, -2.0f, 0.5f});
    CHECK(rmse_loss(p0, t0).value().data[0] == 0.0f);

    auto p1 = Var::constant(Tensor::from_vector({2}, {3.0f, -3.0f}));
    TensorT<float> t1 = Tensor::from_vector({2}, {0.0f, 0.0f});
    CHECK(rmse_loss(p1, t1).value().data[0] == doctest::Approx(3.0));

    Pcg32 rng(5, 0);
    auto pr = random_tensor<float>({64}, rng, -50.0, 50.0);
    auto tr = random_tensor<float>({64}, rng, -50.0, 50.0);
    double sse = 0.0;
    for (int i = 0; i < 64; ++i) {
        double d = static_cast<double>(pr.data[i]) - tr.data[i];
        sse += d * d;
    }
    double expected = std::sqrt(sse / 64.0);
    CHECK(rmse_loss(Var::constant(pr), tr).value().data[0] ==
          doctest::Approx(expected).epsilon(1e-7));

    TensorT<float> wrong = Tensor::zeros({63});
    CHECK_THROWS_AS(rmse_loss(Var::constant(pr), wrong), ShapeMismatch);
}

TEST_CASE("rmse gradient is zero at the exact fit") {
    auto pred = Var::parameter(Tensor::from_vector({2}, {1.0f, 2.0f}));
    TensorT<float> target = Tensor::from_vector({2}, {1.0f, 2.0f});
    auto loss = rmse_loss(pred, target);
    backward(loss);
    for (float g : pred.grad().data) CHECK(g == 0.0f);
}

TEST_CASE("adam leaves parameters untouched under zero gradients") {
    auto p = Var::parameter(Tensor::from_vector({3}, {1.0f, -2.0f, 0.25f}));
    Adam opt({{"p", p}}, 1e-2);
    opt.zero_grad();
    opt.step();
    CHECK(p.value().data == std::vector<float>{1.0f, -2.0f, 0.25f});
}

TEST_CASE("first adam step moves by about lr against the gradient sign") {
    auto p = Var::parameter(Tensor::from_vector({2}, {1.0f, -1.0f}));
    Adam opt({{"p", p}}, 1e-3);
    opt.zero_grad();
    p.grad().data = {0.37f, -5.1f};
    opt.step();
    CHECK(p.value().data[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
    CHECK(p.value().data[1] == doctest::Approx(-1.0 + 1e-3).epsilon(1e-6));
}

TEST_CASE("three adam steps on x^2 match the frozen scalar oracle") {
    // scalar Adam, lr 1e-4, betas (0.9, 0.999), eps 1e-8, float32 parameter
    // storage with double update math; trajectory frozen from an independent
    // evaluation
    const double expected[3] = {0.9998999834060669, 0.9997999668121338,
                                0.9996999502182007};
    auto x = Var::parameter(Tensor::from_vector({1}, {1.0f}));
    Adam opt({{"x", x}}, 1e-4);
    for (int step = 0; step < 3; ++step) {
        opt.zero_grad();
        auto loss = sum_all(mul(x, x)); // d/dx x^2 = 2x
        backward(loss);
        opt.step();
        CHECK(std::abs(static_cast<double>(x.value().data[0]) - expected[step]) <= 1e-9);
    }
}

TEST_CASE("fixed seeds give bitwise-identical forward passes") {
    auto build_and_run = [](uint64_t seed) {
        Pcg32 rng(seed, 0);
        ConvEncoderT<float> enc = ConvEncoderT<float>::create(4, {8, 16}, 64, rng);
        Pcg32 in_rng(99, 0);
        Tensor x = random_tensor<float>({2, 4, 32, 32}, in_rng);
        return enc.forward(Var::constant(x)).value();
    };
    Tensor a = build_and_run(2024);
    Tensor b = build_and_run(2024);
    REQUIRE(a.data.size() == b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i)
        CHECK(std::bit_cast<uint32_t>(a.data[i]) == std::bit_cast<uint32_t>(b.data[i]));
}
