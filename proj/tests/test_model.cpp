#include "doctest.h"

#include "pathloss/checkpoint.hpp"
#include "pathloss/model.hpp"
#include "pathloss/rng.hpp"
#include "gradcheck.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace pathloss;
using namespace pathloss::model;
namespace nnp = pathloss::nn;

namespace {

ModelConfig small_config(Variant v) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.format = imaging::ImageFormat::Resize;
    cfg.resize_px = 16;
    cfg.encoder_channels = {6, 8};
    cfg.embed_dim = 32;
    cfg.heads = 4;
    cfg.init_seed = 7;
    cfg.frequency_hz = 1.21e9;
    cfg.d0_m = 1.0;
    cfg.frozen_ple = 3.1;
    return cfg;
}

template <typename T>
nnp::TensorT<T> random_tensor(std::vector<int> shape, Pcg32& rng, double lo = -1.0,
                              double hi = 1.0) {
    auto t = nnp::TensorT<T>::zeros(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

} // namespace

TEST_CASE("proposed variant with zeroed heads collapses to the reference loss") {
    auto net = HybridNet::create(small_config(Variant::Proposed));
    for (auto* head : {&net.ple_head, &net.comp_head})
        for (auto& layer : head->layers) {
            for (float& v : layer.weight.mutable_value().data) v = 0.0f;
            for (float& v : layer.bias.mutable_value().data) v = 0.0f;
        }
    Pcg32 rng(3, 0);
    auto images = random_tensor<float>({2, 4, 16, 16}, rng);
    auto sys = random_tensor<float>({2, 6}, rng, 0.0, 1.0);
    auto out = net.forward(nnp::Var::constant(images), nnp::Var::constant(sys), {100.0, 350.0});

    double fspl0 = ci::fspl_db(1.21e9, 1.0);
    for (int i = 0; i < 2; ++i) {
        HybridOutput h = output_at<float>(out, i);
        CHECK(h.ple_hat == 0.0);
        CHECK(h.comp_hat == 0.0);
        CHECK(h.pl_hat == doctest::Approx(fspl0).epsilon(1e-6));
    }
}

TEST_CASE("prediction decomposes exactly through the combining rule") {
    auto net = HybridNet::create(small_config(Variant::Proposed));
    Pcg32 rng(5, 0);
    for (int trial = 0; trial < 50; ++trial) {
        auto images = random_tensor<float>({3, 4, 16, 16}, rng, -2.0, 2.0);
        auto sys = random_tensor<float>({3, 6}, rng, 0.0, 1.0);
        std::vector<double> d3d = {rng.uniform(1.0, 3000.0), rng.uniform(1.0, 3000.0),
                                   rng.uniform(1.0, 3000.0)};
        auto out = net.forward(nnp::Var::constant(images), nnp::Var::constant(sys), d3d);
        for (int i = 0; i < 3; ++i) {
            HybridOutput h = output_at<float>(out, i);
            double rebuilt = ci::fspl_db(1.21e9, 1.0) +
                             10.0 * h.ple_hat * std::log10(d3d[static_cast<size_t>(i)]) +
                             h.comp_hat;
            CHECK(std::abs(h.pl_hat - rebuilt) <= 1e-5 * std::max(1.0, std::abs(rebuilt)));
            CHECK(h.ple_hat >= 0.0);
        }
    }
}

TEST_CASE("the exponent head never goes negative, even with hostile bias") {
    auto net = HybridNet::create(small_config(Variant::Proposed));
    net.ple_head.layers.back().bias.mutable_value().data[0] = -100.0f;
    Pcg32 rng(9, 0);
    for (int trial = 0; trial < 20; ++trial) {
        auto images = random_tensor<float>({1, 4, 16, 16}, rng, -3.0, 3.0);
        auto sys = random_tensor<float>({1, 6}, rng, -2.0, 2.0);
        auto out = net.forward(nnp::Var::constant(images), nnp::Var::constant(sys),
                               {rng.uniform(2.0, 500.0)});
        CHECK(output_at<float>(out, 0).ple_hat == 0.0);
    }
}

TEST_CASE("assisted variant with a silent compensation head equals the CI model") {
    auto net = HybridNet::create(small_config(Variant::ConventionalAssisted));
    for (auto& layer : net.comp_head.layers) {
        for (float& v : layer.weight.mutable_value().data) v = 0.0f;
        for (float& v : layer.bias.mutable_value().data) v = 0.0f;
    }
    ci::CiModel frozen{1.21e9, 1.0, 3.1};
    Pcg32 rng(11, 0);
    for (int trial = 0; trial < 20; ++trial) {
        double d = rng.uniform(1.5, 2500.0);
        auto images = random_tensor<float>({1, 4, 16, 16}, rng);
        auto sys = random_tensor<float>({1, 6}, rng, 0.0, 1.0);
        auto out = net.forward(nnp::Var::constant(images), nnp::Var::constant(sys), {d});
        HybridOutput h = output_at<float>(out, 0);
        CHECK(h.comp_hat == 0.0);
        CHECK(h.ple_hat == doctest::Approx(3.1));
        CHECK(h.pl_hat == doctest::Approx(ci::predict_db(frozen, d)).epsilon(1e-6));
    }
}

TEST_CASE("gradient reaches both prediction heads") {
    auto net = HybridNet::create(small_config(Variant::Proposed));
    net.warm_start(3.0, 0.0); // keeps the exponent head's ReLU active
    Pcg32 rng(13, 0);
    auto images = random_tensor<float>({4, 4, 16, 16}, rng);
    auto sys = random_tensor<float>({4, 6}, rng, 0.0, 1.0);
    std::vector<double> d3d = {50.0, 120.0, 300.0, 900.0};
    auto out = net.forward(nnp::Var::constant(images), nnp::Var::constant(sys), d3d);
    nnp::Tensor targets = nnp::Tensor::from_vector({4}, {90.0f, 100.0f, 120.0f, 140.0f});
    auto loss = rmse_loss(out.pl, targets);
    backward(loss);

    auto grad_norm = [](nnp::Var v) {
        double acc = 0.0;
        for (float g : v.grad().data) acc += std::abs(g);
        return acc;
    };
    CHECK(grad_norm(net.ple_head.layers.front().weight) > 0.0);
    CHECK(grad_norm(net.comp_head.layers.front().weight) > 0.0);
}

TEST_CASE("baseline variant emits the head output directly") {
    auto net = HybridNet::create(small_config(Variant::EndToEndBaseline));
    net.warm_start(0.0, 133.0);
    Pcg32 rng(15, 0);
    auto images = random_tensor<float>({2, 4, 16, 16}, rng, -0.1, 0.1);
    auto sys = random_tensor<float>({2, 6}, rng, 0.0, 0.1);
    auto out = net.forward(nnp::Var::constant(images), nnp::Var::constant(sys), {40.0, 90.0});
    for (int i = 0; i < 2; ++i) {
        // near-zero features keep the output near the warm-started mean
        CHECK(std::abs(output_at<float>(out, i).pl_hat - 133.0) < 50.0);
    }
}

TEST_CASE("full-model gradients match finite differences") {
    // double instantiation of the whole predictor, spot-checked per tensor
    ModelConfig cfg = small_config(Variant::Proposed);
    auto net = HybridNetT<double>::create(cfg);
    Pcg32 rng(20240601, 0);
    auto images = nnp::VarT<double>::parameter(random_tensor<double>({2, 4, 16, 16}, rng));
    auto sys = nnp::VarT<double>::parameter(random_tensor<double>({2, 6}, rng, 0.0, 1.0));
    std::vector<double> d3d = {80.0, 650.0};
    nnp::TensorT<double> targets = nnp::TensorT<double>::from_vector({2}, {95.0, 135.0});

    std::vector<nnp::VarT<double>> params{images, sys};
    for (auto& p : net.parameters()) params.push_back(p.var);

    auto make_loss = [&]() {
        auto out = net.forward(images, sys, d3d);
        return rmse_loss(out.pl, targets);
    };
    auto r = testref::check_gradients(params, make_loss, 1e-4, 1e-3, 1e-6, 8, 42);
    CHECK(r.checked >= 8 * static_cast<int>(params.size()) / 2);
    CHECK(r.failed == 0);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    auto dir = std::filesystem::temp_directory_path() / "pathloss_model_tests";
    std::filesystem::create_directories(dir);

    Checkpoint ckpt;
    ckpt.net = HybridNet::create(small_config(Variant::Proposed));
    ckpt.net.warm_start(3.1, 0.0);
    ckpt.ci_model = {1.21e9, 1.0, 3.1};
    for (int i = 0; i < features::kCount; ++i) {
        ckpt.feature_stats.min[i] = -i;
        ckpt.feature_stats.max[i] = 10 + i;
    }
    ckpt.image_stats.mean = {1.0, 2.0, 3.0, 4.0};
    ckpt.image_stats.stddev = {0.5, 0.5, 2.0, 1.0};

    auto path = dir / "checkpoint.json";
    save_checkpoint(ckpt, path);
    Checkpoint back = load_checkpoint(path);

    auto a = ckpt.net.parameters();
    auto b = back.net.parameters();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        const auto& av = a[i].var.value().data;
        const auto& bv = b[i].var.value().data;
        REQUIRE(av.size() == bv.size());
        size_t mismatch = 0;
        for (size_t k = 0; k < av.size(); ++k)
            if (std::bit_cast<uint32_t>(av[k]) != std::bit_cast<uint32_t>(bv[k])) ++mismatch;
        CHECK(mismatch == 0);
    }
    CHECK(back.ci_model.ple == ckpt.ci_model.ple);
    CHECK(back.feature_stats.min == ckpt.feature_stats.min);
    CHECK(back.image_stats.mean == ckpt.image_stats.mean);

    // saving the loaded checkpoint reproduces identical bytes
    auto path2 = dir / "checkpoint2.json";
    save_checkpoint(back, path2);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(dir / "checkpoint.bin") == slurp(dir / "checkpoint2.bin"));
}

TEST_CASE("checkpoint corruption reports the specified errors") {
    auto dir = std::filesystem::temp_directory_path() / "pathloss_model_tests";
    std::filesystem::create_directories(dir);
    Checkpoint ckpt;
    ckpt.net = HybridNet::create(small_config(Variant::Proposed));
    ckpt.ci_model = {1.21e9, 1.0, 3.0};
    ckpt.image_stats.mean = {0, 0, 0, 0};
    ckpt.image_stats.stddev = {1, 1, 1, 1};
    auto path = dir / "corrupt.json";
    save_checkpoint(ckpt, path);

    CHECK_THROWS_AS(load_checkpoint(dir / "nope.json"), MissingCheckpoint);

    auto blob_path = dir / "corrupt.bin";
    auto slurp = [&]() {
        std::ifstream in(blob_path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    std::string good = slurp();

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    std::ofstream(blob_path, std::ios::binary | std::ios::trunc) << bad_magic;
    CHECK_THROWS_AS(load_checkpoint(path), BadMagic);

    std::string truncated = good.substr(0, good.size() / 2);
    std::ofstream(blob_path, std::ios::binary | std::ios::trunc) << truncated;
    CHECK_THROWS_AS(load_checkpoint(path), TruncatedFile);

    std::string bad_version = good;
    bad_version[4] = 9;
    std::ofstream(blob_path, std::ios::binary | std::ios::trunc) << bad_version;
    CHECK_THROWS_AS(load_checkpoint(path), BadVersion);

    std::ofstream(blob_path, std::ios::binary | std::ios::trunc) << good;
    CHECK_NOTHROW(load_checkpoint(path));
}

TEST_CASE("checkpoints refuse a mismatched architecture") {
    auto dir = std::filesystem::temp_directory_path() / "pathloss_model_tests";
    std::filesystem::create_directories(dir);
    Checkpoint ckpt;
    ckpt.net = HybridNet::create(small_config(Variant::Proposed));
    ckpt.ci_model = {1.21e9, 1.0, 3.0};
    ckpt.image_stats.mean = {0, 0, 0, 0};
    ckpt.image_stats.stddev = {1, 1, 1, 1};
    auto path = dir / "mismatch.json";
    save_checkpoint(ckpt, path);

    // stacksize expects 8 image-stat channels; the manifest only carries 4
    std::ifstream in(path);
    std::string manifest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    auto pos = manifest.find("\"resize\"");
    REQUIRE(pos != std::string::npos);
    manifest.replace(pos, 8, "\"stacksize\"");
    std::ofstream(path, std::ios::trunc) << manifest;
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointMismatch);
}
