#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pathloss/ci.hpp"
#include "pathloss/imaging.hpp"
#include "pathloss/nn/adam.hpp"
#include "pathloss/nn/graph.hpp"
#include "pathloss/nn/layers.hpp"

namespace pathloss::model {

enum class Variant { Proposed, ConventionalAssisted, EndToEndBaseline, CiOnly };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    Variant variant = Variant::Proposed;
    imaging::ImageFormat format = imaging::ImageFormat::Resize;
    int resize_px = 256;
    std::vector<int> encoder_channels = {16, 32, 64, 128};
    int embed_dim = 256;
    int heads = 8;
    uint64_t init_seed = 1;
    double frequency_hz = 1.21e9;
    double d0_m = 1.0;
    double frozen_ple = 2.0; // globally fitted exponent

    int image_channels() const { return imaging::format_channels(format); }
};

/// Per-sample prediction triple.
struct HybridOutput {
    double ple_hat = 0;
    double comp_hat = 0;
    double pl_hat = 0;
};

/// Dual-branch network: image encoder and system MLP produce one 256-d token
/// each, fused by self-attention and a 256-128-64 MLP; two 64-32-1 heads emit
/// the path loss exponent (ReLU, so never negative) and the additive
/// compensation, combined with the CI trend in raw physical units.
template <typename T>
struct HybridNetT {
    ModelConfig cfg;
    nn::ConvEncoderT<T> encoder;
    nn::MlpT<T> sys_mlp;
    nn::MhsaT<T> fusion_attn;
    nn::MlpT<T> fusion_mlp;
    nn::MlpT<T> ple_head;
    nn::MlpT<T> comp_head; // also the single head of assisted/baseline variants

    static HybridNetT create(const ModelConfig& cfg) {
        if (cfg.variant == Variant::CiOnly)
            throw Error("the CI-only variant has no network");
        HybridNetT net;
        net.cfg = cfg;
        Pcg32 rng(cfg.init_seed, 11);
        net.encoder = nn::ConvEncoderT<T>::create(cfg.image_channels(),
                                                  cfg.encoder_channels, cfg.embed_dim, rng);
        net.sys_mlp = nn::MlpT<T>::create({6, 128, cfg.embed_dim}, rng);
        net.fusion_attn = nn::MhsaT<T>::create(cfg.embed_dim, cfg.heads, rng);
        net.fusion_mlp = nn::MlpT<T>::create({cfg.embed_dim, 128, 64}, rng);
        net.ple_head = nn::MlpT<T>::create({64, 32, 1}, rng);
        net.comp_head = nn::MlpT<T>::create({64, 32, 1}, rng);
        return net;
    }

    /// Bias warm start for the output heads: the PLE head starts at the
    /// globally fitted exponent and the baseline head at the training-mean
    /// target. The desk-scale step budget cannot climb from zero output to
    /// the ~100 dB scale, so the heads start on the empirical trend.
    void warm_start(double ple_bias, double baseline_bias) {
        if (cfg.variant == Variant::Proposed)
            ple_head.layers.back().bias.mutable_value().data[0] = static_cast<T>(ple_bias);
        if (cfg.variant == Variant::EndToEndBaseline)
            comp_head.layers.back().bias.mutable_value().data[0] = static_cast<T>(baseline_bias);
    }

    struct Output {
        nn::VarT<T> pl;   // [N]
        nn::VarT<T> ple;  // [N]
        nn::VarT<T> comp; // [N]
    };

    /// images: [N, C, H, W] standardized; sys: [N, 6] min-max normalized;
    /// d3d: raw meters per sample (Eq. 2 uses physical units, not features).
    Output forward(nn::VarT<T> images, nn::VarT<T> sys,
                   const std::vector<double>& d3d) const {
        using nn::VarT;
        const int n = images.value().dim(0);
        if (sys.value().ndim() != 2 || sys.value().dim(0) != n || sys.value().dim(1) != 6)
            throw ShapeMismatch("system features must be [N, 6]");
        if (static_cast<int>(d3d.size()) != n)
            throw ShapeMismatch("d3d vector must match the batch");

        nn::TensorT<T> slope = nn::TensorT<T>::zeros({n});
        for (int i = 0; i < n; ++i) {
            if (d3d[static_cast<size_t>(i)] < cfg.d0_m)
                throw DistanceBelowReference("d3d below reference distance d0");
            slope.data[static_cast<size_t>(i)] =
                static_cast<T>(10.0 * std::log10(d3d[static_cast<size_t>(i)] / cfg.d0_m));
        }
        double fspl0 = ci::fspl_db(cfg.frequency_hz, cfg.d0_m);

        auto img_feat = encoder.forward(images);
        auto sys_feat = sys_mlp.forward(sys);
        auto tokens = fusion_attn.forward(stack_tokens(img_feat, sys_feat));
        auto fused = fusion_mlp.forward(mean_tokens(tokens));

        Output out;
        if (cfg.variant == Variant::Proposed) {
            out.ple = relu(reshape(ple_head.forward(fused), {n}));
            out.comp = reshape(comp_head.forward(fused), {n});
            auto trend = mul(out.ple, VarT<T>::constant(slope));
            out.pl = add_scalar(add(trend, out.comp), fspl0);
        } else if (cfg.variant == Variant::ConventionalAssisted) {
            nn::TensorT<T> ci_pred = nn::TensorT<T>::zeros({n});
            nn::TensorT<T> frozen = nn::TensorT<T>::zeros({n});
            for (int i = 0; i < n; ++i) {
                ci_pred.data[static_cast<size_t>(i)] = static_cast<T>(
                    fspl0 + cfg.frozen_ple * static_cast<double>(slope.data[static_cast<size_t>(i)]));
                frozen.data[static_cast<size_t>(i)] = static_cast<T>(cfg.frozen_ple);
            }
            out.ple = VarT<T>::constant(std::move(frozen));
            out.comp = reshape(comp_head.forward(fused), {n});
            out.pl = add(out.comp, VarT<T>::constant(std::move(ci_pred)));
        } else if (cfg.variant == Variant::EndToEndBaseline) {
            out.pl = reshape(comp_head.forward(fused), {n});
            out.ple = VarT<T>::constant(nn::TensorT<T>::zeros({n}));
            out.comp = VarT<T>::constant(nn::TensorT<T>::zeros({n}));
        } else {
            throw Error("ci-only variant is evaluated without the network");
        }
        return out;
    }

    std::vector<nn::NamedParam<T>> parameters() const {
        std::vector<nn::NamedParam<T>> params;
        encoder.collect("encoder", params);
        sys_mlp.collect("sys_mlp", params);
        fusion_attn.collect("fusion_attn", params);
        fusion_mlp.collect("fusion_mlp", params);
        if (cfg.variant == Variant::Proposed) ple_head.collect("ple_head", params);
        comp_head.collect("comp_head", params);
        return params;
    }
};

using HybridNet = HybridNetT<float>;

/// Reads one prediction out of a batched forward.
template <typename T>
HybridOutput output_at(const typename HybridNetT<T>::Output& out, int i) {
    HybridOutput h;
    h.pl_hat = out.pl.value().data[static_cast<size_t>(i)];
    h.ple_hat = out.ple.value().data[static_cast<size_t>(i)];
    h.comp_hat = out.comp.value().data[static_cast<size_t>(i)];
    return h;
}

} // namespace pathloss::model
