#pragma once

#include <cmath>
#include <vector>

#include "pathloss/nn/layers.hpp"

namespace pathloss::nn {

/// Textbook Adam with bias correction. Parameters stay float32; the moment
/// buffers and update arithmetic run in double.
class Adam {
public:
    explicit Adam(std::vector<NamedParam<float>> params, double lr = 1e-4,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& p : params) {
            Slot s;
            s.var = p.var;
            s.m.assign(p.var.value().data.size(), 0.0);
            s.v.assign(p.var.value().data.size(), 0.0);
            slots_.push_back(std::move(s));
        }
    }

    void zero_grad() {
        for (auto& s : slots_) s.var.zero_grad();
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& s : slots_) {
            auto& value = s.var.mutable_value();
            auto& grad = s.var.grad();
            if (grad.data.size() != value.data.size())
                throw ShapeMismatch("adam: grad/param size mismatch");
            for (size_t i = 0; i < value.data.size(); ++i) {
                double g = grad.data[i];
                s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
                s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
                double mhat = s.m[i] / bc1;
                double vhat = s.v[i] / bc2;
                value.data[i] = static_cast<float>(
                    static_cast<double>(value.data[i]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    int64_t steps() const { return t_; }

private:
    struct Slot {
        VarT<float> var;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

} // namespace pathloss::nn
