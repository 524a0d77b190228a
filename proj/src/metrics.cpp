#include "pathloss/metrics.hpp"

#include <cmath>

namespace pathloss::train {

MetricReport compute_metrics(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ShapeMismatch("metric series length mismatch");
    if (pred.empty()) throw EmptySplit("cannot compute metrics on an empty split");
    const size_t n = pred.size();

    double sse = 0.0, ape = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = pred[i] - target[i];
        sse += d * d;
        if (target[i] == 0.0) throw ZeroTarget("MAPE undefined for a zero target");
        ape += std::abs(d) / std::abs(target[i]);
    }

    double mp = 0.0, mt = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mp += pred[i];
        mt += target[i];
    }
    mp /= static_cast<double>(n);
    mt /= static_cast<double>(n);
    double cov = 0.0, vp = 0.0, vt = 0.0;
    for (size_t i = 0; i < n; ++i) {
        cov += (pred[i] - mp) * (target[i] - mt);
        vp += (pred[i] - mp) * (pred[i] - mp);
        vt += (target[i] - mt) * (target[i] - mt);
    }
    if (vp == 0.0 || vt == 0.0)
        throw ConstantSeries("PCC undefined for a constant series");

    MetricReport report;
    report.rmse_db = std::sqrt(sse / static_cast<double>(n));
    report.mape_pct = 100.0 * ape / static_cast<double>(n);
    report.pcc = cov / std::sqrt(vp * vt);
    return report;
}

} // namespace pathloss::train
