#include "pathloss/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace pathloss::plot {

namespace {

struct Axis {
    double lo = 0, hi = 1;   // data range
    double px0 = 0, px1 = 1; // pixel range

    double map(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void pad_range(double& lo, double& hi) {
    if (hi - lo < 1e-9) {
        lo -= 1.0;
        hi += 1.0;
    }
    double pad = 0.06 * (hi - lo);
    lo -= pad;
    hi += pad;
}

void draw_frame(std::string& svg, const Axis& x, const Axis& y, const std::string& x_label,
                const std::string& y_label) {
    svg += "<rect x='" + num(x.px0) + "' y='" + num(y.px1) + "' width='" +
           num(x.px1 - x.px0) + "' height='" + num(y.px0 - y.px1) +
           "' fill='none' stroke='#444' stroke-width='1'/>\n";
    for (int i = 0; i <= 4; ++i) {
        double xv = x.lo + (x.hi - x.lo) * i / 4.0;
        double yv = y.lo + (y.hi - y.lo) * i / 4.0;
        svg += "<line x1='" + num(x.map(xv)) + "' y1='" + num(y.px0) + "' x2='" +
               num(x.map(xv)) + "' y2='" + num(y.px0 + 4) + "' stroke='#444'/>\n";
        svg += "<text x='" + num(x.map(xv)) + "' y='" + num(y.px0 + 16) +
               "' font-size='10' text-anchor='middle' fill='#333'>" + num(xv) + "</text>\n";
        svg += "<line x1='" + num(x.px0 - 4) + "' y1='" + num(y.map(yv)) + "' x2='" +
               num(x.px0) + "' y2='" + num(y.map(yv)) + "' stroke='#444'/>\n";
        svg += "<text x='" + num(x.px0 - 7) + "' y='" + num(y.map(yv) + 3) +
               "' font-size='10' text-anchor='end' fill='#333'>" + num(yv) + "</text>\n";
    }
    svg += "<text x='" + num(0.5 * (x.px0 + x.px1)) + "' y='" + num(y.px0 + 32) +
           "' font-size='11' text-anchor='middle' fill='#111'>" + x_label + "</text>\n";
    svg += "<text x='" + num(x.px0 - 42) + "' y='" + num(0.5 * (y.px0 + y.px1)) +
           "' font-size='11' text-anchor='middle' fill='#111' transform='rotate(-90 " +
           num(x.px0 - 42) + " " + num(0.5 * (y.px0 + y.px1)) + ")'>" + y_label + "</text>\n";
}

void polyline(std::string& svg, const Axis& x, const Axis& y,
              const std::vector<std::pair<double, double>>& pts, const std::string& color,
              double width = 1.5) {
    if (pts.empty()) return;
    svg += "<polyline fill='none' stroke='" + color + "' stroke-width='" + num(width) +
           "' points='";
    for (auto& [px, py] : pts) svg += num(x.map(px)) + "," + num(y.map(py)) + " ";
    svg += "'/>\n";
}

} // namespace

std::vector<std::vector<train::PredictRow>> split_routes(
    const std::vector<train::PredictRow>& rows) {
    std::vector<std::vector<train::PredictRow>> routes;
    for (const auto& r : rows) {
        if (routes.empty() || routes.back().back().route_id != r.route_id)
            routes.push_back({});
        routes.back().push_back(r);
    }
    return routes;
}

void write_route_svg(const std::filesystem::path& path,
                     const std::vector<train::PredictRow>& rows,
                     const ci::CiModel& ci_model) {
    if (rows.empty()) throw EmptyTable("no prediction rows to plot");

    const double width = 880, height = 560;
    Axis cx{0, 1, 64, width - 24};

    double fspl0 = ci::fspl_db(ci_model.frequency_hz, ci_model.d0_m);
    std::vector<std::pair<double, double>> meas, pred, ci_curve, ple;
    for (const auto& r : rows) {
        meas.push_back({r.chainage_m, r.pl_meas});
        pred.push_back({r.chainage_m, r.pl_hat});
        ple.push_back({r.chainage_m, r.ple_hat});
        if (r.ple_hat > 0.0) {
            // the prediction decomposition recovers the link distance, which
            // the global CI trend is then evaluated at
            double log_d = (r.pl_hat - r.comp_hat - fspl0) / (10.0 * r.ple_hat);
            double d3d = ci_model.d0_m * std::pow(10.0, log_d);
            if (d3d >= ci_model.d0_m)
                ci_curve.push_back({r.chainage_m, ci::predict_db(ci_model, d3d)});
        }
    }

    double x_lo = rows.front().chainage_m, x_hi = rows.back().chainage_m;
    pad_range(x_lo, x_hi);
    cx.lo = x_lo;
    cx.hi = x_hi;

    double pl_lo = 1e30, pl_hi = -1e30;
    for (auto& [a, b] : meas) {
        pl_lo = std::min(pl_lo, b);
        pl_hi = std::max(pl_hi, b);
    }
    for (auto& [a, b] : pred) {
        pl_lo = std::min(pl_lo, b);
        pl_hi = std::max(pl_hi, b);
    }
    for (auto& [a, b] : ci_curve) {
        pl_lo = std::min(pl_lo, b);
        pl_hi = std::max(pl_hi, b);
    }
    pad_range(pl_lo, pl_hi);
    Axis top{pl_lo, pl_hi, 330, 28};

    double ple_lo = 1e30, ple_hi = -1e30;
    for (auto& [a, b] : ple) {
        ple_lo = std::min(ple_lo, b);
        ple_hi = std::max(ple_hi, b);
    }
    pad_range(ple_lo, ple_hi);
    Axis bottom{ple_lo, ple_hi, height - 44, 400};

    std::string svg;
    svg += "<svg xmlns='http://www.w3.org/2000/svg' width='" + num(width) + "' height='" +
           num(height) + "' viewBox='0 0 " + num(width) + " " + num(height) + "'>\n";
    svg += "<rect width='100%' height='100%' fill='white'/>\n";
    svg += "<text x='" + num(width / 2) + "' y='18' font-size='13' text-anchor='middle' "
           "fill='#111'>route " + std::to_string(rows.front().route_id) + "</text>\n";

    draw_frame(svg, cx, top, "chainage (m)", "path loss (dB)");
    for (auto& [a, b] : meas)
        svg += "<circle cx='" + num(cx.map(a)) + "' cy='" + num(top.map(b)) +
               "' r='2.2' fill='#8a8a8a'/>\n";
    polyline(svg, cx, top, ci_curve, "#2b7de9");
    polyline(svg, cx, top, pred, "#d62728", 2.0);

    // legend
    svg += "<circle cx='100' cy='40' r='2.5' fill='#8a8a8a'/>"
           "<text x='108' y='43' font-size='10' fill='#333'>measured</text>\n";
    svg += "<line x1='170' y1='40' x2='195' y2='40' stroke='#2b7de9' stroke-width='1.5'/>"
           "<text x='200' y='43' font-size='10' fill='#333'>CI model</text>\n";
    svg += "<line x1='265' y1='40' x2='290' y2='40' stroke='#d62728' stroke-width='2'/>"
           "<text x='295' y='43' font-size='10' fill='#333'>predicted</text>\n";

    draw_frame(svg, cx, bottom, "chainage (m)", "predicted PLE");
    polyline(svg, cx, bottom, ple, "#2ca02c", 1.8);

    svg += "</svg>\n";

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << svg;
    if (!out) throw Error("short write to " + path.string());
}

} // namespace pathloss::plot
