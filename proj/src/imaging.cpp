#include "pathloss/imaging.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace pathloss::imaging {

std::string format_name(ImageFormat f) {
    switch (f) {
        case ImageFormat::Resize: return "resize";
        case ImageFormat::Stacksize: return "stacksize";
        case ImageFormat::Fullsize: return "fullsize";
    }
    return "resize";
}

ImageFormat format_from_name(const std::string& name) {
    if (name == "resize") return ImageFormat::Resize;
    if (name == "stacksize") return ImageFormat::Stacksize;
    if (name == "fullsize") return ImageFormat::Fullsize;
    throw BadConfig("unknown image format: " + name);
}

int format_channels(ImageFormat f) { return f == ImageFormat::Stacksize ? 8 : 4; }

namespace {

// Rotated/scaled window on the scene: world(p) is an orientation-preserving
// similarity (in display coordinates, row axis down) pinning the Tx and Rx
// ground positions to their pixel anchors.
struct LinkFrame {
    double tx_wx, tx_wy;
    double ucol, urow;  // image-space unit vector along the link
    double uwx, uwy;    // world-space unit vector along the ground link
    double s;           // meters per pixel along the link

    void world_at(double col, double row, double anchor_col, double anchor_row,
                  double& wx, double& wy) const {
        double oc = col - anchor_col;
        double orho = -(row - anchor_row); // display row axis points down
        double ic = ucol, irho = -urow;
        double p = oc * ic + orho * irho;
        double q = -oc * irho + orho * ic; // ccw-perpendicular component
        // matching ccw perpendicular in world space
        wx = tx_wx + s * (p * uwx + q * -uwy);
        wy = tx_wy + s * (p * uwy + q * uwx);
    }
};

LinkFrame link_frame(const LinkSample& sample, double tx_col, double tx_row,
                     double rx_col, double rx_row) {
    LinkFrame f;
    f.tx_wx = sample.tx_x;
    f.tx_wy = sample.tx_y;
    double dc = rx_col - tx_col, dr = rx_row - tx_row;
    double sep = std::hypot(dc, dr);
    f.ucol = dc / sep;
    f.urow = dr / sep;
    double dwx = sample.rx_x - sample.tx_x, dwy = sample.rx_y - sample.tx_y;
    double d2d = std::hypot(dwx, dwy);
    if (d2d < 1e-9) {
        // vertical link; orientation is arbitrary
        f.uwx = 1.0;
        f.uwy = 0.0;
        f.s = 1e-9 / sep;
    } else {
        f.uwx = dwx / d2d;
        f.uwy = dwy / d2d;
        f.s = d2d / sep;
    }
    return f;
}

void render_window(const geo::Scene& scene, const LinkFrame& frame,
                   double anchor_col, double anchor_row, EnvImage& img) {
    for (int row = 0; row < img.height; ++row) {
        for (int col = 0; col < img.width; ++col) {
            double wx, wy;
            frame.world_at(col, row, anchor_col, anchor_row, wx, wy);
            if (scene.satellite.georef.contains(wx, wy)) {
                for (int ch = 0; ch < 3; ++ch)
                    img.at(ch, row, col) = static_cast<float>(
                        geo::sample_bilinear(scene.satellite, wx, wy, ch));
            } else {
                for (int ch = 0; ch < 3; ++ch)
                    img.at(ch, row, col) = scene.satellite_fill[ch];
            }
            img.at(3, row, col) = static_cast<float>(
                geo::sample_bilinear_clamped(scene.elevation, wx, wy, 0));
        }
    }
}

} // namespace

EnvImage make_resize(const geo::Scene& scene, const LinkSample& sample, int side_px) {
    if (sample.d3d_m <= 0.0) throw DegenerateLink("resize image needs d3d > 0");
    if (side_px < 2) throw BadConfig("resize side must be >= 2 px");

    EnvImage img;
    img.format = ImageFormat::Resize;
    img.channels = 4;
    img.height = side_px;
    img.width = side_px;
    img.data.assign(static_cast<size_t>(4) * side_px * side_px, 0.0f);

    // terminals sit (1/5)*D in from the lower-left and upper-right corners of
    // the pixel-center diagonal, so their separation is (3/5)*D
    double span = side_px - 1.0;
    img.tx_col = 0.2 * span;
    img.tx_row = 0.8 * span;
    img.rx_col = 0.8 * span;
    img.rx_row = 0.2 * span;
    double diag = span * std::sqrt(2.0);
    img.scale_m_per_px = sample.d3d_m / (0.6 * diag);

    LinkFrame frame = link_frame(sample, img.tx_col, img.tx_row, img.rx_col, img.rx_row);
    render_window(scene, frame, img.tx_col, img.tx_row, img);
    return img;
}

EnvImage make_stacksize(const geo::Scene& scene, const LinkSample& sample) {
    const int side = 256;
    geo::RasterGrid tx_patch = geo::extract_patch(scene, sample.tx_x, sample.tx_y, side, 1.0);
    geo::RasterGrid rx_patch = geo::extract_patch(scene, sample.rx_x, sample.rx_y, side, 1.0);

    EnvImage img;
    img.format = ImageFormat::Stacksize;
    img.channels = 8;
    img.height = side;
    img.width = side;
    img.data.assign(static_cast<size_t>(8) * side * side, 0.0f);
    img.scale_m_per_px = 1.0;
    img.tx_col = img.rx_col = (side - 1.0) / 2.0;
    img.tx_row = img.rx_row = (side - 1.0) / 2.0;

    // patches are row-major HWC with row 0 at the south edge; flip so image
    // row 0 is the north edge
    for (int row = 0; row < side; ++row)
        for (int col = 0; col < side; ++col)
            for (int ch = 0; ch < 4; ++ch) {
                img.at(ch, row, col) = tx_patch.at(side - 1 - row, col, ch);
                img.at(4 + ch, row, col) = rx_patch.at(side - 1 - row, col, ch);
            }
    return img;
}

EnvImage make_fullsize(const geo::Scene& scene, const LinkSample& sample) {
    if (sample.d3d_m <= 0.0) throw DegenerateLink("fullsize image needs d3d > 0");

    EnvImage img;
    img.format = ImageFormat::Fullsize;
    img.channels = 4;
    img.height = 160;
    img.width = static_cast<int>(std::llround(sample.d3d_m)) + 160;
    img.data.assign(static_cast<size_t>(4) * img.height * img.width, 0.0f);
    img.scale_m_per_px = 1.0;
    img.tx_col = 80.0;
    img.rx_col = img.width - 80.0;
    img.tx_row = img.rx_row = (img.height - 1.0) / 2.0;

    LinkFrame frame = link_frame(sample, img.tx_col, img.tx_row, img.rx_col, img.rx_row);
    render_window(scene, frame, img.tx_col, img.tx_row, img);
    return img;
}

EnvImage make_image(const geo::Scene& scene, const LinkSample& sample,
                    ImageFormat format, int resize_px) {
    switch (format) {
        case ImageFormat::Resize: return make_resize(scene, sample, resize_px);
        case ImageFormat::Stacksize: return make_stacksize(scene, sample);
        case ImageFormat::Fullsize: return make_fullsize(scene, sample);
    }
    throw BadConfig("unknown image format");
}

void StatsAccumulator::add(const EnvImage& img) {
    if (sum_.empty()) {
        sum_.assign(img.channels, 0.0);
        sumsq_.assign(img.channels, 0.0);
        count_.assign(img.channels, 0);
    }
    if (static_cast<int>(sum_.size()) != img.channels)
        throw BadStats("image channel count changed mid-accumulation");
    size_t plane = static_cast<size_t>(img.height) * img.width;
    for (int ch = 0; ch < img.channels; ++ch) {
        double s = 0.0, s2 = 0.0;
        const float* p = img.data.data() + ch * plane;
        for (size_t i = 0; i < plane; ++i) {
            s += p[i];
            s2 += static_cast<double>(p[i]) * p[i];
        }
        sum_[ch] += s;
        sumsq_[ch] += s2;
        count_[ch] += static_cast<int64_t>(plane);
    }
}

ChannelStats StatsAccumulator::finalize() const {
    if (sum_.empty()) throw BadStats("no images accumulated");
    ChannelStats stats;
    for (size_t ch = 0; ch < sum_.size(); ++ch) {
        double n = static_cast<double>(count_[ch]);
        double mean = sum_[ch] / n;
        double var = std::max(0.0, sumsq_[ch] / n - mean * mean);
        stats.mean.push_back(mean);
        stats.stddev.push_back(std::sqrt(var));
    }
    return stats;
}

EnvImage standardize(EnvImage img, const ChannelStats& stats) {
    if (static_cast<int>(stats.mean.size()) != img.channels ||
        static_cast<int>(stats.stddev.size()) != img.channels)
        throw BadStats("stats channel count does not match the image");
    size_t plane = static_cast<size_t>(img.height) * img.width;
    for (int ch = 0; ch < img.channels; ++ch) {
        float mean = static_cast<float>(stats.mean[ch]);
        float inv = stats.stddev[ch] > 0.0 ? static_cast<float>(1.0 / stats.stddev[ch]) : 1.0f;
        float* p = img.data.data() + ch * plane;
        for (size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
    }
    return img;
}

void save_stats_json(const ChannelStats& stats, const std::filesystem::path& path) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["mean"] = stats.mean;
    j["std"] = stats.stddev;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

ChannelStats load_stats_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw BadStats("invalid stats JSON: " + std::string(e.what()));
    }
    ChannelStats stats;
    stats.mean = j.at("mean").get<std::vector<double>>();
    stats.stddev = j.at("std").get<std::vector<double>>();
    if (stats.mean.size() != stats.stddev.size())
        throw BadStats("stats mean/std length mismatch");
    return stats;
}

geo::RasterGrid to_raster(const EnvImage& img) {
    geo::GeoRef g{0.0, 0.0, img.scale_m_per_px > 0 ? img.scale_m_per_px : 1.0,
                  img.width, img.height};
    geo::RasterGrid grid = geo::RasterGrid::make(g, img.channels);
    for (int ch = 0; ch < img.channels; ++ch)
        for (int row = 0; row < img.height; ++row)
            for (int col = 0; col < img.width; ++col)
                grid.at(row, col, ch) = img.at(ch, row, col);
    return grid;
}

} // namespace pathloss::imaging
