#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pathloss/dataset.hpp"
#include "pathloss/geo.hpp"

namespace pathloss::imaging {

enum class ImageFormat { Resize, Stacksize, Fullsize };

std::string format_name(ImageFormat f);
ImageFormat format_from_name(const std::string& name);

/// Channel count consumed by the encoder for each format.
int format_channels(ImageFormat f);

/// Multichannel environmental image, CHW float32.
/// Resize: side x side (default 256), 4 channels, Tx->Rx on the lower-left to
///   upper-right diagonal with symmetric corner margins.
/// Stacksize: 256 x 256, 8 channels (Tx patch then Rx patch).
/// Fullsize: 160 x (round(d3d) + 160), 4 channels, link horizontal.
struct EnvImage {
    ImageFormat format = ImageFormat::Resize;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data; // CHW

    double scale_m_per_px = 1.0;
    double tx_col = 0, tx_row = 0; // nominal terminal anchors, row 0 at top
    double rx_col = 0, rx_row = 0;

    float& at(int ch, int row, int col) {
        return data[(static_cast<size_t>(ch) * height + row) * width + col];
    }
    float at(int ch, int row, int col) const {
        return data[(static_cast<size_t>(ch) * height + row) * width + col];
    }
};

EnvImage make_resize(const geo::Scene& scene, const LinkSample& sample, int side_px = 256);
EnvImage make_stacksize(const geo::Scene& scene, const LinkSample& sample);
EnvImage make_fullsize(const geo::Scene& scene, const LinkSample& sample);

/// Dispatcher; resize_px only affects the Resize format.
EnvImage make_image(const geo::Scene& scene, const LinkSample& sample,
                    ImageFormat format, int resize_px = 256);

/// Per-channel Z-score statistics, computed on the training split only.
struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// Streaming accumulator so stats never require holding all images.
class StatsAccumulator {
public:
    void add(const EnvImage& img);
    ChannelStats finalize() const;

private:
    std::vector<double> sum_, sumsq_;
    std::vector<int64_t> count_;
};

/// (x - mean) / std per channel; channels with std <= 0 are centered only.
EnvImage standardize(EnvImage img, const ChannelStats& stats);

void save_stats_json(const ChannelStats& stats, const std::filesystem::path& path);
ChannelStats load_stats_json(const std::filesystem::path& path);

/// Inspection dump: the image as a .plrg raster in image-local coordinates.
geo::RasterGrid to_raster(const EnvImage& img);

} // namespace pathloss::imaging
