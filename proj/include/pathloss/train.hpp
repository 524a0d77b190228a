#pragma once

#include <filesystem>
#include <vector>

#include "pathloss/checkpoint.hpp"
#include "pathloss/metrics.hpp"

namespace pathloss::train {

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 64;
    int epochs = 30;
    uint64_t seed = 1;
    imaging::ImageFormat format = imaging::ImageFormat::Resize;
    model::Variant variant = model::Variant::Proposed;
    int eval_every = 1;
    int resize_px = 256;
    std::vector<int> encoder_channels = {16, 32, 64, 128};

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    double train_rmse = 0;
    double val_rmse = 0; // NaN when the epoch was not evaluated
    double wall_seconds = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double best_val_rmse = 0;
    int best_epoch = 0;
    std::filesystem::path checkpoint_path;
    std::filesystem::path log_path;
};

/// Per-channel Z-score statistics over the chosen samples (training split);
/// deterministic regardless of worker count.
imaging::ChannelStats compute_image_stats(const geo::Scene& scene,
                                          const std::vector<LinkSample>& samples,
                                          imaging::ImageFormat format, int resize_px);

/// Trains one variant, retains the best-validation checkpoint, writes
/// checkpoint.json/.bin and train_log.csv under out_dir.
TrainResult train(const TrainConfig& config, const std::vector<LinkSample>& dataset,
                  const geo::Scene& scene, const ci::CiModel& ci_model,
                  const std::filesystem::path& out_dir);

/// Batched inference over arbitrary samples.
struct Predictions {
    std::vector<double> pl, ple, comp;
};
Predictions predict(const model::Checkpoint& ckpt, const geo::Scene& scene,
                    const std::vector<LinkSample>& samples, int batch_size = 64);

MetricReport evaluate(const model::Checkpoint& ckpt, const std::vector<LinkSample>& dataset,
                      const geo::Scene& scene, Split split);
MetricReport evaluate_ci(const ci::CiModel& ci_model,
                         const std::vector<LinkSample>& dataset, Split split);

struct PredictRow {
    int route_id = 0;
    double chainage_m = 0;
    double pl_meas = 0;
    double pl_hat = 0;
    double ple_hat = 0;
    double comp_hat = 0;
};

/// Ordered per-route prediction series (chainage accumulated along the
/// route). The CI variant needs no checkpoint.
std::vector<PredictRow> predict_route(const model::Checkpoint& ckpt, const geo::Scene& scene,
                                      const std::vector<LinkSample>& samples);
std::vector<PredictRow> predict_route_ci(const ci::CiModel& ci_model,
                                         const std::vector<LinkSample>& samples);

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictRow>& rows);
std::vector<PredictRow> read_predictions_csv(const std::filesystem::path& path);

void write_train_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

struct CompareRow {
    model::Variant variant;
    imaging::ImageFormat format;
    MetricReport metrics;
};

std::string render_compare_table(const std::vector<CompareRow>& rows);
void write_compare_csv(const std::filesystem::path& path, const std::vector<CompareRow>& rows);

} // namespace pathloss::train
