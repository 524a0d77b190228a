#include "pathloss/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "pathloss/features.hpp"
#include "pathloss/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pathloss::train {

void TrainConfig::validate() const {
    if (lr < 0.0) throw BadConfig("learning rate must be >= 0");
    if (batch_size < 1) throw BadConfig("batch_size must be >= 1");
    if (epochs < 1) throw BadConfig("epochs must be >= 1");
    if (eval_every < 1) throw BadConfig("eval_every must be >= 1");
    if (resize_px < 2) throw BadConfig("resize_px must be >= 2");
    if (encoder_channels.empty()) throw BadConfig("encoder needs at least one block");
    if (variant == model::Variant::CiOnly)
        throw BadConfig("the CI-only variant has nothing to train");
}

namespace {

namespace nnp = pathloss::nn;

struct ImageDims {
    int channels, height, width;
};

bool uniform_dims(imaging::ImageFormat f) { return f != imaging::ImageFormat::Fullsize; }

ImageDims dims_for(imaging::ImageFormat f, int resize_px) {
    switch (f) {
        case imaging::ImageFormat::Resize: return {4, resize_px, resize_px};
        case imaging::ImageFormat::Stacksize: return {8, 256, 256};
        case imaging::ImageFormat::Fullsize: return {4, 160, -1};
    }
    return {4, resize_px, resize_px};
}

imaging::EnvImage build_std_image(const geo::Scene& scene, const LinkSample& s,
                                  imaging::ImageFormat format, int resize_px,
                                  const imaging::ChannelStats& istats) {
    return imaging::standardize(imaging::make_image(scene, s, format, resize_px), istats);
}

struct SampleBatch {
    nnp::Tensor images;
    nnp::Tensor sys;
    std::vector<double> d3d;
    nnp::Tensor targets;
};

SampleBatch assemble_batch(const geo::Scene& scene, const std::vector<LinkSample>& samples,
                           const std::vector<int>& idxs, const model::Checkpoint& ctx,
                           int resize_px) {
    imaging::ImageFormat format = ctx.net.cfg.format;
    ImageDims d = dims_for(format, resize_px);
    int n = static_cast<int>(idxs.size());
    SampleBatch batch;
    batch.images = nnp::Tensor::zeros({n, d.channels, d.height, d.width});
    batch.sys = nnp::Tensor::zeros({n, 6});
    batch.d3d.resize(idxs.size());
    batch.targets = nnp::Tensor::zeros({n});

    size_t img_size = static_cast<size_t>(d.channels) * d.height * d.width;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int k = 0; k < n; ++k) {
        const LinkSample& s = samples[static_cast<size_t>(idxs[static_cast<size_t>(k)])];
        imaging::EnvImage img = build_std_image(scene, s, format, resize_px, ctx.image_stats);
        if (static_cast<size_t>(img.data.size()) != img_size)
            throw ShapeMismatch("image dimensions changed within a batch");
        std::copy(img.data.begin(), img.data.end(),
                  batch.images.data.begin() + static_cast<size_t>(k) * img_size);
        auto f = features::normalize(features::build(s, ctx.ci_model), ctx.feature_stats);
        for (int j = 0; j < 6; ++j)
            batch.sys.data[static_cast<size_t>(k) * 6 + j] = static_cast<float>(f[static_cast<size_t>(j)]);
        batch.d3d[static_cast<size_t>(k)] = s.d3d_m;
        batch.targets.data[static_cast<size_t>(k)] = static_cast<float>(s.path_loss_db);
    }
    return batch;
}

struct BatchOutputs {
    std::vector<double> pl, ple, comp;
    double rmse = 0;
};

BatchOutputs run_batch(const model::Checkpoint& ctx, const geo::Scene& scene,
                       const std::vector<LinkSample>& samples, const std::vector<int>& idxs,
                       int resize_px, bool with_grad) {
    const model::HybridNet& net = ctx.net;
    int n = static_cast<int>(idxs.size());
    BatchOutputs out;
    out.pl.resize(idxs.size());
    out.ple.resize(idxs.size());
    out.comp.resize(idxs.size());

    std::vector<double> targets(idxs.size());
    for (int k = 0; k < n; ++k)
        targets[static_cast<size_t>(k)] =
            samples[static_cast<size_t>(idxs[static_cast<size_t>(k)])].path_loss_db;

    auto finish = [&](const std::vector<double>& preds) {
        double sse = 0.0;
        for (int k = 0; k < n; ++k) {
            double r = preds[static_cast<size_t>(k)] - targets[static_cast<size_t>(k)];
            sse += r * r;
        }
        out.rmse = std::sqrt(sse / n);
    };

    if (uniform_dims(net.cfg.format)) {
        SampleBatch batch = assemble_batch(scene, samples, idxs, ctx, resize_px);
        auto result = net.forward(nnp::Var::constant(std::move(batch.images)),
                                  nnp::Var::constant(std::move(batch.sys)), batch.d3d);
        for (int k = 0; k < n; ++k) {
            out.pl[static_cast<size_t>(k)] = result.pl.value().data[static_cast<size_t>(k)];
            out.ple[static_cast<size_t>(k)] = result.ple.value().data[static_cast<size_t>(k)];
            out.comp[static_cast<size_t>(k)] = result.comp.value().data[static_cast<size_t>(k)];
        }
        finish(out.pl);
        if (with_grad) {
            auto loss = rmse_loss(result.pl, batch.targets);
            if (!std::isfinite(static_cast<double>(loss.value().data[0])))
                throw DivergenceDetected("training loss is not finite");
            nnp::backward(loss);
        }
        return out;
    }

    // variable-width images: per-sample forward graphs, batch RMSE assembled
    // as a weighted sum so the gradient matches the batched expression
    std::vector<model::HybridNet::Output> results(idxs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int k = 0; k < n; ++k) {
        const LinkSample& s = samples[static_cast<size_t>(idxs[static_cast<size_t>(k)])];
        imaging::EnvImage img = build_std_image(scene, s, net.cfg.format, resize_px, ctx.image_stats);
        nnp::Tensor im = nnp::Tensor::from_vector({1, img.channels, img.height, img.width},
                                                  std::move(img.data));
        nnp::Tensor sys = nnp::Tensor::zeros({1, 6});
        auto f = features::normalize(features::build(s, ctx.ci_model), ctx.feature_stats);
        for (int j = 0; j < 6; ++j) sys.data[static_cast<size_t>(j)] = static_cast<float>(f[static_cast<size_t>(j)]);
        results[static_cast<size_t>(k)] = net.forward(nnp::Var::constant(std::move(im)),
                                                      nnp::Var::constant(std::move(sys)),
                                                      {s.d3d_m});
    }
    for (int k = 0; k < n; ++k) {
        out.pl[static_cast<size_t>(k)] = results[static_cast<size_t>(k)].pl.value().data[0];
        out.ple[static_cast<size_t>(k)] = results[static_cast<size_t>(k)].ple.value().data[0];
        out.comp[static_cast<size_t>(k)] = results[static_cast<size_t>(k)].comp.value().data[0];
    }
    finish(out.pl);
    if (with_grad) {
        if (!std::isfinite(out.rmse)) throw DivergenceDetected("training loss is not finite");
        if (out.rmse > 0.0) {
            nnp::Var total;
            for (int k = 0; k < n; ++k) {
                double w = (out.pl[static_cast<size_t>(k)] - targets[static_cast<size_t>(k)]) /
                           (n * out.rmse);
                auto term = sum_all(scale(results[static_cast<size_t>(k)].pl, w));
                total = total.valid() ? add(total, term) : term;
            }
            nnp::backward(total);
        }
    }
    return out;
}

double rmse_of(const std::vector<double>& pred, const std::vector<double>& target) {
    double sse = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        sse += d * d;
    }
    return std::sqrt(sse / static_cast<double>(pred.size()));
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

imaging::ChannelStats compute_image_stats(const geo::Scene& scene,
                                          const std::vector<LinkSample>& samples,
                                          imaging::ImageFormat format, int resize_px) {
    if (samples.empty()) throw EmptySplit("no samples for image statistics");
    int channels = imaging::format_channels(format);
    int n = static_cast<int>(samples.size());
    std::vector<double> sums(static_cast<size_t>(n) * channels, 0.0);
    std::vector<double> sqs(static_cast<size_t>(n) * channels, 0.0);
    std::vector<int64_t> counts(static_cast<size_t>(n) * channels, 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < n; ++i) {
        imaging::EnvImage img =
            imaging::make_image(scene, samples[static_cast<size_t>(i)], format, resize_px);
        size_t plane = static_cast<size_t>(img.height) * img.width;
        for (int ch = 0; ch < channels; ++ch) {
            double s = 0.0, s2 = 0.0;
            const float* p = img.data.data() + static_cast<size_t>(ch) * plane;
            for (size_t k = 0; k < plane; ++k) {
                s += p[k];
                s2 += static_cast<double>(p[k]) * p[k];
            }
            sums[static_cast<size_t>(i) * channels + ch] = s;
            sqs[static_cast<size_t>(i) * channels + ch] = s2;
            counts[static_cast<size_t>(i) * channels + ch] = static_cast<int64_t>(plane);
        }
    }

    imaging::ChannelStats stats;
    for (int ch = 0; ch < channels; ++ch) {
        double sum = 0.0, sq = 0.0;
        int64_t count = 0;
        for (int i = 0; i < n; ++i) { // fixed order keeps the reduction exact
            sum += sums[static_cast<size_t>(i) * channels + ch];
            sq += sqs[static_cast<size_t>(i) * channels + ch];
            count += counts[static_cast<size_t>(i) * channels + ch];
        }
        double mean = sum / static_cast<double>(count);
        double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
        stats.mean.push_back(mean);
        stats.stddev.push_back(std::sqrt(var));
    }
    return stats;
}

TrainResult train(const TrainConfig& config, const std::vector<LinkSample>& dataset,
                  const geo::Scene& scene, const ci::CiModel& ci_model,
                  const std::filesystem::path& out_dir) {
    config.validate();
    std::vector<LinkSample> train_samples = filter_split(dataset, Split::Train);
    std::vector<LinkSample> val_samples = filter_split(dataset, Split::Val);
    if (train_samples.empty()) throw EmptySplit("training split is empty");
    if (val_samples.empty()) throw EmptySplit("validation split is empty");
    std::filesystem::create_directories(out_dir);

    model::Checkpoint ctx;
    ctx.ci_model = ci_model;
    ctx.feature_stats = features::compute_minmax(train_samples, ci_model);
    ctx.image_stats = compute_image_stats(scene, train_samples, config.format, config.resize_px);

    model::ModelConfig mc;
    mc.variant = config.variant;
    mc.format = config.format;
    mc.resize_px = config.resize_px;
    mc.encoder_channels = config.encoder_channels;
    mc.init_seed = config.seed;
    mc.frequency_hz = ci_model.frequency_hz;
    mc.d0_m = ci_model.d0_m;
    mc.frozen_ple = ci_model.ple;
    ctx.net = model::HybridNet::create(mc);

    double mean_pl = 0.0;
    for (const LinkSample& s : train_samples) mean_pl += s.path_loss_db;
    mean_pl /= static_cast<double>(train_samples.size());
    ctx.net.warm_start(ci_model.ple, mean_pl);

    auto params = ctx.net.parameters();
    nnp::Adam opt(params, config.lr);

    std::vector<double> val_targets;
    for (const LinkSample& s : val_samples) val_targets.push_back(s.path_loss_db);
    std::vector<int> val_idx(val_samples.size());
    std::iota(val_idx.begin(), val_idx.end(), 0);

    Pcg32 shuffle_rng(config.seed, 21);
    std::vector<int> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<float>> best_values;

    auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = shuffle_rng.uniform_u32(static_cast<uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }

        double sse = 0.0;
        int seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            std::vector<int> idxs(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(stop));
            opt.zero_grad();
            BatchOutputs out = run_batch(ctx, scene, train_samples, idxs, config.resize_px, true);
            if (!std::isfinite(out.rmse))
                throw DivergenceDetected("non-finite loss at epoch " + std::to_string(epoch));
            opt.step();
            sse += out.rmse * out.rmse * static_cast<double>(idxs.size());
            seen += static_cast<int>(idxs.size());
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_rmse = std::sqrt(sse / seen);
        entry.val_rmse = std::numeric_limits<double>::quiet_NaN();
        if (epoch % config.eval_every == 0 || epoch == config.epochs) {
            std::vector<double> val_pred;
            for (size_t start = 0; start < val_idx.size(); start += static_cast<size_t>(config.batch_size)) {
                size_t stop = std::min(val_idx.size(), start + static_cast<size_t>(config.batch_size));
                std::vector<int> idxs(val_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                      val_idx.begin() + static_cast<std::ptrdiff_t>(stop));
                BatchOutputs out = run_batch(ctx, scene, val_samples, idxs, config.resize_px, false);
                val_pred.insert(val_pred.end(), out.pl.begin(), out.pl.end());
            }
            entry.val_rmse = rmse_of(val_pred, val_targets);
            if (!std::isfinite(entry.val_rmse))
                throw DivergenceDetected("non-finite validation loss at epoch " +
                                         std::to_string(epoch));
            if (entry.val_rmse < best_val) {
                best_val = entry.val_rmse;
                result.best_epoch = epoch;
                best_values.clear();
                for (auto& p : params) best_values.push_back(p.var.value().data);
            }
        }
        entry.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(entry);
    }

    for (size_t i = 0; i < params.size(); ++i)
        params[i].var.mutable_value().data = best_values[i];
    result.best_val_rmse = best_val;

    result.checkpoint_path = out_dir / "checkpoint.json";
    save_checkpoint(ctx, result.checkpoint_path);
    result.log_path = out_dir / "train_log.csv";
    write_train_log_csv(result.log_path, result.log);
    return result;
}

Predictions predict(const model::Checkpoint& ckpt, const geo::Scene& scene,
                    const std::vector<LinkSample>& samples, int batch_size) {
    Predictions preds;
    if (samples.empty()) return preds;
    std::vector<int> all(samples.size());
    std::iota(all.begin(), all.end(), 0);
    for (size_t start = 0; start < all.size(); start += static_cast<size_t>(batch_size)) {
        size_t stop = std::min(all.size(), start + static_cast<size_t>(batch_size));
        std::vector<int> idxs(all.begin() + static_cast<std::ptrdiff_t>(start),
                              all.begin() + static_cast<std::ptrdiff_t>(stop));
        BatchOutputs out = run_batch(ckpt, scene, samples, idxs, ckpt.net.cfg.resize_px, false);
        preds.pl.insert(preds.pl.end(), out.pl.begin(), out.pl.end());
        preds.ple.insert(preds.ple.end(), out.ple.begin(), out.ple.end());
        preds.comp.insert(preds.comp.end(), out.comp.begin(), out.comp.end());
    }
    return preds;
}

MetricReport evaluate(const model::Checkpoint& ckpt, const std::vector<LinkSample>& dataset,
                      const geo::Scene& scene, Split split) {
    std::vector<LinkSample> samples = filter_split(dataset, split);
    if (samples.empty()) throw EmptySplit("split '" + split_name(split) + "' is empty");
    Predictions preds = predict(ckpt, scene, samples);
    std::vector<double> targets;
    for (const LinkSample& s : samples) targets.push_back(s.path_loss_db);
    return compute_metrics(preds.pl, targets);
}

MetricReport evaluate_ci(const ci::CiModel& ci_model,
                         const std::vector<LinkSample>& dataset, Split split) {
    std::vector<LinkSample> samples = filter_split(dataset, split);
    if (samples.empty()) throw EmptySplit("split '" + split_name(split) + "' is empty");
    std::vector<double> pred, targets;
    for (const LinkSample& s : samples) {
        pred.push_back(ci::predict_db(ci_model, s.d3d_m));
        targets.push_back(s.path_loss_db);
    }
    return compute_metrics(pred, targets);
}

namespace {

std::vector<PredictRow> route_rows(const std::vector<LinkSample>& samples,
                                   const Predictions& preds) {
    std::vector<PredictRow> rows;
    double chainage = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (i > 0) {
            if (samples[i].route_id != samples[i - 1].route_id)
                chainage = 0.0;
            else
                chainage += std::hypot(samples[i].rx_x - samples[i - 1].rx_x,
                                       samples[i].rx_y - samples[i - 1].rx_y);
        }
        PredictRow row;
        row.route_id = samples[i].route_id;
        row.chainage_m = chainage;
        row.pl_meas = samples[i].path_loss_db;
        row.pl_hat = preds.pl[i];
        row.ple_hat = preds.ple[i];
        row.comp_hat = preds.comp[i];
        rows.push_back(row);
    }
    return rows;
}

} // namespace

std::vector<PredictRow> predict_route(const model::Checkpoint& ckpt, const geo::Scene& scene,
                                      const std::vector<LinkSample>& samples) {
    Predictions preds = predict(ckpt, scene, samples);
    return route_rows(samples, preds);
}

std::vector<PredictRow> predict_route_ci(const ci::CiModel& ci_model,
                                         const std::vector<LinkSample>& samples) {
    Predictions preds;
    for (const LinkSample& s : samples) {
        preds.pl.push_back(ci::predict_db(ci_model, s.d3d_m));
        preds.ple.push_back(ci_model.ple);
        preds.comp.push_back(0.0);
    }
    return route_rows(samples, preds);
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "route_id,chainage_m,pl_meas,pl_hat,ple_hat,comp_hat\n";
    for (const PredictRow& r : rows)
        out << r.route_id << ',' << fmt(r.chainage_m) << ',' << fmt(r.pl_meas) << ','
            << fmt(r.pl_hat) << ',' << fmt(r.ple_hat) << ',' << fmt(r.comp_hat) << "\n";
}

std::vector<PredictRow> read_predictions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw TruncatedFile("prediction table is empty");
    if (line != "route_id,chainage_m,pl_meas,pl_hat,ple_hat,comp_hat")
        throw BadConfig("unexpected prediction table header");
    std::vector<PredictRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> fields;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (fields.size() != 6) throw BadConfig("bad prediction row: " + line);
        PredictRow r;
        r.route_id = std::stoi(fields[0]);
        r.chainage_m = std::stod(fields[1]);
        r.pl_meas = std::stod(fields[2]);
        r.pl_hat = std::stod(fields[3]);
        r.ple_hat = std::stod(fields[4]);
        r.comp_hat = std::stod(fields[5]);
        rows.push_back(r);
    }
    return rows;
}

void write_train_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "epoch,train_rmse,val_rmse,wall_seconds\n";
    for (const EpochLog& e : log) {
        out << e.epoch << ',' << fmt(e.train_rmse) << ',';
        if (std::isfinite(e.val_rmse)) out << fmt(e.val_rmse);
        out << ',' << fmt(e.wall_seconds) << "\n";
    }
}

std::string render_compare_table(const std::vector<CompareRow>& rows) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %-10s %10s %10s %8s\n", "variant", "format",
                  "rmse_db", "mape_pct", "pcc");
    out += buf;
    for (const CompareRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-10s %-10s %10.3f %10.3f %8.4f\n",
                      model::variant_name(r.variant).c_str(),
                      imaging::format_name(r.format).c_str(), r.metrics.rmse_db,
                      r.metrics.mape_pct, r.metrics.pcc);
        out += buf;
    }
    return out;
}

void write_compare_csv(const std::filesystem::path& path, const std::vector<CompareRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "variant,format,rmse_db,mape_pct,pcc\n";
    for (const CompareRow& r : rows)
        out << model::variant_name(r.variant) << ',' << imaging::format_name(r.format) << ','
            << fmt(r.metrics.rmse_db) << ',' << fmt(r.metrics.mape_pct) << ','
            << fmt(r.metrics.pcc) << "\n";
}

} // namespace pathloss::train
