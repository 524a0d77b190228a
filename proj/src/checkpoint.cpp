#include "pathloss/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace pathloss::model {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Proposed: return "proposed";
        case Variant::ConventionalAssisted: return "assisted";
        case Variant::EndToEndBaseline: return "baseline";
        case Variant::CiOnly: return "ci";
    }
    return "proposed";
}

Variant variant_from_name(const std::string& name) {
    if (name == "proposed") return Variant::Proposed;
    if (name == "assisted") return Variant::ConventionalAssisted;
    if (name == "baseline") return Variant::EndToEndBaseline;
    if (name == "ci") return Variant::CiOnly;
    throw BadConfig("unknown model variant: " + name);
}

namespace {

constexpr char kBlobMagic[4] = {'P', 'L', 'C', 'K'};
constexpr uint16_t kBlobVersion = 1;

nlohmann::json config_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["variant"] = variant_name(cfg.variant);
    j["image_format"] = imaging::format_name(cfg.format);
    j["resize_px"] = cfg.resize_px;
    j["encoder_channels"] = cfg.encoder_channels;
    j["embed_dim"] = cfg.embed_dim;
    j["heads"] = cfg.heads;
    j["init_seed"] = cfg.init_seed;
    j["frequency_hz"] = cfg.frequency_hz;
    j["d0_m"] = cfg.d0_m;
    j["frozen_ple"] = cfg.frozen_ple;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.variant = variant_from_name(j.at("variant").get<std::string>());
    cfg.format = imaging::format_from_name(j.at("image_format").get<std::string>());
    cfg.resize_px = j.at("resize_px").get<int>();
    cfg.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    cfg.frequency_hz = j.at("frequency_hz").get<double>();
    cfg.d0_m = j.at("d0_m").get<double>();
    cfg.frozen_ple = j.at("frozen_ple").get<double>();
    return cfg;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& json_path) {
    std::filesystem::path bin_path = json_path;
    bin_path.replace_extension(".bin");

    auto params = ckpt.net.parameters();
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["kind"] = "pathloss-lab-checkpoint";
    manifest["model"] = config_json(ckpt.net.cfg);
    manifest["ci"] = {{"frequency_hz", ckpt.ci_model.frequency_hz},
                      {"d0_m", ckpt.ci_model.d0_m},
                      {"ple", ckpt.ci_model.ple}};
    manifest["feature_stats"] = {{"min", ckpt.feature_stats.min},
                                 {"max", ckpt.feature_stats.max}};
    manifest["image_stats"] = {{"mean", ckpt.image_stats.mean},
                               {"std", ckpt.image_stats.stddev}};
    manifest["params_bin"] = bin_path.filename().string();

    std::string blob;
    blob.append(kBlobMagic, 4);
    blob.push_back(static_cast<char>(kBlobVersion & 0xff));
    blob.push_back(static_cast<char>(kBlobVersion >> 8));
    nlohmann::json params_json = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& p : params) {
        const auto& data = p.var.value().data;
        params_json.push_back({{"name", p.name},
                               {"offset", offset},
                               {"count", static_cast<int64_t>(data.size())}});
        for (float v : data) {
            uint32_t bits = std::bit_cast<uint32_t>(v);
            for (int i = 0; i < 4; ++i)
                blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
        offset += static_cast<int64_t>(data.size());
    }
    manifest["params"] = std::move(params_json);

    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw Error("cannot open " + bin_path.string() + " for writing");
    bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!bin) throw Error("short write to " + bin_path.string());

    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw Error("cannot open " + json_path.string() + " for writing");
    out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& json_path) {
    if (!std::filesystem::exists(json_path))
        throw MissingCheckpoint("no checkpoint at " + json_path.string());
    std::ifstream in(json_path);
    if (!in) throw MissingCheckpoint("cannot open " + json_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig("invalid checkpoint manifest: " + std::string(e.what()));
    }
    if (manifest.value("kind", "") != "pathloss-lab-checkpoint")
        throw BadConfig("not a pathloss-lab checkpoint manifest");

    Checkpoint ckpt;
    ModelConfig cfg = config_from_json(manifest.at("model"));
    ckpt.net = HybridNet::create(cfg);
    ckpt.ci_model.frequency_hz = manifest.at("ci").at("frequency_hz").get<double>();
    ckpt.ci_model.d0_m = manifest.at("ci").at("d0_m").get<double>();
    ckpt.ci_model.ple = manifest.at("ci").at("ple").get<double>();
    auto mins = manifest.at("feature_stats").at("min").get<std::vector<double>>();
    auto maxs = manifest.at("feature_stats").at("max").get<std::vector<double>>();
    if (mins.size() != features::kCount || maxs.size() != features::kCount)
        throw CheckpointMismatch("feature stats length mismatch");
    for (int i = 0; i < features::kCount; ++i) {
        ckpt.feature_stats.min[i] = mins[i];
        ckpt.feature_stats.max[i] = maxs[i];
    }
    ckpt.image_stats.mean = manifest.at("image_stats").at("mean").get<std::vector<double>>();
    ckpt.image_stats.stddev = manifest.at("image_stats").at("std").get<std::vector<double>>();
    if (static_cast<int>(ckpt.image_stats.mean.size()) != cfg.image_channels())
        throw CheckpointMismatch("image stats do not match the image format");

    std::filesystem::path bin_path =
        json_path.parent_path() / manifest.at("params_bin").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw MissingCheckpoint("missing parameter blob " + bin_path.string());
    std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (blob.size() < 6) throw TruncatedFile("parameter blob ends early");
    if (std::memcmp(blob.data(), kBlobMagic, 4) != 0)
        throw BadMagic("not a PLCK parameter blob");
    uint16_t version = static_cast<uint16_t>(static_cast<unsigned char>(blob[4]) |
                                             (static_cast<unsigned char>(blob[5]) << 8));
    if (version != kBlobVersion)
        throw BadVersion("unsupported parameter blob version " + std::to_string(version));

    auto params = ckpt.net.parameters();
    const auto& params_json = manifest.at("params");
    if (params_json.size() != params.size())
        throw CheckpointMismatch("parameter table does not match the architecture");
    size_t payload_floats = (blob.size() - 6) / 4;
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& entry = params_json[i];
        if (entry.at("name").get<std::string>() != params[i].name)
            throw CheckpointMismatch("parameter name mismatch: " + params[i].name);
        int64_t offset = entry.at("offset").get<int64_t>();
        int64_t count = entry.at("count").get<int64_t>();
        auto& data = params[i].var.mutable_value().data;
        if (count != static_cast<int64_t>(data.size()))
            throw CheckpointMismatch("parameter size mismatch: " + params[i].name);
        if (offset < 0 || static_cast<size_t>(offset + count) > payload_floats)
            throw TruncatedFile("parameter blob payload ends early");
        const char* base = blob.data() + 6 + offset * 4;
        for (int64_t k = 0; k < count; ++k) {
            uint32_t bits = 0;
            for (int b = 3; b >= 0; --b)
                bits = (bits << 8) | static_cast<unsigned char>(base[k * 4 + b]);
            data[static_cast<size_t>(k)] = std::bit_cast<float>(bits);
        }
    }
    return ckpt;
}

} // namespace pathloss::model
