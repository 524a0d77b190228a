#pragma once

#include <filesystem>

#include "pathloss/features.hpp"
#include "pathloss/model.hpp"

namespace pathloss::model {

struct Checkpoint {
    HybridNet net;
    features::MinMaxStats feature_stats;
    imaging::ChannelStats image_stats;
    ci::CiModel ci_model;
};

/// Writes <path> (JSON manifest) and the sibling .bin parameter blob
/// ("PLCK" magic, u16 version, little-endian f32 payload). Round trips are
/// bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& json_path);

/// Throws MissingCheckpoint when absent, BadMagic/BadVersion/TruncatedFile on
/// blob corruption, CheckpointMismatch when the manifest and blob disagree.
Checkpoint load_checkpoint(const std::filesystem::path& json_path);

} // namespace pathloss::model
