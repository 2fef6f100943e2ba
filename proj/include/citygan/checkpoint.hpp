#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "citygan/train.hpp"

namespace citygan {

/// Binary checkpoint container:
///
///   magic "CITYGAN\0" | u32 version | payload | u32 CRC-32 of everything before it
///
/// All integers little-endian; weights, optimizer moments and fixed noise are
/// stored as 32-bit IEEE floats.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Inference view of a checkpoint.
struct LoadedModel {
    Generator<float> generator;
    std::vector<std::string> classes;
    std::int64_t step = 0;
    TrainConfig config;

    const NetworkConfig& network() const { return generator.config(); }
};

LoadedModel load_model(const std::filesystem::path& path);

} // namespace citygan
