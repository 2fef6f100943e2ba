#include "citygan/network_config.hpp"

#include <bit>
#include <stdexcept>

namespace citygan {

std::string_view to_string(Variant v)
{
    switch (v) {
    case Variant::Plain: return "plain";
    case Variant::LateFusion: return "latefusion";
    case Variant::Broadcast: return "broadcast";
    }
    return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name)
{
    if (name == "plain") return Variant::Plain;
    if (name == "latefusion") return Variant::LateFusion;
    if (name == "broadcast") return Variant::Broadcast;
    return std::nullopt;
}

bool is_power_of_two(int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); }

void NetworkConfig::validate() const
{
    if (!is_power_of_two(image_size)) {
        throw std::invalid_argument("image size must be a power of two, got " + std::to_string(image_size));
    }
    if (image_size < 16) {
        throw std::invalid_argument("image size must be at least 16, got " + std::to_string(image_size));
    }
    if (label_count < 0) throw std::invalid_argument("label count must be nonnegative");
    if (noise_dim < 1) throw std::invalid_argument("noise dimension must be at least 1");
    if (base_feature_maps < 1) throw std::invalid_argument("base feature maps must be at least 1");
}

int NetworkConfig::stride2_stages() const { return std::countr_zero(static_cast<unsigned>(image_size)) - 2; }

} // namespace citygan
