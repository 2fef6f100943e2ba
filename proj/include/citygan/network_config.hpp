#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "citygan/tensor.hpp"

namespace citygan {

/// The three conditioning strategies.
enum class Variant {
    Plain,      ///< unconditional DCGAN
    LateFusion, ///< label joins the discriminator after the conv stack
    Broadcast,  ///< label replicated as constant per-pixel input planes
};

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

struct NetworkConfig {
    Variant variant = Variant::Broadcast;
    int image_size = 64;
    int label_count = 0;
    int noise_dim = 100;
    int base_feature_maps = 64;

    /// Throws std::invalid_argument when any invariant is violated.
    void validate() const;

    bool conditional() const { return variant != Variant::Plain; }

    /// Labels actually consumed by the networks (Plain ignores them).
    int effective_labels() const { return conditional() ? label_count : 0; }

    int generator_input_size() const { return noise_dim + effective_labels(); }

    int discriminator_input_channels() const
    {
        return 3 + (variant == Variant::Broadcast ? label_count : 0);
    }

    /// Number of stride-2 stages: log2(image_size) - 2.
    int stride2_stages() const;

    /// Channel width of the final discriminator feature vector.
    int discriminator_final_width() const { return base_feature_maps << (stride2_stages() - 1); }

    bool operator==(const NetworkConfig&) const = default;
};

bool is_power_of_two(int v);

} // namespace citygan
