#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "citygan/generator.hpp"
#include "citygan/image.hpp"

namespace citygan {

class ExpressionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct LabelTerm {
    std::string name;
    double weight = 1.0;

    bool operator==(const LabelTerm&) const = default;
};

/// Weighted sum of named classes, e.g. {amsterdam: 1, manhattan: -1}.
struct LabelExpression {
    std::vector<LabelTerm> terms;

    bool operator==(const LabelExpression&) const = default;
};

/// Parses `name*weight` (or `weight*name`, or a bare name) terms joined by
/// `+` and `-`: "amsterdam-manhattan", "amsterdam*0.5+florence*0.5".
LabelExpression parse_expression(std::string_view text);

/// Sums term weights per class index. Exact name matches win; otherwise names
/// match case-insensitively. Unknown names raise ExpressionError listing the classes.
LabelVector resolve_expression(const LabelExpression& expr, const std::vector<std::string>& classes);

inline LabelVector resolve_expression(std::string_view text, const std::vector<std::string>& classes)
{
    return resolve_expression(parse_expression(text), classes);
}

/// a + (i / (steps - 1)) (b - a) for i = 0 .. steps-1, with both endpoints returned exactly.
std::vector<LabelVector> interpolate_labels(const LabelVector& a, const LabelVector& b, int steps);

/// One image from noise drawn with seeded_noise(seed, noise_dim).
RgbImage sample_single(const Generator<float>& generator, std::uint64_t seed, const LabelVector& label);

/// Same, from an explicit noise vector.
RgbImage sample_noise(const Generator<float>& generator, const Vector<float>& noise, const LabelVector& label);

/// One row per seed, one column per label; every cell equals sample_single(seed, label).
std::vector<std::vector<RgbImage>> render_strip(const Generator<float>& generator,
                                                const std::vector<std::uint64_t>& seeds,
                                                const std::vector<LabelVector>& labels);

/// first, first+1, ..., first+count-1
std::vector<std::uint64_t> consecutive_seeds(std::uint64_t first, int count);

} // namespace citygan
