#include "citygan/explore.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "citygan/rng.hpp"

namespace citygan {

namespace {

bool is_name_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::optional<double> parse_weight(std::string_view token)
{
    double v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

class ExpressionParser {
public:
    explicit ExpressionParser(std::string_view text) : text_(text) {}

    LabelExpression parse()
    {
        LabelExpression expr;
        skip_space();
        double sign = 1.0;
        if (peek('+') || peek('-')) sign = text_[pos_++] == '-' ? -1.0 : 1.0;
        expr.terms.push_back(term(sign));
        while (true) {
            skip_space();
            if (pos_ == text_.size()) break;
            if (!peek('+') && !peek('-')) fail("expected '+' or '-'");
            sign = text_[pos_++] == '-' ? -1.0 : 1.0;
            expr.terms.push_back(term(sign));
        }
        return expr;
    }

private:
    LabelTerm term(double sign)
    {
        const std::string_view first = token();
        skip_space();
        if (!peek('*')) {
            if (parse_weight(first)) fail("term has a weight but no class name");
            return {std::string(first), sign};
        }
        ++pos_;
        const std::string_view second = token();
        if (const auto w = parse_weight(second); w && !parse_weight(first)) return {std::string(first), sign * *w};
        if (const auto w = parse_weight(first); w && !parse_weight(second)) return {std::string(second), sign * *w};
        fail("a term is name*weight or weight*name");
    }

    std::string_view token()
    {
        skip_space();
        const std::size_t begin = pos_;
        while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
        // exponent sign inside a number, e.g. 1e-3
        while (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+') && pos_ > begin &&
               (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E') &&
               std::isdigit(static_cast<unsigned char>(text_[begin])) && pos_ + 1 < text_.size() &&
               std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
            ++pos_;
            while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
        }
        if (pos_ == begin) fail("expected a class name or weight");
        return text_.substr(begin, pos_ - begin);
    }

    bool peek(char c) const { return pos_ < text_.size() && text_[pos_] == c; }

    void skip_space()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw ExpressionError("bad label expression '" + std::string(text_) + "' at position " +
                              std::to_string(pos_) + ": " + what);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string known_classes(const std::vector<std::string>& classes)
{
    std::string out;
    for (const auto& c : classes) out += (out.empty() ? "" : ", ") + c;
    return out;
}

} // namespace

LabelExpression parse_expression(std::string_view text)
{
    return ExpressionParser(text).parse();
}

LabelVector resolve_expression(const LabelExpression& expr, const std::vector<std::string>& classes)
{
    LabelVector v = LabelVector::Zero(static_cast<Index>(classes.size()));
    for (const auto& t : expr.terms) {
        if (!std::isfinite(t.weight)) throw ExpressionError("weight of " + t.name + " is not finite");
        auto it = std::find(classes.begin(), classes.end(), t.name);
        if (it == classes.end()) {
            const std::string key = lower(t.name);
            it = std::find_if(classes.begin(), classes.end(), [&](const std::string& c) { return lower(c) == key; });
        }
        if (it == classes.end()) {
            throw ExpressionError("unknown class '" + t.name + "'; known classes: " + known_classes(classes));
        }
        v[it - classes.begin()] += t.weight;
    }
    return v;
}

std::vector<LabelVector> interpolate_labels(const LabelVector& a, const LabelVector& b, int steps)
{
    if (steps < 2) throw std::invalid_argument("interpolation needs at least 2 steps, got " + std::to_string(steps));
    if (a.size() != b.size()) {
        throw ShapeError("interpolation endpoints have lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    }
    std::vector<LabelVector> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps - 1; ++i) {
        const double t = static_cast<double>(i) / (steps - 1);
        out.push_back(a + t * (b - a));
    }
    out.push_back(b);
    return out;
}

RgbImage sample_noise(const Generator<float>& generator, const Vector<float>& noise, const LabelVector& label)
{
    if (noise.size() != generator.config().noise_dim) {
        throw ShapeError("noise has length " + std::to_string(noise.size()) + ", model expects " +
                         std::to_string(generator.config().noise_dim));
    }
    const LabelBatch<float> row = label.cast<float>().transpose();
    return sample_to_image(generator.forward(noise.transpose(), row), 0);
}

RgbImage sample_single(const Generator<float>& generator, std::uint64_t seed, const LabelVector& label)
{
    return sample_noise(generator, seeded_noise<float>(seed, generator.config().noise_dim), label);
}

std::vector<std::vector<RgbImage>> render_strip(const Generator<float>& generator,
                                                const std::vector<std::uint64_t>& seeds,
                                                const std::vector<LabelVector>& labels)
{
    std::vector<std::vector<RgbImage>> rows;
    for (std::uint64_t seed : seeds) {
        const Vector<float> noise = seeded_noise<float>(seed, generator.config().noise_dim);
        std::vector<RgbImage> row;
        for (const auto& label : labels) row.push_back(sample_noise(generator, noise, label));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::uint64_t> consecutive_seeds(std::uint64_t first, int count)
{
    if (count < 1) throw std::invalid_argument("need at least one seed");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
    return seeds;
}

} // namespace citygan
