#include <doctest.h>

#include "citygan/checkpoint.hpp"
#include "citygan/explore.hpp"
#include "fixtures.hpp"

using namespace citygan;

namespace {

const std::vector<std::string> kCities{"amsterdam", "dc", "florence", "vegas", "manhattan"};

LabelVector vec(std::initializer_list<double> v)
{
    LabelVector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Generator<float> fixture_generator(int labels)
{
    return Generator<float>(NetworkConfig{Variant::Broadcast, 16, labels, 16, 8}, 5);
}

} // namespace

TEST_CASE("expressions parse into weighted terms")
{
    CHECK(parse_expression("amsterdam") == LabelExpression{{{"amsterdam", 1.0}}});
    CHECK(parse_expression("amsterdam-manhattan") == LabelExpression{{{"amsterdam", 1.0}, {"manhattan", -1.0}}});
    CHECK(parse_expression("amsterdam*0.5 + florence*0.5") ==
          LabelExpression{{{"amsterdam", 0.5}, {"florence", 0.5}}});
    CHECK(parse_expression("-2*dc") == LabelExpression{{{"dc", -2.0}}});
    CHECK(parse_expression("dc*1e-3") == LabelExpression{{{"dc", 1e-3}}});
    CHECK_THROWS_AS(parse_expression(""), ExpressionError);
    CHECK_THROWS_AS(parse_expression("amsterdam+"), ExpressionError);
    CHECK_THROWS_AS(parse_expression("0.5"), ExpressionError);
    CHECK_THROWS_AS(parse_expression("a*b"), ExpressionError);
    CHECK_THROWS_AS(parse_expression("a b"), ExpressionError);
}

TEST_CASE("resolution sums weights per class without normalizing")
{
    CHECK(resolve_expression("amsterdam*0.5+florence*0.5", kCities) == vec({0.5, 0, 0.5, 0, 0}));
    const double third = 1.0 / 3.0;
    CHECK(resolve_expression("dc*" + std::to_string(third) + "+vegas*" + std::to_string(third) + "+manhattan*" +
                                 std::to_string(third),
                             kCities)
              .isApprox(vec({0, third, 0, third, third}), 1e-5));
    CHECK(resolve_expression(LabelExpression{{{"dc", third}, {"vegas", third}, {"manhattan", third}}}, kCities) ==
          vec({0, third, 0, third, third}));
    CHECK(resolve_expression("amsterdam-manhattan", kCities) == vec({1, 0, 0, 0, -1}));
    CHECK(resolve_expression("amsterdam*2+amsterdam", kCities) == vec({3, 0, 0, 0, 0}));
    CHECK(resolve_expression("Amsterdam", kCities) == vec({1, 0, 0, 0, 0}));
    CHECK(resolve_expression("florence+dc", kCities) == resolve_expression("dc+florence", kCities));

    try {
        resolve_expression("paris", kCities);
        FAIL("expected an error");
    } catch (const ExpressionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("paris") != std::string::npos);
        CHECK(msg.find("amsterdam, dc, florence, vegas, manhattan") != std::string::npos);
    }
}

TEST_CASE("interpolation is linear with exact endpoints")
{
    const auto path = interpolate_labels(vec({1, 0, 0, 0}), vec({0, 0, 0, 1}), 5);
    REQUIRE(path.size() == 5);
    CHECK(path[0] == vec({1, 0, 0, 0}));
    CHECK(path[2] == vec({0.5, 0, 0, 0.5}));
    CHECK(path[4] == vec({0, 0, 0, 1}));
    CHECK((path[2] - path[1]) == (path[3] - path[2]));

    const auto two = interpolate_labels(vec({0.1, 0.7}), vec({0.3, -0.9}), 2);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == vec({0.1, 0.7}));
    CHECK(two[1] == vec({0.3, -0.9}));

    // endpoints whose difference is not exact in floating point
    const auto odd = interpolate_labels(vec({0.1, 0.2}), vec({0.7, 0.3}), 7);
    CHECK(odd.back() == vec({0.7, 0.3}));

    for (const auto& v : interpolate_labels(vec({0.2, 0.8}), vec({0.2, 0.8}), 5)) CHECK(v == vec({0.2, 0.8}));
    CHECK_THROWS_AS(interpolate_labels(vec({1}), vec({0}), 1), std::invalid_argument);
    CHECK_THROWS_AS(interpolate_labels(vec({1}), vec({0, 1}), 3), ShapeError);
}

TEST_CASE("strip cells equal single-sample generations")
{
    const Generator<float> g = fixture_generator(2);
    const auto labels = interpolate_labels(vec({1, 0}), vec({0, 1}), 5);
    const auto seeds = consecutive_seeds(7, 3);
    CHECK(seeds == std::vector<std::uint64_t>{7, 8, 9});
    const auto strip = render_strip(g, seeds, labels);
    REQUIRE(strip.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
        REQUIRE(strip[r].size() == 5);
        CHECK(strip[r][0] == sample_single(g, seeds[r], labels.front()));
        CHECK(strip[r][4] == sample_single(g, seeds[r], labels.back()));
        CHECK(strip[r][2] == sample_single(g, seeds[r], labels[2]));
    }
    const RgbImage grid = compose_grid(strip);
    CHECK(grid.width == 5 * 16 + 6 * 2);
    CHECK(grid.height == 3 * 16 + 4 * 2);
}

TEST_CASE("single samples are deterministic and seed-dependent")
{
    const Generator<float> g = fixture_generator(5);
    const LabelVector avg = LabelVector::Constant(5, 0.2);
    const RgbImage a = sample_single(g, 3, avg);
    CHECK(a.width == 16);
    CHECK(a == sample_single(g, 3, avg));
    CHECK_FALSE(a == sample_single(g, 4, avg));
    CHECK_NOTHROW(sample_single(g, 3, resolve_expression("amsterdam-manhattan", kCities)));

    // sample_single is the generator forward on seeded_noise
    const Tensor4<float> direct =
        g.forward(seeded_noise<float>(3, 16).transpose(), avg.cast<float>().transpose());
    CHECK(sample_to_image(direct, 0) == a);

    CHECK_THROWS_AS(sample_single(g, 3, LabelVector::Zero(4)), ShapeError);
    CHECK_THROWS_AS(sample_noise(g, Vector<float>::Zero(3), avg), ShapeError);
}

TEST_CASE("a loaded checkpoint samples exactly like the generator it saved")
{
    testing::TempDir dir;
    const auto path = testing::write_fixture_checkpoint(dir / "m.bin", {"amsterdam", "manhattan", "paris", "vienna"});
    const LoadedModel model = load_model(path);
    const TrainState state = load_checkpoint(path);
    CHECK(sample_single(model.generator, 11, resolve_expression("paris", model.classes)) ==
          sample_single(state.generator, 11, resolve_expression("paris", model.classes)));
}
