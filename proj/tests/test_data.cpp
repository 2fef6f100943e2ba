#include <doctest.h>

#include <set>
#include <sstream>

#include "citygan/augment.hpp"
#include "citygan/dataset.hpp"
#include "citygan/image.hpp"
#include "fixtures.hpp"

using namespace citygan;
using citygan::testing::TempDir;

namespace {

void make_city(const std::filesystem::path& root, const std::string& city, int count, int size = 8)
{
    std::filesystem::create_directories(root / city);
    for (int i = 0; i < count; ++i) {
        write_png(root / city / ("f" + std::to_string(i) + ".png"), testing::solid_image(size, size, 10, 20, 30));
    }
}

Sample with_altitude(const std::string& path, std::optional<double> altitude)
{
    Sample s{path, 0, {}};
    if (altitude) s.metadata["altitude_degrees"] = *altitude;
    return s;
}

} // namespace

TEST_CASE("encode_label is one-hot and rejects out-of-range indices")
{
    CHECK(encode_label(0, 4) == (LabelVector(4) << 1, 0, 0, 0).finished());
    CHECK(encode_label(3, 4) == (LabelVector(4) << 0, 0, 0, 1).finished());
    CHECK(encode_label(1, 2) == (LabelVector(2) << 0, 1).finished());
    CHECK_THROWS_AS(encode_label(4, 4), std::out_of_range);
    CHECK_THROWS_AS(encode_label(-1, 4), std::out_of_range);
}

TEST_CASE("folder scan orders classes and samples lexicographically")
{
    TempDir dir;
    make_city(dir.path(), "paris", 3);
    make_city(dir.path(), "amsterdam", 2);
    make_city(dir.path(), "florence", 1);
    make_city(dir.path(), "chicago", 4);
    testing::write_text(dir / "paris/notes.txt", "not an image");
    testing::write_text(dir / "paris/broken.png", "garbage bytes");

    ScanReport report;
    const DatasetManifest m = scan_dataset(dir.path(), DatasetLayout::FolderPerClass, &report);
    CHECK(m.classes == std::vector<std::string>{"amsterdam", "chicago", "florence", "paris"});
    REQUIRE(m.samples.size() == 10);
    CHECK(report.unreadable == 1);
    CHECK(m.source_image_size == 8);
    for (std::size_t i = 1; i < m.samples.size(); ++i) CHECK(m.samples[i - 1].path < m.samples[i].path);
    CHECK(m.samples.front().class_index == 0);
    CHECK(m.samples.back().class_index == 3);
    CHECK_NOTHROW(m.validate());

    CHECK(scan_dataset(dir.path(), DatasetLayout::FolderPerClass) == m);
    CHECK(m.digest() == scan_dataset(dir.path(), DatasetLayout::FolderPerClass).digest());
}

TEST_CASE("an empty class directory is an error naming it")
{
    TempDir dir;
    make_city(dir.path(), "amsterdam", 2);
    std::filesystem::create_directories(dir / "florence");
    try {
        scan_dataset(dir.path(), DatasetLayout::FolderPerClass);
        FAIL("expected an error");
    } catch (const DatasetError& e) {
        CHECK(std::string(e.what()).find("florence") != std::string::npos);
    }
}

TEST_CASE("flat layout reads classes and altitude from index.tsv")
{
    TempDir dir;
    std::string index = "path\tclass\taltitude_degrees\n";
    const std::vector<std::string> cities{"seattle", "amsterdam", "chicago", "florence", "paris"};
    for (std::size_t i = 0; i < cities.size(); ++i) {
        const std::string name = "img" + std::to_string(i) + ".png";
        write_png(dir / name, testing::solid_image(4, 4, 1, 2, 3));
        index += name + "\t" + cities[i] + "\t" + std::to_string(10 * i) + "\n";
    }
    testing::write_text(dir / "index.tsv", index);

    CHECK(detect_layout(dir.path()) == DatasetLayout::FlatWithMetadata);
    const DatasetManifest m = scan_dataset(dir.path(), detect_layout(dir.path()));
    CHECK(m.classes == std::vector<std::string>{"amsterdam", "chicago", "florence", "paris", "seattle"});
    REQUIRE(m.samples.size() == 5);
    CHECK(m.samples[0].class_index == 4);
    CHECK(m.samples[0].metadata.at("altitude_degrees") == 0.0);
    CHECK(m.samples[3].metadata.at("altitude_degrees") == 30.0);
}

TEST_CASE("filter_manifest keeps matches and counts missing metadata")
{
    DatasetManifest m;
    m.classes = {"a"};
    m.samples = {with_altitude("s1", -5), with_altitude("s2", 20), with_altitude("s3", 39), with_altitude("s4", 60)};

    const FilterResult kept = filter_manifest(m, altitude_between(0, 40));
    REQUIRE(kept.manifest.samples.size() == 2);
    CHECK(kept.manifest.samples[0].path == "s2");
    CHECK(kept.manifest.samples[1].path == "s3");
    CHECK(kept.manifest.classes == m.classes);
    CHECK(kept.missing_metadata == 0);

    const FilterResult all = filter_manifest(m, [](const Sample&) { return std::optional<bool>(true); });
    CHECK(all.manifest == m);

    DatasetManifest bare;
    bare.classes = {"a"};
    bare.samples = {with_altitude("x", std::nullopt), with_altitude("y", std::nullopt)};
    const FilterResult none = filter_manifest(bare, altitude_between(0, 40));
    CHECK(none.manifest.samples.empty());
    CHECK(none.missing_metadata == 2);
}

TEST_CASE("manifest text format round-trips")
{
    DatasetManifest m;
    m.classes = {"amsterdam", "florence"};
    m.samples = {{"a/1.png", 0, {{"altitude_degrees", 12.5}}}, {"b/2.png", 1, {}}};
    std::stringstream ss;
    write_manifest(m, ss);
    const DatasetManifest back = read_manifest(ss);
    CHECK(back.classes == m.classes);
    CHECK(back.samples == m.samples);

    m.classes = {"a", "a"};
    CHECK_THROWS_AS(m.validate(), DatasetError);
    m.classes = {"a"};
    CHECK_THROWS_AS(m.validate(), DatasetError);
}

TEST_CASE("normalization maps the 8-bit range onto [-1, 1] invertibly")
{
    CHECK(normalize_pixel(255) == 1.0f);
    CHECK(normalize_pixel(0) == -1.0f);
    for (int v = 0; v < 256; ++v) CHECK(denormalize_pixel(normalize_pixel(static_cast<std::uint8_t>(v))) == v);
    CHECK(denormalize_pixel(5.0f) == 255);
    CHECK(denormalize_pixel(-5.0f) == 0);
}

TEST_CASE("PNG encode and decode are lossless")
{
    const RgbImage img = testing::coordinate_image(13, 7);
    CHECK(decode_image_bytes(encode_png(img)) == img);
    TempDir dir;
    write_png(dir / "x.png", img);
    CHECK(decode_image(dir / "x.png") == img);
    CHECK_THROWS_AS(decode_image(dir / "missing.png"), ImageError);
}

TEST_CASE("identity augmentation reproduces the normalized input")
{
    const RgbImage img = testing::coordinate_image(16, 16);
    AugmentConfig cfg;
    cfg.target_size = 16;
    cfg.crop_fraction = 1.0;
    cfg.flip_probability = 0.0;
    Rng rng(3);
    const Tensor4<float> out = augment_sample(img, cfg, rng);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) CHECK(out(0, c, y, x) == normalize_pixel(img.at(x, y, c)));
        }
    }
}

TEST_CASE("crop and flip read the source window they report")
{
    const RgbImage img = testing::coordinate_image(300, 300);
    AugmentConfig cfg;
    cfg.target_size = 256;
    cfg.flip_probability = 0.5;
    CHECK(cfg.source_edge() == 300);
    Rng rng(11);
    bool saw_flip = false;
    bool saw_plain = false;
    for (int trial = 0; trial < 8; ++trial) {
        AugmentDraw d;
        const Tensor4<float> out = augment_sample(img, cfg, rng, &d);
        CHECK(d.offset_x >= 0);
        CHECK(d.offset_x <= 44);
        CHECK(d.offset_y >= 0);
        CHECK(d.offset_y <= 44);
        (d.flipped ? saw_flip : saw_plain) = true;
        const int x0 = d.flipped ? d.offset_x + 255 : d.offset_x;
        CHECK(out(0, 0, 0, 0) == normalize_pixel(img.at(x0, d.offset_y, 0)));
        CHECK(out(0, 1, 7, 3) == normalize_pixel(img.at(d.flipped ? x0 - 3 : x0 + 3, d.offset_y + 7, 1)));
    }
    CHECK(saw_flip);
    CHECK(saw_plain);
}

TEST_CASE("resize policy keeps aspect and centre-crops; small sources are rejected")
{
    AugmentConfig cfg;
    cfg.target_size = 64;
    CHECK(cfg.source_edge() == 75);
    cfg.target_size = 128;
    CHECK(cfg.source_edge() == 150);

    cfg.target_size = 64;
    const RgbImage wide = testing::coordinate_image(300, 150);
    const RgbImage prepared = prepare_source(wide, cfg);
    CHECK(prepared.width == 75);
    CHECK(prepared.height == 75);

    try {
        prepare_source(testing::solid_image(80, 60, 0, 0, 0), cfg, "tiny.png");
        FAIL("expected an error");
    } catch (const ImageError& e) {
        CHECK(std::string(e.what()).find("tiny.png") != std::string::npos);
    }

    AugmentConfig bad;
    bad.flip_probability = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = AugmentConfig{};
    bad.crop_fraction = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("batch iterator: counts, determinism, one-hot labels, worker independence")
{
    TempDir dir;
    make_city(dir.path(), "a", 6, 20);
    make_city(dir.path(), "b", 5, 20);
    const DatasetManifest m = scan_dataset(dir.path(), DatasetLayout::FolderPerClass);
    AugmentConfig cfg;
    cfg.target_size = 16;
    cfg.seed = 9;

    BatchIterator it(m, cfg, 4, 0);
    CHECK(it.batch_count() == 3);
    std::vector<Index> sizes;
    std::set<std::size_t> seen;
    while (auto b = it.next()) {
        sizes.push_back(b->size());
        for (auto i : b->sample_indices) seen.insert(i);
        CHECK(b->labels.cols() == 2);
        for (Index r = 0; r < b->labels.rows(); ++r) {
            CHECK(b->labels.row(r).sum() == 1.0f);
            CHECK(b->labels.row(r).maxCoeff() == 1.0f);
            CHECK(b->labels.row(r).minCoeff() == 0.0f);
            CHECK(b->labels(r, m.samples[b->sample_indices[static_cast<std::size_t>(r)]].class_index) == 1.0f);
        }
        CHECK(b->images.data().array().abs().maxCoeff() <= 1.0f);
    }
    CHECK(sizes == std::vector<Index>{4, 4, 3});
    CHECK(seen.size() == 11);

    BatchIterator same(m, cfg, 4, 0);
    BatchIterator other(m, cfg, 4, 1);
    CHECK(same.order() == BatchIterator(m, cfg, 4, 0).order());
    CHECK(same.order() != other.order());

    BatchIterator single(m, cfg, 4, 2, nullptr, 1);
    SourceCache cache;
    BatchIterator pooled(m, cfg, 4, 2, &cache, 3);
    while (auto a = single.next()) {
        auto b = pooled.next();
        REQUIRE(b);
        CHECK(a->sample_indices == b->sample_indices);
        CHECK(a->images.data() == b->images.data());
    }
    CHECK_FALSE(pooled.next());

    CHECK(BatchIterator(m, cfg, 1, 0).batch_count() == 11);
    CHECK_THROWS_AS(BatchIterator(m, cfg, 0, 0), std::invalid_argument);
}

TEST_CASE("batch iterator skips undecodable samples and counts them")
{
    TempDir dir;
    make_city(dir.path(), "a", 3, 20);
    DatasetManifest m = scan_dataset(dir.path(), DatasetLayout::FolderPerClass);
    testing::write_text(m.samples[1].path, "\x89PNG\r\n\x1a\ntruncated");
    AugmentConfig cfg;
    cfg.target_size = 16;
    BatchIterator it(m, cfg, 8, 0);
    auto b = it.next();
    REQUIRE(b);
    CHECK(b->size() == 2);
    CHECK(it.skipped_samples() == 1);
}

TEST_CASE("compose_grid lays cells out with a black border")
{
    const RgbImage white = testing::solid_image(3, 3, 255, 255, 255);
    const RgbImage grid = compose_grid({{white, white}, {white, white}}, 2);
    CHECK(grid.width == 2 + 3 + 2 + 3 + 2);
    CHECK(grid.height == 12);
    CHECK(grid.at(0, 0, 0) == 0);
    CHECK(grid.at(2, 2, 0) == 255);
    CHECK(grid.at(5, 2, 0) == 0);
    CHECK(grid.at(7, 7, 1) == 255);
}
