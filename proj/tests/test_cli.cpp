#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "citygan/cli.hpp"
#include "citygan/explore.hpp"
#include "fixtures.hpp"

using namespace citygan;
using citygan::testing::TempDir;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "citygan");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("help exits 0 on every subcommand and lists defaults")
{
    CHECK(run({"--help"}).code == 0);
    for (const char* sub : {"dataset-scan", "dataset-validate", "train", "sample", "interpolate", "grid", "serve"}) {
        const Run r = run({sub, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("--seed") != std::string::npos);
    }
    const std::string train = run({"train", "--help"}).out;
    for (const char* flag : {"--data", "--arch", "--size", "--classes", "--steps", "--batch", "--lr", "--out", "--ckpt",
                             "--eval-every", "--ckpt-every", "--crop-fraction", "--flip-prob", "--altitude-min",
                             "--altitude-max"}) {
        CHECK(train.find(flag) != std::string::npos);
    }
    CHECK(train.find("[64]") != std::string::npos);
    CHECK(run({"serve", "--help"}).out.find("[8080]") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with usage text")
{
    const Run none = run({});
    CHECK(none.code == 1);
    CHECK(none.err.find("Usage") != std::string::npos);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"sample", "--bogus"}).code == 1);

    TempDir dir;
    const Run size = run({"train", "--data", dir.path().string(), "--out", (dir / "run").string(), "--size", "100"});
    CHECK(size.code == 1);
    CHECK(size.err.find("image size must be a power of two") != std::string::npos);
    CHECK(run({"train", "--data", dir.path().string(), "--out", (dir / "r").string(), "--arch", "gan"}).code == 1);
}

TEST_CASE("runtime failures exit 2 with a diagnostic")
{
    TempDir dir;
    const Run r = run({"sample", "--ckpt", (dir / "missing.bin").string(), "--out", (dir / "x.png").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("missing.bin") != std::string::npos);
    CHECK(run({"dataset-scan", "--data", (dir / "nowhere").string()}).code == 2);
}

TEST_CASE("dataset-scan and dataset-validate report the manifest")
{
    TempDir dir;
    testing::red_blue_dataset(dir / "data", 20, 2);
    const Run scan = run({"dataset-scan", "--data", (dir / "data").string(), "--out", (dir / "m.tsv").string()});
    CHECK(scan.code == 0);
    CHECK(scan.out.find("samples: 4") != std::string::npos);
    CHECK(scan.out.find("0_red") != std::string::npos);
    const Run validate = run({"dataset-validate", "--data", (dir / "m.tsv").string()});
    CHECK(validate.code == 0);
    CHECK(validate.out.find("ok") != std::string::npos);

    std::filesystem::remove(dir / "data/0_red/img1000.png");
    CHECK(run({"dataset-validate", "--data", (dir / "m.tsv").string()}).code == 2);
}

TEST_CASE("train, sample, interpolate and grid produce deterministic artifacts")
{
    TempDir dir;
    testing::red_blue_dataset(dir / "data", 20, 4);
    const auto train = [&](const std::string& out) {
        return run({"train", "--data", (dir / "data").string(), "--arch", "broadcast", "--size", "16", "--steps", "4",
                    "--batch", "4", "--eval-every", "2", "--ckpt-every", "4", "--base-features", "4", "--noise-dim",
                    "8", "--seed", "5", "--out", (dir / out).string()});
    };
    const Run a = train("a");
    REQUIRE(a.code == 0);
    CHECK(train("b").code == 0);
    CHECK(slurp(dir / "a/ckpt_4.bin") == slurp(dir / "b/ckpt_4.bin"));
    CHECK(slurp(dir / "a/grid_4.png") == slurp(dir / "b/grid_4.png"));
    const std::string ckpt = (dir / "a/ckpt_4.bin").string();

    REQUIRE(run({"sample", "--ckpt", ckpt, "--seed", "7", "--from", "0_red", "--out", (dir / "s1.png").string()}).code ==
            0);
    run({"sample", "--ckpt", ckpt, "--seed", "7", "--from", "0_red", "--out", (dir / "s2.png").string()});
    CHECK(slurp(dir / "s1.png") == slurp(dir / "s2.png"));
    const LoadedModel model = load_model(ckpt);
    CHECK(decode_image(dir / "s1.png") == sample_single(model.generator, 7, encode_label(0, 2)));

    const Run strip = run({"interpolate", "--ckpt", ckpt, "--from", "0_red", "--to", "1_blue", "--steps", "5",
                           "--seeds", "3", "--out", (dir / "strip.png").string()});
    REQUIRE(strip.code == 0);
    const RgbImage img = decode_image(dir / "strip.png");
    CHECK(img.width == 5 * 16 + 6 * 2);
    CHECK(img.height == 3 * 16 + 4 * 2);
    CHECK(run({"interpolate", "--ckpt", ckpt, "--from", "0_red", "--to", "paris", "--out",
               (dir / "x.png").string()})
              .code == 1);

    REQUIRE(run({"grid", "--ckpt", ckpt, "--seeds", "4", "--out", (dir / "grid.png").string()}).code == 0);
    const RgbImage grid = decode_image(dir / "grid.png");
    CHECK(grid.width == 4 * 16 + 5 * 2);
    CHECK(grid.height == 3 * 16 + 4 * 2);

    const Run resume = run({"train", "--data", (dir / "data").string(), "--arch", "broadcast", "--size", "16", "--steps",
                            "6", "--batch", "4", "--eval-every", "2", "--ckpt-every", "4", "--base-features", "4",
                            "--noise-dim", "8", "--seed", "5", "--out", (dir / "a").string(), "--ckpt", ckpt});
    CHECK(resume.code == 0);
    CHECK(std::filesystem::exists(dir / "a/ckpt_6.bin"));
}
