#include "citygan/cli.hpp"

#include <cstdlib>
#include <csignal>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "citygan/checkpoint.hpp"
#include "citygan/explore.hpp"
#include "citygan/service.hpp"
#include "citygan/train.hpp"

namespace citygan {

namespace fs = std::filesystem;

namespace {

/// Bad flag values found after parsing; reported like parse errors (exit 1).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::shared_ptr<spdlog::logger> make_logger()
{
    auto logger = spdlog::get("citygan");
    if (!logger) logger = spdlog::stderr_color_mt("citygan");
    const char* env = std::getenv("CITYGAN_LOG");
    logger->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return logger;
}

struct DataFlags {
    std::string data;
    std::optional<double> altitude_min;
    std::optional<double> altitude_max;
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool required)
{
    auto* data = cmd->add_option("--data", f.data, "Dataset directory or manifest file");
    if (required) data->required();
    cmd->add_option("--altitude-min", f.altitude_min, "Keep samples with altitude_degrees >= this");
    cmd->add_option("--altitude-max", f.altitude_max, "Keep samples with altitude_degrees <= this");
}

struct LoadedDataset {
    DatasetManifest manifest;
    ScanReport scan;
    std::size_t missing_metadata = 0;
};

LoadedDataset load_dataset(const DataFlags& f)
{
    LoadedDataset out;
    const fs::path path = f.data;
    if (fs::is_regular_file(path)) {
        out.manifest = load_manifest(path);
    } else {
        out.manifest = scan_dataset(path, detect_layout(path), &out.scan);
    }
    if (f.altitude_min || f.altitude_max) {
        const double lo = f.altitude_min.value_or(-std::numeric_limits<double>::infinity());
        const double hi = f.altitude_max.value_or(std::numeric_limits<double>::infinity());
        FilterResult r = filter_manifest(out.manifest, altitude_between(lo, hi));
        out.manifest = std::move(r.manifest);
        out.missing_metadata = r.missing_metadata;
    }
    return out;
}

Variant variant_flag(const std::string& arch)
{
    const auto v = parse_variant(arch);
    if (!v) throw UsageError("--arch must be plain, latefusion or broadcast, got " + arch);
    return *v;
}

LabelVector label_flag(const LoadedModel& model, const std::string& expr, const char* flag)
{
    const int labels = model.network().effective_labels();
    if (labels == 0) return LabelVector(0);
    if (expr.empty()) throw UsageError(std::string(flag) + " is required for a conditional model");
    try {
        return resolve_expression(expr, model.classes);
    } catch (const ExpressionError& e) {
        throw UsageError(std::string(flag) + ": " + e.what());
    }
}

HttpServer* active_server = nullptr;

extern "C" void stop_server(int)
{
    if (active_server) active_server->stop();
}

} // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Conditional GAN toolkit: datasets, training, sampling, label-space exploration, serving", "citygan"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    DataFlags data;
    std::string out_path;
    std::string ckpt;

    // dataset-scan
    auto* scan = app.add_subcommand("dataset-scan", "Scan a dataset and print or save its manifest");
    add_data_flags(scan, data, true);
    scan->add_option("--out", out_path, "Write the manifest here");
    scan->add_option("--seed", seed, "Random seed (unused; accepted everywhere)");

    // dataset-validate
    auto* validate = app.add_subcommand("dataset-validate", "Check a dataset directory or manifest");
    add_data_flags(validate, data, true);
    validate->add_option("--seed", seed, "Random seed (unused; accepted everywhere)");

    // train
    TrainConfig tc;
    std::string arch = "broadcast";
    int classes = -1;
    int workers = 1;
    auto* train = app.add_subcommand("train", "Train a model");
    add_data_flags(train, data, true);
    train->add_option("--arch", arch, "plain, latefusion or broadcast");
    train->add_option("--size", tc.network.image_size, "Image size (power of two, at least 16)");
    train->add_option("--classes", classes, "Number of classes; -1 takes it from the dataset");
    train->add_option("--noise-dim", tc.network.noise_dim, "Noise vector length");
    train->add_option("--base-features", tc.network.base_feature_maps, "Feature maps of the first discriminator stage; deeper stages double it");
    train->add_option("--steps", tc.total_steps, "Total training steps");
    train->add_option("--batch", tc.batch_size, "Batch size");
    train->add_option("--lr", tc.learning_rate, "Adam learning rate");
    train->add_option("--seed", tc.seed, "Random seed");
    train->add_option("--out", out_path, "Run directory")->required();
    train->add_option("--ckpt", ckpt, "Resume from this checkpoint");
    train->add_option("--eval-every", tc.eval_every, "Steps between evaluation grids");
    train->add_option("--ckpt-every", tc.checkpoint_every, "Steps between checkpoints");
    train->add_option("--crop-fraction", tc.crop_fraction, "Random crop edge as a fraction of the resized source");
    train->add_option("--flip-prob", tc.flip_probability, "Horizontal flip probability");
    train->add_option("--workers", workers, "Data loader threads");

    // sample
    std::string from;
    std::string to;
    auto* sample = app.add_subcommand("sample", "Generate one image");
    sample->add_option("--ckpt", ckpt, "Checkpoint")->required();
    sample->add_option("--seed", seed, "Noise seed");
    sample->add_option("--from", from, "Label expression, e.g. amsterdam or amsterdam*0.5+florence*0.5");
    sample->add_option("--out", out_path, "Output PNG")->required();

    // interpolate
    int steps = 5;
    int seeds = 3;
    auto* interp = app.add_subcommand("interpolate", "Render a label interpolation strip");
    interp->add_option("--ckpt", ckpt, "Checkpoint")->required();
    interp->add_option("--from", from, "Start label expression")->required();
    interp->add_option("--to", to, "End label expression")->required();
    interp->add_option("--steps", steps, "Interpolation steps (columns)");
    interp->add_option("--seeds", seeds, "Number of noise seeds (rows): seed, seed+1, ...");
    interp->add_option("--seed", seed, "First noise seed");
    interp->add_option("--out", out_path, "Output PNG")->required();

    // grid
    int columns = 8;
    auto* grid = app.add_subcommand("grid", "Render the evaluation grid: average row, then one row per class");
    grid->add_option("--ckpt", ckpt, "Checkpoint")->required();
    grid->add_option("--seeds", columns, "Number of noise seeds (columns): seed, seed+1, ...");
    grid->add_option("--seed", seed, "First noise seed");
    grid->add_option("--out", out_path, "Output PNG")->required();

    // serve
    ServerOptions so;
    std::string static_dir = "ui/dist";
    auto* serve = app.add_subcommand("serve", "Serve a checkpoint over HTTP");
    serve->add_option("--ckpt", ckpt, "Checkpoint")->required();
    serve->add_option("--port", so.port, "Listen port (0 picks a free one)");
    serve->add_option("--host", so.host, "Listen address");
    serve->add_option("--static", static_dir, "Directory served at /");
    serve->add_option("--seed", seed, "Random seed (unused; accepted everywhere)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code == 0) return 0;
        err << app.help();
        return 1;
    }

    auto log = make_logger();
    CLI::App* used = app.get_subcommands().front();
    try {
        if (used == scan || used == validate) {
            const LoadedDataset ds = load_dataset(data);
            if (used == validate) ds.manifest.validate();
            out << "classes: " << ds.manifest.classes.size() << '\n';
            for (std::size_t c = 0; c < ds.manifest.classes.size(); ++c) {
                std::size_t n = 0;
                for (const auto& s : ds.manifest.samples) n += s.class_index == static_cast<int>(c);
                out << "  " << c << '\t' << ds.manifest.classes[c] << '\t' << n << '\n';
            }
            out << "samples: " << ds.manifest.samples.size() << '\n';
            out << "unreadable: " << ds.scan.unreadable << '\n';
            if (data.altitude_min || data.altitude_max) out << "missing metadata: " << ds.missing_metadata << '\n';
            for (const auto& p : ds.scan.unreadable_paths) log->warn("unreadable image {}", p.string());
            if (used == scan && !out_path.empty()) save_manifest(ds.manifest, out_path);
            if (used == validate) out << "ok\n";
            return 0;
        }

        if (used == train) {
            tc.network.variant = variant_flag(arch);
            // flag checks that do not depend on the dataset come first
            TrainConfig probe = tc;
            probe.network.variant = Variant::Plain;
            probe.network.label_count = 0;
            try {
                probe.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            const LoadedDataset ds = load_dataset(data);
            if (tc.network.variant == Variant::Plain) {
                tc.network.label_count = 0;
            } else {
                tc.network.label_count = classes >= 0 ? classes : static_cast<int>(ds.manifest.classes.size());
            }
            try {
                tc.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            RunOptions opts;
            opts.out_dir = out_path;
            if (!ckpt.empty()) opts.resume_from = fs::path(ckpt);
            opts.loader_workers = workers;
            opts.on_step = [&](const StepMetrics& m) {
                log->debug("step {}", format_metrics_line(m));
                if (m.step % tc.eval_every == 0) {
                    log->info("step {} d_loss_real {:.4f} d_loss_fake {:.4f} g_loss {:.4f}", m.step, m.d_loss_real,
                              m.d_loss_fake, m.g_loss);
                }
            };
            log->info("training {} on {} samples, {} classes", to_string(tc.network.variant),
                      ds.manifest.samples.size(), ds.manifest.classes.size());
            const TrainState state = run_training(tc, ds.manifest, opts);
            out << "trained to step " << state.step << "; checkpoint "
                << (fs::path(out_path) / ("ckpt_" + std::to_string(state.step) + ".bin")).string() << '\n';
            return 0;
        }

        if (used == serve) {
            auto service = std::make_shared<const InferenceService>(load_model(ckpt));
            so.static_dir = static_dir;
            HttpServer server(service, so);
            const int port = server.bind();
            out << "listening on " << so.host << ':' << port << std::endl;
            active_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            server.run();
            active_server = nullptr;
            return 0;
        }

        const LoadedModel model = load_model(ckpt);
        RgbImage image;
        if (used == sample) {
            image = sample_single(model.generator, seed, label_flag(model, from, "--from"));
        } else if (used == interp) {
            if (steps < 2) throw UsageError("--steps must be at least 2");
            if (seeds < 1) throw UsageError("--seeds must be at least 1");
            const auto labels =
                interpolate_labels(label_flag(model, from, "--from"), label_flag(model, to, "--to"), steps);
            image = compose_grid(render_strip(model.generator, consecutive_seeds(seed, seeds), labels));
        } else if (used == grid) {
            if (columns < 1) throw UsageError("--seeds must be at least 1");
            const auto rows = eval_grid_labels(model.network().effective_labels());
            const auto cells = render_strip(model.generator, consecutive_seeds(seed, columns), rows);
            // render_strip is seed-major; the grid wants one row per label
            std::vector<std::vector<RgbImage>> transposed(rows.size());
            for (const auto& r : cells) {
                for (std::size_t i = 0; i < r.size(); ++i) transposed[i].push_back(r[i]);
            }
            image = compose_grid(transposed);
        }
        write_png(out_path, image);
        out << out_path << '\n';
        return 0;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << used->help();
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace citygan
