#include "citygan/train.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "citygan/checkpoint.hpp"

namespace citygan {

namespace fs = std::filesystem;

namespace {

std::string shortest(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double mean_probability(const Matrix<float>& logits)
{
    return static_cast<double>(sigmoid(logits).cast<double>().mean());
}

/// Keeps the first lines whose leading step field is <= step.
void truncate_log(const fs::path& path, std::int64_t step)
{
    std::vector<std::string> kept;
    {
        std::ifstream is(path);
        std::string line;
        while (std::getline(is, line)) {
            std::int64_t s = 0;
            const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), s);
            if (ec == std::errc() && s <= step) kept.push_back(line);
        }
    }
    std::ofstream os(path, std::ios::trunc);
    for (const auto& l : kept) os << l << '\n';
}

void append_line(const fs::path& path, const std::string& line)
{
    std::ofstream os(path, std::ios::app);
    os << line << '\n';
    if (!os) throw std::runtime_error("cannot append to " + path.string());
}

} // namespace

void TrainConfig::validate() const
{
    network.validate();
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (eval_every < 1 || checkpoint_every < 1) {
        throw std::invalid_argument("evaluation and checkpoint intervals must be at least 1");
    }
    if (total_steps < 0) throw std::invalid_argument("total steps must be nonnegative");
    if (eval_columns < 1) throw std::invalid_argument("evaluation grid needs at least one column");
    augment().validate();
}

AugmentConfig TrainConfig::augment() const
{
    AugmentConfig a;
    a.target_size = network.image_size;
    a.flip_probability = flip_probability;
    a.crop_fraction = crop_fraction;
    a.seed = mix_seed(seed, 3);
    return a;
}

TrainState TrainState::initialize(const TrainConfig& config, std::vector<std::string> classes)
{
    config.validate();
    Generator<float> g(config.network, mix_seed(config.seed, 1));
    Discriminator<float> d(config.network, mix_seed(config.seed, 2));
    Adam<float> g_opt(g.parameters(), config.adam());
    Adam<float> d_opt(d.parameters(), config.adam());
    Rng noise_rng(mix_seed(config.seed, 5));
    NoiseBatch<float> fixed = noise_rng.normal_matrix<float>(config.eval_columns, config.network.noise_dim);
    return TrainState{config,
                      std::move(classes),
                      0,
                      std::move(g),
                      std::move(d),
                      std::move(g_opt),
                      std::move(d_opt),
                      Rng(mix_seed(config.seed, 4)),
                      0,
                      0,
                      0,
                      {},
                      std::move(fixed),
                      {}};
}

StepMetrics train_step(TrainState& state, const Batch& batch)
{
    const NetworkConfig& net = state.config.network;
    const Index n = batch.size();
    const int labels = net.effective_labels();
    require_shape(batch.images, Shape4{n, 3, net.image_size, net.image_size}, "training batch");
    if (labels > 0 && (batch.labels.rows() != n || batch.labels.cols() != labels)) {
        throw ShapeError("training batch labels have " + std::to_string(batch.labels.cols()) + " columns, model has " +
                         std::to_string(labels) + " classes");
    }

    const NoiseBatch<float> noise = state.rng.normal_matrix<float>(n, net.noise_dim);
    LabelBatch<float> fake_labels = LabelBatch<float>::Zero(n, labels);
    for (Index i = 0; i < n && labels > 0; ++i) fake_labels(i, state.rng.uniform_int(0, labels - 1)) = 1.0f;
    const LabelBatch<float> real_labels = labels > 0 ? batch.labels : LabelBatch<float>(n, 0);

    Generator<float>& g = state.generator;
    Discriminator<float>& d = state.discriminator;
    const Tensor4<float> fake = g.forward_train(noise, fake_labels);

    StepMetrics m;
    m.step = state.step + 1;

    d.zero_grad();
    const Matrix<float> real_logits = d.forward_train(batch.images, real_labels);
    m.d_loss_real = bce_with_logits(real_logits, 1.0f);
    d.backward(bce_with_logits_grad(real_logits, 1.0f));
    const Matrix<float> fake_logits = d.forward_train(fake, fake_labels);
    m.d_loss_fake = bce_with_logits(fake_logits, 0.0f);
    d.backward(bce_with_logits_grad(fake_logits, 0.0f));
    m.d_real_mean = mean_probability(real_logits);
    m.d_fake_mean = mean_probability(fake_logits);

    const auto abort_if_nonfinite = [&m](double g_loss) {
        if (std::isfinite(m.d_loss_real) && std::isfinite(m.d_loss_fake) && !std::isnan(g_loss) &&
            std::isfinite(g_loss)) {
            return;
        }
        std::ostringstream os;
        os << "non-finite loss at step " << m.step << ": d_loss_real=" << m.d_loss_real
           << " d_loss_fake=" << m.d_loss_fake << " g_loss=" << g_loss;
        throw TrainingAborted(os.str());
    };
    abort_if_nonfinite(0.0);
    state.discriminator_opt.step(d.parameters());

    g.zero_grad();
    const Matrix<float> gen_logits = d.forward_train(fake, fake_labels);
    m.g_loss = bce_with_logits(gen_logits, 1.0f);
    abort_if_nonfinite(m.g_loss);
    g.backward(d.backward(bce_with_logits_grad(gen_logits, 1.0f)));
    state.generator_opt.step(g.parameters());

    state.step = m.step;
    state.history.push_back(m);
    return m;
}

std::vector<LabelVector> eval_grid_labels(int label_count)
{
    if (label_count <= 0) return {LabelVector(0)};
    std::vector<LabelVector> rows;
    rows.push_back(LabelVector::Constant(label_count, 1.0 / label_count));
    for (int c = 0; c < label_count; ++c) rows.push_back(encode_label(c, label_count));
    return rows;
}

std::vector<std::vector<RgbImage>> render_eval_grid(const Generator<float>& generator,
                                                    const NoiseBatch<float>& fixed_noise, int label_count)
{
    const int labels = generator.config().conditional() ? label_count : 0;
    std::vector<std::vector<RgbImage>> rows;
    for (const LabelVector& label : eval_grid_labels(labels)) {
        const LabelBatch<float> batch = label.cast<float>().transpose().replicate(fixed_noise.rows(), 1);
        const Tensor4<float> images = generator.forward(fixed_noise, batch);
        std::vector<RgbImage> cells;
        for (Index j = 0; j < images.batch(); ++j) cells.push_back(sample_to_image(images, j));
        rows.push_back(std::move(cells));
    }
    return rows;
}

double mean_abs_pixel_change(const RgbImage& a, const RgbImage& b)
{
    if (a.width != b.width || a.height != b.height) throw ImageError("images differ in size");
    if (a.pixels.empty()) return 0.0;
    double total = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) total += std::abs(int(a.pixels[i]) - int(b.pixels[i]));
    return total / static_cast<double>(a.pixels.size());
}

std::string format_metrics_line(const StepMetrics& m)
{
    std::ostringstream os;
    os << m.step << '\t' << shortest(m.d_loss_real) << '\t' << shortest(m.d_loss_fake) << '\t' << shortest(m.g_loss)
       << '\t' << shortest(m.d_real_mean) << '\t' << shortest(m.d_fake_mean);
    return os.str();
}

TrainState run_training(const TrainConfig& config, const DatasetManifest& manifest, const RunOptions& options)
{
    config.validate();
    if (config.network.conditional() && static_cast<int>(manifest.classes.size()) != config.network.label_count) {
        throw std::invalid_argument("dataset has " + std::to_string(manifest.classes.size()) +
                                    " classes but the model is configured for " +
                                    std::to_string(config.network.label_count));
    }
    if (manifest.samples.empty()) throw DatasetError("dataset has no samples");
    fs::create_directories(options.out_dir);
    const fs::path metrics_path = options.out_dir / "metrics.tsv";
    const fs::path eval_path = options.out_dir / "eval.tsv";

    TrainState state = [&] {
        if (!options.resume_from) {
            TrainState s = TrainState::initialize(config, manifest.classes);
            s.manifest_digest = manifest.digest();
            std::ofstream(metrics_path, std::ios::trunc);
            std::ofstream(eval_path, std::ios::trunc);
            return s;
        }
        TrainState s = load_checkpoint(*options.resume_from);
        const TrainConfig& prev = s.config;
        if (!(prev.network == config.network) || prev.seed != config.seed || prev.batch_size != config.batch_size ||
            prev.learning_rate != config.learning_rate || prev.eval_columns != config.eval_columns) {
            throw std::invalid_argument("resume configuration differs from the checkpoint's");
        }
        if (s.manifest_digest != manifest.digest()) {
            throw std::invalid_argument("dataset manifest differs from the one the checkpoint was trained on");
        }
        s.config = config;
        truncate_log(metrics_path, s.step);
        truncate_log(eval_path, s.step);
        return s;
    }();

    const AugmentConfig augment = config.augment();
    const std::int64_t limit =
        options.stop_after ? std::min(config.total_steps, *options.stop_after) : config.total_steps;
    const int grid_labels = config.network.effective_labels();
    SourceCache cache;
    std::int64_t last_saved = -1;

    const auto save = [&] {
        const fs::path path = options.out_dir / ("ckpt_" + std::to_string(state.step) + ".bin");
        save_checkpoint(state, path);
        last_saved = state.step;
    };

    while (state.step < limit) {
        BatchIterator it(manifest, augment, config.batch_size, static_cast<std::uint64_t>(state.epoch), &cache,
                         options.loader_workers);
        it.skip(static_cast<std::size_t>(state.batch_in_epoch));
        bool produced = state.batch_in_epoch > 0;
        while (state.step < limit) {
            std::optional<Batch> batch = it.next();
            if (!batch) break;
            produced = true;
            state.batch_in_epoch = static_cast<std::int64_t>(it.position());
            const StepMetrics m = train_step(state, *batch);
            append_line(metrics_path, format_metrics_line(m));
            if (options.on_step) options.on_step(m);

            if (state.step % config.eval_every == 0) {
                const RgbImage grid = compose_grid(render_eval_grid(state.generator, state.fixed_noise, grid_labels));
                write_png(options.out_dir / ("grid_" + std::to_string(state.step) + ".png"), grid);
                const bool comparable = state.last_grid.width == grid.width && state.last_grid.height == grid.height;
                const double drift =
                    comparable ? mean_abs_pixel_change(state.last_grid, grid) : std::nan("");
                append_line(eval_path, std::to_string(state.step) + '\t' + shortest(drift));
                state.last_grid = grid;
            }
            if (state.step % config.checkpoint_every == 0) save();
        }
        if (state.step >= limit) break;
        if (!produced) throw DatasetError("no sample in the dataset could be decoded");
        ++state.epoch;
        state.batch_in_epoch = 0;
    }
    if (last_saved != state.step) save();
    return state;
}

} // namespace citygan
