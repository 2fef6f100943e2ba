#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "citygan/augment.hpp"
#include "citygan/dataset.hpp"
#include "citygan/image.hpp"
#include "citygan/model.hpp"

namespace citygan {

struct TrainConfig {
    NetworkConfig network;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 64;
    std::int64_t total_steps = 1000;
    std::int64_t eval_every = 500;
    std::int64_t checkpoint_every = 1000;
    std::uint64_t seed = 0;
    double crop_fraction = 256.0 / 300.0;
    double flip_probability = 0.5;
    /// Fixed noise columns in evaluation grids.
    int eval_columns = 8;

    void validate() const;
    AugmentConfig augment() const;
    AdamSettings adam() const { return {learning_rate, beta1, beta2, 1e-8}; }

    bool operator==(const TrainConfig&) const = default;
};

struct StepMetrics {
    std::int64_t step = 0;
    double d_loss_real = 0;
    double d_loss_fake = 0;
    double g_loss = 0;
    double d_real_mean = 0;
    double d_fake_mean = 0;

    bool operator==(const StepMetrics&) const = default;
};

/// Raised when a loss turns non-finite; the message carries the step and all loss values.
class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything needed to continue training bit-identically.
struct TrainState {
    TrainConfig config;
    std::vector<std::string> classes;
    std::int64_t step = 0;
    Generator<float> generator;
    Discriminator<float> discriminator;
    Adam<float> generator_opt;
    Adam<float> discriminator_opt;
    /// Noise and label draws for fake samples.
    Rng rng;
    /// Data stream position: epoch number and batches consumed within it.
    std::int64_t epoch = 0;
    std::int64_t batch_in_epoch = 0;
    std::uint32_t manifest_digest = 0;
    std::vector<StepMetrics> history;
    /// eval_columns x noise_dim, fixed for the whole run.
    NoiseBatch<float> fixed_noise;
    /// Last rendered evaluation grid, for the drift metric.
    RgbImage last_grid;

    /// Fresh state: networks, optimizers and fixed noise all derived from config.seed.
    static TrainState initialize(const TrainConfig& config, std::vector<std::string> classes);
};

/// One discriminator update (real + fake losses summed) followed by one
/// generator update on a fresh discriminator evaluation.
StepMetrics train_step(TrainState& state, const Batch& batch);

/// Label rows of the evaluation grid: the uniform average, then each class.
/// Unconditional models get a single empty row.
std::vector<LabelVector> eval_grid_labels(int label_count);

/// Evaluation grid cells: rows follow eval_grid_labels, column j uses noise row j.
std::vector<std::vector<RgbImage>> render_eval_grid(const Generator<float>& generator,
                                                    const NoiseBatch<float>& fixed_noise, int label_count);

/// Mean absolute per-channel difference between two equally sized images, in 8-bit units.
double mean_abs_pixel_change(const RgbImage& a, const RgbImage& b);

struct RunOptions {
    std::filesystem::path out_dir;
    /// Continue from this checkpoint instead of starting fresh.
    std::optional<std::filesystem::path> resume_from;
    /// Stop after this step even if total_steps is larger (simulates an interruption).
    std::optional<std::int64_t> stop_after;
    int loader_workers = 1;
    std::function<void(const StepMetrics&)> on_step;
};

/// Trains to config.total_steps. Writes metrics.tsv, grid_<step>.png every
/// eval_every steps, ckpt_<step>.bin every checkpoint_every steps and at the
/// end, and eval.tsv with the grid drift metric. Returns the final state.
TrainState run_training(const TrainConfig& config, const DatasetManifest& manifest, const RunOptions& options);

std::string format_metrics_line(const StepMetrics& m);

} // namespace citygan
