#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "citygan/dataset.hpp"
#include "citygan/image.hpp"
#include "citygan/rng.hpp"

namespace citygan {

struct AugmentConfig {
    int target_size = 64;
    double flip_probability = 0.5;
    /// 256/300 exactly, so a 300px source admits 45x45 crop offsets for 256px output.
    double crop_fraction = 256.0 / 300.0;
    std::uint64_t seed = 0;

    void validate() const;

    /// Edge the source is resized to before cropping: round(target_size / crop_fraction).
    int source_edge() const;
};

/// Random choices made for one augmented sample.
struct AugmentDraw {
    int offset_x = 0;
    int offset_y = 0;
    bool flipped = false;
};

/// Resizes the shorter edge to cfg.source_edge() (bilinear, aspect kept) and
/// centre-crops to a square. Sources whose shorter edge is below that are rejected.
RgbImage prepare_source(const RgbImage& image, const AugmentConfig& cfg, const std::string& name = "image");

/// Random crop (uniform offset) and horizontal flip of a prepared square source,
/// written normalized into sample `n` of `out`. Draw order: y offset, x offset, flip.
AugmentDraw augment_prepared(const RgbImage& prepared, const AugmentConfig& cfg, Rng& rng, Tensor4<float>& out,
                             Index n);

/// prepare_source followed by augment_prepared into a fresh (1, 3, S, S) tensor.
Tensor4<float> augment_sample(const RgbImage& image, const AugmentConfig& cfg, Rng& rng,
                              AugmentDraw* draw = nullptr);

struct Batch {
    Tensor4<float> images;
    LabelBatch<float> labels;
    std::vector<std::size_t> sample_indices;

    Index size() const { return images.batch(); }
};

/// Prepared sources keyed by manifest index; shared across epochs. Failed
/// decodes are remembered so they are skipped without re-reading.
class SourceCache {
public:
    std::shared_ptr<const RgbImage> get(std::size_t index, const Sample& sample, const AugmentConfig& cfg);

private:
    std::mutex mutex_;
    std::unordered_map<std::size_t, std::shared_ptr<const RgbImage>> entries_;
};

/// One epoch over a manifest: a seeded shuffle, fixed-size batches and a
/// final short batch. Each sample's augmentation stream is derived from
/// (cfg.seed, epoch_seed, position), so worker count never changes the output.
class BatchIterator {
public:
    BatchIterator(const DatasetManifest& manifest, AugmentConfig cfg, int batch_size, std::uint64_t epoch_seed,
                  SourceCache* cache = nullptr, int workers = 1);

    std::optional<Batch> next();

    /// Advances past `batches` batches without decoding them.
    void skip(std::size_t batches);

    std::size_t batch_count() const;
    std::size_t position() const { return cursor_ / static_cast<std::size_t>(batch_size_); }
    std::size_t skipped_samples() const { return skipped_; }
    const std::vector<std::size_t>& order() const { return order_; }

private:
    const DatasetManifest& manifest_;
    AugmentConfig cfg_;
    int batch_size_;
    std::uint64_t epoch_seed_;
    SourceCache* cache_;
    int workers_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t skipped_ = 0;
};

} // namespace citygan
