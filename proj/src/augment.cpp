#include "citygan/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace citygan {

void AugmentConfig::validate() const
{
    if (target_size < 1) throw std::invalid_argument("target size must be positive");
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
        throw std::invalid_argument("flip probability must lie in [0, 1]");
    }
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) {
        throw std::invalid_argument("crop fraction must lie in (0, 1]");
    }
    if (std::floor(source_edge() * crop_fraction) < 1.0) throw std::invalid_argument("crop fraction too small");
    if (target_size > source_edge()) throw std::invalid_argument("target size exceeds the resized source edge");
}

int AugmentConfig::source_edge() const
{
    return static_cast<int>(std::lround(static_cast<double>(target_size) / crop_fraction));
}

RgbImage prepare_source(const RgbImage& image, const AugmentConfig& cfg, const std::string& name)
{
    const int edge = cfg.source_edge();
    const int shorter = std::min(image.width, image.height);
    if (shorter < edge) {
        throw ImageError("image too small: " + name + " is " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + ", shorter edge must be at least " + std::to_string(edge));
    }
    int w = edge;
    int h = edge;
    if (image.width < image.height) {
        h = static_cast<int>(std::lround(static_cast<double>(image.height) * edge / image.width));
    } else {
        w = static_cast<int>(std::lround(static_cast<double>(image.width) * edge / image.height));
    }
    const RgbImage resized = resize_bilinear(image, w, h);
    return crop(resized, (w - edge) / 2, (h - edge) / 2, edge, edge);
}

AugmentDraw augment_prepared(const RgbImage& prepared, const AugmentConfig& cfg, Rng& rng, Tensor4<float>& out,
                             Index n)
{
    const int s = cfg.target_size;
    if (prepared.width < s || prepared.height < s) throw ImageError("prepared source smaller than target");
    if (out.channels() != 3 || out.height() != s || out.width() != s) {
        throw ShapeError("augmentation target has shape " + to_string(out.shape()));
    }
    AugmentDraw draw;
    draw.offset_y = static_cast<int>(rng.uniform_int(0, prepared.height - s));
    draw.offset_x = static_cast<int>(rng.uniform_int(0, prepared.width - s));
    draw.flipped = rng.bernoulli(cfg.flip_probability);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const int sx = draw.offset_x + (draw.flipped ? s - 1 - x : x);
                out(n, c, y, x) = normalize_pixel(prepared.at(sx, draw.offset_y + y, c));
            }
        }
    }
    return draw;
}

Tensor4<float> augment_sample(const RgbImage& image, const AugmentConfig& cfg, Rng& rng, AugmentDraw* draw)
{
    const RgbImage prepared = prepare_source(image, cfg);
    Tensor4<float> out(1, 3, cfg.target_size, cfg.target_size);
    const AugmentDraw d = augment_prepared(prepared, cfg, rng, out, 0);
    if (draw) *draw = d;
    return out;
}

std::shared_ptr<const RgbImage> SourceCache::get(std::size_t index, const Sample& sample, const AugmentConfig& cfg)
{
    {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(index); it != entries_.end()) return it->second;
    }
    std::shared_ptr<const RgbImage> prepared;
    try {
        prepared = std::make_shared<const RgbImage>(prepare_source(decode_image(sample.path), cfg, sample.path.string()));
    } catch (const ImageError&) {
    }
    std::lock_guard lock(mutex_);
    entries_.emplace(index, prepared);
    return prepared;
}

BatchIterator::BatchIterator(const DatasetManifest& manifest, AugmentConfig cfg, int batch_size,
                             std::uint64_t epoch_seed, SourceCache* cache, int workers)
    : manifest_(manifest), cfg_(cfg), batch_size_(batch_size), epoch_seed_(epoch_seed), cache_(cache),
      workers_(std::max(1, workers))
{
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    cfg_.validate();
    order_.resize(manifest_.samples.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    // Fisher-Yates, drawing from our own engine so the permutation is fixed by the seed
    Rng rng(mix_seed(cfg_.seed, epoch_seed_));
    for (std::size_t i = order_.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order_[i - 1], order_[j]);
    }
}

std::size_t BatchIterator::batch_count() const
{
    return (order_.size() + static_cast<std::size_t>(batch_size_) - 1) / static_cast<std::size_t>(batch_size_);
}

void BatchIterator::skip(std::size_t batches)
{
    cursor_ = std::min(order_.size(), cursor_ + batches * static_cast<std::size_t>(batch_size_));
}

std::optional<Batch> BatchIterator::next()
{
    const int s = cfg_.target_size;
    const auto labels = static_cast<Index>(manifest_.classes.size());
    while (cursor_ < order_.size()) {
        const std::size_t begin = cursor_;
        const std::size_t end = std::min(order_.size(), begin + static_cast<std::size_t>(batch_size_));
        cursor_ = end;
        const std::size_t count = end - begin;

        Tensor4<float> staging(static_cast<Index>(count), 3, s, s);
        std::vector<char> ok(count, 0);
        const auto work = [&](std::size_t first, std::size_t last) {
            for (std::size_t k = first; k < last; ++k) {
                const std::size_t index = order_[begin + k];
                const Sample& sample = manifest_.samples[index];
                std::shared_ptr<const RgbImage> prepared;
                if (cache_) {
                    prepared = cache_->get(index, sample, cfg_);
                } else {
                    try {
                        prepared = std::make_shared<const RgbImage>(
                            prepare_source(decode_image(sample.path), cfg_, sample.path.string()));
                    } catch (const ImageError&) {
                    }
                }
                if (!prepared) continue;
                Rng rng(mix_seed(mix_seed(cfg_.seed, epoch_seed_), begin + k));
                augment_prepared(*prepared, cfg_, rng, staging, static_cast<Index>(k));
                ok[k] = 1;
            }
        };
        if (workers_ == 1 || count < 2) {
            work(0, count);
        } else {
            std::vector<std::thread> pool;
            const std::size_t chunk = (count + workers_ - 1) / workers_;
            for (std::size_t first = 0; first < count; first += chunk) {
                pool.emplace_back(work, first, std::min(count, first + chunk));
            }
            for (auto& t : pool) t.join();
        }

        const auto kept = static_cast<Index>(std::count(ok.begin(), ok.end(), 1));
        skipped_ += count - static_cast<std::size_t>(kept);
        if (kept == 0) continue;
        Batch batch;
        batch.images = Tensor4<float>(kept, 3, s, s);
        batch.labels = LabelBatch<float>::Zero(kept, labels);
        Index row = 0;
        for (std::size_t k = 0; k < count; ++k) {
            if (!ok[k]) continue;
            const std::size_t index = order_[begin + k];
            batch.images.sample(row) = staging.sample(static_cast<Index>(k));
            batch.labels(row, manifest_.samples[index].class_index) = 1.0f;
            batch.sample_indices.push_back(index);
            ++row;
        }
        return batch;
    }
    return std::nullopt;
}

} // namespace citygan
