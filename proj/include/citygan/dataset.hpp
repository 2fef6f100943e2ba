#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "citygan/tensor.hpp"

namespace citygan {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Metadata = std::map<std::string, double>;

struct Sample {
    std::filesystem::path path;
    int class_index = 0;
    Metadata metadata;

    bool operator==(const Sample&) const = default;
};

struct DatasetManifest {
    std::vector<std::string> classes;
    std::vector<Sample> samples;
    /// Shorter edge of the first readable image, 0 if not probed.
    int source_image_size = 0;

    /// Throws DatasetError on a bad class list, an out-of-range class index, or a missing file.
    void validate() const;

    /// CRC-32 over the serialized manifest; stored in checkpoints.
    std::uint32_t digest() const;

    bool operator==(const DatasetManifest&) const = default;
};

enum class DatasetLayout {
    FolderPerClass,    ///< root/<city>/<image>
    FlatWithMetadata,  ///< root/<image> plus root/index.tsv (path, class, altitude_degrees)
};

struct ScanReport {
    std::size_t unreadable = 0;
    std::vector<std::filesystem::path> unreadable_paths;
};

/// Builds a manifest with classes and samples in lexicographic order.
DatasetManifest scan_dataset(const std::filesystem::path& root, DatasetLayout layout, ScanReport* report = nullptr);

/// FlatWithMetadata when root/index.tsv exists, FolderPerClass otherwise.
DatasetLayout detect_layout(const std::filesystem::path& root);

/// Returns true/false for a decision, or nullopt when a key it needs is missing.
using SamplePredicate = std::function<std::optional<bool>(const Sample&)>;

struct FilterResult {
    DatasetManifest manifest;
    std::size_t missing_metadata = 0;
};

FilterResult filter_manifest(const DatasetManifest& manifest, const SamplePredicate& predicate);

/// Inclusive range test on a metadata key.
SamplePredicate metadata_between(std::string key, double min, double max);

inline SamplePredicate altitude_between(double min_degrees, double max_degrees)
{
    return metadata_between("altitude_degrees", min_degrees, max_degrees);
}

/// One-hot vector of length `label_count`.
LabelVector encode_label(int class_index, int label_count);

// Line-oriented text format: first line is the tab-separated class list,
// then one record per sample: path, class index, key=value metadata fields.
void write_manifest(const DatasetManifest& manifest, std::ostream& os);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(std::istream& is);
DatasetManifest load_manifest(const std::filesystem::path& path);

} // namespace citygan
