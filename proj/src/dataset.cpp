#include "citygan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <zlib.h>

#include "citygan/image.hpp"

namespace citygan {

namespace fs = std::filesystem;

namespace {

bool has_image_extension(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string strip_cr(std::string s)
{
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

std::optional<double> parse_number(const std::string& s)
{
    double v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return v;
}

std::string format_number(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void sort_samples(std::vector<Sample>& samples)
{
    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.path.string() < b.path.string(); });
}

int probe_source_size(const std::vector<Sample>& samples)
{
    for (const auto& s : samples) {
        try {
            const RgbImage img = decode_image(s.path);
            return std::min(img.width, img.height);
        } catch (const ImageError&) {
        }
    }
    return 0;
}

void note_unreadable(ScanReport* report, const fs::path& p)
{
    if (!report) return;
    ++report->unreadable;
    report->unreadable_paths.push_back(p);
}

DatasetManifest scan_folders(const fs::path& root, ScanReport* report)
{
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DatasetError("no class directories under " + root.string());

    DatasetManifest manifest;
    std::vector<std::string> empty_classes;
    for (const auto& dir : class_dirs) {
        const int index = static_cast<int>(manifest.classes.size());
        manifest.classes.push_back(dir.filename().string());
        std::size_t found = 0;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || !has_image_extension(entry.path())) continue;
            if (!is_readable_image(entry.path())) {
                note_unreadable(report, entry.path());
                continue;
            }
            manifest.samples.push_back({entry.path(), index, {}});
            ++found;
        }
        if (found == 0) empty_classes.push_back(dir.filename().string());
    }
    if (!empty_classes.empty()) {
        std::string msg = "empty class directory:";
        for (const auto& c : empty_classes) msg += " " + c;
        throw DatasetError(msg);
    }
    sort_samples(manifest.samples);
    return manifest;
}

DatasetManifest scan_flat(const fs::path& root, ScanReport* report)
{
    const fs::path index_path = root / "index.tsv";
    std::ifstream is(index_path);
    if (!is) throw DatasetError("cannot open " + index_path.string());

    struct Row {
        fs::path path;
        std::string cls;
        Metadata metadata;
    };
    std::vector<Row> rows;
    std::vector<std::string> header{"path", "class", "altitude_degrees"};
    std::string line;
    bool first = true;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (first) {
            first = false;
            if (!fields.empty() && fields[0] == "path") {
                header = fields;
                continue;
            }
        }
        if (fields.size() < 2) {
            throw DatasetError(index_path.string() + ":" + std::to_string(line_no) + ": expected path and class");
        }
        Row row{root / fields[0], fields[1], {}};
        for (std::size_t i = 2; i < fields.size() && i < header.size(); ++i) {
            if (auto v = parse_number(fields[i])) row.metadata[header[i]] = *v;
        }
        rows.push_back(std::move(row));
    }

    std::set<std::string> names;
    for (const auto& r : rows) names.insert(r.cls);
    DatasetManifest manifest;
    manifest.classes.assign(names.begin(), names.end());
    if (manifest.classes.empty()) throw DatasetError("index lists no samples: " + index_path.string());
    for (auto& r : rows) {
        if (!fs::is_regular_file(r.path) || !is_readable_image(r.path)) {
            note_unreadable(report, r.path);
            continue;
        }
        const auto it = std::lower_bound(manifest.classes.begin(), manifest.classes.end(), r.cls);
        manifest.samples.push_back({r.path, static_cast<int>(it - manifest.classes.begin()), std::move(r.metadata)});
    }
    sort_samples(manifest.samples);
    return manifest;
}

} // namespace

DatasetLayout detect_layout(const fs::path& root)
{
    return fs::exists(root / "index.tsv") ? DatasetLayout::FlatWithMetadata : DatasetLayout::FolderPerClass;
}

DatasetManifest scan_dataset(const fs::path& root, DatasetLayout layout, ScanReport* report)
{
    if (!fs::is_directory(root)) throw DatasetError("dataset root is not a directory: " + root.string());
    DatasetManifest manifest =
        layout == DatasetLayout::FolderPerClass ? scan_folders(root, report) : scan_flat(root, report);
    manifest.source_image_size = probe_source_size(manifest.samples);
    return manifest;
}

void DatasetManifest::validate() const
{
    if (classes.empty()) throw DatasetError("manifest has no classes");
    std::set<std::string> unique(classes.begin(), classes.end());
    if (unique.size() != classes.size()) throw DatasetError("manifest class list has duplicates");
    for (const auto& s : samples) {
        if (s.class_index < 0 || s.class_index >= static_cast<int>(classes.size())) {
            throw DatasetError("sample " + s.path.string() + " has class index " + std::to_string(s.class_index) +
                               " outside [0, " + std::to_string(classes.size()) + ")");
        }
        if (!fs::exists(s.path)) throw DatasetError("sample file does not exist: " + s.path.string());
    }
}

std::uint32_t DatasetManifest::digest() const
{
    std::ostringstream os;
    write_manifest(*this, os);
    const std::string text = os.str();
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
}

FilterResult filter_manifest(const DatasetManifest& manifest, const SamplePredicate& predicate)
{
    FilterResult result;
    result.manifest.classes = manifest.classes;
    result.manifest.source_image_size = manifest.source_image_size;
    for (const auto& s : manifest.samples) {
        const std::optional<bool> keep = predicate(s);
        if (!keep) {
            ++result.missing_metadata;
            continue;
        }
        if (*keep) result.manifest.samples.push_back(s);
    }
    return result;
}

SamplePredicate metadata_between(std::string key, double min, double max)
{
    return [key = std::move(key), min, max](const Sample& s) -> std::optional<bool> {
        const auto it = s.metadata.find(key);
        if (it == s.metadata.end()) return std::nullopt;
        return it->second >= min && it->second <= max;
    };
}

LabelVector encode_label(int class_index, int label_count)
{
    if (class_index < 0 || class_index >= label_count) {
        throw std::out_of_range("class index " + std::to_string(class_index) + " outside [0, " +
                                std::to_string(label_count) + ")");
    }
    LabelVector v = LabelVector::Zero(label_count);
    v[class_index] = 1.0;
    return v;
}

void write_manifest(const DatasetManifest& manifest, std::ostream& os)
{
    for (std::size_t i = 0; i < manifest.classes.size(); ++i) os << (i ? "\t" : "") << manifest.classes[i];
    os << '\n';
    for (const auto& s : manifest.samples) {
        os << s.path.string() << '\t' << s.class_index;
        for (const auto& [k, v] : s.metadata) os << '\t' << k << '=' << format_number(v);
        os << '\n';
    }
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path)
{
    std::ofstream os(path);
    write_manifest(manifest, os);
    if (!os) throw DatasetError("cannot write manifest " + path.string());
}

DatasetManifest read_manifest(std::istream& is)
{
    DatasetManifest manifest;
    std::string line;
    if (!std::getline(is, line)) throw DatasetError("manifest is empty");
    manifest.classes = split(strip_cr(line), '\t');
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split(line, '\t');
        const auto index = fields.size() >= 2 ? parse_number(fields[1]) : std::nullopt;
        if (!index) throw DatasetError("manifest line " + std::to_string(line_no) + ": expected path and class index");
        Sample s{fields[0], static_cast<int>(*index), {}};
        for (std::size_t i = 2; i < fields.size(); ++i) {
            const auto eq = fields[i].find('=');
            const auto value = eq == std::string::npos ? std::nullopt : parse_number(fields[i].substr(eq + 1));
            if (!value) throw DatasetError("manifest line " + std::to_string(line_no) + ": bad metadata field");
            s.metadata[fields[i].substr(0, eq)] = *value;
        }
        manifest.samples.push_back(std::move(s));
    }
    return manifest;
}

DatasetManifest load_manifest(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) throw DatasetError("cannot open manifest " + path.string());
    return read_manifest(is);
}

} // namespace citygan
