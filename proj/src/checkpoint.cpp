#include "citygan/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace citygan {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic{'C', 'I', 'T', 'Y', 'G', 'A', 'N', 0};

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }

    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    void raw(const std::uint8_t* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }

    template <typename Derived>
    void matrix(const Eigen::DenseBase<Derived>& m)
    {
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        for (Index j = 0; j < m.cols(); ++j) {
            for (Index i = 0; i < m.rows(); ++i) f32(static_cast<float>(m(i, j)));
        }
    }

    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end)
        : bytes_(bytes), pos_(begin), end_(end)
    {
    }

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == end_; }

    std::uint8_t u8()
    {
        need(1);
        return bytes_[pos_++];
    }

    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_++]) << (8 * i);
        return v;
    }

    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_++]) << (8 * i);
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str()
    {
        const std::uint32_t n = u32();
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }

    std::vector<std::uint8_t> raw(std::size_t n)
    {
        need(n);
        std::vector<std::uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    Matrix<float> matrix()
    {
        const std::size_t at = pos_;
        const std::uint32_t rows = u32();
        const std::uint32_t cols = u32();
        if (std::uint64_t(rows) * cols * 4 > end_ - pos_) fail(at, "matrix extends past end of data");
        Matrix<float> m(rows, cols);
        for (Index j = 0; j < m.cols(); ++j) {
            for (Index i = 0; i < m.rows(); ++i) m(i, j) = f32();
        }
        return m;
    }

    [[noreturn]] static void fail(std::size_t at, const std::string& what)
    {
        throw CheckpointError("corrupt checkpoint at offset " + std::to_string(at) + ": " + what);
    }

private:
    void need(std::size_t n) const
    {
        if (end_ - pos_ < n) fail(pos_, "unexpected end of data");
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_;
    std::size_t end_;
};

std::uint32_t crc(const std::uint8_t* data, std::size_t n)
{
    return static_cast<std::uint32_t>(crc32(0L, data, static_cast<uInt>(n)));
}

void write_config(ByteWriter& w, const TrainConfig& c)
{
    w.u8(static_cast<std::uint8_t>(c.network.variant));
    w.i32(c.network.image_size);
    w.i32(c.network.label_count);
    w.i32(c.network.noise_dim);
    w.i32(c.network.base_feature_maps);
    w.f64(c.learning_rate);
    w.f64(c.beta1);
    w.f64(c.beta2);
    w.i32(c.batch_size);
    w.i64(c.total_steps);
    w.i64(c.eval_every);
    w.i64(c.checkpoint_every);
    w.u64(c.seed);
    w.f64(c.crop_fraction);
    w.f64(c.flip_probability);
    w.i32(c.eval_columns);
}

TrainConfig read_config(ByteReader& r)
{
    TrainConfig c;
    const std::size_t at = r.offset();
    const std::uint8_t variant = r.u8();
    if (variant > static_cast<std::uint8_t>(Variant::Broadcast)) ByteReader::fail(at, "unknown architecture");
    c.network.variant = static_cast<Variant>(variant);
    c.network.image_size = r.i32();
    c.network.label_count = r.i32();
    c.network.noise_dim = r.i32();
    c.network.base_feature_maps = r.i32();
    c.learning_rate = r.f64();
    c.beta1 = r.f64();
    c.beta2 = r.f64();
    c.batch_size = r.i32();
    c.total_steps = r.i64();
    c.eval_every = r.i64();
    c.checkpoint_every = r.i64();
    c.seed = r.u64();
    c.crop_fraction = r.f64();
    c.flip_probability = r.f64();
    c.eval_columns = r.i32();
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        ByteReader::fail(at, std::string("invalid configuration: ") + e.what());
    }
    return c;
}

template <typename Net>
void write_network(ByteWriter& w, Net& net)
{
    const auto params = net.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        w.str(p->name);
        w.matrix(p->value);
    }
    const auto buffers = net.buffers();
    w.u32(static_cast<std::uint32_t>(buffers.size()));
    for (const auto* b : buffers) w.matrix(*b);
}

template <typename Net>
void read_network(ByteReader& r, Net& net)
{
    const auto params = net.parameters();
    std::size_t at = r.offset();
    if (r.u32() != params.size()) ByteReader::fail(at, "parameter count does not match the architecture");
    for (auto* p : params) {
        at = r.offset();
        const std::string name = r.str();
        if (name != p->name) ByteReader::fail(at, "expected parameter " + p->name + ", found " + name);
        at = r.offset();
        Matrix<float> m = r.matrix();
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
            ByteReader::fail(at, "parameter " + name + " has the wrong shape");
        }
        p->value = std::move(m);
    }
    const auto buffers = net.buffers();
    at = r.offset();
    if (r.u32() != buffers.size()) ByteReader::fail(at, "buffer count does not match the architecture");
    for (auto* b : buffers) {
        at = r.offset();
        Matrix<float> m = r.matrix();
        if (m.cols() != 1 || m.rows() != b->size()) ByteReader::fail(at, "buffer has the wrong shape");
        *b = m.col(0);
    }
}

void write_adam(ByteWriter& w, const Adam<float>& opt)
{
    w.i64(opt.steps());
    w.u32(static_cast<std::uint32_t>(opt.first_moments().size()));
    for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
        w.matrix(opt.first_moments()[i]);
        w.matrix(opt.second_moments()[i]);
    }
}

void read_adam(ByteReader& r, Adam<float>& opt)
{
    opt.set_steps(r.i64());
    std::size_t at = r.offset();
    if (r.u32() != opt.first_moments().size()) ByteReader::fail(at, "optimizer state does not match");
    for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
        for (auto* target : {&opt.first_moments()[i], &opt.second_moments()[i]}) {
            at = r.offset();
            Matrix<float> m = r.matrix();
            if (m.rows() != target->rows() || m.cols() != target->cols()) {
                ByteReader::fail(at, "optimizer moment has the wrong shape");
            }
            *target = std::move(m);
        }
    }
}

/// Checks magic, version and digest; returns the payload bounds.
std::pair<std::size_t, std::size_t> open_container(const std::vector<std::uint8_t>& bytes)
{
    constexpr std::size_t header = kMagic.size() + 4;
    if (bytes.size() < header + 4) {
        throw CheckpointError("corrupt checkpoint at offset " + std::to_string(bytes.size()) + ": file too short");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw CheckpointError("not a checkpoint: bad magic at offset 0");
    }
    ByteReader head(bytes, kMagic.size(), header);
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected version " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t trailer = bytes.size() - 4;
    ByteReader tail(bytes, trailer, bytes.size());
    if (tail.u32() != crc(bytes.data(), trailer)) {
        throw CheckpointError("corrupt checkpoint at offset " + std::to_string(trailer) + ": digest mismatch");
    }
    return {header, trailer};
}

} // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state)
{
    ByteWriter w;
    w.raw(kMagic.data(), kMagic.size());
    w.u32(kCheckpointVersion);
    write_config(w, state.config);
    w.u32(static_cast<std::uint32_t>(state.classes.size()));
    for (const auto& c : state.classes) w.str(c);
    w.i64(state.step);
    w.i64(state.epoch);
    w.i64(state.batch_in_epoch);
    w.u32(state.manifest_digest);
    w.str(state.rng.serialize());
    // parameters() / buffers() are logically const here
    auto& mutable_state = const_cast<TrainState&>(state);
    write_network(w, mutable_state.generator);
    write_network(w, mutable_state.discriminator);
    write_adam(w, state.generator_opt);
    write_adam(w, state.discriminator_opt);
    w.matrix(state.fixed_noise);
    w.u64(state.history.size());
    for (const auto& m : state.history) {
        w.i64(m.step);
        w.f64(m.d_loss_real);
        w.f64(m.d_loss_fake);
        w.f64(m.g_loss);
        w.f64(m.d_real_mean);
        w.f64(m.d_fake_mean);
    }
    w.i32(state.last_grid.width);
    w.i32(state.last_grid.height);
    w.u64(state.last_grid.pixels.size());
    w.raw(state.last_grid.pixels.data(), state.last_grid.pixels.size());
    w.u32(crc(w.bytes().data(), w.bytes().size()));
    return std::move(w.bytes());
}

TrainState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    const auto [begin, end] = open_container(bytes);
    ByteReader r(bytes, begin, end);
    const TrainConfig config = read_config(r);
    std::vector<std::string> classes(r.u32());
    for (auto& c : classes) c = r.str();
    TrainState state = TrainState::initialize(config, std::move(classes));
    state.step = r.i64();
    state.epoch = r.i64();
    state.batch_in_epoch = r.i64();
    state.manifest_digest = r.u32();
    std::size_t at = r.offset();
    try {
        state.rng.deserialize(r.str());
    } catch (const std::runtime_error&) {
        ByteReader::fail(at, "invalid RNG state");
    }
    read_network(r, state.generator);
    read_network(r, state.discriminator);
    read_adam(r, state.generator_opt);
    read_adam(r, state.discriminator_opt);
    at = r.offset();
    state.fixed_noise = r.matrix();
    if (state.fixed_noise.rows() != config.eval_columns || state.fixed_noise.cols() != config.network.noise_dim) {
        ByteReader::fail(at, "fixed noise has the wrong shape");
    }
    const std::uint64_t history = r.u64();
    for (std::uint64_t i = 0; i < history; ++i) {
        StepMetrics m;
        m.step = r.i64();
        m.d_loss_real = r.f64();
        m.d_loss_fake = r.f64();
        m.g_loss = r.f64();
        m.d_real_mean = r.f64();
        m.d_fake_mean = r.f64();
        state.history.push_back(m);
    }
    state.last_grid.width = r.i32();
    state.last_grid.height = r.i32();
    at = r.offset();
    const std::uint64_t pixels = r.u64();
    if (pixels != std::uint64_t(std::max(0, state.last_grid.width)) * std::max(0, state.last_grid.height) * 3) {
        ByteReader::fail(at, "grid size does not match its dimensions");
    }
    state.last_grid.pixels = r.raw(pixels);
    if (!r.at_end()) ByteReader::fail(r.offset(), "trailing bytes before digest");
    return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path)
{
    const auto bytes = serialize_checkpoint(state);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) {
        throw CheckpointError("cannot write checkpoint " + path.string() + " at step " + std::to_string(state.step));
    }
}

TrainState load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

LoadedModel load_model(const std::filesystem::path& path)
{
    TrainState state = load_checkpoint(path);
    return LoadedModel{std::move(state.generator), std::move(state.classes), state.step, state.config};
}

} // namespace citygan
