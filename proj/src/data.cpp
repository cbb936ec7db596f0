#include "ttnmtl/data.hpp"

#include "ttnmtl/errors.hpp"
#include "ttnmtl/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

namespace ttnmtl {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMagic = "TTNMTL01";

} // namespace

Tensor TaskData::images(std::span<const std::size_t> indices) const {
    const std::size_t px = height * width;
    Tensor out({indices.size(), height, width, 1});
    auto dst = out.mutable_data();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const std::size_t i = indices[b];
        if (i >= size()) throw InvalidArgument("example index out of range in task " + name);
        for (std::size_t k = 0; k < px; ++k) dst[b * px + k] = pixels[i * px + k] / 255.0;
    }
    return out;
}

std::vector<std::size_t> TaskData::labels_at(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels.at(i));
    return out;
}

TaskData TaskData::subset(std::span<const std::size_t> indices) const {
    const std::size_t px = height * width;
    TaskData out{name, height, width, class_count, {}, {}};
    out.pixels.reserve(indices.size() * px);
    for (auto i : indices) {
        if (i >= size()) throw InvalidArgument("example index out of range in task " + name);
        out.pixels.insert(out.pixels.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * px),
                          pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * px));
        out.labels.push_back(labels[i]);
    }
    return out;
}

void TaskData::validate() const {
    if (height == 0 || width == 0) throw InvalidArgument("task " + name + ": image size must be positive");
    if (class_count == 0) throw InvalidArgument("task " + name + ": class count must be positive");
    if (pixels.size() != labels.size() * height * width)
        throw InvalidArgument("task " + name + ": pixel buffer does not match example count");
    std::vector<bool> seen(class_count, false);
    for (auto l : labels) {
        if (l >= class_count) throw InvalidArgument("task " + name + ": label out of range");
        seen[l] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw InvalidArgument("task " + name + ": every class needs at least one example");
}

Dims MultiTaskDataset::image_shape() const {
    if (tasks.empty()) throw InvalidArgument("dataset has no tasks");
    return {tasks.front().height, tasks.front().width, 1};
}

void MultiTaskDataset::validate() const {
    if (tasks.empty()) throw InvalidArgument("dataset has no tasks");
    for (const auto& t : tasks) {
        t.validate();
        if (t.height != tasks.front().height || t.width != tasks.front().width)
            throw InvalidArgument("task " + t.name + ": image size differs from task " + tasks.front().name);
    }
}

std::size_t stratified_train_count(double fraction, std::size_t n) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("train fraction must lie in (0,1)");
    const auto rounded = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    const std::size_t count = std::max<std::size_t>(1, rounded);
    if (count >= n)
        throw InvalidArgument("a class with " + std::to_string(n) + " examples leaves no test example at train fraction " +
                              std::to_string(fraction));
    return count;
}

DatasetSplit split(const MultiTaskDataset& ds, const SplitSpec& spec) {
    ds.validate();
    DatasetSplit out;
    for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
        const TaskData& task = ds.tasks[t];
        Rng rng(derive_seed(spec.seed, t));
        TaskSplit s;
        for (std::size_t c = 0; c < task.class_count; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < task.size(); ++i)
                if (task.labels[i] == c) members.push_back(i);
            const std::size_t n_train = stratified_train_count(spec.train_fraction, members.size());
            rng.shuffle(std::span(members));
            s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
            s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
        }
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.test.begin(), s.test.end());
        out.train.tasks.push_back(task.subset(s.train));
        out.test.tasks.push_back(task.subset(s.test));
        out.indices.push_back(std::move(s));
    }
    return out;
}

void SynthConfig::validate() const {
    if (tasks < 1) throw InvalidArgument("synthetic data needs at least one task");
    if (classes < 2) throw InvalidArgument("synthetic data needs at least two classes");
    if (side < 1 || side > 65535) throw InvalidArgument("image side out of range");
    if (!(sharedness >= 0.0 && sharedness <= 1.0)) throw InvalidArgument("sharedness must lie in [0,1]");
    if (examples_per_class < 1) throw InvalidArgument("need at least one example per class");
    if (!(noise >= 0.0)) throw InvalidArgument("noise level must be nonnegative");
    if (!(template_low >= 0.0 && template_low <= template_high && template_high <= 1.0))
        throw InvalidArgument("template range must satisfy 0 <= low <= high <= 1");
}

Tensor synth_templates(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t px = cfg.side * cfg.side;
    Rng shared_rng(derive_seed(cfg.seed, 0));
    std::vector<double> shared(cfg.classes * px);
    for (auto& v : shared) v = shared_rng.uniform(cfg.template_low, cfg.template_high);

    Tensor out({cfg.tasks, cfg.classes, cfg.side, cfg.side});
    auto dst = out.mutable_data();
    for (std::size_t t = 0; t < cfg.tasks; ++t) {
        Rng private_rng(derive_seed(cfg.seed, 1 + t));
        for (std::size_t k = 0; k < cfg.classes * px; ++k) {
            const double own = private_rng.uniform(cfg.template_low, cfg.template_high);
            dst[t * cfg.classes * px + k] = cfg.sharedness * shared[k] + (1.0 - cfg.sharedness) * own;
        }
    }
    return out;
}

MultiTaskDataset synth_tasks(const SynthConfig& cfg) {
    const Tensor templates = synth_templates(cfg);
    const std::size_t px = cfg.side * cfg.side;
    MultiTaskDataset ds;
    for (std::size_t t = 0; t < cfg.tasks; ++t) {
        Rng noise_rng(derive_seed(cfg.seed, 1000 + t));
        TaskData task{"task" + std::to_string(t), cfg.side, cfg.side, cfg.classes, {}, {}};
        task.pixels.reserve(cfg.classes * cfg.examples_per_class * px);
        for (std::size_t c = 0; c < cfg.classes; ++c)
            for (std::size_t e = 0; e < cfg.examples_per_class; ++e) {
                const std::size_t base = (t * cfg.classes + c) * px;
                for (std::size_t k = 0; k < px; ++k) {
                    const double v = std::clamp(templates[base + k] + cfg.noise * noise_rng.normal(), 0.0, 1.0);
                    task.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
                }
                task.labels.push_back(c);
            }
        ds.tasks.push_back(std::move(task));
    }
    return ds;
}

namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string pgm_token(const std::vector<char>& buf, std::size_t& pos, const fs::path& file) {
    for (;;) {
        while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
        if (pos < buf.size() && buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    std::string tok;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])) && buf[pos] != '#')
        tok += buf[pos++];
    if (tok.empty()) throw ParseError(file.string() + ": truncated PGM header");
    return tok;
}

std::size_t pgm_number(const std::string& tok, const fs::path& file) {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
        tok.size() > 9)
        throw ParseError(file.string() + ": malformed PGM header field '" + tok + "'");
    return std::stoul(tok);
}

std::vector<char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

std::vector<fs::path> sorted_children(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

PgmImage read_pgm(const fs::path& file) {
    const std::vector<char> buf = read_file(file);
    std::size_t pos = 0;
    if (pgm_token(buf, pos, file) != "P5") throw ParseError(file.string() + ": not a binary PGM (P5) file");
    PgmImage img;
    img.width = pgm_number(pgm_token(buf, pos, file), file);
    img.height = pgm_number(pgm_token(buf, pos, file), file);
    const std::size_t maxval = pgm_number(pgm_token(buf, pos, file), file);
    if (img.width == 0 || img.height == 0) throw ParseError(file.string() + ": PGM with zero size");
    if (maxval == 0 || maxval > 255) throw ParseError(file.string() + ": only 8-bit PGM is supported");
    if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
        throw ParseError(file.string() + ": missing whitespace after PGM header");
    ++pos;
    const std::size_t n = img.width * img.height;
    if (buf.size() - pos < n) throw ParseError(file.string() + ": truncated PGM pixel data");
    img.pixels.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto v = static_cast<unsigned char>(buf[pos + k]);
        if (v > maxval) throw ParseError(file.string() + ": pixel exceeds maxval");
        img.pixels[k] = maxval == 255 ? v : static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
    }
    return img;
}

void write_pgm(const fs::path& file, const PgmImage& image) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("error writing " + file.string());
}

MultiTaskDataset import_pgm_tree(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
    MultiTaskDataset ds;
    std::size_t height = 0, width = 0;
    for (const auto& task_dir : sorted_children(root, true)) {
        TaskData task{task_dir.filename().string(), 0, 0, 0, {}, {}};
        const auto class_dirs = sorted_children(task_dir, true);
        for (std::size_t c = 0; c < class_dirs.size(); ++c) {
            for (const auto& file : sorted_children(class_dirs[c], false)) {
                if (file.extension() != ".pgm") continue;
                PgmImage img = read_pgm(file);
                if (height == 0) {
                    height = img.height;
                    width = img.width;
                }
                if (img.height != height || img.width != width)
                    throw InvalidArgument(file.string() + ": image is " + std::to_string(img.width) + "x" +
                                          std::to_string(img.height) + ", expected " + std::to_string(width) + "x" +
                                          std::to_string(height));
                task.pixels.insert(task.pixels.end(), img.pixels.begin(), img.pixels.end());
                task.labels.push_back(c);
            }
        }
        task.height = height;
        task.width = width;
        task.class_count = class_dirs.size();
        ds.tasks.push_back(std::move(task));
    }
    ds.validate();
    return ds;
}

namespace {

class ByteWriter {
public:
    void u16(std::uint64_t v) { put(v, 2); }
    void u32(std::uint64_t v) { put(v, 4); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}
    std::uint64_t u16() { return get(2); }
    std::uint64_t u32() { return get(4); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw ParseError("dataset file is truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_dataset(const MultiTaskDataset& ds) {
    if (ds.tasks.empty()) throw InvalidArgument("refusing to save a dataset with no tasks");
    ds.validate();
    ByteWriter w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(ds.tasks.size());
    for (const auto& t : ds.tasks) {
        if (t.name.size() > 0xFFFF) throw InvalidArgument("task name too long: " + t.name);
        if (t.height > 0xFFFF || t.width > 0xFFFF) throw InvalidArgument("image too large for dataset format");
        w.u16(t.name.size());
        w.bytes(t.name.data(), t.name.size());
        w.u32(t.class_count);
        w.u32(t.size());
        w.u16(t.height);
        w.u16(t.width);
        const std::size_t px = t.height * t.width;
        for (std::size_t i = 0; i < t.size(); ++i) {
            w.u32(t.labels[i]);
            w.bytes(t.pixels.data() + i * px, px);
        }
    }
    return w.take();
}

MultiTaskDataset decode_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto magic = r.bytes(kMagic.size());
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw ParseError("dataset file has wrong magic");
    MultiTaskDataset ds;
    const std::size_t task_count = r.u32();
    for (std::size_t k = 0; k < task_count; ++k) {
        TaskData t;
        auto name = r.bytes(r.u16());
        t.name.assign(name.begin(), name.end());
        t.class_count = r.u32();
        const std::size_t examples = r.u32();
        t.height = r.u16();
        t.width = r.u16();
        const std::size_t px = t.height * t.width;
        for (std::size_t i = 0; i < examples; ++i) {
            t.labels.push_back(r.u32());
            auto pix = r.bytes(px);
            t.pixels.insert(t.pixels.end(), pix.begin(), pix.end());
        }
        ds.tasks.push_back(std::move(t));
    }
    if (!r.done()) throw ParseError("dataset file has trailing bytes");
    try {
        ds.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("dataset file is inconsistent: ") + e.what());
    }
    return ds;
}

void save_dataset(const MultiTaskDataset& ds, const fs::path& path) {
    const auto bytes = encode_dataset(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + path.string());
}

MultiTaskDataset load_dataset(const fs::path& path) {
    const auto raw = read_file(path);
    std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
    return decode_dataset(bytes);
}

} // namespace ttnmtl
