#pragma once

#include "ttnmtl/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ttnmtl {

/// One classification task: monochrome 8-bit images and class labels.
/// Pixels are stored as bytes and exposed as doubles in [0,1] (value / 255).
struct TaskData {
    std::string name;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t class_count = 0;
    std::vector<std::uint8_t> pixels;  // example-major, then row-major H x W
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }

    /// Images at `indices` as a B x H x W x 1 tensor in [0,1].
    Tensor images(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> labels_at(std::span<const std::size_t> indices) const;

    /// Subset of examples, same class_count.
    TaskData subset(std::span<const std::size_t> indices) const;

    /// Throws InvalidArgument if labels/pixels are inconsistent or a class has no example.
    void validate() const;

    bool operator==(const TaskData&) const = default;
};

struct MultiTaskDataset {
    std::vector<TaskData> tasks;

    std::size_t task_count() const noexcept { return tasks.size(); }
    /// Per-example shape {H, W, 1}.
    Dims image_shape() const;
    /// Validates every task and the shared image size.
    void validate() const;

    bool operator==(const MultiTaskDataset&) const = default;
};

struct SplitSpec {
    double train_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct TaskSplit {
    std::vector<std::size_t> train;  // ascending example indices
    std::vector<std::size_t> test;
};

struct DatasetSplit {
    MultiTaskDataset train;
    MultiTaskDataset test;
    std::vector<TaskSplit> indices;
};

/// Training examples taken from a class of n examples.
/// max(1, round(fraction * n)); InvalidArgument if that leaves no test example.
std::size_t stratified_train_count(double fraction, std::size_t n);

/// Per-task, per-class stratified random split; deterministic in spec.seed.
DatasetSplit split(const MultiTaskDataset& ds, const SplitSpec& spec);

struct SynthConfig {
    std::size_t tasks = 5;
    std::size_t classes = 4;
    std::size_t side = 16;
    double sharedness = 0.8;
    std::size_t examples_per_class = 40;
    double noise = 0.3;
    // Template pixels are drawn uniformly from [template_low, template_high].
    double template_low = 0.0;
    double template_high = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Class templates, dims {T, C, side, side}:
/// sharedness * shared[c] + (1 - sharedness) * private[t][c].
Tensor synth_templates(const SynthConfig& cfg);

/// Noisy examples (template + N(0, noise^2), clipped to [0,1], quantized to
/// 8 bits) grouped by class.
MultiTaskDataset synth_tasks(const SynthConfig& cfg);

/// Reads root/<task>/<class>/<image>.pgm (binary P5). Tasks, classes and
/// images are taken in lexicographic order.
MultiTaskDataset import_pgm_tree(const std::filesystem::path& root);

/// Decodes one binary PGM; pixel values are rescaled to 0..255 if maxval differs.
struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};
PgmImage read_pgm(const std::filesystem::path& file);
void write_pgm(const std::filesystem::path& file, const PgmImage& image);

/// Binary dataset file, little-endian:
///   "TTNMTL01", u32 T, then per task
///   u16 name_len, name bytes, u32 class_count, u32 example_count, u16 H, u16 W,
///   example_count x (u32 label, H*W u8 pixels)
std::vector<std::uint8_t> encode_dataset(const MultiTaskDataset& ds);
MultiTaskDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const MultiTaskDataset& ds, const std::filesystem::path& path);
MultiTaskDataset load_dataset(const std::filesystem::path& path);

} // namespace ttnmtl
