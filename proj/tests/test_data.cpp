#include "oracles.hpp"
#include "ttnmtl/data.hpp"
#include "ttnmtl/errors.hpp"
#include "ttnmtl/linalg.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace ttnmtl;
namespace fs = std::filesystem;

namespace {

TaskData counting_task(std::size_t classes, std::size_t per_class, std::string name = "t") {
    TaskData t;
    t.name = std::move(name);
    t.height = 2;
    t.width = 3;
    t.class_count = classes;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t k = 0; k < per_class; ++k) {
            t.labels.push_back(c);
            for (std::size_t p = 0; p < 6; ++p) t.pixels.push_back(static_cast<std::uint8_t>((c * 31 + k * 7 + p) % 256));
        }
    return t;
}

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("ttnmtl_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void write_bytes(const fs::path& p, const std::string& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

std::string pgm(std::size_t w, std::size_t h, unsigned maxval, std::uint8_t fill) {
    std::string s = "P5\n# made by a test\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                    std::to_string(maxval) + "\n";
    s.append(w * h, static_cast<char>(fill));
    return s;
}

// Leave-task-out nearest class mean: each task's test images are classified
// against class means built only from the other tasks' training images. This
// only beats chance when class templates carry over between tasks.
double leave_task_out_accuracy(const DatasetSplit& s) {
    const auto& first = s.train.tasks.front();
    const std::size_t pixels = first.height * first.width, classes = first.class_count;
    std::size_t correct = 0, total = 0;
    for (std::size_t held = 0; held < s.test.tasks.size(); ++held) {
        std::vector<double> means(classes * pixels, 0.0);
        std::vector<std::size_t> counts(classes, 0);
        for (std::size_t k = 0; k < s.train.tasks.size(); ++k) {
            if (k == held) continue;
            const auto& t = s.train.tasks[k];
            for (std::size_t i = 0; i < t.size(); ++i) {
                ++counts[t.labels[i]];
                for (std::size_t p = 0; p < pixels; ++p) means[t.labels[i] * pixels + p] += t.pixels[i * pixels + p];
            }
        }
        for (std::size_t c = 0; c < classes; ++c)
            for (std::size_t p = 0; p < pixels; ++p) means[c * pixels + p] /= static_cast<double>(counts[c]);

        const auto& t = s.test.tasks[held];
        for (std::size_t i = 0; i < t.size(); ++i) {
            double best = INFINITY;
            std::size_t guess = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                double d = 0.0;
                for (std::size_t p = 0; p < pixels; ++p) {
                    const double diff = t.pixels[i * pixels + p] - means[c * pixels + p];
                    d += diff * diff;
                }
                if (d < best) best = d, guess = c;
            }
            correct += guess == t.labels[i];
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

} // namespace

TEST(StratifiedCount, RoundsWithFloorOfOne) {
    EXPECT_EQ(stratified_train_count(0.1, 20), 2u);
    EXPECT_EQ(stratified_train_count(0.5, 2), 1u);
    EXPECT_EQ(stratified_train_count(0.1, 40), 4u);
    EXPECT_EQ(stratified_train_count(0.01, 5), 1u);
    EXPECT_THROW(stratified_train_count(0.1, 1), InvalidArgument);
    EXPECT_THROW(stratified_train_count(0.0, 10), InvalidArgument);
    EXPECT_THROW(stratified_train_count(1.0, 10), InvalidArgument);
}

TEST(Split, TwentyPerClassAtTenPercent) {
    MultiTaskDataset ds{{counting_task(3, 20)}};
    const auto s = split(ds, {0.1, 4});
    EXPECT_EQ(s.train.tasks[0].size(), 6u);
    EXPECT_EQ(s.test.tasks[0].size(), 54u);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(std::count(s.train.tasks[0].labels.begin(), s.train.tasks[0].labels.end(), c), 2);
        EXPECT_EQ(std::count(s.test.tasks[0].labels.begin(), s.test.tasks[0].labels.end(), c), 18);
    }
}

TEST(Split, HalfOfTwoIsOneAndOne) {
    MultiTaskDataset ds{{counting_task(2, 2)}};
    const auto s = split(ds, {0.5, 0});
    EXPECT_EQ(s.train.tasks[0].size(), 2u);
    EXPECT_EQ(s.test.tasks[0].size(), 2u);
}

TEST(Split, IsPartitionAndDeterministic) {
    MultiTaskDataset ds{{counting_task(4, 10, "a"), counting_task(3, 7, "b")}};
    const auto s1 = split(ds, {0.3, 17});
    const auto s2 = split(ds, {0.3, 17});
    const auto s3 = split(ds, {0.3, 18});
    bool any_difference = false;
    for (std::size_t t = 0; t < 2; ++t) {
        EXPECT_EQ(s1.indices[t].train, s2.indices[t].train);
        EXPECT_EQ(s1.indices[t].test, s2.indices[t].test);
        any_difference |= s1.indices[t].train != s3.indices[t].train;
        std::set<std::size_t> all(s1.indices[t].train.begin(), s1.indices[t].train.end());
        for (auto i : s1.indices[t].test) EXPECT_TRUE(all.insert(i).second) << "index in both halves";
        EXPECT_EQ(all.size(), ds.tasks[t].size());
        EXPECT_TRUE(std::is_sorted(s1.indices[t].train.begin(), s1.indices[t].train.end()));
        EXPECT_EQ(s1.train.tasks[t], ds.tasks[t].subset(s1.indices[t].train));
        EXPECT_EQ(s1.train.tasks[t].class_count, ds.tasks[t].class_count);
    }
    EXPECT_TRUE(any_difference);
}

TEST(Split, SingletonClassCannotBeSplit) {
    TaskData t = counting_task(2, 3);
    t.labels.push_back(2);
    t.pixels.insert(t.pixels.end(), 6, 0);
    t.class_count = 3;
    EXPECT_THROW(split(MultiTaskDataset{{t}}, {0.1, 0}), InvalidArgument);
}

TEST(TaskData, ImagesScaleTo01) {
    TaskData t = counting_task(2, 1);
    std::fill(t.pixels.begin(), t.pixels.begin() + 6, 255);
    std::fill(t.pixels.begin() + 6, t.pixels.end(), 0);
    const std::vector<std::size_t> idx{1, 0};
    const Tensor x = t.images(idx);
    EXPECT_EQ(x.dims(), (Dims{2, 2, 3, 1}));
    for (std::size_t p = 0; p < 6; ++p) {
        EXPECT_EQ(x[p], 0.0);
        EXPECT_EQ(x[6 + p], 1.0);
    }
    EXPECT_EQ(t.labels_at(idx), (std::vector<std::size_t>{1, 0}));
}

TEST(TaskData, ValidationCatchesInconsistencies) {
    TaskData t = counting_task(2, 2);
    t.labels[0] = 5;
    EXPECT_THROW(t.validate(), InvalidArgument);
    t = counting_task(2, 2);
    t.pixels.pop_back();
    EXPECT_THROW(t.validate(), InvalidArgument);
    t = counting_task(2, 2);
    t.class_count = 3;  // class 2 has no example
    EXPECT_THROW(t.validate(), InvalidArgument);
}

TEST(Synth, ShapesAndLabels) {
    const SynthConfig cfg;
    const auto ds = synth_tasks(cfg);
    ASSERT_EQ(ds.task_count(), 5u);
    EXPECT_EQ(ds.image_shape(), (Dims{16, 16, 1}));
    for (const auto& t : ds.tasks) {
        EXPECT_EQ(t.class_count, 4u);
        EXPECT_EQ(t.size(), 160u);
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(std::count(t.labels.begin(), t.labels.end(), c), 40);
    }
    EXPECT_NO_THROW(ds.validate());
}

TEST(Synth, SameSeedIsBitIdentical) {
    SynthConfig cfg;
    cfg.seed = 42;
    EXPECT_EQ(synth_tasks(cfg), synth_tasks(cfg));
    SynthConfig other = cfg;
    other.seed = 43;
    EXPECT_NE(synth_tasks(cfg), synth_tasks(other));
}

TEST(Synth, FullSharingGivesIdenticalTemplatesAndLowRank) {
    SynthConfig cfg;
    cfg.sharedness = 1.0;
    const Tensor templates = synth_templates(cfg);
    ASSERT_EQ(templates.dims(), (Dims{5, 4, 16, 16}));

    // Task-axis flattening: every row is the same concatenation of the four
    // shared templates, so one nonzero singular value.
    const auto task_sv = svd(mode_flatten(templates, 0)).sigma;
    EXPECT_GT(task_sv[0], 1e-3);
    for (std::size_t k = 1; k < task_sv.size(); ++k) EXPECT_LT(task_sv[k], 1e-8);

    // Class-axis flattening: rank equals the number of shared templates.
    const auto class_sv = svd(mode_flatten(templates, 1)).sigma;
    ASSERT_EQ(class_sv.size(), 4u);
    EXPECT_GT(class_sv[3], 1e-3);

    // Mode-(task, class) view: 20 template rows, only 4 distinct.
    const Matrix rows(20, 256, {templates.data().begin(), templates.data().end()});
    const auto sv = svd(rows).sigma;
    EXPECT_GT(sv[3], 1e-3);
    for (std::size_t k = 4; k < sv.size(); ++k) EXPECT_LT(sv[k], 1e-8);
}

TEST(Synth, NoSharingGivesFullRankTaskAxis) {
    SynthConfig cfg;
    cfg.sharedness = 0.0;
    const auto sv = oracle::singular_values(mode_flatten(synth_templates(cfg), 0));
    EXPECT_GT(sv.back(), 1e-3);
}

TEST(Synth, TemplatesMixSharedAndPrivate) {
    SynthConfig shared = {}, private_only = {};
    shared.sharedness = 1.0;
    private_only.sharedness = 0.0;
    SynthConfig mixed = {};
    mixed.sharedness = 0.8;
    const Tensor a = synth_templates(shared), b = synth_templates(private_only), m = synth_templates(mixed);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], 0.8 * a[i] + 0.2 * b[i], 1e-12);
}

TEST(Synth, SharedTemplatesTransferAcrossTasks) {
    SynthConfig shared, unrelated;
    unrelated.sharedness = 0.0;
    double acc_shared = 0.0, acc_unrelated = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        shared.seed = unrelated.seed = seed + 1;
        acc_shared += leave_task_out_accuracy(split(synth_tasks(shared), {0.1, seed})) / 3.0;
        acc_unrelated += leave_task_out_accuracy(split(synth_tasks(unrelated), {0.1, seed})) / 3.0;
    }
    EXPECT_GT(acc_shared, 0.6);
    EXPECT_LT(acc_unrelated, 0.45);
    EXPECT_GT(acc_shared, acc_unrelated + 0.3);
}

TEST(Synth, RejectsBadParameters) {
    SynthConfig cfg;
    cfg.sharedness = 1.5;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    EXPECT_THROW(synth_tasks(cfg), InvalidArgument);
    cfg = {};
    cfg.classes = 1;
    EXPECT_THROW(synth_tasks(cfg), InvalidArgument);
    cfg = {};
    cfg.noise = -0.1;
    EXPECT_THROW(synth_tasks(cfg), InvalidArgument);
}

TEST(Pgm, ReadsHeaderWithCommentsAndRescales) {
    TempDir dir;
    write_bytes(dir.path() / "a.pgm", pgm(3, 2, 255, 255));
    const auto img = read_pgm(dir.path() / "a.pgm");
    EXPECT_EQ(img.width, 3u);
    EXPECT_EQ(img.height, 2u);
    EXPECT_EQ(img.pixels, std::vector<std::uint8_t>(6, 255));

    write_bytes(dir.path() / "b.pgm", pgm(2, 2, 15, 15));
    EXPECT_EQ(read_pgm(dir.path() / "b.pgm").pixels, std::vector<std::uint8_t>(4, 255));
}

TEST(Pgm, MalformedHeaderNamesTheFile) {
    TempDir dir;
    write_bytes(dir.path() / "bad.pgm", "P2\n3 2\n255\n");
    try {
        read_pgm(dir.path() / "bad.pgm");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.pgm"), std::string::npos);
    }
    write_bytes(dir.path() / "short.pgm", "P5\n3 2\n255\nab");
    EXPECT_THROW(read_pgm(dir.path() / "short.pgm"), ParseError);
}

TEST(Pgm, WriteThenReadIsIdentity) {
    TempDir dir;
    PgmImage img{4, 3, {}};
    for (std::size_t i = 0; i < 12; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 20));
    write_pgm(dir.path() / "x.pgm", img);
    const auto back = read_pgm(dir.path() / "x.pgm");
    EXPECT_EQ(back.width, 4u);
    EXPECT_EQ(back.height, 3u);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(PgmTree, CountsTasksClassesAndImages) {
    TempDir dir;
    for (const char* task : {"alpha", "beta"})
        for (const char* cls : {"c1", "c2", "c3"})
            for (int i = 0; i < 20; ++i)
                write_bytes(dir.path() / task / cls / ("img" + std::to_string(100 + i) + ".pgm"), pgm(5, 4, 255, 0));
    write_bytes(dir.path() / "alpha" / "c1" / "notes.txt", "ignored");
    const auto ds = import_pgm_tree(dir.path());
    ASSERT_EQ(ds.task_count(), 2u);
    EXPECT_EQ(ds.tasks[0].name, "alpha");
    EXPECT_EQ(ds.tasks[1].name, "beta");
    for (const auto& t : ds.tasks) {
        EXPECT_EQ(t.class_count, 3u);
        EXPECT_EQ(t.size(), 60u);
        EXPECT_EQ(t.height, 4u);
        EXPECT_EQ(t.width, 5u);
    }
    const std::vector<std::size_t> first{0};
    const Tensor img = ds.tasks[0].images(first);
    for (double v : img.data()) EXPECT_EQ(v, 0.0);
}

TEST(PgmTree, WhitePixelsBecomeOne) {
    TempDir dir;
    write_bytes(dir.path() / "t" / "a" / "1.pgm", pgm(2, 2, 255, 255));
    const auto ds = import_pgm_tree(dir.path());
    const std::vector<std::size_t> first{0};
    const Tensor img = ds.tasks[0].images(first);
    for (double v : img.data()) EXPECT_EQ(v, 1.0);
}

TEST(PgmTree, InconsistentSizesRejected) {
    TempDir dir;
    write_bytes(dir.path() / "t" / "a" / "1.pgm", pgm(2, 2, 255, 1));
    write_bytes(dir.path() / "t" / "b" / "1.pgm", pgm(3, 2, 255, 1));
    EXPECT_THROW(import_pgm_tree(dir.path()), InvalidArgument);
}

TEST(PgmTree, ImportSaveLoadIsIdentity) {
    TempDir dir;
    std::uint8_t v = 0;
    for (const char* task : {"x", "y"})
        for (const char* cls : {"a", "b"})
            for (int i = 0; i < 3; ++i) write_bytes(dir.path() / "tree" / task / cls / (std::to_string(i) + ".pgm"),
                                                    pgm(3, 3, 255, v += 17));
    const auto ds = import_pgm_tree(dir.path() / "tree");
    save_dataset(ds, dir.path() / "d.bin");
    EXPECT_EQ(load_dataset(dir.path() / "d.bin"), ds);
}

TEST(DatasetFile, RoundTripsSyntheticData) {
    SynthConfig cfg;
    cfg.examples_per_class = 5;
    const auto ds = synth_tasks(cfg);
    EXPECT_EQ(decode_dataset(encode_dataset(ds)), ds);
}

TEST(DatasetFile, LayoutIsLittleEndianWithMagic) {
    MultiTaskDataset ds{{counting_task(2, 1, "ab")}};
    const auto bytes = encode_dataset(ds);
    const std::string magic(bytes.begin(), bytes.begin() + 8);
    EXPECT_EQ(magic, "TTNMTL01");
    const std::vector<std::uint8_t> head(bytes.begin() + 8, bytes.begin() + 8 + 4 + 2 + 2 + 4 + 4 + 2 + 2);
    const std::vector<std::uint8_t> expected{1, 0, 0, 0, 2, 0, 'a', 'b', 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 3, 0};
    EXPECT_EQ(head, expected);
    EXPECT_EQ(bytes.size(), 8u + 4 + 2 + 2 + 4 + 4 + 2 + 2 + 2 * (4 + 6));
}

TEST(DatasetFile, WrongMagicAndTruncationAreParseErrors) {
    SynthConfig cfg;
    cfg.examples_per_class = 2;
    auto bytes = encode_dataset(synth_tasks(cfg));
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_dataset(bad), ParseError);
    for (std::size_t cut : {std::size_t{3}, std::size_t{12}, bytes.size() - 1})
        EXPECT_THROW(decode_dataset(std::span(bytes.data(), cut)), ParseError) << cut;
    bytes.push_back(0);
    EXPECT_THROW(decode_dataset(bytes), ParseError);
}

TEST(DatasetFile, EmptyTaskListRejectedAtSave) {
    TempDir dir;
    EXPECT_THROW(save_dataset(MultiTaskDataset{}, dir.path() / "e.bin"), InvalidArgument);
    EXPECT_FALSE(fs::exists(dir.path() / "e.bin"));
}

TEST(DatasetFile, UnwritableAndMissingPaths) {
    TempDir dir;
    MultiTaskDataset ds{{counting_task(2, 1)}};
    EXPECT_THROW(save_dataset(ds, dir.path() / "no" / "such" / "dir" / "d.bin"), IoError);
    EXPECT_THROW(load_dataset(dir.path() / "missing.bin"), IoError);
}
