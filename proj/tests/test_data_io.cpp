#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "swintr/data_io.hpp"
#include "swintr/errors.hpp"
#include "test_util.hpp"

namespace swintr {
namespace {

namespace fs = std::filesystem;
using test::TempDir;

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class E>
std::string error_text(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const E& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected exception";
  return {};
}

// Writes an image whose pixels are a ramp and a mask with the given values.
Record write_pair(const fs::path& dir, const std::string& stem, std::int64_t h, std::int64_t w,
                  const std::vector<std::uint8_t>& mask_values) {
  std::vector<double> px(static_cast<std::size_t>(3 * h * w));
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<double>(i % 256) / 255.0;
  }
  Record r{dir / (stem + ".png"), dir / (stem + "_mask.png"), Split::train};
  write_image(r.image, Tensor::from_doubles({3, h, w}, px, DType::f32));
  LabelMap m(1, h, w);
  m.values = mask_values;
  write_label_map(r.mask, m);
  return r;
}

TEST(ClassMap, DefaultsAndLookup) {
  ClassMap map;
  EXPECT_EQ(map.size(), 4);
  EXPECT_EQ(map.index_of("background"), 0);
  EXPECT_EQ(map.index_of("metal decking"), 3);
  EXPECT_THROW(map.index_of("asphalt"), ConfigError);
}

TEST(Split, NamesRoundTrip) {
  for (Split s : {Split::train, Split::val, Split::test}) {
    EXPECT_EQ(parse_split(split_name(s)), s);
  }
  EXPECT_THROW(parse_split("holdout"), DataError);
}

TEST(Manifest, ReadsRelativePathsCommentsAndBlankLines) {
  TempDir dir("manifest");
  write_text(dir.path() / "m.tsv", "# image\tmask\tsplit\n\nimg/a.png\tmask/a.png\ttrain\n/abs/b.png\t/abs/b_m.png\ttest\n");
  auto records = read_manifest(dir.path() / "m.tsv");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].image, dir.path() / "img/a.png");
  EXPECT_EQ(records[0].split, Split::train);
  EXPECT_EQ(records[1].mask, fs::path("/abs/b_m.png"));
  EXPECT_EQ(records[1].split, Split::test);
}

TEST(Manifest, WriteReadRoundTrip) {
  TempDir dir("manifest_rt");
  std::vector<Record> records{{dir.path() / "images/x.png", dir.path() / "masks/x.png", Split::val},
                              {dir.path() / "images/y.png", dir.path() / "masks/y.png", Split::train}};
  write_manifest(dir.path() / "m.tsv", records);
  const std::string text = read_bytes(dir.path() / "m.tsv");
  EXPECT_NE(text.find("images/x.png\tmasks/x.png\tval"), std::string::npos);
  auto back = read_manifest(dir.path() / "m.tsv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].image, records[i].image);
    EXPECT_EQ(back[i].mask, records[i].mask);
    EXPECT_EQ(back[i].split, records[i].split);
  }
  EXPECT_EQ(filter_split(back, Split::val).size(), 1u);
}

TEST(Manifest, ErrorsNameTheLine) {
  TempDir dir("manifest_err");
  write_text(dir.path() / "fields.tsv", "a.png\ta_m.png\ttrain\nb.png\tb_m.png\n");
  EXPECT_NE(error_text<DataError>([&] { read_manifest(dir.path() / "fields.tsv"); }).find("fields.tsv:2"),
            std::string::npos);
  write_text(dir.path() / "dup.tsv", "a.png\ta_m.png\ttrain\n# c\na.png\tz.png\ttest\n");
  const std::string dup = error_text<DataError>([&] { read_manifest(dir.path() / "dup.tsv"); });
  EXPECT_NE(dup.find("dup.tsv:3"), std::string::npos);
  EXPECT_NE(dup.find("duplicate"), std::string::npos);
  write_text(dir.path() / "split.tsv", "a.png\ta_m.png\tdev\n");
  EXPECT_NE(error_text<DataError>([&] { read_manifest(dir.path() / "split.tsv"); }).find("split.tsv:1"),
            std::string::npos);
  EXPECT_THROW(read_manifest(dir.path() / "absent.tsv"), DataError);
}

TEST(LoadSample, PreservesExtentsAndScalesPixels) {
  TempDir dir("load");
  Record r = write_pair(dir.path(), "a", 5, 7, std::vector<std::uint8_t>(35, 2));
  Sample s = load_sample(r, 4);
  EXPECT_EQ(s.image.shape(), (Shape{3, 5, 7}));
  EXPECT_EQ(s.mask.height, 5);
  EXPECT_EQ(s.mask.width, 7);
  for (std::int64_t i = 0; i < s.image.numel(); ++i) {
    EXPECT_NEAR(s.image.at(i), static_cast<double>(i % 256) / 255.0, 1e-6);
  }
  EXPECT_EQ(s.id, r.image.string());
}

TEST(LoadSample, MaskRoundTripIsLossless) {
  TempDir dir("mask_rt");
  std::vector<std::uint8_t> values(6 * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<std::uint8_t>(i % 5 == 4 ? kIgnoreLabel : i % 4);
  }
  Record r = write_pair(dir.path(), "m", 6, 4, values);
  EXPECT_EQ(load_sample(r, 4).mask.values, values);
}

TEST(LoadSample, ResizesToTargetSquare) {
  TempDir dir("resize");
  std::vector<std::uint8_t> values(9 * 13);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<std::uint8_t>((i / 13) < 4 ? 1 : 3);
  }
  Record r = write_pair(dir.path(), "r", 9, 13, values);
  Sample s = load_sample(r, 4, 32);
  EXPECT_EQ(s.image.shape(), (Shape{3, 32, 32}));
  EXPECT_EQ(s.mask.height, 32);
  std::set<std::uint8_t> seen(s.mask.values.begin(), s.mask.values.end());
  EXPECT_EQ(seen, (std::set<std::uint8_t>{1, 3}));
  EXPECT_THROW(load_sample(r, 4, 0), ConfigError);
}

TEST(LoadSample, OutOfRangeLabelNamesValueAndPixel) {
  TempDir dir("bad_label");
  std::vector<std::uint8_t> values(4 * 4, 0);
  values[2 * 4 + 3] = 7;
  Record r = write_pair(dir.path(), "b", 4, 4, values);
  const std::string msg = error_text<DataError>([&] { load_sample(r, 4); });
  EXPECT_NE(msg.find("value 7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("x=3, y=2"), std::string::npos) << msg;
  EXPECT_NO_THROW(load_sample(r, 8));
}

TEST(LoadSample, ExtentMismatchAndUnreadableFiles) {
  TempDir dir("mismatch");
  Record a = write_pair(dir.path(), "a", 4, 4, std::vector<std::uint8_t>(16, 0));
  Record b = write_pair(dir.path(), "b", 4, 5, std::vector<std::uint8_t>(20, 0));
  Record mixed{a.image, b.mask, Split::train};
  EXPECT_THROW(load_sample(mixed, 4), DataError);
  Record missing{dir.path() / "nope.png", a.mask, Split::train};
  EXPECT_NE(error_text<DataError>([&] { load_sample(missing, 4); }).find("nope.png"), std::string::npos);
  Record rgb_mask{a.image, a.image, Split::train};
  EXPECT_THROW(load_sample(rgb_mask, 4), DataError);
}

TEST(StackImages, StacksAndChecksShapes) {
  Sample a{Tensor::ones({3, 2, 2}), LabelMap(1, 2, 2), "a"};
  Sample b{Tensor::zeros({3, 2, 2}), LabelMap(1, 2, 2), "b"};
  Tensor s = stack_images({&a, &b});
  EXPECT_EQ(s.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_EQ(s.at(12), 0.0);
  Sample c{Tensor::zeros({3, 3, 2}), LabelMap(1, 3, 2), "c"};
  EXPECT_THROW(stack_images({&a, &c}), DimensionError);
}

std::vector<Record> flagged_records(int train, int test) {
  std::vector<Record> out;
  for (int i = 0; i < train + test; ++i) {
    const std::string stem = "s" + std::to_string(i);
    out.push_back({stem + ".png", stem + "_m.png", i < train ? Split::train : Split::test});
  }
  return out;
}

TEST(SplitDataset, ReproducesCaseStudyCounts) {
  auto split = split_dataset(flagged_records(3436, 381), 0.1024, 0);
  EXPECT_EQ(filter_split(split, Split::val).size(), 352u);
  EXPECT_EQ(filter_split(split, Split::train).size(), 3084u);
  EXPECT_EQ(filter_split(split, Split::test).size(), 381u);
}

TEST(SplitDataset, IsSeededPartitionOfTrain) {
  auto records = flagged_records(100, 20);
  auto a = split_dataset(records, 0.25, 7);
  auto b = split_dataset(records, 0.25, 7);
  auto c = split_dataset(records, 0.25, 8);
  std::vector<Split> sa, sb, sc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    sa.push_back(a[i].split);
    sb.push_back(b[i].split);
    sc.push_back(c[i].split);
    EXPECT_EQ(a[i].image, records[i].image);
    if (records[i].split == Split::test) {
      EXPECT_EQ(a[i].split, Split::test);
    } else {
      EXPECT_NE(a[i].split, Split::test);
    }
  }
  EXPECT_EQ(sa, sb);
  EXPECT_NE(sa, sc);
  EXPECT_EQ(filter_split(a, Split::val).size(), 25u);
}

TEST(SplitDataset, RejectsFractionOutsideUnitInterval) {
  auto records = flagged_records(10, 0);
  EXPECT_THROW(split_dataset(records, 0.0, 1), ConfigError);
  EXPECT_THROW(split_dataset(records, 1.0, 1), ConfigError);
  EXPECT_THROW(split_dataset(records, -0.2, 1), ConfigError);
}

SynthConfig small_synth(SynthStyle style) {
  SynthConfig cfg;
  cfg.train = 4;
  cfg.val = 2;
  cfg.size = 96;
  cfg.seed = 5;
  cfg.style = style;
  return cfg;
}

TEST(SynthDataset, WritesManifestAndValidMasks) {
  TempDir dir("synth");
  SynthSummary s = synth_dataset_generate(dir.path(), small_synth(SynthStyle::shapes));
  ASSERT_EQ(s.records.size(), 6u);
  EXPECT_EQ(filter_split(s.records, Split::val).size(), 2u);
  auto from_disk = read_manifest(s.manifest);
  ASSERT_EQ(from_disk.size(), 6u);
  ASSERT_EQ(s.class_fraction.size(), 4u);
  for (double f : s.class_fraction) {
    EXPECT_GE(f, 0.01);
  }
  for (const auto& r : from_disk) {
    Sample sample = load_sample(r, 4);
    EXPECT_EQ(sample.image.shape(), (Shape{3, 96, 96}));
    for (auto v : sample.mask.values) {
      ASSERT_LT(v, 4);
    }
  }
}

TEST(SynthDataset, SameSeedIsByteIdentical) {
  TempDir a("synth_a"), b("synth_b");
  auto sa = synth_dataset_generate(a.path(), small_synth(SynthStyle::thin_bars));
  auto sb = synth_dataset_generate(b.path(), small_synth(SynthStyle::thin_bars));
  ASSERT_EQ(sa.records.size(), sb.records.size());
  for (std::size_t i = 0; i < sa.records.size(); ++i) {
    EXPECT_EQ(read_bytes(sa.records[i].image), read_bytes(sb.records[i].image));
    EXPECT_EQ(read_bytes(sa.records[i].mask), read_bytes(sb.records[i].mask));
  }
  EXPECT_EQ(read_bytes(sa.manifest), read_bytes(sb.manifest));
}

TEST(SynthDataset, ThinBarsContainThinStructures) {
  TempDir dir("synth_thin");
  auto s = synth_dataset_generate(dir.path(), small_synth(SynthStyle::thin_bars));
  // A foreground pixel is "thin" when a background pixel lies within 1 px on both
  // sides along some axis.
  std::int64_t thin = 0, foreground = 0;
  for (const auto& r : s.records) {
    Sample sample = load_sample(r, 4);
    const auto& m = sample.mask;
    for (std::int64_t y = 1; y + 1 < m.height; ++y) {
      for (std::int64_t x = 1; x + 1 < m.width; ++x) {
        const auto v = m.at(0, y, x);
        if (v == 0) continue;
        ++foreground;
        const bool h = m.at(0, y, x - 1) != v && m.at(0, y, x + 1) != v;
        const bool vv = m.at(0, y - 1, x) != v && m.at(0, y + 1, x) != v;
        thin += (h || vv) ? 1 : 0;
      }
    }
  }
  EXPECT_GT(thin, foreground / 20);
}

TEST(SynthDataset, StyleNames) {
  EXPECT_EQ(parse_synth_style("thin_bars"), SynthStyle::thin_bars);
  EXPECT_STREQ(synth_style_name(SynthStyle::shapes), "shapes");
  EXPECT_THROW(parse_synth_style("stripes"), ConfigError);
}

}  // namespace
}  // namespace swintr
