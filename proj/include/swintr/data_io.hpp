#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swintr/label_map.hpp"
#include "swintr/tensor.hpp"

namespace swintr {

struct ClassMap {
  std::vector<std::string> names{"background", "concrete", "steel", "metal decking"};

  int size() const { return static_cast<int>(names.size()); }
  // Index of a class name; ConfigError when unknown.
  int index_of(const std::string& name) const;
};

enum class Split { train, val, test };
Split parse_split(const std::string& name);
const char* split_name(Split s);

struct Record {
  std::filesystem::path image;
  std::filesystem::path mask;
  Split split = Split::train;
};

// Tab-separated lines: image_path, mask_path, split. Relative paths resolve
// against the manifest's directory. Blank lines and '#' comments are skipped.
std::vector<Record> read_manifest(const std::filesystem::path& path);
// Paths below the manifest's directory are written relative to it.
void write_manifest(const std::filesystem::path& path, const std::vector<Record>& records);
std::vector<Record> filter_split(const std::vector<Record>& records, Split split);

struct Sample {
  Tensor image;    // [3,H,W] f32 in [0,1]
  LabelMap mask;   // batch 1, [H,W]
  std::string id;  // image path, for diagnostics
};

// Reads an 8-bit RGB image and its single-channel mask. With target_size the
// image is resized bilinearly and the mask by nearest neighbor to a square.
Sample load_sample(const Record& record, int classes, std::optional<int> target_size = std::nullopt);
std::vector<Sample> load_samples(const std::vector<Record>& records, int classes,
                                 std::optional<int> target_size = std::nullopt);
// [B,3,H,W] batch of the given samples.
Tensor stack_images(const std::vector<const Sample*>& samples);

// 8-bit RGB image file -> [1,3,H,W] f32 in [0,1], optionally bilinearly
// resized to a square.
Tensor load_image(const std::filesystem::path& path, std::optional<int> target_size = std::nullopt);
// [3,H,W] or [1,3,H,W] in [0,1] (clamped) -> 8-bit RGB PNG.
void write_image(const std::filesystem::path& path, const Tensor& image);
// Raw label values as a single-channel 8-bit PNG.
void write_label_map(const std::filesystem::path& path, const LabelMap& labels);
// Labels drawn in a fixed class palette; with an image, blended 50/50 over it.
void write_label_colors(const std::filesystem::path& path, const LabelMap& labels, const Tensor& image = {});

// Moves round(val_fraction * #train) seeded-randomly chosen train records to
// val. Test records are untouched; existing val records are left as they are.
std::vector<Record> split_dataset(const std::vector<Record>& records, double val_fraction, std::uint64_t seed);

enum class SynthStyle {
  shapes,     // rectangles and ellipses with some thin bars
  thin_bars,  // mostly 1-3 px bars over a textured background
};
SynthStyle parse_synth_style(const std::string& name);
const char* synth_style_name(SynthStyle s);

struct SynthConfig {
  int train = 200;
  int val = 40;
  int test = 0;
  int size = 448;
  int classes = 4;
  std::uint64_t seed = 1;
  SynthStyle style = SynthStyle::shapes;
};

struct SynthSummary {
  std::filesystem::path manifest;
  std::vector<Record> records;
  std::vector<double> class_fraction;  // share of all pixels per class
};

// Writes images/, masks/ and manifest.tsv under dir. Byte-identical for equal
// configs. Throws DataError if some class covers less than 1% of the pixels.
SynthSummary synth_dataset_generate(const std::filesystem::path& dir, const SynthConfig& cfg);

}  // namespace swintr
