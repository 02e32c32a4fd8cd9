#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "endreg/end_core.hpp"
#include "endreg/net.hpp"

namespace endreg {

enum class Generator : std::uint32_t {
  gaussian_clusters = 0,
  colored_patterns = 1,
  injected_idx = 2,
  // Loaded from an ENDD file with no generator to re-run.
  fixed_pool = 3,
};

enum class Split : std::uint32_t {
  train = 0,
  biased_test = 1,
  unbiased_test = 2,
  bias_conflicting = 3,
};

const char* to_string(Generator g) noexcept;
const char* to_string(Split s) noexcept;
Generator generator_from_string(const std::string& name);

using Rgb = std::array<std::uint8_t, 3>;

// Ten background colors, one per class.
const std::vector<Rgb>& default_palette();
// Text file with one "R G B" line (0-255) per class.
std::vector<Rgb> load_palette(const std::string& path);

struct DatasetSpec {
  std::size_t n_samples = 1000;
  std::size_t n_targets = 10;
  std::size_t n_biases = 10;
  double rho = 0.995;
  Generator generator = Generator::colored_patterns;
  // Images are H x W x C; gaussian_clusters uses (1, 1, D).
  Shape shape{16, 16, 3};
  std::uint64_t seed = 0;
  // gaussian_clusters: per-coordinate noise std. colored_patterns: std of
  // additive pixel noise.
  double noise = 0.1;
  // colored_patterns: maximum patch translation in pixels.
  std::size_t jitter = 2;
  // injected_idx sources (test files feed the evaluation splits).
  std::string idx_images;
  std::string idx_labels;
  std::string idx_test_images;
  std::string idx_test_labels;
  std::vector<Rgb> palette;  // empty means default_palette()
  std::size_t workers = 1;

  void validate() const;
  const std::vector<Rgb>& effective_palette() const;
};

// Bias class a sample of target t receives with probability rho.
inline std::size_t aligned_bias(std::size_t target, std::size_t n_biases) {
  return target % n_biases;
}

// The rho rule: the aligned class with probability rho, otherwise uniform
// over the remaining B - 1 classes.
Label draw_bias(Rng& rng, std::size_t target, double rho, std::size_t n_biases);

struct BiasedDataset {
  DatasetSpec spec;
  Split split = Split::train;
  Shape shape;
  std::vector<float> features;  // sample-major, shape.size() per sample
  std::vector<Label> targets;
  std::vector<Label> biases;
  // Provenance: (split << 28) | index in the split's generation stream.
  std::vector<std::uint32_t> origin;

  std::size_t size() const noexcept { return targets.size(); }
  std::span<const float> sample(std::size_t i) const {
    return {features.data() + i * shape.size(), shape.size()};
  }
  void validate() const;
  BiasedDataset subset(std::span<const std::size_t> indices, Split as) const;
  double aligned_fraction() const;
};

std::uint32_t make_origin(Split split, std::size_t index);

BiasedDataset generate(const DatasetSpec& spec, Split split = Split::train);
BiasedDataset generate_gaussian_biased(const DatasetSpec& spec,
                                       Split split = Split::train);
// Each image is a dark square patch filled with a class-specific stroke
// texture, drawn on a background of palette[bias]. Class t uses texture
// t % 10: 0 vertical stripes, 1 horizontal stripes, 2 diagonal stripes,
// 3 anti-diagonal stripes, 4 checkerboard, 5 dot grid, 6 wide vertical
// stripes, 7 wide horizontal stripes, 8 solid, 9 grid lines. Patch half-size
// is min(H, W) / 4 plus 0-2 pixels, the center moves by up to `jitter`
// pixels, the texture phase is random and strokes have gray level in
// [0.75, 1].
BiasedDataset generate_colored_patterns(const DatasetSpec& spec,
                                        Split split = Split::train);
// Whether texture `cls` is lit at texture coordinate (x, y). Exposed for tests.
bool glyph_on(std::size_t cls, std::ptrdiff_t x, std::ptrdiff_t y);

struct GrayImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> pixels;  // [0, 1]
  std::vector<Label> labels;
};

// IDX files: big-endian magic 2051 (u8 images) and 2049 (u8 labels).
GrayImages parse_idx(std::span<const char> images, std::span<const char> labels);
GrayImages load_idx(const std::string& images_path,
                    const std::string& labels_path);

// Pixels with intensity below 0.5 become the bias color; strokes keep their
// gray value on all three channels.
BiasedDataset inject_color_bias(const GrayImages& gray, double rho,
                                const std::vector<Rgb>& palette,
                                std::uint64_t seed, Split split = Split::train);

enum class SplitMode { biased_test, unbiased_test, bias_conflicting, balanced };

// Generators re-run with rho = 1.0 (biased) or 0.1 (unbiased); fixed pools
// use balanced per-(t, b) subsampling. bias_conflicting always drops the
// aligned samples of the unbiased split.
BiasedDataset build_eval_split(const BiasedDataset& source, SplitMode mode,
                               std::size_t n_samples);
// Same number of samples in every (t, b) cell; SplitError names an empty cell.
BiasedDataset balanced_unbiased(const BiasedDataset& pool, std::uint64_t seed);
BiasedDataset bias_conflicting(const BiasedDataset& unbiased);

// ENDD format, little-endian:
//   "ENDD" | u32 version | u64 n | u32 H, W, C | u32 dtype (1 = f32)
//   | f32 features[n * H * W * C] | (u16 target, u16 bias)[n]
//   | u32 spec block length | spec block
// The spec block holds T, B, rho, generator, seed, noise, jitter, split and
// the per-sample origin indices.
std::vector<char> serialize_dataset(const BiasedDataset& ds);
BiasedDataset deserialize_dataset(std::span<const char> bytes);
void write_dataset(const BiasedDataset& ds, const std::string& path);
BiasedDataset read_dataset(const std::string& path);

// Features of samples [first, first + count) as a D x count matrix.
Matrix dataset_columns(const BiasedDataset& ds,
                       std::span<const std::size_t> indices);

}  // namespace endreg
