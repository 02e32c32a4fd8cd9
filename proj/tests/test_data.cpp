#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "endreg/binary_io.hpp"
#include "endreg/data.hpp"
#include "endreg/errors.hpp"

using namespace endreg;

namespace {

DatasetSpec gaussian(std::size_t n, double rho, std::size_t classes, std::uint64_t seed = 0) {
  DatasetSpec s;
  s.generator = Generator::gaussian_clusters;
  s.n_samples = n;
  s.n_targets = s.n_biases = classes;
  s.rho = rho;
  s.shape = Shape{1, 1, 4};
  s.seed = seed;
  return s;
}

DatasetSpec patterns(std::size_t n, double rho, std::uint64_t seed = 0) {
  DatasetSpec s;
  s.n_samples = n;
  s.rho = rho;
  s.seed = seed;
  return s;
}

std::size_t aligned_count(const BiasedDataset& ds) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    k += ds.biases[i] == aligned_bias(ds.targets[i], ds.spec.n_biases);
  return k;
}

// Aligned fraction within 3 binomial sigma of rho.
void expect_binomial(const BiasedDataset& ds, double rho) {
  const double n = static_cast<double>(ds.size());
  const double sigma = std::sqrt(rho * (1 - rho) / n);
  EXPECT_NEAR(static_cast<double>(aligned_count(ds)) / n, rho, 3 * sigma + 1e-12);
}

// Pearson statistic of bias counts against a uniform expectation.
double chi_square(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  const double e = total / static_cast<double>(counts.size());
  double x2 = 0.0;
  for (auto c : counts) x2 += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
  return x2;
}

// Chi-square with 9 degrees of freedom at 0.1%: a 1% family-wise level over
// ten per-target tests.
constexpr double kChi2Crit9 = 27.877;

void expect_uniform_bias_per_target(const BiasedDataset& ds) {
  const std::size_t nt = ds.spec.n_targets, nb = ds.spec.n_biases;
  std::vector<std::vector<std::size_t>> h(nt, std::vector<std::size_t>(nb, 0));
  for (std::size_t i = 0; i < ds.size(); ++i) ++h[ds.targets[i]][ds.biases[i]];
  for (std::size_t t = 0; t < nt; ++t) EXPECT_LT(chi_square(h[t]), kChi2Crit9) << "target " << t;
}

std::vector<char> be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
          static_cast<char>(v)};
}

std::vector<char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                             std::uint32_t magic = 2051) {
  std::vector<char> out;
  for (std::uint32_t v : {magic, n, rows, cols}) {
    const auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) out.push_back(static_cast<char>(i % 7 == 0 ? 255 : 0));
  return out;
}

std::vector<char> idx_labels(std::vector<std::uint8_t> labels, std::uint32_t magic = 2049) {
  std::vector<char> out;
  for (std::uint32_t v : {magic, static_cast<std::uint32_t>(labels.size())}) {
    const auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  for (auto l : labels) out.push_back(static_cast<char>(l));
  return out;
}

BiasedDataset fixed_pool(const std::vector<std::vector<std::size_t>>& counts) {
  BiasedDataset ds;
  ds.spec.generator = Generator::fixed_pool;
  ds.spec.n_targets = counts.size();
  ds.spec.n_biases = counts[0].size();
  ds.spec.shape = ds.shape = Shape{1, 1, 1};
  for (std::size_t t = 0; t < counts.size(); ++t)
    for (std::size_t b = 0; b < counts[t].size(); ++b)
      for (std::size_t k = 0; k < counts[t][b]; ++k) {
        ds.origin.push_back(make_origin(Split::train, ds.size()));
        ds.targets.push_back(static_cast<Label>(t));
        ds.biases.push_back(static_cast<Label>(b));
        ds.features.push_back(static_cast<float>(ds.size()));
      }
  return ds;
}

}  // namespace

TEST(RhoRule, DrawBiasExtremes) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(draw_bias(rng, 3, 1.0, 10), 3);
    EXPECT_EQ(draw_bias(rng, 0, 0.0, 2), 1);
    EXPECT_EQ(draw_bias(rng, 1, 0.0, 2), 0);
  }
}

TEST(Gaussian, RhoOneFullyAligned) {
  const BiasedDataset ds = generate(gaussian(2000, 1.0, 10));
  EXPECT_EQ(aligned_count(ds), ds.size());
}

TEST(Gaussian, RhoZeroTwoClassesFlipped) {
  const BiasedDataset ds = generate(gaussian(2000, 0.0, 2));
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.biases[i], 1 - ds.targets[i]);
}

TEST(Gaussian, RhoPointOneIsUniform) {
  expect_uniform_bias_per_target(generate(gaussian(100000, 0.1, 10)));
}

TEST(Gaussian, BinomialBounds) {
  for (double rho : {0.999, 0.995})
    expect_binomial(generate(gaussian(20000, rho, 10, 3)), rho);
}

TEST(Patterns, RhoOneBackgroundIsClassColor) {
  DatasetSpec s = patterns(200, 1.0);
  s.noise = 0.0;
  const BiasedDataset ds = generate(s);
  const auto& pal = default_palette();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ASSERT_EQ(ds.biases[i], ds.targets[i]);
    const auto px = ds.sample(i);
    std::size_t background = 0;
    for (std::size_t p = 0; p < px.size(); p += 3) {
      bool is_color[10];
      for (std::size_t c = 0; c < 10; ++c)
        is_color[c] = px[p] == pal[c][0] / 255.0f && px[p + 1] == pal[c][1] / 255.0f &&
                      px[p + 2] == pal[c][2] / 255.0f;
      background += is_color[ds.targets[i]];
      for (std::size_t c = 0; c < 10; ++c)
        if (c != ds.targets[i] && is_color[c] && pal[c] != pal[ds.targets[i]])
          ADD_FAILURE() << "sample " << i << " shows color " << c;
    }
    EXPECT_GT(background, 0u);
  }
}

TEST(Patterns, PixelRangeAndDeterminism) {
  const BiasedDataset a = generate(patterns(300, 0.995, 4));
  const BiasedDataset b = generate(patterns(300, 0.995, 4));
  EXPECT_EQ(serialize_dataset(a), serialize_dataset(b));
  for (float v : a.features) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Patterns, WorkerCountDoesNotChangeOutput) {
  DatasetSpec s = patterns(500, 0.9, 6);
  const auto one = serialize_dataset(generate(s));
  s.workers = 4;
  EXPECT_EQ(serialize_dataset(generate(s)), one);
}

TEST(Patterns, BinomialBounds) {
  for (double rho : {0.999, 0.995}) {
    const BiasedDataset ds = generate(patterns(10000, rho, 7));
    expect_binomial(ds, rho);
  }
  const BiasedDataset ds = generate(patterns(10000, 0.995, 0));
  const double frac = static_cast<double>(aligned_count(ds)) / 10000.0;
  EXPECT_GE(frac, 0.990);
  EXPECT_LE(frac, 0.999);
}

TEST(Patterns, RhoOneExactlyAligned) {
  EXPECT_EQ(aligned_count(generate(patterns(5000, 1.0, 2))), 5000u);
}

TEST(Glyphs, SpotChecks) {
  EXPECT_TRUE(glyph_on(0, 0, 5));   // vertical stripes
  EXPECT_FALSE(glyph_on(0, 2, 5));
  EXPECT_TRUE(glyph_on(1, 5, 1));   // horizontal stripes
  EXPECT_FALSE(glyph_on(1, 5, 3));
  EXPECT_TRUE(glyph_on(2, 1, 0));   // diagonal
  EXPECT_FALSE(glyph_on(2, 1, 2));
  EXPECT_TRUE(glyph_on(3, 3, 2));   // anti-diagonal
  EXPECT_FALSE(glyph_on(3, 0, 2));
  EXPECT_TRUE(glyph_on(4, 0, 0));   // checkerboard
  EXPECT_FALSE(glyph_on(4, 0, 2));
  EXPECT_TRUE(glyph_on(5, 4, 8));   // dots
  EXPECT_FALSE(glyph_on(5, 4, 7));
  EXPECT_TRUE(glyph_on(6, 3, 0));   // wide vertical
  EXPECT_FALSE(glyph_on(6, 4, 0));
  EXPECT_TRUE(glyph_on(7, 0, 3));   // wide horizontal
  EXPECT_FALSE(glyph_on(7, 0, 5));
  EXPECT_TRUE(glyph_on(8, -7, 13)); // solid
  EXPECT_TRUE(glyph_on(9, 4, 1));   // grid
  EXPECT_FALSE(glyph_on(9, 1, 1));
  EXPECT_TRUE(glyph_on(0, -4, 0));  // negative coordinates wrap
  EXPECT_FALSE(glyph_on(0, -1, 0));
}

TEST(Glyphs, TexturesAreDistinct) {
  std::set<std::vector<bool>> seen;
  for (std::size_t c = 0; c < 10; ++c) {
    std::vector<bool> tile;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) tile.push_back(glyph_on(c, x, y));
    seen.insert(tile);
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(Spec, InvalidValuesRejected) {
  DatasetSpec s = patterns(10, 1.5);
  EXPECT_THROW(s.validate(), SpecError);
  s = patterns(10, 0.5);
  s.n_biases = 5;
  EXPECT_THROW(s.validate(), SpecError);
  s = patterns(10, 0.5);
  s.palette = {{0, 0, 0}};
  EXPECT_THROW(s.validate(), SpecError);
}

TEST(Idx, ParsesHandcraftedFiles) {
  const GrayImages g = parse_idx(idx_images(2, 28, 28), idx_labels({3, 7}));
  EXPECT_EQ(g.count, 2u);
  EXPECT_EQ(g.rows, 28u);
  EXPECT_EQ(g.cols, 28u);
  EXPECT_EQ(g.labels, (std::vector<Label>{3, 7}));
  EXPECT_EQ(g.pixels[0], 1.0f);
  EXPECT_EQ(g.pixels[1], 0.0f);
}

TEST(Idx, Errors) {
  EXPECT_THROW(parse_idx(idx_images(2, 4, 4, 2049), idx_labels({0, 1})), FormatError);
  EXPECT_THROW(parse_idx(idx_images(2, 4, 4), idx_labels({0, 1}, 2051)), FormatError);
  EXPECT_THROW(parse_idx(idx_images(2, 4, 4), idx_labels({0, 1, 2})), FormatError);
  auto cut = idx_images(2, 4, 4);
  cut.resize(cut.size() - 1);
  EXPECT_THROW(parse_idx(cut, idx_labels({0, 1})), FormatError);
}

TEST(Inject, BlackImageBecomesPaletteColor) {
  GrayImages g;
  g.count = 1;
  g.rows = g.cols = 4;
  g.pixels.assign(16, 0.0f);
  g.labels = {6};
  const auto& pal = default_palette();
  const BiasedDataset ds = inject_color_bias(g, 1.0, pal, 0);
  EXPECT_EQ(ds.biases[0], 6);
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_EQ(ds.features[p * 3 + c], pal[6][c] / 255.0f);
}

TEST(Inject, StrokesKeptAndRhoRespected) {
  GrayImages g;
  g.count = 10000;
  g.rows = g.cols = 2;
  g.pixels.assign(g.count * 4, 0.0f);
  for (std::size_t i = 0; i < g.count; ++i) {
    g.pixels[i * 4] = 0.9f;
    g.labels.push_back(static_cast<Label>(i % 10));
  }
  const BiasedDataset ds = inject_color_bias(g, 0.999, default_palette(), 5);
  EXPECT_EQ(ds.features[0], 0.9f);
  EXPECT_EQ(ds.features[2], 0.9f);
  expect_binomial(ds, 0.999);
  g.labels[0] = 10;
  EXPECT_THROW(inject_color_bias(g, 0.5, default_palette(), 0), SpecError);
}

TEST(Splits, GeneratedTestSetsFollowTheirRho) {
  const BiasedDataset train = generate(patterns(2000, 0.995, 1));
  const BiasedDataset biased = build_eval_split(train, SplitMode::biased_test, 2000);
  EXPECT_EQ(aligned_count(biased), biased.size());
  const BiasedDataset unbiased = build_eval_split(train, SplitMode::unbiased_test, 20000);
  expect_uniform_bias_per_target(unbiased);
}

TEST(Splits, DisjointAndConflictingSubset) {
  const BiasedDataset train = generate(patterns(1000, 0.995, 1));
  const BiasedDataset unbiased = build_eval_split(train, SplitMode::unbiased_test, 1000);
  const BiasedDataset conflicting = bias_conflicting(unbiased);
  std::set<std::uint32_t> train_ids(train.origin.begin(), train.origin.end());
  for (auto o : unbiased.origin) EXPECT_EQ(train_ids.count(o), 0u);
  std::set<std::uint32_t> unb_ids(unbiased.origin.begin(), unbiased.origin.end());
  for (std::size_t i = 0; i < conflicting.size(); ++i) {
    EXPECT_EQ(unb_ids.count(conflicting.origin[i]), 1u);
    EXPECT_NE(conflicting.biases[i], conflicting.targets[i]);
  }
  EXPECT_EQ(conflicting.size(), unbiased.size() - aligned_count(unbiased));
}

TEST(Splits, ConflictingOfAlignedSetFails) {
  const BiasedDataset ds = generate(patterns(100, 1.0));
  EXPECT_THROW(bias_conflicting(ds), SplitError);
}

TEST(Splits, BalancedMinCellRule) {
  const BiasedDataset pool = fixed_pool({{4, 2}, {2, 4}});
  const BiasedDataset bal = balanced_unbiased(pool, 0);
  EXPECT_EQ(bal.size(), 8u);
  std::size_t cells[2][2] = {};
  for (std::size_t i = 0; i < bal.size(); ++i) ++cells[bal.targets[i]][bal.biases[i]];
  for (auto& row : cells)
    for (auto c : row) EXPECT_EQ(c, 2u);
}

TEST(Splits, BalancedEmptyCellNamed) {
  const BiasedDataset pool = fixed_pool({{4, 0}, {2, 4}});
  try {
    balanced_unbiased(pool, 0);
    FAIL() << "expected SplitError";
  } catch (const SplitError& e) {
    EXPECT_NE(std::string(e.what()).find("t=0, b=1"), std::string::npos);
  }
}

TEST(Endd, RoundTrip) {
  const BiasedDataset ds = generate(patterns(50, 0.9, 8));
  const BiasedDataset back = deserialize_dataset(serialize_dataset(ds));
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.targets, ds.targets);
  EXPECT_EQ(back.biases, ds.biases);
  EXPECT_EQ(back.origin, ds.origin);
  EXPECT_EQ(back.shape, ds.shape);
  EXPECT_EQ(back.split, ds.split);
  EXPECT_EQ(serialize_dataset(back), serialize_dataset(ds));
}

TEST(Endd, EmptyDatasetRoundTrips) {
  const BiasedDataset ds = generate(patterns(0, 0.9));
  const BiasedDataset back = deserialize_dataset(serialize_dataset(ds));
  EXPECT_EQ(back.size(), 0u);
}

TEST(Endd, TruncationAndMagic) {
  const auto bytes = serialize_dataset(generate(gaussian(20, 0.5, 3)));
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(deserialize_dataset(std::span<const char>(bytes.data(), cut)), FormatError);
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(deserialize_dataset(bad), FormatError);
}

TEST(Endd, FileRoundTrip) {
  const BiasedDataset ds = generate(gaussian(30, 0.5, 3));
  const auto path = std::filesystem::temp_directory_path() / "endreg_test.endd";
  write_dataset(ds, path.string());
  EXPECT_EQ(serialize_dataset(read_dataset(path.string())), serialize_dataset(ds));
  std::filesystem::remove(path);
  EXPECT_THROW(read_dataset(path.string()), IoError);
}
