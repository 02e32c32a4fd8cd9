#include "endreg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "endreg/binary_io.hpp"
#include "endreg/errors.hpp"

namespace endreg {

const char* to_string(Generator g) noexcept {
  switch (g) {
    case Generator::gaussian_clusters: return "gaussian_clusters";
    case Generator::colored_patterns: return "colored_patterns";
    case Generator::injected_idx: return "injected_idx";
    case Generator::fixed_pool: return "fixed_pool";
  }
  return "unknown";
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::biased_test: return "biased_test";
    case Split::unbiased_test: return "unbiased_test";
    case Split::bias_conflicting: return "bias_conflicting";
  }
  return "unknown";
}

Generator generator_from_string(const std::string& name) {
  for (Generator g : {Generator::gaussian_clusters, Generator::colored_patterns,
                      Generator::injected_idx, Generator::fixed_pool})
    if (name == to_string(g)) return g;
  throw SpecError("unknown generator '" + name + "'");
}

const std::vector<Rgb>& default_palette() {
  static const std::vector<Rgb> palette = {
      Rgb{230, 25, 75},   // red
      Rgb{60, 180, 75},   // green
      Rgb{255, 225, 25},  // yellow
      Rgb{0, 130, 200},   // blue
      Rgb{245, 130, 48},  // orange
      Rgb{145, 30, 180},  // purple
      Rgb{70, 240, 240},  // cyan
      Rgb{240, 50, 230},  // magenta
      Rgb{128, 128, 0},   // olive
      Rgb{0, 0, 128},     // navy
  };
  return palette;
}

std::vector<Rgb> load_palette(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open palette " + path);
  std::vector<Rgb> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    int r, g, b;
    std::string extra;
    if (!(ss >> r >> g >> b) || (ss >> extra) || r < 0 || r > 255 || g < 0 ||
        g > 255 || b < 0 || b > 255)
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected three integers in 0-255");
    out.push_back(Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                      static_cast<std::uint8_t>(b)});
  }
  return out;
}

void DatasetSpec::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw SpecError("rho must lie in [0, 1], got " + std::to_string(rho));
  if (n_targets < 1 || n_biases < 1)
    throw SpecError("n_targets and n_biases must be at least 1");
  if (n_targets > 65535 || n_biases > 65535)
    throw SpecError("class counts must fit in 16 bits");
  if (n_samples >= (std::size_t{1} << 28))
    throw SpecError("at most 2^28 samples per split");
  if (workers < 1) throw SpecError("workers must be at least 1");
  switch (generator) {
    case Generator::gaussian_clusters:
      if (shape.size() < 2) throw SpecError("gaussian_clusters needs dim >= 2");
      if (!(noise >= 0.0)) throw SpecError("noise must be non-negative");
      break;
    case Generator::colored_patterns:
    case Generator::injected_idx:
      if (n_biases != n_targets)
        throw SpecError("the color protocol needs one color per class (B == T)");
      if (effective_palette().size() != n_biases)
        throw SpecError("palette has " + std::to_string(effective_palette().size()) +
                        " colors for " + std::to_string(n_biases) + " classes");
      if (generator == Generator::colored_patterns) {
        if (shape.channels != 3 || shape.height < 8 || shape.width < 8)
          throw SpecError("colored_patterns needs H, W >= 8 and 3 channels");
        if (!(noise >= 0.0)) throw SpecError("noise must be non-negative");
      }
      break;
    case Generator::fixed_pool:
      break;
  }
}

const std::vector<Rgb>& DatasetSpec::effective_palette() const {
  return palette.empty() ? default_palette() : palette;
}

Label draw_bias(Rng& rng, std::size_t target, double rho, std::size_t n_biases) {
  const std::size_t aligned = aligned_bias(target, n_biases);
  if (n_biases == 1) return 0;
  if (rng.uniform() < rho) return static_cast<Label>(aligned);
  std::size_t other = rng.below(n_biases - 1);
  if (other >= aligned) ++other;
  return static_cast<Label>(other);
}

std::uint32_t make_origin(Split split, std::size_t index) {
  return (static_cast<std::uint32_t>(split) << 28) |
         static_cast<std::uint32_t>(index);
}

void BiasedDataset::validate() const {
  const std::size_t n = targets.size();
  if (biases.size() != n || origin.size() != n ||
      features.size() != n * shape.size())
    throw FormatError("dataset arrays have inconsistent lengths");
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= spec.n_targets || biases[i] >= spec.n_biases)
      throw FormatError("label out of range at sample " + std::to_string(i));
  }
}

BiasedDataset BiasedDataset::subset(std::span<const std::size_t> indices,
                                    Split as) const {
  BiasedDataset out;
  out.spec = spec;
  out.split = as;
  out.shape = shape;
  const std::size_t d = shape.size();
  out.features.reserve(indices.size() * d);
  for (std::size_t i : indices) {
    auto s = sample(i);
    out.features.insert(out.features.end(), s.begin(), s.end());
    out.targets.push_back(targets[i]);
    out.biases.push_back(biases[i]);
    out.origin.push_back(origin[i]);
  }
  out.spec.n_samples = indices.size();
  return out;
}

double BiasedDataset::aligned_fraction() const {
  if (size() == 0) return 0.0;
  std::size_t aligned = 0;
  for (std::size_t i = 0; i < size(); ++i)
    aligned += biases[i] == aligned_bias(targets[i], spec.n_biases) ? 1 : 0;
  return static_cast<double>(aligned) / static_cast<double>(size());
}

namespace {

// Per-sample streams make the output independent of how samples are
// distributed over workers.
constexpr std::uint64_t kMeansStream = 0xffffffffffffULL;

std::uint64_t sample_stream(Split split, std::size_t i) {
  return (static_cast<std::uint64_t>(split) << 32) | i;
}

template <typename Fn>
void parallel_samples(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

BiasedDataset empty_like(const DatasetSpec& spec, Split split, Shape shape,
                         std::size_t n) {
  BiasedDataset ds;
  ds.spec = spec;
  ds.spec.n_samples = n;
  ds.split = split;
  ds.shape = shape;
  ds.features.assign(n * shape.size(), 0.0f);
  ds.targets.assign(n, 0);
  ds.biases.assign(n, 0);
  ds.origin.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.origin[i] = make_origin(split, i);
  return ds;
}

double split_rho(const DatasetSpec& spec, Split split) {
  switch (split) {
    case Split::train: return spec.rho;
    case Split::biased_test: return 1.0;
    case Split::unbiased_test:
    case Split::bias_conflicting: return 0.1;
  }
  return spec.rho;
}

}  // namespace

BiasedDataset generate_gaussian_biased(const DatasetSpec& spec, Split split) {
  if (spec.generator != Generator::gaussian_clusters)
    throw SpecError("generate_gaussian_biased needs generator=gaussian_clusters");
  spec.validate();
  const std::size_t d = spec.shape.size();
  const std::size_t half = d / 2;
  Rng means_rng(spec.seed, kMeansStream);
  Matrix target_means = random_normal(means_rng, spec.n_targets, half);
  Matrix bias_means = random_normal(means_rng, spec.n_biases, d - half);

  const double rho = split_rho(spec, split);
  BiasedDataset ds = empty_like(spec, split, Shape{1, 1, d}, spec.n_samples);
  parallel_samples(spec.n_samples, spec.workers, [&](std::size_t i) {
    Rng rng(spec.seed, sample_stream(split, i));
    const auto t = static_cast<Label>(rng.below(spec.n_targets));
    const Label b = draw_bias(rng, t, rho, spec.n_biases);
    ds.targets[i] = t;
    ds.biases[i] = b;
    float* x = ds.features.data() + i * d;
    for (std::size_t k = 0; k < half; ++k)
      x[k] = static_cast<float>(target_means(t, k) + spec.noise * rng.normal());
    for (std::size_t k = half; k < d; ++k)
      x[k] = static_cast<float>(bias_means(b, k - half) + spec.noise * rng.normal());
  });
  return ds;
}

bool glyph_on(std::size_t cls, std::ptrdiff_t x, std::ptrdiff_t y) {
  const auto mod = [](std::ptrdiff_t a, std::ptrdiff_t m) { return ((a % m) + m) % m; };
  switch (cls % 10) {
    case 0: return mod(x, 4) < 2;                          // vertical stripes
    case 1: return mod(y, 4) < 2;                          // horizontal stripes
    case 2: return mod(x + y, 4) < 2;                      // diagonal stripes
    case 3: return mod(x - y, 4) < 2;                      // anti-diagonal stripes
    case 4: return (mod(x, 4) < 2) == (mod(y, 4) < 2);     // checkerboard
    case 5: return mod(x, 4) == 0 && mod(y, 4) == 0;       // dot grid
    case 6: return mod(x, 8) < 4;                          // wide vertical stripes
    case 7: return mod(y, 8) < 4;                          // wide horizontal stripes
    case 8: return true;                                   // solid
    default: return mod(x, 4) == 0 || mod(y, 4) == 0;      // grid lines
  }
}

BiasedDataset generate_colored_patterns(const DatasetSpec& spec, Split split) {
  if (spec.generator != Generator::colored_patterns)
    throw SpecError("generate_colored_patterns needs generator=colored_patterns");
  spec.validate();
  const Shape shape = spec.shape;
  const auto& palette = spec.effective_palette();
  const double rho = split_rho(spec, split);
  BiasedDataset ds = empty_like(spec, split, shape, spec.n_samples);
  const auto base_half =
      static_cast<std::ptrdiff_t>(std::min(shape.height, shape.width) / 4);
  const auto jitter = static_cast<std::ptrdiff_t>(spec.jitter);

  parallel_samples(spec.n_samples, spec.workers, [&](std::size_t i) {
    Rng rng(spec.seed, sample_stream(split, i));
    const auto t = static_cast<Label>(rng.below(spec.n_targets));
    const Label b = draw_bias(rng, t, rho, spec.n_biases);
    ds.targets[i] = t;
    ds.biases[i] = b;
    const auto half = base_half + static_cast<std::ptrdiff_t>(rng.below(3));
    const auto shift = [&] {
      return static_cast<std::ptrdiff_t>(
                 rng.below(static_cast<std::uint64_t>(2 * jitter + 1))) -
             jitter;
    };
    const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(shape.width / 2) + shift();
    const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(shape.height / 2) + shift();
    const auto px = static_cast<std::ptrdiff_t>(rng.below(8));
    const auto py = static_cast<std::ptrdiff_t>(rng.below(8));
    const double level = rng.uniform(0.75, 1.0);
    const Rgb& color = palette[b];
    float* img = ds.features.data() + i * shape.size();
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        const auto sx = static_cast<std::ptrdiff_t>(x);
        const auto sy = static_cast<std::ptrdiff_t>(y);
        const bool in = std::abs(sx - cx) <= half && std::abs(sy - cy) <= half;
        const bool on = in && glyph_on(t, sx + px, sy + py);
        float* pix = img + (y * shape.width + x) * 3;
        for (std::size_t c = 0; c < 3; ++c) {
          const double base = on ? level : (in ? 0.0 : color[c] / 255.0);
          const double v = base + spec.noise * rng.normal();
          pix[c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  });
  return ds;
}

GrayImages parse_idx(std::span<const char> images, std::span<const char> labels) {
  ByteReader ri(images, "idx images");
  ByteReader rl(labels, "idx labels");
  const std::uint32_t mi = ri.u32_be();
  if (mi != 2051)
    throw FormatError("idx images: bad magic " + std::to_string(mi) +
                      " (expected 2051)");
  const std::uint32_t ml = rl.u32_be();
  if (ml != 2049)
    throw FormatError("idx labels: bad magic " + std::to_string(ml) +
                      " (expected 2049)");
  GrayImages g;
  g.count = ri.u32_be();
  g.rows = ri.u32_be();
  g.cols = ri.u32_be();
  const std::uint32_t nl = rl.u32_be();
  if (nl != g.count)
    throw FormatError("idx: " + std::to_string(g.count) + " images but " +
                      std::to_string(nl) + " labels");
  const std::size_t pixels = g.count * g.rows * g.cols;
  ri.need(pixels);
  rl.need(g.count);
  g.pixels.resize(pixels);
  for (float& p : g.pixels) p = static_cast<float>(ri.u8()) / 255.0f;
  g.labels.resize(g.count);
  for (Label& l : g.labels) l = rl.u8();
  return g;
}

GrayImages load_idx(const std::string& images_path,
                    const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path));
}

BiasedDataset inject_color_bias(const GrayImages& gray, double rho,
                                const std::vector<Rgb>& palette,
                                std::uint64_t seed, Split split) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw SpecError("rho must lie in [0, 1]");
  if (palette.empty()) throw SpecError("empty palette");
  std::size_t classes = 0;
  for (Label l : gray.labels) classes = std::max<std::size_t>(classes, l + 1u);
  if (classes > palette.size())
    throw SpecError("palette has " + std::to_string(palette.size()) +
                    " colors but labels reach class " +
                    std::to_string(classes - 1));
  DatasetSpec spec;
  spec.generator = Generator::injected_idx;
  spec.n_targets = palette.size();
  spec.n_biases = palette.size();
  spec.rho = rho;
  spec.seed = seed;
  spec.noise = 0.0;
  spec.jitter = 0;
  spec.palette = palette;
  const Shape shape{gray.rows, gray.cols, 3};
  spec.shape = shape;
  BiasedDataset ds = empty_like(spec, split, shape, gray.count);
  const std::size_t px_count = gray.rows * gray.cols;
  for (std::size_t i = 0; i < gray.count; ++i) {
    Rng rng(seed, sample_stream(split, i));
    const Label t = gray.labels[i];
    const Label b = draw_bias(rng, t, rho, palette.size());
    ds.targets[i] = t;
    ds.biases[i] = b;
    const float* src = gray.pixels.data() + i * px_count;
    float* dst = ds.features.data() + i * shape.size();
    for (std::size_t p = 0; p < px_count; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        dst[p * 3 + c] = src[p] < 0.5f ? static_cast<float>(palette[b][c]) / 255.0f
                                       : src[p];
      }
    }
  }
  return ds;
}

BiasedDataset generate(const DatasetSpec& spec, Split split) {
  switch (spec.generator) {
    case Generator::gaussian_clusters: return generate_gaussian_biased(spec, split);
    case Generator::colored_patterns: return generate_colored_patterns(spec, split);
    case Generator::injected_idx: {
      spec.validate();
      const bool train = split == Split::train;
      const std::string& im = train ? spec.idx_images : spec.idx_test_images;
      const std::string& lb = train ? spec.idx_labels : spec.idx_test_labels;
      if (im.empty() || lb.empty())
        throw SpecError(std::string("injected_idx needs ") +
                        (train ? "idx_images/idx_labels" : "idx_test_images/idx_test_labels"));
      BiasedDataset ds = inject_color_bias(load_idx(im, lb), split_rho(spec, split),
                                           spec.effective_palette(), spec.seed, split);
      ds.spec.idx_images = spec.idx_images;
      ds.spec.idx_labels = spec.idx_labels;
      ds.spec.idx_test_images = spec.idx_test_images;
      ds.spec.idx_test_labels = spec.idx_test_labels;
      if (spec.n_samples > 0 && spec.n_samples < ds.size()) {
        std::vector<std::size_t> first(spec.n_samples);
        for (std::size_t i = 0; i < first.size(); ++i) first[i] = i;
        ds = ds.subset(first, split);
      }
      return ds;
    }
    case Generator::fixed_pool:
      throw SpecError("a fixed pool cannot be regenerated");
  }
  throw SpecError("unknown generator");
}

BiasedDataset balanced_unbiased(const BiasedDataset& pool, std::uint64_t seed) {
  const std::size_t nt = pool.spec.n_targets, nb = pool.spec.n_biases;
  std::vector<std::vector<std::size_t>> cells(nt * nb);
  for (std::size_t i = 0; i < pool.size(); ++i)
    cells[pool.targets[i] * nb + pool.biases[i]].push_back(i);
  std::size_t per_cell = SIZE_MAX;
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t n = cells[t * nb + b].size();
      if (n == 0)
        throw SplitError("cell (t=" + std::to_string(t) + ", b=" +
                         std::to_string(b) + ") is empty; cannot balance");
      per_cell = std::min(per_cell, n);
    }
  }
  Rng rng(seed, 0xba1a0ce);
  std::vector<std::size_t> chosen;
  for (auto& cell : cells) {
    rng.shuffle(std::span<std::size_t>(cell));
    chosen.insert(chosen.end(), cell.begin(), cell.begin() + static_cast<long>(per_cell));
  }
  std::sort(chosen.begin(), chosen.end());
  return pool.subset(chosen, Split::unbiased_test);
}

BiasedDataset bias_conflicting(const BiasedDataset& unbiased) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < unbiased.size(); ++i)
    if (unbiased.biases[i] != aligned_bias(unbiased.targets[i], unbiased.spec.n_biases))
      keep.push_back(i);
  if (keep.empty())
    throw SplitError("bias-conflicting split is empty: every sample is aligned");
  return unbiased.subset(keep, Split::bias_conflicting);
}

BiasedDataset build_eval_split(const BiasedDataset& source, SplitMode mode,
                               std::size_t n_samples) {
  const bool regenerable = source.spec.generator != Generator::fixed_pool;
  auto regenerate = [&](Split split) {
    DatasetSpec spec = source.spec;
    if (n_samples > 0) spec.n_samples = n_samples;
    return generate(spec, split);
  };
  switch (mode) {
    case SplitMode::biased_test:
      if (!regenerable) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < source.size(); ++i)
          if (source.biases[i] == aligned_bias(source.targets[i], source.spec.n_biases))
            keep.push_back(i);
        return source.subset(keep, Split::biased_test);
      }
      return regenerate(Split::biased_test);
    case SplitMode::unbiased_test:
      return regenerable ? regenerate(Split::unbiased_test)
                         : balanced_unbiased(source, source.spec.seed);
    case SplitMode::bias_conflicting:
      return bias_conflicting(build_eval_split(source, SplitMode::unbiased_test, n_samples));
    case SplitMode::balanced:
      return balanced_unbiased(source, source.spec.seed);
  }
  throw SplitError("unknown split mode");
}

namespace {
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;
}  // namespace

std::vector<char> serialize_dataset(const BiasedDataset& ds) {
  ds.validate();
  ByteWriter w;
  w.bytes("ENDD");
  w.u32(kDatasetVersion);
  w.u64(ds.size());
  w.u32(static_cast<std::uint32_t>(ds.shape.height));
  w.u32(static_cast<std::uint32_t>(ds.shape.width));
  w.u32(static_cast<std::uint32_t>(ds.shape.channels));
  w.u32(kDtypeF32);
  for (float v : ds.features) w.f32(v);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.u16(ds.targets[i]);
    w.u16(ds.biases[i]);
  }
  ByteWriter spec;
  spec.u32(static_cast<std::uint32_t>(ds.spec.n_targets));
  spec.u32(static_cast<std::uint32_t>(ds.spec.n_biases));
  spec.f64(ds.spec.rho);
  spec.u32(static_cast<std::uint32_t>(ds.spec.generator));
  spec.u64(ds.spec.seed);
  spec.f64(ds.spec.noise);
  spec.u32(static_cast<std::uint32_t>(ds.spec.jitter));
  spec.u32(static_cast<std::uint32_t>(ds.split));
  const auto& palette = ds.spec.effective_palette();
  spec.u32(static_cast<std::uint32_t>(palette.size()));
  for (const Rgb& c : palette)
    for (std::uint8_t v : c) spec.u8(v);
  for (const std::string* s : {&ds.spec.idx_images, &ds.spec.idx_labels,
                               &ds.spec.idx_test_images, &ds.spec.idx_test_labels})
    spec.str(*s);
  for (std::uint32_t o : ds.origin) spec.u32(o);
  w.u32(static_cast<std::uint32_t>(spec.buffer().size()));
  std::vector<char> out = w.buffer();
  out.insert(out.end(), spec.buffer().begin(), spec.buffer().end());
  return out;
}

BiasedDataset deserialize_dataset(std::span<const char> bytes) {
  ByteReader r(bytes, "ENDD");
  if (r.bytes(4) != "ENDD") throw FormatError("ENDD: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw FormatError("ENDD: unsupported version " + std::to_string(version));
  BiasedDataset ds;
  const std::uint64_t n = r.u64();
  ds.shape.height = r.u32();
  ds.shape.width = r.u32();
  ds.shape.channels = r.u32();
  if (r.u32() != kDtypeF32) throw FormatError("ENDD: unknown dtype tag");
  const std::uint64_t d = ds.shape.size();
  if (d == 0 || n > r.remaining() / (4 * d + 4))
    throw FormatError("ENDD: truncated or implausible header");
  ds.features.resize(n * d);
  for (float& v : ds.features) v = r.f32();
  ds.targets.resize(n);
  ds.biases.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.targets[i] = r.u16();
    ds.biases[i] = r.u16();
  }
  const std::uint32_t block = r.u32();
  if (block != r.remaining())
    throw FormatError("ENDD: spec block length " + std::to_string(block) +
                      " does not match the " + std::to_string(r.remaining()) +
                      " remaining bytes");
  DatasetSpec& s = ds.spec;
  s.n_targets = r.u32();
  s.n_biases = r.u32();
  s.rho = r.f64();
  const std::uint32_t gen = r.u32();
  if (gen > static_cast<std::uint32_t>(Generator::fixed_pool))
    throw FormatError("ENDD: unknown generator tag");
  s.generator = static_cast<Generator>(gen);
  s.seed = r.u64();
  s.noise = r.f64();
  s.jitter = r.u32();
  const std::uint32_t split = r.u32();
  if (split > static_cast<std::uint32_t>(Split::bias_conflicting))
    throw FormatError("ENDD: unknown split tag");
  ds.split = static_cast<Split>(split);
  const std::uint32_t colors = r.u32();
  r.need(std::size_t{colors} * 3);
  s.palette.resize(colors);
  for (Rgb& c : s.palette)
    for (std::uint8_t& v : c) v = r.u8();
  if (s.palette == default_palette()) s.palette.clear();
  s.idx_images = r.str();
  s.idx_labels = r.str();
  s.idx_test_images = r.str();
  s.idx_test_labels = r.str();
  ds.origin.resize(n);
  for (std::uint32_t& o : ds.origin) o = r.u32();
  if (r.remaining() != 0) throw FormatError("ENDD: trailing bytes");
  s.shape = ds.shape;
  s.n_samples = n;
  ds.validate();
  return ds;
}

void write_dataset(const BiasedDataset& ds, const std::string& path) {
  write_file(path, serialize_dataset(ds));
}

BiasedDataset read_dataset(const std::string& path) {
  return deserialize_dataset(read_file(path));
}

Matrix dataset_columns(const BiasedDataset& ds,
                       std::span<const std::size_t> indices) {
  const std::size_t d = ds.shape.size();
  Matrix m(d, indices.size());
  for (std::size_t c = 0; c < indices.size(); ++c) {
    auto s = ds.sample(indices[c]);
    for (std::size_t r = 0; r < d; ++r) m(r, c) = s[r];
  }
  return m;
}

}  // namespace endreg
