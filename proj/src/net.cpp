#include "endreg/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "endreg/binary_io.hpp"
#include "endreg/errors.hpp"

namespace endreg {

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

const char* to_string(OptimizerKind kind) noexcept {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "unknown";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "momentum") return OptimizerKind::momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw PreconditionError("unknown optimizer '" + name + "'");
}

LayerSpec LayerSpec::Dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in = in;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::Conv(std::size_t in_ch, std::size_t out_ch,
                          std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::Relu() { return LayerSpec{}; }

LayerSpec LayerSpec::GlobalAvgPool() {
  LayerSpec s;
  s.kind = LayerKind::global_avg_pool;
  return s;
}

LayerSpec LayerSpec::Flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

std::vector<Shape> Architecture::resolve() const {
  if (input.size() == 0) throw DimensionError("input shape is empty");
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape cur = input;
  std::size_t gammas = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& s = layers[l];
    const std::string where = "layer " + std::to_string(l) + " (" +
                              to_string(s.kind) + ")";
    switch (s.kind) {
      case LayerKind::dense:
        if (s.in != cur.size())
          throw DimensionError(where + ": expects " + std::to_string(s.in) +
                               " inputs, receives " +
                               std::to_string(cur.size()));
        if (s.out == 0) throw DimensionError(where + ": zero outputs");
        cur = Shape{1, 1, s.out};
        break;
      case LayerKind::conv2d: {
        if (s.in_channels != cur.channels)
          throw DimensionError(where + ": expects " +
                               std::to_string(s.in_channels) +
                               " channels, receives " +
                               std::to_string(cur.channels));
        if (s.kernel == 0 || s.stride == 0 || s.out_channels == 0)
          throw DimensionError(where + ": kernel, stride and channels must be positive");
        const std::size_t ph = cur.height + 2 * s.padding;
        const std::size_t pw = cur.width + 2 * s.padding;
        if (ph < s.kernel || pw < s.kernel)
          throw DimensionError(where + ": kernel larger than padded input");
        cur = Shape{(ph - s.kernel) / s.stride + 1,
                    (pw - s.kernel) / s.stride + 1, s.out_channels};
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::global_avg_pool:
        cur = Shape{1, 1, cur.channels};
        break;
      case LayerKind::flatten:
        cur = Shape{1, 1, cur.size()};
        break;
    }
    if (s.gamma) ++gammas;
    shapes.push_back(cur);
  }
  if (gammas != 1)
    throw DimensionError("exactly one layer must be tagged as Γ, found " +
                         std::to_string(gammas));
  return shapes;
}

std::size_t Architecture::gamma_index() const {
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (layers[l].gamma) return l;
  throw DimensionError("no layer tagged as Γ");
}

std::size_t Architecture::num_classes() const {
  const auto shapes = resolve();
  return shapes.back().size();
}

Architecture conv_preset(Shape input, std::size_t classes) {
  Architecture a;
  a.input = input;
  a.layers = {LayerSpec::Conv(input.channels, 8, 7, 2, 3), LayerSpec::Relu(),
              LayerSpec::Conv(8, 16, 7, 2, 3),             LayerSpec::Relu(),
              LayerSpec::GlobalAvgPool().tag_gamma(),      LayerSpec::Dense(16, classes)};
  return a;
}

Architecture mlp_preset(std::size_t input_dim, std::size_t hidden,
                        std::size_t classes) {
  Architecture a;
  a.input = Shape{1, 1, input_dim};
  a.layers = {LayerSpec::Dense(input_dim, hidden), LayerSpec::Relu().tag_gamma(),
              LayerSpec::Dense(hidden, classes)};
  return a;
}

template <typename T>
Matrix ForwardTrace<T>::gamma_output() const {
  const Tensor<T>& g = gamma();
  const std::size_t n = g.sample_size();
  Matrix out(n, g.batch);
  for (std::size_t m = 0; m < g.batch; ++m) {
    const T* s = g.sample(m);
    for (std::size_t r = 0; r < n; ++r) out(r, m) = static_cast<double>(s[r]);
  }
  return out;
}

template <typename T>
Tensor<T> tensor_from_columns(const Matrix& inputs, Shape shape) {
  if (inputs.rows() != shape.size())
    throw DimensionError("input has " + std::to_string(inputs.rows()) +
                         " rows, network expects " +
                         std::to_string(shape.size()));
  Tensor<T> t(inputs.cols(), shape);
  for (std::size_t m = 0; m < inputs.cols(); ++m) {
    T* s = t.sample(m);
    for (std::size_t r = 0; r < inputs.rows(); ++r)
      s[r] = static_cast<T>(inputs(r, m));
  }
  return t;
}

namespace {

std::size_t fan_in(const LayerSpec& s) {
  return s.kind == LayerKind::dense ? s.in
                                    : s.kernel * s.kernel * s.in_channels;
}

std::size_t fan_out(const LayerSpec& s) {
  return s.kind == LayerKind::dense ? s.out : s.out_channels;
}

bool has_params(const LayerSpec& s) {
  return s.kind == LayerKind::dense || s.kind == LayerKind::conv2d;
}

template <typename T>
void im2col(const Tensor<T>& in, const LayerSpec& s, const Shape& out,
            std::vector<T>& patches) {
  const Shape& is = in.shape;
  const std::size_t c = is.channels;
  const std::size_t k = s.kernel;
  const std::size_t row_len = k * k * c;
  patches.assign(in.batch * out.height * out.width * row_len, T{});
  T* dst = patches.data();
  for (std::size_t m = 0; m < in.batch; ++m) {
    const T* src = in.sample(m);
    for (std::size_t oy = 0; oy < out.height; ++oy) {
      for (std::size_t ox = 0; ox < out.width; ++ox, dst += row_len) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * s.stride + ky) -
                          static_cast<long>(s.padding);
          if (iy < 0 || iy >= static_cast<long>(is.height)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * s.stride + kx) -
                            static_cast<long>(s.padding);
            if (ix < 0 || ix >= static_cast<long>(is.width)) continue;
            const T* px = src + (static_cast<std::size_t>(iy) * is.width +
                                 static_cast<std::size_t>(ix)) * c;
            std::copy(px, px + c, dst + (ky * k + kx) * c);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& dpatches, const LayerSpec& s,
            const Shape& out, Tensor<T>& din) {
  const Shape& is = din.shape;
  const std::size_t c = is.channels;
  const std::size_t k = s.kernel;
  const std::size_t row_len = k * k * c;
  std::fill(din.data.begin(), din.data.end(), T{});
  const T* src = dpatches.data();
  for (std::size_t m = 0; m < din.batch; ++m) {
    T* dst = din.sample(m);
    for (std::size_t oy = 0; oy < out.height; ++oy) {
      for (std::size_t ox = 0; ox < out.width; ++ox, src += row_len) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * s.stride + ky) -
                          static_cast<long>(s.padding);
          if (iy < 0 || iy >= static_cast<long>(is.height)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * s.stride + kx) -
                            static_cast<long>(s.padding);
            if (ix < 0 || ix >= static_cast<long>(is.width)) continue;
            T* px = dst + (static_cast<std::size_t>(iy) * is.width +
                           static_cast<std::size_t>(ix)) * c;
            const T* g = src + (ky * k + kx) * c;
            for (std::size_t ch = 0; ch < c; ++ch) px[ch] += g[ch];
          }
        }
      }
    }
  }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstRowVec = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

// y (rows x out) = x (rows x in) * w (in x out) + b
template <typename T>
void affine_forward(const T* x, std::size_t rows, std::size_t in,
                    const std::vector<T>& w, const std::vector<T>& b,
                    std::size_t out, T* y) {
  const auto r = static_cast<Eigen::Index>(rows);
  const auto i = static_cast<Eigen::Index>(in);
  const auto o = static_cast<Eigen::Index>(out);
  RowMap<T> ym(y, r, o);
  ym.noalias() = ConstRowMap<T>(x, r, i) * ConstRowMap<T>(w.data(), i, o);
  ym.rowwise() += ConstRowVec<T>(b.data(), o);
}

template <typename T>
void affine_backward(const T* x, const T* dy, std::size_t rows, std::size_t in,
                     std::size_t out, const std::vector<T>& w,
                     LayerParams<T>& grad, T* dx) {
  const auto r = static_cast<Eigen::Index>(rows);
  const auto i = static_cast<Eigen::Index>(in);
  const auto o = static_cast<Eigen::Index>(out);
  ConstRowMap<T> dym(dy, r, o);
  RowMap<T>(grad.weight.data(), i, o).noalias() +=
      ConstRowMap<T>(x, r, i).transpose() * dym;
  // A plain loop: Eigen's vectorized reduction order depends on buffer
  // alignment, which would make training results allocation-dependent.
  for (std::size_t k = 0; k < rows; ++k)
    for (std::size_t j = 0; j < out; ++j) grad.bias[j] += dy[k * out + j];
  if (dx != nullptr)
    RowMap<T>(dx, r, i).noalias() = dym * ConstRowMap<T>(w.data(), i, o).transpose();
}

}  // namespace

template <typename T>
Network<T>::Network(Architecture arch, std::uint64_t seed)
    : arch_(std::move(arch)), shapes_(arch_.resolve()) {
  Rng rng(seed);
  params_.resize(arch_.layers.size());
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    const LayerSpec& s = arch_.layers[l];
    if (!has_params(s)) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in(s)));
    params_[l].weight.resize(fan_in(s) * fan_out(s));
    for (T& w : params_[l].weight) w = static_cast<T>(rng.uniform(-limit, limit));
    params_[l].bias.assign(fan_out(s), T{});
  }
}

template <typename T>
std::size_t Network<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

template <typename T>
bool Network<T>::all_finite() const noexcept {
  for (const auto& p : params_) {
    for (T v : p.weight)
      if (!std::isfinite(v)) return false;
    for (T v : p.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
Gradients<T> Network<T>::zero_gradients() const {
  Gradients<T> g(params_.size());
  for (std::size_t l = 0; l < params_.size(); ++l) {
    g[l].weight.assign(params_[l].weight.size(), T{});
    g[l].bias.assign(params_[l].bias.size(), T{});
  }
  return g;
}

template <typename T>
ForwardTrace<T> Network<T>::forward(const Tensor<T>& inputs) const {
  if (inputs.shape.size() != arch_.input.size())
    throw DimensionError("input samples have " +
                         std::to_string(inputs.shape.size()) +
                         " values, network expects " +
                         std::to_string(arch_.input.size()));
  ForwardTrace<T> trace;
  trace.gamma_layer = arch_.gamma_index();
  trace.activations.reserve(arch_.layers.size() + 1);
  trace.activations.push_back(inputs);
  trace.activations.back().shape = arch_.input;
  trace.patches.resize(arch_.layers.size());
  const std::size_t batch = inputs.batch;

  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    const LayerSpec& s = arch_.layers[l];
    const Tensor<T>& in = trace.activations[l];
    Tensor<T> out(batch, shapes_[l]);
    switch (s.kind) {
      case LayerKind::dense:
        affine_forward(in.data.data(), batch, s.in, params_[l].weight,
                       params_[l].bias, s.out, out.data.data());
        break;
      case LayerKind::conv2d: {
        im2col(in, s, shapes_[l], trace.patches[l]);
        const std::size_t rows = batch * shapes_[l].height * shapes_[l].width;
        affine_forward(trace.patches[l].data(), rows, fan_in(s),
                       params_[l].weight, params_[l].bias, s.out_channels,
                       out.data.data());
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < in.data.size(); ++i)
          out.data[i] = in.data[i] > T{} ? in.data[i] : T{};
        break;
      case LayerKind::global_avg_pool: {
        const std::size_t pixels = in.shape.height * in.shape.width;
        const std::size_t c = in.shape.channels;
        const T inv = T{1} / static_cast<T>(pixels);
        for (std::size_t m = 0; m < batch; ++m) {
          const T* src = in.sample(m);
          T* dst = out.sample(m);
          for (std::size_t p = 0; p < pixels; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[p * c + ch];
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] *= inv;
        }
        break;
      }
      case LayerKind::flatten:
        out.data = in.data;
        break;
    }
    trace.activations.push_back(std::move(out));
  }
  return trace;
}

template <typename T>
Matrix Network<T>::forward(const Matrix& inputs, ForwardTrace<T>* trace) const {
  ForwardTrace<T> tr = forward(tensor_from_columns<T>(inputs, arch_.input));
  const Tensor<T>& lg = tr.logits();
  const std::size_t classes = lg.sample_size();
  Matrix logits(classes, lg.batch);
  for (std::size_t m = 0; m < lg.batch; ++m)
    for (std::size_t t = 0; t < classes; ++t)
      logits(t, m) = static_cast<double>(lg.sample(m)[t]);
  if (trace != nullptr) *trace = std::move(tr);
  return logits;
}

template <typename T>
Gradients<T> Network<T>::backward(const ForwardTrace<T>& trace,
                                  const Tensor<T>& grad_logits,
                                  const Matrix& grad_gamma) const {
  const std::size_t batch = trace.activations.front().batch;
  if (grad_logits.batch != batch ||
      grad_logits.sample_size() != trace.logits().sample_size())
    throw DimensionError("grad_logits shape does not match the logits");
  const std::size_t gl = trace.gamma_layer;
  if (!grad_gamma.empty() &&
      (grad_gamma.rows() != shapes_[gl].size() || grad_gamma.cols() != batch))
    throw DimensionError("grad_gamma is " + std::to_string(grad_gamma.rows()) +
                         "x" + std::to_string(grad_gamma.cols()) +
                         ", Γ output is " + std::to_string(shapes_[gl].size()) +
                         "x" + std::to_string(batch));

  Gradients<T> grads = zero_gradients();
  Tensor<T> g = grad_logits;
  g.shape = shapes_.back();
  for (std::size_t l = arch_.layers.size(); l-- > 0;) {
    const LayerSpec& s = arch_.layers[l];
    if (l == gl && !grad_gamma.empty()) {
      const std::size_t n = g.sample_size();
      for (std::size_t m = 0; m < batch; ++m) {
        T* gs = g.sample(m);
        for (std::size_t r = 0; r < n; ++r)
          gs[r] += static_cast<T>(grad_gamma(r, m));
      }
    }
    const Tensor<T>& in = trace.activations[l];
    const bool need_input_grad = l > 0;
    Tensor<T> din(batch, in.shape);
    switch (s.kind) {
      case LayerKind::dense:
        affine_backward(in.data.data(), g.data.data(), batch, s.in, s.out,
                        params_[l].weight, grads[l],
                        need_input_grad ? din.data.data() : nullptr);
        break;
      case LayerKind::conv2d: {
        const std::size_t rows = batch * shapes_[l].height * shapes_[l].width;
        std::vector<T> dpatches(need_input_grad ? rows * fan_in(s) : 0);
        affine_backward(trace.patches[l].data(), g.data.data(), rows,
                        fan_in(s), s.out_channels, params_[l].weight, grads[l],
                        need_input_grad ? dpatches.data() : nullptr);
        if (need_input_grad) col2im(dpatches, s, shapes_[l], din);
        break;
      }
      case LayerKind::relu: {
        const Tensor<T>& out = trace.activations[l + 1];
        for (std::size_t i = 0; i < din.data.size(); ++i)
          din.data[i] = out.data[i] > T{} ? g.data[i] : T{};
        break;
      }
      case LayerKind::global_avg_pool: {
        const std::size_t pixels = in.shape.height * in.shape.width;
        const std::size_t c = in.shape.channels;
        const T inv = T{1} / static_cast<T>(pixels);
        for (std::size_t m = 0; m < batch; ++m) {
          const T* gs = g.sample(m);
          T* dst = din.sample(m);
          for (std::size_t p = 0; p < pixels; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) dst[p * c + ch] = gs[ch] * inv;
        }
        break;
      }
      case LayerKind::flatten:
        din.data = g.data;
        break;
    }
    if (!need_input_grad) break;
    g = std::move(din);
  }
  return grads;
}

template <typename T>
Gradients<T> Network<T>::backward(const ForwardTrace<T>& trace,
                                  const Matrix& grad_logits,
                                  const Matrix& grad_gamma) const {
  const Shape out_shape = shapes_.back();
  if (grad_logits.rows() != out_shape.size())
    throw DimensionError("grad_logits has " + std::to_string(grad_logits.rows()) +
                         " rows, network has " +
                         std::to_string(out_shape.size()) + " outputs");
  return backward(trace, tensor_from_columns<T>(grad_logits, out_shape),
                  grad_gamma);
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out;
  out.arch_ = arch_;
  out.shapes_ = shapes_;
  out.params_.resize(params_.size());
  for (std::size_t l = 0; l < params_.size(); ++l) {
    out.params_[l].weight.assign(params_[l].weight.begin(),
                                 params_[l].weight.end());
    out.params_[l].bias.assign(params_[l].bias.begin(), params_[l].bias.end());
  }
  return out;
}

LossResult softmax_cross_entropy(const Matrix& logits,
                                 std::span<const Label> targets) {
  const std::size_t classes = logits.rows();
  const std::size_t m = logits.cols();
  if (targets.size() != m)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(m) +
                         " logit columns, " + std::to_string(targets.size()) +
                         " targets");
  LossResult out;
  out.grad_logits = Matrix(classes, m);
  if (m == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t c = 0; c < m; ++c) {
    if (targets[c] >= classes)
      throw DimensionError("target " + std::to_string(targets[c]) +
                           " outside the logit range");
    double mx = logits(0, c);
    for (std::size_t t = 1; t < classes; ++t) mx = std::max(mx, logits(t, c));
    double z = 0.0;
    for (std::size_t t = 0; t < classes; ++t) z += std::exp(logits(t, c) - mx);
    const double lse = mx + std::log(z);
    out.loss += (lse - logits(targets[c], c)) * inv_m;
    for (std::size_t t = 0; t < classes; ++t) {
      const double p = std::exp(logits(t, c) - lse);
      out.grad_logits(t, c) = (p - (t == targets[c] ? 1.0 : 0.0)) * inv_m;
    }
  }
  return out;
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits,
                             std::span<const Label> targets,
                             Tensor<T>* grad_logits) {
  const std::size_t classes = logits.sample_size();
  const std::size_t m = logits.batch;
  if (targets.size() != m) throw DimensionError("target count mismatch");
  if (grad_logits != nullptr) *grad_logits = Tensor<T>(m, logits.shape);
  if (m == 0) return 0.0;
  const double inv_m = 1.0 / static_cast<double>(m);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const T* z = logits.sample(i);
    if (targets[i] >= classes) throw DimensionError("target out of range");
    double mx = static_cast<double>(z[0]);
    for (std::size_t t = 1; t < classes; ++t)
      mx = std::max(mx, static_cast<double>(z[t]));
    double sum = 0.0;
    for (std::size_t t = 0; t < classes; ++t)
      sum += std::exp(static_cast<double>(z[t]) - mx);
    const double lse = mx + std::log(sum);
    loss += (lse - static_cast<double>(z[targets[i]])) * inv_m;
    if (grad_logits != nullptr) {
      T* gz = grad_logits->sample(i);
      for (std::size_t t = 0; t < classes; ++t) {
        const double p = std::exp(static_cast<double>(z[t]) - lse);
        gz[t] = static_cast<T>((p - (t == targets[i] ? 1.0 : 0.0)) * inv_m);
      }
    }
  }
  return loss;
}

template <typename T>
void optimizer_step(Network<T>& net, const Gradients<T>& grads,
                    const OptimizerConfig& cfg) {
  auto& params = net.params();
  if (grads.size() != params.size())
    throw DimensionError("gradient list does not match the network");
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (grads[l].weight.size() != params[l].weight.size() ||
        grads[l].bias.size() != params[l].bias.size())
      throw DimensionError("gradient shape mismatch at layer " +
                           std::to_string(l));
  }
  OptimizerState<T>& st = net.optimizer();
  ++st.step;
  if (cfg.kind != OptimizerKind::sgd && st.first.empty())
    st.first = net.zero_gradients();
  if (cfg.kind == OptimizerKind::adam && st.second.empty())
    st.second = net.zero_gradients();

  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));

  auto update = [&](std::vector<T>& w, const std::vector<T>& g,
                    std::vector<T>* m1, std::vector<T>* m2) {
    switch (cfg.kind) {
      case OptimizerKind::sgd:
        for (std::size_t i = 0; i < w.size(); ++i)
          w[i] -= static_cast<T>(cfg.lr) * g[i];
        break;
      case OptimizerKind::momentum:
        for (std::size_t i = 0; i < w.size(); ++i) {
          (*m1)[i] = static_cast<T>(cfg.momentum) * (*m1)[i] + g[i];
          w[i] -= static_cast<T>(cfg.lr) * (*m1)[i];
        }
        break;
      case OptimizerKind::adam:
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = static_cast<double>(g[i]);
          const double m = cfg.beta1 * static_cast<double>((*m1)[i]) +
                           (1.0 - cfg.beta1) * gi;
          const double v = cfg.beta2 * static_cast<double>((*m2)[i]) +
                           (1.0 - cfg.beta2) * gi * gi;
          (*m1)[i] = static_cast<T>(m);
          (*m2)[i] = static_cast<T>(v);
          const double step =
              cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
          w[i] = static_cast<T>(static_cast<double>(w[i]) - step);
        }
        break;
    }
  };

  for (std::size_t l = 0; l < params.size(); ++l) {
    std::vector<T>* m1w = st.first.empty() ? nullptr : &st.first[l].weight;
    std::vector<T>* m1b = st.first.empty() ? nullptr : &st.first[l].bias;
    std::vector<T>* m2w = st.second.empty() ? nullptr : &st.second[l].weight;
    std::vector<T>* m2b = st.second.empty() ? nullptr : &st.second[l].bias;
    update(params[l].weight, grads[l].weight, m1w, m2w);
    update(params[l].bias, grads[l].bias, m1b, m2b);
  }
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

template <typename T>
std::vector<char> serialize_checkpoint(const Network<T>& net) {
  const Architecture& a = net.architecture();
  ByteWriter w;
  w.bytes("ENDM");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(a.input.height));
  w.u32(static_cast<std::uint32_t>(a.input.width));
  w.u32(static_cast<std::uint32_t>(a.input.channels));
  w.u32(static_cast<std::uint32_t>(a.layers.size()));
  for (const LayerSpec& s : a.layers) {
    w.u32(static_cast<std::uint32_t>(s.kind));
    for (std::size_t v : {s.in, s.out, s.in_channels, s.out_channels, s.kernel,
                          s.stride, s.padding})
      w.u32(static_cast<std::uint32_t>(v));
    w.u32(s.gamma ? 1u : 0u);
  }
  for (const auto& p : net.params()) {
    w.u64(p.weight.size());
    for (T v : p.weight) w.f32(static_cast<float>(v));
    w.u64(p.bias.size());
    for (T v : p.bias) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

template <typename T>
Network<T> deserialize_checkpoint(std::span<const char> bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.bytes(4) != "ENDM") throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  Architecture a;
  a.input.height = r.u32();
  a.input.width = r.u32();
  a.input.channels = r.u32();
  const std::uint32_t n = r.u32();
  if (n > 4096) throw FormatError("checkpoint: implausible layer count");
  for (std::uint32_t l = 0; l < n; ++l) {
    LayerSpec s;
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LayerKind::flatten))
      throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind));
    s.kind = static_cast<LayerKind>(kind);
    s.in = r.u32();
    s.out = r.u32();
    s.in_channels = r.u32();
    s.out_channels = r.u32();
    s.kernel = r.u32();
    s.stride = r.u32();
    s.padding = r.u32();
    s.gamma = (r.u32() & 1u) != 0;
    a.layers.push_back(s);
  }
  Network<T> net;
  try {
    net = Network<T>(a, 0);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  for (auto& p : net.params()) {
    for (std::vector<T>* blob : {&p.weight, &p.bias}) {
      const std::uint64_t count = r.u64();
      if (count != blob->size())
        throw FormatError("checkpoint: parameter blob size mismatch");
      r.need(count * 4);
      for (T& v : *blob) v = static_cast<T>(r.f32());
    }
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return net;
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path) {
  write_file(path, serialize_checkpoint(net));
}

template <typename T>
Network<T> load_checkpoint(const std::string& path) {
  return deserialize_checkpoint<T>(read_file(path));
}

#define ENDREG_INSTANTIATE(T)                                                \
  template struct ForwardTrace<T>;                                           \
  template class Network<T>;                                                 \
  template Tensor<T> tensor_from_columns<T>(const Matrix&, Shape);           \
  template double softmax_cross_entropy<T>(const Tensor<T>&,                 \
                                           std::span<const Label>, Tensor<T>*); \
  template void optimizer_step<T>(Network<T>&, const Gradients<T>&,          \
                                  const OptimizerConfig&);                   \
  template std::vector<char> serialize_checkpoint<T>(const Network<T>&);     \
  template Network<T> deserialize_checkpoint<T>(std::span<const char>);      \
  template void save_checkpoint<T>(const Network<T>&, const std::string&);   \
  template Network<T> load_checkpoint<T>(const std::string&);

ENDREG_INSTANTIATE(float)
ENDREG_INSTANTIATE(double)
#undef ENDREG_INSTANTIATE

template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

}  // namespace endreg
