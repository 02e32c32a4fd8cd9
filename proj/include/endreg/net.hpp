#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "endreg/end_core.hpp"
#include "endreg/linalg.hpp"

namespace endreg {

enum class LayerKind : std::uint32_t {
  dense = 0,
  conv2d = 1,
  relu = 2,
  global_avg_pool = 3,
  flatten = 4,
};

const char* to_string(LayerKind kind) noexcept;

// Activations are stored sample-major in channels-last order (H, W, C), so a
// plain vector of size D is the shape (1, 1, D).
struct Shape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const noexcept { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // dense: in -> out
  std::size_t in = 0;
  std::size_t out = 0;
  // conv2d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  // Output of this layer feeds the regularizer.
  bool gamma = false;

  static LayerSpec Dense(std::size_t in, std::size_t out);
  static LayerSpec Conv(std::size_t in_ch, std::size_t out_ch,
                        std::size_t kernel, std::size_t stride,
                        std::size_t padding);
  static LayerSpec Relu();
  static LayerSpec GlobalAvgPool();
  static LayerSpec Flatten();
  LayerSpec& tag_gamma() {
    gamma = true;
    return *this;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Architecture {
  Shape input;
  std::vector<LayerSpec> layers;

  // Output shape of every layer; throws DimensionError when layers do not
  // compose or the Γ tag is missing or repeated.
  std::vector<Shape> resolve() const;
  std::size_t gamma_index() const;
  std::size_t num_classes() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// conv(C->8, 7x7, s2, p3) - relu - conv(8->16, 7x7, s2, p3) - relu -
// global_avg_pool [Γ] - dense(16 -> classes)
Architecture conv_preset(Shape input, std::size_t classes);
// dense(D -> hidden) - relu [Γ] - dense(hidden -> classes)
Architecture mlp_preset(std::size_t input_dim, std::size_t hidden,
                        std::size_t classes);

template <typename T>
struct Tensor {
  std::size_t batch = 0;
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t n, Shape s) : batch(n), shape(s), data(n * s.size(), T{}) {}
  std::size_t sample_size() const noexcept { return shape.size(); }
  T* sample(std::size_t i) noexcept { return data.data() + i * shape.size(); }
  const T* sample(std::size_t i) const noexcept {
    return data.data() + i * shape.size();
  }
};

template <typename T>
struct LayerParams {
  // dense: in x out; conv2d: (kernel * kernel * in_channels) x out_channels,
  // patch index ordered (ky, kx, c).
  std::vector<T> weight;
  std::vector<T> bias;
};

template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> activations;  // [0] is the input, [l + 1] output of l
  std::vector<std::vector<T>> patches;  // im2col buffers for conv layers
  std::size_t gamma_layer = 0;

  const Tensor<T>& logits() const { return activations.back(); }
  const Tensor<T>& gamma() const { return activations[gamma_layer + 1]; }
  // Γ activation as an N x M matrix (column i = sample i).
  Matrix gamma_output() const;
};

template <typename T>
using Gradients = std::vector<LayerParams<T>>;

enum class OptimizerKind { sgd, momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

const char* to_string(OptimizerKind kind) noexcept;
OptimizerKind optimizer_from_string(const std::string& name);

template <typename T>
struct OptimizerState {
  std::uint64_t step = 0;
  Gradients<T> first;   // momentum velocity or Adam first moment
  Gradients<T> second;  // Adam second moment
};

template <typename T>
class Network {
 public:
  Network() = default;
  // He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
  Network(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }
  std::vector<LayerParams<T>>& params() noexcept { return params_; }
  const std::vector<LayerParams<T>>& params() const noexcept { return params_; }
  OptimizerState<T>& optimizer() noexcept { return opt_; }
  std::size_t parameter_count() const noexcept;
  bool all_finite() const noexcept;
  Gradients<T> zero_gradients() const;

  ForwardTrace<T> forward(const Tensor<T>& inputs) const;
  // Columns-as-samples convenience wrapper: inputs is D x M, logits T x M.
  Matrix forward(const Matrix& inputs, ForwardTrace<T>* trace = nullptr) const;

  // grad_logits is sample-major (M x classes); grad_gamma is N_Γ x M and is
  // added to the Γ activation gradient. Pass an empty matrix to skip.
  Gradients<T> backward(const ForwardTrace<T>& trace,
                        const Tensor<T>& grad_logits,
                        const Matrix& grad_gamma) const;
  Gradients<T> backward(const ForwardTrace<T>& trace, const Matrix& grad_logits,
                        const Matrix& grad_gamma) const;

  template <typename U>
  Network<U> cast() const;

 private:
  template <typename U>
  friend class Network;

  Architecture arch_;
  std::vector<Shape> shapes_;
  std::vector<LayerParams<T>> params_;
  OptimizerState<T> opt_;
};

template <typename T>
Tensor<T> tensor_from_columns(const Matrix& inputs, Shape shape);

struct LossResult {
  double loss = 0.0;
  Matrix grad_logits;  // T x M, (softmax - onehot) / M
};

// Mean cross-entropy with log-sum-exp stabilization; logits are T x M.
LossResult softmax_cross_entropy(const Matrix& logits,
                                 std::span<const Label> targets);

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits,
                             std::span<const Label> targets,
                             Tensor<T>* grad_logits);

// SGD:      w -= lr * g
// Momentum: v = mu * v + g;  w -= lr * v
// Adam:     m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2;
//           w -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <typename T>
void optimizer_step(Network<T>& net, const Gradients<T>& grads,
                    const OptimizerConfig& cfg);

// ENDM checkpoint, little-endian: "ENDM", u32 version, u32 input H, W, C,
// u32 layer count, per layer u32 kind, in, out, in_channels, out_channels,
// kernel, stride, padding, flags (bit 0 = Γ); then per layer u64 weight
// count, f32 weights, u64 bias count, f32 biases.
template <typename T>
std::vector<char> serialize_checkpoint(const Network<T>& net);
template <typename T>
Network<T> deserialize_checkpoint(std::span<const char> bytes);
template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path);
template <typename T>
Network<T> load_checkpoint(const std::string& path);

}  // namespace endreg
