#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace racemode {

/// Activations are stored features x batch; each column is one sample.
/// Convolution inputs keep channel-major order inside a column
/// (index = channel * length + position).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { linear, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerSpec {
  enum class Kind { dense, conv1d, flatten };
  Kind kind = Kind::dense;
  Activation activation = Activation::tanh;
  // dense
  int in = 0;
  int out = 0;
  // conv1d
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 1;
  int stride = 1;
  int length = 0;  ///< input length, filled in when the stack is built

  static LayerSpec dense_layer(int in, int out, Activation act = Activation::tanh);
  static LayerSpec conv1d_layer(int in_ch, int out_ch, int kernel, int stride = 1, Activation act = Activation::tanh);
  static LayerSpec flatten_layer();

  int input_size() const;
  int output_size() const;
  int output_length() const;  ///< conv1d only
  int param_count() const;
  bool operator==(const LayerSpec&) const = default;
};

/// Shared uniform conversion so every stream in the project draws the same way.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Layer stack reading its parameters from an external flat vector starting
/// at `offset`. The stack owns no parameters, so several stacks can share one
/// vector (and one optimiser).
class Sequential {
 public:
  Sequential() = default;
  /// `input_length` is the sequence length of the first conv layer (0 for
  /// dense-only stacks).
  Sequential(std::vector<LayerSpec> layers, int input_length = 0);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_size() const { return input_size_; }
  int output_size() const { return output_size_; }
  int param_count() const { return param_count_; }
  int offset() const { return offset_; }
  void set_offset(int offset) { offset_ = offset; }

  /// Activations of every layer, input first. Enough for an exact backward.
  using Cache = std::vector<Matrix>;

  Matrix forward(const Vector& params, const Matrix& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients into `grad` and returns dL/dx.
  Matrix backward(const Vector& params, const Cache& cache, const Matrix& dy, Vector& grad) const;

  /// Glorot-uniform weights, zero biases; the last layer's weights are
  /// additionally multiplied by `last_scale`.
  void initialize(Vector& params, std::mt19937_64& rng, double last_scale = 1.0) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<int> layer_offsets_;
  int input_size_ = 0;
  int output_size_ = 0;
  int param_count_ = 0;
  int offset_ = 0;
};

/// Splits the input rows into consecutive blocks, runs each block through its
/// own branch and stacks the branch outputs.
class ConcatJunction {
 public:
  ConcatJunction() = default;
  explicit ConcatJunction(std::vector<Sequential> branches);

  const std::vector<Sequential>& branches() const { return branches_; }
  std::vector<Sequential>& branches() { return branches_; }
  int input_size() const { return input_size_; }
  int output_size() const { return output_size_; }
  int param_count() const;

  struct Cache {
    std::vector<Sequential::Cache> branch;
  };

  Matrix forward(const Vector& params, const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Vector& params, const Cache& cache, const Matrix& dy, Vector& grad) const;

 private:
  std::vector<Sequential> branches_;
  int input_size_ = 0;
  int output_size_ = 0;
};

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void reset(Eigen::Index size);
};

/// One bias-corrected Adam update in place.
void adam_step(Vector& params, const Vector& grads, AdamState& state);

struct Categorical {
  Vector probs;
  Vector log_probs;
  double entropy = 0.0;

  int sample(double u) const;  ///< inverse-CDF draw from u in [0,1)
  int sample(std::mt19937_64& rng) const { return sample(uniform01(rng)); }
  int argmax() const;
  double log_prob(int action) const { return log_probs[action]; }
};

/// Log-sum-exp stabilised softmax over a logit vector.
Categorical softmax_categorical(const Eigen::Ref<const Vector>& logits);

}  // namespace racemode
