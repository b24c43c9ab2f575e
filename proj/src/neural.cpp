#include "racemode/neural.hpp"

#include <cmath>

#include "racemode/error.hpp"

namespace racemode {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "linear"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  throw ShapeMismatch("unknown activation '" + name + "'");
}

LayerSpec LayerSpec::dense_layer(int in, int out, Activation act) {
  LayerSpec l;
  l.kind = Kind::dense;
  l.in = in;
  l.out = out;
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::conv1d_layer(int in_ch, int out_ch, int kernel, int stride, Activation act) {
  LayerSpec l;
  l.kind = Kind::conv1d;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::flatten_layer() {
  LayerSpec l;
  l.kind = Kind::flatten;
  l.activation = Activation::linear;
  return l;
}

int LayerSpec::output_length() const { return (length - kernel) / stride + 1; }

int LayerSpec::input_size() const {
  switch (kind) {
    case Kind::dense: return in;
    case Kind::conv1d: return in_ch * length;
    case Kind::flatten: return in;
  }
  return 0;
}

int LayerSpec::output_size() const {
  switch (kind) {
    case Kind::dense: return out;
    case Kind::conv1d: return out_ch * output_length();
    case Kind::flatten: return in;
  }
  return 0;
}

int LayerSpec::param_count() const {
  switch (kind) {
    case Kind::dense: return out * in + out;
    case Kind::conv1d: return out_ch * in_ch * kernel + out_ch;
    case Kind::flatten: return 0;
  }
  return 0;
}

Sequential::Sequential(std::vector<LayerSpec> layers, int input_length) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeMismatch("empty layer stack");
  int length = input_length;
  int size = -1;
  for (auto& l : layers_) {
    switch (l.kind) {
      case LayerSpec::Kind::dense:
        if (l.in <= 0 || l.out <= 0) throw ShapeMismatch("dense layer sizes must be positive");
        if (size >= 0 && size != l.in) throw ShapeMismatch("dense input size does not match previous layer");
        length = 0;
        break;
      case LayerSpec::Kind::conv1d:
        if (l.in_ch <= 0 || l.out_ch <= 0 || l.kernel <= 0 || l.stride <= 0)
          throw ShapeMismatch("conv1d sizes must be positive");
        if (length < l.kernel) throw ShapeMismatch("conv1d input shorter than its kernel");
        l.length = length;
        if (size >= 0 && size != l.in_ch * length) throw ShapeMismatch("conv1d channels do not match previous layer");
        length = l.output_length();
        break;
      case LayerSpec::Kind::flatten:
        if (size < 0) throw ShapeMismatch("flatten cannot be the first layer");
        l.in = size;
        length = 0;
        break;
    }
    if (size < 0) input_size_ = l.input_size();
    layer_offsets_.push_back(param_count_);
    param_count_ += l.param_count();
    size = l.output_size();
  }
  output_size_ = size;
}

namespace {

void activate(Matrix& z, Activation a) {
  if (a == Activation::tanh) z = z.array().tanh().matrix();
}

// dL/dz from dL/dy given the activated output y.
Matrix activation_backward(const Matrix& y, const Matrix& dy, Activation a) {
  if (a == Activation::tanh) return (dy.array() * (1.0 - y.array().square())).matrix();
  return dy;
}

// Unrolls every receptive field into a column: rows (c, t), cols (b, j).
Matrix im2col(const LayerSpec& l, const Matrix& x) {
  const int L = l.length;
  const int Lo = l.output_length();
  const auto batch = x.cols();
  Matrix cols(l.in_ch * l.kernel, Lo * batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int j = 0; j < Lo; ++j)
      for (int c = 0; c < l.in_ch; ++c)
        for (int t = 0; t < l.kernel; ++t) cols(c * l.kernel + t, b * Lo + j) = x(c * L + j * l.stride + t, b);
  return cols;
}

}  // namespace

Matrix Sequential::forward(const Vector& params, const Matrix& x, Cache* cache) const {
  if (x.rows() != input_size_) throw ShapeMismatch("input rows do not match the first layer");
  if (params.size() < offset_ + param_count_) throw ShapeMismatch("parameter vector too short");
  if (cache) {
    cache->clear();
    cache->push_back(x);
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const double* p = params.data() + offset_ + layer_offsets_[i];
    switch (l.kind) {
      case LayerSpec::Kind::dense: {
        Eigen::Map<const Matrix> W(p, l.out, l.in);
        Eigen::Map<const Vector> b(p + l.out * l.in, l.out);
        Matrix z = (W * h).colwise() + b;
        activate(z, l.activation);
        h = std::move(z);
        break;
      }
      case LayerSpec::Kind::conv1d: {
        const int Lo = l.output_length();
        Eigen::Map<const Matrix> K(p, l.out_ch, l.in_ch * l.kernel);
        Eigen::Map<const Vector> b(p + l.out_ch * l.in_ch * l.kernel, l.out_ch);
        Matrix z = (K * im2col(l, h)).colwise() + b;
        activate(z, l.activation);
        Matrix y(l.out_ch * Lo, h.cols());
        for (Eigen::Index bb = 0; bb < h.cols(); ++bb)
          for (int o = 0; o < l.out_ch; ++o)
            for (int j = 0; j < Lo; ++j) y(o * Lo + j, bb) = z(o, bb * Lo + j);
        h = std::move(y);
        break;
      }
      case LayerSpec::Kind::flatten:
        break;
    }
    if (cache) cache->push_back(h);
  }
  return h;
}

Matrix Sequential::backward(const Vector& params, const Cache& cache, const Matrix& dy, Vector& grad) const {
  if (cache.size() != layers_.size() + 1) throw ShapeMismatch("cache does not belong to this stack");
  if (dy.rows() != output_size_ || dy.cols() != cache.back().cols()) throw ShapeMismatch("output gradient shape");
  if (grad.size() < offset_ + param_count_) throw ShapeMismatch("gradient vector too short");
  Matrix d = dy;
  for (std::size_t ii = layers_.size(); ii-- > 0;) {
    const LayerSpec& l = layers_[ii];
    const Matrix& x = cache[ii];
    const Matrix& y = cache[ii + 1];
    const double* p = params.data() + offset_ + layer_offsets_[ii];
    double* g = grad.data() + offset_ + layer_offsets_[ii];
    switch (l.kind) {
      case LayerSpec::Kind::dense: {
        Eigen::Map<const Matrix> W(p, l.out, l.in);
        Eigen::Map<Matrix> gW(g, l.out, l.in);
        Eigen::Map<Vector> gb(g + l.out * l.in, l.out);
        const Matrix dz = activation_backward(y, d, l.activation);
        gW.noalias() += dz * x.transpose();
        gb += dz.rowwise().sum();
        d = W.transpose() * dz;
        break;
      }
      case LayerSpec::Kind::conv1d: {
        const int Lo = l.output_length();
        const int L = l.length;
        const auto batch = x.cols();
        Eigen::Map<const Matrix> K(p, l.out_ch, l.in_ch * l.kernel);
        Eigen::Map<Matrix> gK(g, l.out_ch, l.in_ch * l.kernel);
        Eigen::Map<Vector> gb(g + l.out_ch * l.in_ch * l.kernel, l.out_ch);
        const Matrix dyz = activation_backward(y, d, l.activation);
        Matrix dz(l.out_ch, Lo * batch);
        for (Eigen::Index b = 0; b < batch; ++b)
          for (int o = 0; o < l.out_ch; ++o)
            for (int j = 0; j < Lo; ++j) dz(o, b * Lo + j) = dyz(o * Lo + j, b);
        gK.noalias() += dz * im2col(l, x).transpose();
        gb += dz.rowwise().sum();
        const Matrix dcols = K.transpose() * dz;
        Matrix dx = Matrix::Zero(x.rows(), batch);
        for (Eigen::Index b = 0; b < batch; ++b)
          for (int j = 0; j < Lo; ++j)
            for (int c = 0; c < l.in_ch; ++c)
              for (int t = 0; t < l.kernel; ++t) dx(c * L + j * l.stride + t, b) += dcols(c * l.kernel + t, b * Lo + j);
        d = std::move(dx);
        break;
      }
      case LayerSpec::Kind::flatten:
        break;
    }
  }
  return d;
}

void Sequential::initialize(Vector& params, std::mt19937_64& rng, double last_scale) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    double* p = params.data() + offset_ + layer_offsets_[i];
    int n_weights = 0;
    int n_bias = 0;
    double fan_in = 0.0;
    double fan_out = 0.0;
    if (l.kind == LayerSpec::Kind::dense) {
      n_weights = l.out * l.in;
      n_bias = l.out;
      fan_in = l.in;
      fan_out = l.out;
    } else if (l.kind == LayerSpec::Kind::conv1d) {
      n_weights = l.out_ch * l.in_ch * l.kernel;
      n_bias = l.out_ch;
      fan_in = l.in_ch * l.kernel;
      fan_out = l.out_ch * l.kernel;
    }
    const double limit = n_weights ? std::sqrt(6.0 / (fan_in + fan_out)) : 0.0;
    const double scale = i + 1 == layers_.size() ? last_scale : 1.0;
    for (int k = 0; k < n_weights; ++k) p[k] = scale * limit * (2.0 * uniform01(rng) - 1.0);
    for (int k = 0; k < n_bias; ++k) p[n_weights + k] = 0.0;
  }
}

ConcatJunction::ConcatJunction(std::vector<Sequential> branches) : branches_(std::move(branches)) {
  if (branches_.empty()) throw ShapeMismatch("junction needs at least one branch");
  for (const auto& b : branches_) {
    input_size_ += b.input_size();
    output_size_ += b.output_size();
  }
}

int ConcatJunction::param_count() const {
  int n = 0;
  for (const auto& b : branches_) n += b.param_count();
  return n;
}

Matrix ConcatJunction::forward(const Vector& params, const Matrix& x, Cache* cache) const {
  if (x.rows() != input_size_) throw ShapeMismatch("junction input rows");
  Matrix out(output_size_, x.cols());
  if (cache) cache->branch.assign(branches_.size(), {});
  int in_row = 0;
  int out_row = 0;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto& b = branches_[i];
    out.middleRows(out_row, b.output_size()) =
        b.forward(params, x.middleRows(in_row, b.input_size()), cache ? &cache->branch[i] : nullptr);
    in_row += b.input_size();
    out_row += b.output_size();
  }
  return out;
}

Matrix ConcatJunction::backward(const Vector& params, const Cache& cache, const Matrix& dy, Vector& grad) const {
  if (dy.rows() != output_size_ || cache.branch.size() != branches_.size()) throw ShapeMismatch("junction gradient");
  Matrix dx(input_size_, dy.cols());
  int in_row = 0;
  int out_row = 0;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto& b = branches_[i];
    dx.middleRows(in_row, b.input_size()) =
        b.backward(params, cache.branch[i], dy.middleRows(out_row, b.output_size()), grad);
    in_row += b.input_size();
    out_row += b.output_size();
  }
  return dx;
}

void AdamState::reset(Eigen::Index size) {
  m = Vector::Zero(size);
  v = Vector::Zero(size);
  step = 0;
}

void adam_step(Vector& params, const Vector& grads, AdamState& s) {
  if (grads.size() != params.size()) throw ShapeMismatch("gradient size differs from parameter size");
  if (s.m.size() != params.size() || s.v.size() != params.size()) throw ShapeMismatch("Adam moments not sized");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

Categorical softmax_categorical(const Eigen::Ref<const Vector>& logits) {
  Categorical c;
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  c.log_probs = logits.array() - lse;
  c.probs = c.log_probs.array().exp();
  c.entropy = -(c.probs.array() * c.log_probs.array()).sum();
  return c;
}

int Categorical::sample(double u) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

int Categorical::argmax() const {
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace racemode
