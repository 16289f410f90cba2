#pragma once

// Minimal CPU neural-network toolkit: NCHW float tensors, layers with explicit
// per-call caches, and first-order optimizers. A layer can be applied several
// times within one step (as the cycle-consistent generators are) because all
// forward state lives in the caller-owned Cache.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace illumreid::nn {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// 64-byte aligned storage. Vectorised reductions take different paths for
// different start alignments, so this keeps results independent of where the
// allocator happened to put a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kAlign})); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{kAlign}); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f);
  explicit Tensor(Shape shape, float fill = 0.0f);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  std::span<float> sample(int i);
  std::span<const float> sample(int i) const;

  float& at(int i, int ch, int y, int x) {
    return data_[((static_cast<std::size_t>(i) * shape_.c + ch) * shape_.h + y) * shape_.w + x];
  }
  float at(int i, int ch, int y, int x) const {
    return data_[((static_cast<std::size_t>(i) * shape_.c + ch) * shape_.h + y) * shape_.w + x];
  }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  void fill(float v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(float s);

  bool all_finite() const;

 private:
  Shape shape_;
  FloatBuffer data_;
};

// Concatenate along the batch axis; all inputs must share c/h/w.
Tensor concat_batch(std::span<const Tensor> parts);
// Batch slice [begin, begin+count).
Tensor slice_batch(const Tensor& t, int begin, int count);

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

struct Cache {
  Tensor input;
  Tensor output;
  std::vector<float> aux;
  std::vector<Cache> children;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Cache& cache) const = 0;
  // Accumulates parameter gradients and returns the gradient w.r.t. the input.
  virtual Tensor backward(const Tensor& grad_out, const Cache& cache) = 0;
  virtual void collect_params(std::vector<Param*>& out) { (void)out; }
  virtual void init(std::mt19937_64& rng) { (void)rng; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Conv2d final : public Layer {
 public:
  // init_std < 0 selects He-normal initialisation.
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
         float init_std = -1.0f);

  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;

  int out_height(int in_h) const { return (in_h + 2 * padding_ - kernel_) / stride_ + 1; }
  int out_width(int in_w) const { return (in_w + 2 * padding_ - kernel_) / stride_ + 1; }

 private:
  int in_c_, out_c_, kernel_, stride_, padding_;
  float init_std_;
  Param weight_;
  Param bias_;
};

class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features, float init_std = -1.0f);

  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  float init_std_;
  Param weight_;
  Param bias_;
};

// slope == 0 gives a plain ReLU.
class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(float slope = 0.0f) : slope_(slope) {}
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  float slope_;
};

class Tanh final : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  std::unique_ptr<Layer> clone() const override;
};

// Affine-free instance normalisation over each (sample, channel) plane.
class InstanceNorm final : public Layer {
 public:
  explicit InstanceNorm(float eps = 1e-5f) : eps_(eps) {}
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  float eps_;
};

class Upsample2x final : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  std::unique_ptr<Layer> clone() const override;
};

class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  std::unique_ptr<Layer> clone() const override;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void add_layer(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;

  // Convenience inference path that discards the cache.
  Tensor infer(const Tensor& x) const;
  std::vector<Param*> params();
  std::size_t num_layers() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// y = x + body(x)
class Residual final : public Layer {
 public:
  explicit Residual(Sequential body) : body_(std::move(body)) {}
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  Sequential body_;
};

// y = tanh(atanh(clamp(x, -1 + delta, 1 - delta)) + body(x)).
// When body outputs zero the layer reproduces its input up to delta, so a
// generator built on it starts near the identity map and stays tanh-bounded.
class LogitSkip final : public Layer {
 public:
  LogitSkip(Sequential body, float delta = 1e-4f) : body_(std::move(body)), delta_(delta) {}
  Tensor forward(const Tensor& x, Cache& cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  Sequential body_;
  float delta_;
};

struct CrossEntropyResult {
  double loss = 0.0;  // mean over the batch
  int correct = 0;
  Tensor grad;  // d loss / d logits
};

// Softmax cross-entropy over logits of shape (N, C, 1, 1).
CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Index of the largest entry, smallest index on ties.
int argmax(std::span<const float> values);

class Optimizer {
 public:
  explicit Optimizer(std::vector<Param*> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  void zero_grad();
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

 protected:
  std::vector<Param*> params_;
  double lr_ = 0.01;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Param*> params, double lr, double momentum, double weight_decay);
  void step() override;

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<float>> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.5, double beta2 = 0.999,
       double weight_decay = 0.0);
  void step() override;

 private:
  double beta1_, beta2_, weight_decay_;
  long step_count_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

// Flat parameter snapshot helpers used by checkpoints and tests.
std::vector<Tensor> snapshot(std::span<Param* const> params);
void restore(std::span<Param* const> params, std::span<const Tensor> values);

}  // namespace illumreid::nn
