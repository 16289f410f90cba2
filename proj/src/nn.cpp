#include "illumreid/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "illumreid/errors.hpp"

namespace illumreid::nn {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

void require_same(const Shape& a, const Shape& b, const char* where) {
  if (!(a == b)) {
    throw ValidationError(std::string(where) + ": shape mismatch " + to_string(a) + " vs " +
                          to_string(b));
  }
}

void normal_fill(Tensor& t, std::mt19937_64& rng, float stddev) {
  std::normal_distribution<float> dist(0.0f, stddev);
  for (auto& v : t.values()) v = dist(rng);
}

// Valid output-column range [lo, hi) for kernel offset kx: 0 <= ox*stride - pad + kx < w.
inline void valid_cols(int w, int ow, int stride, int pad, int kx, int& lo, int& hi) {
  const int first = pad - kx;  // smallest ox*stride allowed
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const int last = w - 1 + pad - kx;  // largest ox*stride allowed
  hi = last < 0 ? 0 : std::min(ow, last / stride + 1);
  if (hi < lo) hi = lo;
}

// Unfolds one CHW sample into a (C*k*k, out_h*out_w) row-major matrix.
void im2col(const float* src, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            float* cols) {
  const int plane = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + ((ch * k + ky) * k + kx) * plane;
        int lo = 0;
        int hi = 0;
        valid_cols(w, ow, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          float* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          std::fill(dst, dst + lo, 0.0f);
          std::fill(dst + hi, dst + ow, 0.0f);
          const float* line = src + (ch * h + iy) * w - pad + kx;
          if (stride == 1) {
            std::copy(line + lo, line + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = line[ox * stride];
          }
        }
      }
    }
  }
}

void col2im(const float* cols, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            float* dst) {
  const int plane = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + ((ch * k + ky) * k + kx) * plane;
        int lo = 0;
        int hi = 0;
        valid_cols(w, ow, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          float* line = dst + (ch * h + iy) * w - pad + kx;
          const float* src = row + oy * ow;
          for (int ox = lo; ox < hi; ++ox) line[ox * stride] += src[ox];
        }
      }
    }
  }
}

// Per-thread scratch so convolutions do not reallocate on every call.
FloatBuffer& scratch(int slot, std::size_t size) {
  thread_local FloatBuffer buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

}  // namespace

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

Tensor::Tensor(int n, int c, int h, int w, float fill) : Tensor(Shape{n, c, h, w}, fill) {}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ValidationError("negative tensor dimension " + to_string(shape));
  }
}

std::span<float> Tensor::sample(int i) {
  return std::span<float>(data_).subspan(i * shape_.sample_size(), shape_.sample_size());
}

std::span<const float> Tensor::sample(int i) const {
  return std::span<const float>(data_).subspan(i * shape_.sample_size(), shape_.sample_size());
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same(shape_, other.shape_, "Tensor::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(float s) {
  for (auto& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.c() != s.c || p.h() != s.h || p.w() != s.w) {
      throw ValidationError("concat_batch: inconsistent sample shapes");
    }
    total += p.n();
  }
  s.n = total;
  Tensor out(s);
  float* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

Tensor slice_batch(const Tensor& t, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > t.n()) {
    throw ValidationError("slice_batch: range out of bounds");
  }
  Shape s = t.shape();
  s.n = count;
  Tensor out(s);
  const float* src = t.data() + begin * s.sample_size();
  std::copy(src, src + out.size(), out.data());
  return out;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
               float init_std)
    : in_c_(in_channels),
      out_c_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      init_std_(init_std) {
  weight_.name = "conv.weight";
  weight_.value = Tensor(out_c_, in_c_, kernel_, kernel_);
  weight_.grad = Tensor(weight_.value.shape());
  bias_.name = "conv.bias";
  bias_.value = Tensor(1, out_c_, 1, 1);
  bias_.grad = Tensor(bias_.value.shape());
}

void Conv2d::init(std::mt19937_64& rng) {
  const float fan_in = static_cast<float>(in_c_ * kernel_ * kernel_);
  const float stddev = init_std_ >= 0.0f ? init_std_ : std::sqrt(2.0f / fan_in);
  if (stddev == 0.0f) {
    weight_.value.fill(0.0f);
  } else {
    normal_fill(weight_.value, rng, stddev);
  }
  bias_.value.fill(0.0f);
}

Tensor Conv2d::forward(const Tensor& x, Cache& cache) const {
  if (x.c() != in_c_) {
    throw ValidationError("Conv2d: expected " + std::to_string(in_c_) + " input channels, got " +
                          std::to_string(x.c()));
  }
  const int oh = out_height(x.h());
  const int ow = out_width(x.w());
  const int kdim = in_c_ * kernel_ * kernel_;
  const int plane = oh * ow;
  Tensor y(x.n(), out_c_, oh, ow);
  auto& cols = scratch(0, static_cast<std::size_t>(kdim) * plane);
  MapCM wmat(weight_.value.data(), out_c_, kdim);
  Eigen::Map<const Eigen::VectorXf> bias(bias_.value.data(), out_c_);
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.sample(i).data(), in_c_, x.h(), x.w(), kernel_, stride_, padding_, oh, ow,
           cols.data());
    MapM out(y.sample(i).data(), out_c_, plane);
    out.noalias() = wmat * MapCM(cols.data(), kdim, plane);
    out.colwise() += bias;
  }
  cache.input = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& x = cache.input;
  const int oh = grad_out.h();
  const int ow = grad_out.w();
  const int kdim = in_c_ * kernel_ * kernel_;
  const int plane = oh * ow;
  Tensor gx(x.shape());
  auto& cols = scratch(0, static_cast<std::size_t>(kdim) * plane);
  auto& gcols = scratch(1, static_cast<std::size_t>(kdim) * plane);
  MapCM wmat(weight_.value.data(), out_c_, kdim);
  MapM gw(weight_.grad.data(), out_c_, kdim);
  Eigen::Map<Eigen::VectorXf> gb(bias_.grad.data(), out_c_);
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.sample(i).data(), in_c_, x.h(), x.w(), kernel_, stride_, padding_, oh, ow,
           cols.data());
    MapCM gy(grad_out.sample(i).data(), out_c_, plane);
    gw.noalias() += gy * MapCM(cols.data(), kdim, plane).transpose();
    gb += gy.rowwise().sum();
    MapM(gcols.data(), kdim, plane).noalias() = wmat.transpose() * gy;
    col2im(gcols.data(), in_c_, x.h(), x.w(), kernel_, stride_, padding_, oh, ow,
           gx.sample(i).data());
  }
  return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

std::unique_ptr<Layer> Conv2d::clone() const { return std::make_unique<Conv2d>(*this); }

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, float init_std)
    : in_(in_features), out_(out_features), init_std_(init_std) {
  weight_.name = "linear.weight";
  weight_.value = Tensor(1, 1, out_, in_);
  weight_.grad = Tensor(weight_.value.shape());
  bias_.name = "linear.bias";
  bias_.value = Tensor(1, out_, 1, 1);
  bias_.grad = Tensor(bias_.value.shape());
}

void Linear::init(std::mt19937_64& rng) {
  const float stddev = init_std_ >= 0.0f ? init_std_ : std::sqrt(2.0f / static_cast<float>(in_));
  if (stddev == 0.0f) {
    weight_.value.fill(0.0f);
  } else {
    normal_fill(weight_.value, rng, stddev);
  }
  bias_.value.fill(0.0f);
}

Tensor Linear::forward(const Tensor& x, Cache& cache) const {
  if (static_cast<int>(x.shape().sample_size()) != in_) {
    throw ValidationError("Linear: expected " + std::to_string(in_) + " features, got " +
                          std::to_string(x.shape().sample_size()));
  }
  Tensor y(x.n(), out_, 1, 1);
  MapCM xin(x.data(), x.n(), in_);
  MapCM wmat(weight_.value.data(), out_, in_);
  MapM out(y.data(), x.n(), out_);
  out.noalias() = xin * wmat.transpose();
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias_.value.data(), out_);
  cache.input = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& x = cache.input;
  MapCM gy(grad_out.data(), x.n(), out_);
  MapCM xin(x.data(), x.n(), in_);
  MapM(weight_.grad.data(), out_, in_).noalias() += gy.transpose() * xin;
  Eigen::Map<Eigen::RowVectorXf>(bias_.grad.data(), out_) += gy.colwise().sum();
  Tensor gx(x.shape());
  MapM(gx.data(), x.n(), in_).noalias() = gy * MapCM(weight_.value.data(), out_, in_);
  return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

std::unique_ptr<Layer> Linear::clone() const { return std::make_unique<Linear>(*this); }

// ---------------------------------------------------------------- activations

Tensor LeakyReLU::forward(const Tensor& x, Cache& cache) const {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : slope_ * x[i];
  cache.input = x;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor gx(grad_out.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) {
    gx[i] = cache.input[i] > 0.0f ? grad_out[i] : slope_ * grad_out[i];
  }
  return gx;
}

std::unique_ptr<Layer> LeakyReLU::clone() const { return std::make_unique<LeakyReLU>(*this); }

Tensor Tanh::forward(const Tensor& x, Cache& cache) const {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  cache.output = y;
  return y;
}

Tensor Tanh::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor gx(grad_out.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const float y = cache.output[i];
    gx[i] = grad_out[i] * (1.0f - y * y);
  }
  return gx;
}

std::unique_ptr<Layer> Tanh::clone() const { return std::make_unique<Tanh>(*this); }

// ---------------------------------------------------------------- InstanceNorm

Tensor InstanceNorm::forward(const Tensor& x, Cache& cache) const {
  Tensor y(x.shape());
  const int planes = x.n() * x.c();
  const int hw = x.h() * x.w();
  cache.aux.assign(planes, 0.0f);
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * hw;
    float* dst = y.data() + static_cast<std::size_t>(p) * hw;
    double mean = 0.0;
    for (int i = 0; i < hw; ++i) mean += src[i];
    mean /= hw;
    double var = 0.0;
    for (int i = 0; i < hw; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= hw;
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
    cache.aux[p] = inv_std;
    for (int i = 0; i < hw; ++i) dst[i] = static_cast<float>(src[i] - mean) * inv_std;
  }
  cache.output = y;
  return y;
}

Tensor InstanceNorm::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor gx(grad_out.shape());
  const int planes = grad_out.n() * grad_out.c();
  const int hw = grad_out.h() * grad_out.w();
  for (int p = 0; p < planes; ++p) {
    const float* gy = grad_out.data() + static_cast<std::size_t>(p) * hw;
    const float* xhat = cache.output.data() + static_cast<std::size_t>(p) * hw;
    float* dst = gx.data() + static_cast<std::size_t>(p) * hw;
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (int i = 0; i < hw; ++i) {
      mean_g += gy[i];
      mean_gx += gy[i] * xhat[i];
    }
    mean_g /= hw;
    mean_gx /= hw;
    const float inv_std = cache.aux[p];
    for (int i = 0; i < hw; ++i) {
      dst[i] = inv_std * static_cast<float>(gy[i] - mean_g - xhat[i] * mean_gx);
    }
  }
  return gx;
}

std::unique_ptr<Layer> InstanceNorm::clone() const { return std::make_unique<InstanceNorm>(*this); }

// ---------------------------------------------------------------- resampling

Tensor Upsample2x::forward(const Tensor& x, Cache& cache) const {
  (void)cache;
  Tensor y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < y.h(); ++yy)
        for (int xx = 0; xx < y.w(); ++xx) y.at(i, c, yy, xx) = x.at(i, c, yy / 2, xx / 2);
  return y;
}

Tensor Upsample2x::backward(const Tensor& grad_out, const Cache& cache) {
  (void)cache;
  Tensor gx(grad_out.n(), grad_out.c(), grad_out.h() / 2, grad_out.w() / 2);
  for (int i = 0; i < grad_out.n(); ++i)
    for (int c = 0; c < grad_out.c(); ++c)
      for (int yy = 0; yy < grad_out.h(); ++yy)
        for (int xx = 0; xx < grad_out.w(); ++xx)
          gx.at(i, c, yy / 2, xx / 2) += grad_out.at(i, c, yy, xx);
  return gx;
}

std::unique_ptr<Layer> Upsample2x::clone() const { return std::make_unique<Upsample2x>(*this); }

Tensor GlobalAvgPool::forward(const Tensor& x, Cache& cache) const {
  Tensor y(x.n(), x.c(), 1, 1);
  const int hw = x.h() * x.w();
  for (int p = 0; p < x.n() * x.c(); ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * hw;
    double s = 0.0;
    for (int i = 0; i < hw; ++i) s += src[i];
    y[p] = static_cast<float>(s / hw);
  }
  cache.aux = {static_cast<float>(x.h()), static_cast<float>(x.w())};
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, const Cache& cache) {
  const int h = static_cast<int>(cache.aux[0]);
  const int w = static_cast<int>(cache.aux[1]);
  Tensor gx(grad_out.n(), grad_out.c(), h, w);
  const float inv = 1.0f / static_cast<float>(h * w);
  for (int p = 0; p < grad_out.n() * grad_out.c(); ++p) {
    float* dst = gx.data() + static_cast<std::size_t>(p) * h * w;
    std::fill(dst, dst + h * w, grad_out[p] * inv);
  }
  return gx;
}

std::unique_ptr<Layer> GlobalAvgPool::clone() const {
  return std::make_unique<GlobalAvgPool>(*this);
}

// ---------------------------------------------------------------- containers

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential tmp(other);
    layers_ = std::move(tmp.layers_);
  }
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Cache& cache) const {
  cache.children.resize(layers_.size());
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, cache.children[i]);
  }
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, cache.children[i]);
  }
  return g;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

void Sequential::init(std::mt19937_64& rng) {
  for (auto& l : layers_) l->init(rng);
}

std::unique_ptr<Layer> Sequential::clone() const { return std::make_unique<Sequential>(*this); }

Tensor Sequential::infer(const Tensor& x) const {
  Cache scratch;
  return forward(x, scratch);
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  collect_params(out);
  return out;
}

Tensor Residual::forward(const Tensor& x, Cache& cache) const {
  cache.children.resize(1);
  Tensor y = body_.forward(x, cache.children[0]);
  require_same(y.shape(), x.shape(), "Residual");
  y += x;
  return y;
}

Tensor Residual::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor gx = body_.backward(grad_out, cache.children[0]);
  gx += grad_out;
  return gx;
}

void Residual::collect_params(std::vector<Param*>& out) { body_.collect_params(out); }
void Residual::init(std::mt19937_64& rng) { body_.init(rng); }
std::unique_ptr<Layer> Residual::clone() const { return std::make_unique<Residual>(*this); }

Tensor LogitSkip::forward(const Tensor& x, Cache& cache) const {
  cache.children.resize(1);
  Tensor r = body_.forward(x, cache.children[0]);
  require_same(r.shape(), x.shape(), "LogitSkip");
  const float lo = -1.0f + delta_;
  const float hi = 1.0f - delta_;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = std::tanh(std::atanh(std::clamp(x[i], lo, hi)) + r[i]);
  }
  cache.input = x;
  cache.output = r;
  return r;
}

Tensor LogitSkip::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor gpre(grad_out.shape());
  for (std::size_t i = 0; i < gpre.size(); ++i) {
    const float y = cache.output[i];
    gpre[i] = grad_out[i] * (1.0f - y * y);
  }
  Tensor gx = body_.backward(gpre, cache.children[0]);
  const float lo = -1.0f + delta_;
  const float hi = 1.0f - delta_;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const float x = cache.input[i];
    if (x > lo && x < hi) gx[i] += gpre[i] / (1.0f - x * x);
  }
  return gx;
}

void LogitSkip::collect_params(std::vector<Param*>& out) { body_.collect_params(out); }
void LogitSkip::init(std::mt19937_64& rng) { body_.init(rng); }
std::unique_ptr<Layer> LogitSkip::clone() const { return std::make_unique<LogitSkip>(*this); }

// ---------------------------------------------------------------- losses

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const int n = logits.n();
  const int c = static_cast<int>(logits.shape().sample_size());
  if (static_cast<int>(labels.size()) != n) {
    throw ValidationError("softmax_cross_entropy: label count does not match batch");
  }
  CrossEntropyResult res;
  res.grad = Tensor(logits.shape());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    auto row = logits.sample(i);
    const int label = labels[i];
    if (label < 0 || label >= c) throw ValidationError("softmax_cross_entropy: label out of range");
    const float mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (float v : row) denom += std::exp(static_cast<double>(v - mx));
    const double log_denom = std::log(denom);
    total += -(static_cast<double>(row[label] - mx) - log_denom);
    if (argmax(row) == label) ++res.correct;
    auto g = res.grad.sample(i);
    for (int k = 0; k < c; ++k) {
      const double p = std::exp(static_cast<double>(row[k] - mx) - log_denom);
      g[k] = static_cast<float>((p - (k == label ? 1.0 : 0.0)) / n);
    }
  }
  res.loss = total / n;
  return res;
}

int argmax(std::span<const float> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------- optimizers

void Optimizer::zero_grad() {
  for (auto* p : params_) p->grad.fill(0.0f);
}

Sgd::Sgd(std::vector<Param*> params, double lr, double momentum, double weight_decay)
    : Optimizer(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  lr_ = lr;
  velocity_.reserve(params_.size());
  for (auto* p : params_) velocity_.emplace_back(p->value.size(), 0.0f);
}

void Sgd::step() {
  const auto lr = static_cast<float>(lr_);
  const auto mom = static_cast<float>(momentum_);
  const auto wd = static_cast<float>(weight_decay_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& vel = velocity_[k];
    for (std::size_t i = 0; i < vel.size(); ++i) {
      const float g = p.grad[i] + wd * p.value[i];
      vel[i] = mom * vel[i] + g;
      p.value[i] -= lr * vel[i];
    }
  }
}

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double weight_decay)
    : Optimizer(std::move(params)), beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay) {
  lr_ = lr;
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::step() {
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  const auto alpha = static_cast<float>(lr_ * std::sqrt(c2) / c1);
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  const auto wd = static_cast<float>(weight_decay_);
  constexpr float kEps = 1e-8f;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const float g = p.grad[i] + wd * p.value[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p.value[i] -= alpha * m[i] / (std::sqrt(v[i]) + kEps);
    }
  }
}

std::vector<Tensor> snapshot(std::span<Param* const> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

void restore(std::span<Param* const> params, std::span<const Tensor> values) {
  if (params.size() != values.size()) {
    throw ValidationError("parameter count mismatch: model has " + std::to_string(params.size()) +
                          ", checkpoint has " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(params[i]->value.shape() == values[i].shape())) {
      throw ValidationError("parameter " + std::to_string(i) + " shape mismatch: expected " +
                            to_string(params[i]->value.shape()) + ", got " +
                            to_string(values[i].shape()));
    }
    params[i]->value = values[i];
  }
}

}  // namespace illumreid::nn
