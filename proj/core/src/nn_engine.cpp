// Forward/backward passes for the embedding -> latent regressor.
//
// Activations inside convolution stages are stored as C x (L*B) matrices
// whose column b*L + l is position l of sample b. Each convolution is an
// im2col product: cols is (Cin*K) x (L*B), weights are Cout x (Cin*K).
// Kernels are applied flipped (true convolution): out[l] = sum_k w[k] x[l + K/2 - k].
// Fully connected activations are width x B.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "facegen/errors.hpp"
#include "facegen/regressor.hpp"

namespace facegen {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ConvShape {
  Eigen::Index in_channels, out_channels, kernel, length, pooled;
  std::size_t weight_offset, bias_offset;
};

struct FcShape {
  Eigen::Index in, out;
  std::size_t weight_offset, bias_offset;
  bool relu;
};

}  // namespace

template <typename T>
struct Network<T>::Impl {
  ArchitectureConfig config;
  std::size_t param_count = 0;
  std::vector<ConvShape> conv;
  std::vector<FcShape> fc;
  Eigen::Index flat_channels = 1, flat_length = 0;

  // forward caches, reused across calls
  Eigen::Index batch = 0;
  std::vector<Mat<T>> conv_in;    // input of each conv block
  std::vector<Mat<T>> conv_cols;  // im2col of that input
  std::vector<Mat<T>> conv_pre;   // pre-activation
  std::vector<std::vector<std::uint8_t>> pool_arg;
  Mat<T> pooled;
  std::vector<Mat<T>> fc_in;
  std::vector<Mat<T>> fc_pre;
  Mat<T> output;

  explicit Impl(const ArchitectureConfig& cfg) : config(cfg) {
    const auto layout = tensor_layout(cfg);
    param_count = layout.back().offset + layout.back().size;
    std::size_t t = 0;
    Eigen::Index channels = 1;
    auto length = static_cast<Eigen::Index>(cfg.input_dim);
    for (const auto& b : cfg.conv) {
      const auto out = static_cast<Eigen::Index>(b.out_channels);
      conv.push_back(ConvShape{channels, out, static_cast<Eigen::Index>(b.kernel_size), length, length / 2,
                               layout[t].offset, layout[t + 1].offset});
      t += 2;
      channels = out;
      length /= 2;
    }
    flat_channels = channels;
    flat_length = length;
    Eigen::Index width = channels * length;
    for (std::size_t j = 0; j <= cfg.fc.size(); ++j) {
      const bool hidden = j < cfg.fc.size();
      const auto out = static_cast<Eigen::Index>(hidden ? cfg.fc[j] : cfg.output_dim);
      fc.push_back(FcShape{width, out, layout[t].offset, layout[t + 1].offset, hidden});
      t += 2;
      width = out;
    }
    conv_in.resize(conv.size());
    conv_cols.resize(conv.size());
    conv_pre.resize(conv.size());
    pool_arg.resize(conv.size());
    fc_in.resize(fc.size());
    fc_pre.resize(fc.size());
  }

  void check(std::span<const T> params, std::size_t inputs, std::size_t b) const {
    if (b == 0) fail(ErrorKind::EmptyBatch, "empty batch");
    if (params.size() != param_count) fail(ErrorKind::Shape, "parameter buffer has the wrong size");
    if (inputs != b * config.input_dim) fail(ErrorKind::Shape, "input buffer does not match batch x input_dim");
  }

  void run_forward(std::span<const T> params, std::span<const T> inputs, Eigen::Index b) {
    batch = b;
    const T* p = params.data();

    // One input channel: the B x D sample-major buffer is already 1 x (D*B).
    Mat<T> current = Eigen::Map<const Mat<T>>(inputs.data(), 1, static_cast<Eigen::Index>(config.input_dim) * b);

    for (std::size_t i = 0; i < conv.size(); ++i) {
      const ConvShape& s = conv[i];
      const Eigen::Index L = s.length, K = s.kernel, C = s.in_channels, pad = K / 2;
      conv_in[i] = std::move(current);
      const Mat<T>& in = conv_in[i];

      Mat<T>& cols = conv_cols[i];
      cols.resize(C * K, L * b);
      for (Eigen::Index n = 0; n < b; ++n) {
        for (Eigen::Index l = 0; l < L; ++l) {
          T* col = cols.col(n * L + l).data();
          for (Eigen::Index c = 0; c < C; ++c) {
            for (Eigen::Index k = 0; k < K; ++k) {
              const Eigen::Index src = l + pad - k;
              col[c * K + k] = (src >= 0 && src < L) ? in(c, n * L + src) : T(0);
            }
          }
        }
      }

      Eigen::Map<const RowMat<T>> w(p + s.weight_offset, s.out_channels, C * K);
      Eigen::Map<const Vec<T>> bias(p + s.bias_offset, s.out_channels);
      Mat<T>& pre = conv_pre[i];
      pre.noalias() = w * cols;
      pre.colwise() += bias;

      const Eigen::Index P = s.pooled;
      Mat<T> pooled_out(s.out_channels, P * b);
      auto& arg = pool_arg[i];
      arg.assign(static_cast<std::size_t>(s.out_channels * P * b), 0);
      for (Eigen::Index n = 0; n < b; ++n) {
        for (Eigen::Index j = 0; j < P; ++j) {
          const Eigen::Index c0 = n * L + 2 * j;
          for (Eigen::Index o = 0; o < s.out_channels; ++o) {
            const T a = std::max(pre(o, c0), T(0));
            const T d = std::max(pre(o, c0 + 1), T(0));
            const bool second = d > a;  // ties go to the first element
            pooled_out(o, n * P + j) = second ? d : a;
            arg[static_cast<std::size_t>((n * P + j) * s.out_channels + o)] = second ? 1 : 0;
          }
        }
      }
      current = std::move(pooled_out);
    }

    // Flatten per sample, channel-major.
    Mat<T> features;
    if (conv.empty()) {
      features = Eigen::Map<const Mat<T>>(inputs.data(), static_cast<Eigen::Index>(config.input_dim), b);
    } else {
      const Eigen::Index C = flat_channels, L = flat_length;
      features.resize(C * L, b);
      for (Eigen::Index n = 0; n < b; ++n) {
        for (Eigen::Index c = 0; c < C; ++c) {
          for (Eigen::Index l = 0; l < L; ++l) features(c * L + l, n) = current(c, n * L + l);
        }
      }
      pooled = std::move(current);
    }

    Mat<T> x = std::move(features);
    for (std::size_t j = 0; j < fc.size(); ++j) {
      const FcShape& s = fc[j];
      Eigen::Map<const RowMat<T>> w(p + s.weight_offset, s.out, s.in);
      Eigen::Map<const Vec<T>> bias(p + s.bias_offset, s.out);
      fc_in[j] = std::move(x);
      Mat<T>& z = fc_pre[j];
      z.noalias() = w * fc_in[j];
      z.colwise() += bias;
      x = s.relu ? Mat<T>(z.cwiseMax(T(0))) : z;
    }
    output = std::move(x);
  }

  double run_loss(std::span<const T> targets, Mat<T>* d_output) const {
    const Eigen::Index b = batch;
    const Eigen::Index out = static_cast<Eigen::Index>(config.output_dim);
    Eigen::Map<const Mat<T>> y(targets.data(), out, b);
    double acc = 0.0;
    for (Eigen::Index n = 0; n < b; ++n) {
      for (Eigen::Index i = 0; i < out; ++i) {
        const double d = static_cast<double>(output(i, n)) - static_cast<double>(y(i, n));
        acc += d * d;
      }
    }
    const double count = static_cast<double>(out * b);
    if (d_output != nullptr) *d_output = (output - y) * static_cast<T>(2.0 / count);
    return acc / count;
  }

  // Products are evaluated into Eigen-owned (aligned) storage first: Eigen
  // peels vector loops by destination address, so writing straight into the
  // caller's buffer would make the rounding depend on where it was allocated.
  // The temporary shares the destination's row-major layout so the copy is a
  // straight memcpy rather than a strided transpose.
  static void store(Eigen::Map<RowMat<T>>& gw, Eigen::Map<Vec<T>>& gb, const RowMat<T>& weight_grad, const Mat<T>& delta) {
    gw = weight_grad;
    const Vec<T> bias_grad = delta.rowwise().sum();
    gb = bias_grad;
  }

  void run_backward(std::span<const T> params, Mat<T> dz, std::span<T> grad) {
    const T* p = params.data();
    T* g = grad.data();
    const Eigen::Index b = batch;

    Mat<T> dx;
    for (std::size_t jj = fc.size(); jj-- > 0;) {
      const FcShape& s = fc[jj];
      Eigen::Map<RowMat<T>> gw(g + s.weight_offset, s.out, s.in);
      Eigen::Map<Vec<T>> gb(g + s.bias_offset, s.out);
      store(gw, gb, RowMat<T>(dz * fc_in[jj].transpose()), dz);
      if (jj == 0 && conv.empty()) break;
      Eigen::Map<const RowMat<T>> w(p + s.weight_offset, s.out, s.in);
      dx.noalias() = w.transpose() * dz;
      if (jj > 0) {
        dz = (fc_pre[jj - 1].array() > T(0)).select(dx, T(0));
      }
    }
    if (conv.empty()) return;

    // Un-flatten into the pooled layout.
    Mat<T> d_pooled(flat_channels, flat_length * b);
    for (Eigen::Index n = 0; n < b; ++n) {
      for (Eigen::Index c = 0; c < flat_channels; ++c) {
        for (Eigen::Index l = 0; l < flat_length; ++l) d_pooled(c, n * flat_length + l) = dx(c * flat_length + l, n);
      }
    }

    for (std::size_t ii = conv.size(); ii-- > 0;) {
      const ConvShape& s = conv[ii];
      const Eigen::Index L = s.length, P = s.pooled, K = s.kernel, C = s.in_channels, pad = K / 2;
      const Mat<T>& pre = conv_pre[ii];
      const auto& arg = pool_arg[ii];

      Mat<T> d_pre = Mat<T>::Zero(s.out_channels, L * b);
      for (Eigen::Index n = 0; n < b; ++n) {
        for (Eigen::Index j = 0; j < P; ++j) {
          for (Eigen::Index o = 0; o < s.out_channels; ++o) {
            const Eigen::Index src = n * L + 2 * j + arg[static_cast<std::size_t>((n * P + j) * s.out_channels + o)];
            if (pre(o, src) > T(0)) d_pre(o, src) = d_pooled(o, n * P + j);
          }
        }
      }

      Eigen::Map<RowMat<T>> gw(g + s.weight_offset, s.out_channels, C * K);
      Eigen::Map<Vec<T>> gb(g + s.bias_offset, s.out_channels);
      store(gw, gb, RowMat<T>(d_pre * conv_cols[ii].transpose()), d_pre);

      if (ii == 0) break;
      Eigen::Map<const RowMat<T>> w(p + s.weight_offset, s.out_channels, C * K);
      const Mat<T> d_cols = w.transpose() * d_pre;
      Mat<T> d_in = Mat<T>::Zero(C, L * b);
      for (Eigen::Index n = 0; n < b; ++n) {
        for (Eigen::Index l = 0; l < L; ++l) {
          const T* col = d_cols.col(n * L + l).data();
          for (Eigen::Index c = 0; c < C; ++c) {
            for (Eigen::Index k = 0; k < K; ++k) {
              const Eigen::Index src = l + pad - k;
              if (src >= 0 && src < L) d_in(c, n * L + src) += col[c * K + k];
            }
          }
        }
      }
      d_pooled = std::move(d_in);
    }
  }
};

template <typename T>
Network<T>::Network(const ArchitectureConfig& config) : impl_(std::make_unique<Impl>(config)) {}

template <typename T>
Network<T>::~Network() = default;

template <typename T>
Network<T>::Network(Network&&) noexcept = default;

template <typename T>
Network<T>& Network<T>::operator=(Network&&) noexcept = default;

template <typename T>
const ArchitectureConfig& Network<T>::config() const {
  return impl_->config;
}

template <typename T>
void Network<T>::forward(std::span<const T> params, std::span<const T> inputs, std::size_t batch, std::span<T> outputs) {
  impl_->check(params, inputs.size(), batch);
  if (outputs.size() != batch * impl_->config.output_dim) fail(ErrorKind::Shape, "output buffer has the wrong size");
  impl_->run_forward(params, inputs, static_cast<Eigen::Index>(batch));
  Eigen::Map<Mat<T>>(outputs.data(), static_cast<Eigen::Index>(impl_->config.output_dim),
                     static_cast<Eigen::Index>(batch)) = impl_->output;
}

template <typename T>
double Network<T>::loss(std::span<const T> params, std::span<const T> inputs, std::span<const T> targets,
                        std::size_t batch) {
  impl_->check(params, inputs.size(), batch);
  if (targets.size() != batch * impl_->config.output_dim) fail(ErrorKind::Shape, "target buffer has the wrong size");
  impl_->run_forward(params, inputs, static_cast<Eigen::Index>(batch));
  return impl_->run_loss(targets, nullptr);
}

template <typename T>
double Network<T>::gradient(std::span<const T> params, std::span<const T> inputs, std::span<const T> targets,
                            std::size_t batch, std::span<T> grad) {
  impl_->check(params, inputs.size(), batch);
  if (targets.size() != batch * impl_->config.output_dim) fail(ErrorKind::Shape, "target buffer has the wrong size");
  if (grad.size() != impl_->param_count) fail(ErrorKind::Shape, "gradient buffer has the wrong size");
  impl_->run_forward(params, inputs, static_cast<Eigen::Index>(batch));
  Mat<T> d_output;
  const double value = impl_->run_loss(targets, &d_output);
  impl_->run_backward(params, std::move(d_output), grad);
  return value;
}

template class Network<float>;
template class Network<double>;

}  // namespace facegen
