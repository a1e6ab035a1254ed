#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scl/tensor.hpp"

// Differentiable operations. Every op takes a nullable Tape*; when the tape is
// null (or no operand requires a gradient) nothing is recorded and the op is a
// pure function of its inputs.
namespace scl::ops {

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kProbClampLow = 1e-7;
inline constexpr double kProbClampHigh = 1.0 - 1e-7;

// y = x·w + b for x [batch×in], w [in×out], b [out].
Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);

enum class Padding { same, valid };

struct ConvOptions {
  std::size_t stride = 2;
  Padding padding = Padding::same;
};

// Output spatial extent along one axis.
//   valid: (in - 3) / stride + 1
//   same:  ceil(in / stride), zero padding split floor/ceil (top/left gets the
//          smaller half)
std::size_t conv_out_extent(std::size_t in, const ConvOptions& opt);
std::size_t conv_pad_before(std::size_t in, const ConvOptions& opt);

// Cross-correlation over NHWC input with a 3×3×Cin×Cout kernel. `bias` may be
// undefined.
Tensor conv2d_3x3(Tape* tape, const Tensor& x, const Tensor& kernel,
                  const Tensor& bias, const ConvOptions& opt);

Tensor leaky_relu(Tape* tape, const Tensor& x, double slope = kLeakySlope);
Tensor relu(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// Normalizes over every axis but the last. In training mode batch statistics
// are used and `stats` is updated; in inference mode only `stats` is read.
Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, BatchNormStats& stats, bool training);

// Same data, new shape.
Tensor reshape(Tape* tape, const Tensor& x, Shape shape);

// Concatenates two tensors with equal leading dims along the last axis.
Tensor concat_last(Tape* tape, const Tensor& a, const Tensor& b);

// Replaces entries of p [batch×k] where mask is nonzero by `values`; those
// entries pass no gradient back to p.
Tensor substitute(Tape* tape, const Tensor& p, std::span<const double> mask,
                  std::span<const double> values);

// out[b,i,:] = p[b,i]·pos[b,i,:] + (1 - p[b,i])·neg[b,i,:]
Tensor mix_embeddings(Tape* tape, const Tensor& p, const Tensor& pos,
                      const Tensor& neg);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double factor);
Tensor sum(Tape* tape, const Tensor& a);

// mean_b class_weights[y_b] · (−log softmax(logits_b)[y_b])
Tensor weighted_softmax_ce(Tape* tape, const Tensor& logits,
                           std::span<const int> labels,
                           std::span<const double> class_weights);

struct MaskedLoss {
  Tensor value;
  bool empty_mask = false;
};

// Soft-target binary cross-entropy averaged over unmasked entries. p is
// clamped to [kProbClampLow, kProbClampHigh]; clamped entries pass no gradient.
MaskedLoss bce(Tape* tape, const Tensor& p, std::span<const double> targets,
               std::span<const double> mask);

// Row-wise softmax of [batch×n]; no gradient.
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace scl::ops
