#include "scl/ops.hpp"

#include <algorithm>
#include <cmath>

#include "scl/errors.hpp"

namespace scl::ops {

namespace {

Tensor make_output(Shape shape, bool tracked) {
  Tensor out(std::move(shape));
  out.set_requires_grad(tracked);
  return out;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " expects rank " +
                         std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Elementwise op with derivative expressed through input and output values.
template <class Fwd, class Deriv>
Tensor unary(Tape* tape, const Tensor& x, Fwd fwd, Deriv deriv) {
  const bool tracked = needs_record(tape, {&x});
  Tensor out = make_output(x.shape(), tracked);
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = fwd(xs[i]);
  if (tracked) {
    tape->record(out, {x}, [x, out, deriv]() mutable {
      auto gy = out.grad();
      auto xs = x.data();
      auto ys = out.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        gx[i] += gy[i] * deriv(xs[i], ys[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  require_rank(b, 1, "linear bias");
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || b.dim(0) != out_dim) {
    throw DimensionError("linear: x " + shape_str(x.shape()) + ", w " +
                         shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  const bool tracked = needs_record(tape, {&x, &w, &b});
  Tensor y = make_output({batch, out_dim}, tracked);
  auto xs = x.data();
  auto ws = w.data();
  auto bs = b.data();
  auto ys = y.data();
  for (std::size_t r = 0; r < batch; ++r) {
    double* yr = ys.data() + r * out_dim;
    std::copy(bs.begin(), bs.end(), yr);
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xs[r * in + i];
      const double* wr = ws.data() + i * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) yr[j] += xv * wr[j];
    }
  }
  if (tracked) {
    tape->record(y, {x, w, b}, [x, w, b, y, batch, in, out_dim]() mutable {
      auto gy = y.grad();
      auto xs = x.data();
      auto ws = w.data();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t r = 0; r < batch; ++r) {
          const double* gr = gy.data() + r * out_dim;
          for (std::size_t i = 0; i < in; ++i) {
            const double* wr = ws.data() + i * out_dim;
            double acc = 0.0;
            for (std::size_t j = 0; j < out_dim; ++j) acc += gr[j] * wr[j];
            gx[r * in + i] += acc;
          }
        }
      }
      if (w.requires_grad()) {
        auto gw = w.grad_buffer();
        for (std::size_t r = 0; r < batch; ++r) {
          const double* gr = gy.data() + r * out_dim;
          for (std::size_t i = 0; i < in; ++i) {
            const double xv = xs[r * in + i];
            double* gwr = gw.data() + i * out_dim;
            for (std::size_t j = 0; j < out_dim; ++j) gwr[j] += xv * gr[j];
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t j = 0; j < out_dim; ++j) {
            gb[j] += gy[r * out_dim + j];
          }
        }
      }
    });
  }
  return y;
}

std::size_t conv_out_extent(std::size_t in, const ConvOptions& opt) {
  if (opt.stride < 1) throw ParameterError("convolution stride must be >= 1");
  if (opt.padding == Padding::same) return (in + opt.stride - 1) / opt.stride;
  if (in < 3) {
    throw DimensionError("valid 3x3 convolution needs extent >= 3, got " +
                         std::to_string(in));
  }
  return (in - 3) / opt.stride + 1;
}

std::size_t conv_pad_before(std::size_t in, const ConvOptions& opt) {
  if (opt.padding == Padding::valid) return 0;
  const std::size_t out = conv_out_extent(in, opt);
  const std::size_t needed = (out - 1) * opt.stride + 3;
  const std::size_t total = needed > in ? needed - in : 0;
  return total / 2;
}

Tensor conv2d_3x3(Tape* tape, const Tensor& x, const Tensor& kernel,
                  const Tensor& bias, const ConvOptions& opt) {
  if (opt.stride < 1) throw ParameterError("convolution stride must be >= 1");
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2),
                    cin = x.dim(3);
  if (kernel.dim(0) != 3 || kernel.dim(1) != 3 || kernel.dim(2) != cin) {
    throw DimensionError("conv2d kernel " + shape_str(kernel.shape()) +
                         " incompatible with input " + shape_str(x.shape()));
  }
  const std::size_t cout = kernel.dim(3);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d bias " + shape_str(bias.shape()));
  }
  const std::size_t ho = conv_out_extent(h, opt), wo = conv_out_extent(w, opt);
  const std::ptrdiff_t pad_y = static_cast<std::ptrdiff_t>(conv_pad_before(h, opt));
  const std::ptrdiff_t pad_x = static_cast<std::ptrdiff_t>(conv_pad_before(w, opt));
  const std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(opt.stride);

  const bool tracked = needs_record(tape, {&x, &kernel, &bias});
  Tensor y = make_output({batch, ho, wo, cout}, tracked);

  // Visits every (output pixel, tap) pair with a valid input position.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const std::size_t out_off = ((n * ho + oy) * wo + ox) * cout;
          for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride + ky - pad_y;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride + kx - pad_x;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t in_off =
                  ((n * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin;
              const std::size_t k_off = static_cast<std::size_t>(ky * 3 + kx) * cin * cout;
              fn(out_off, in_off, k_off);
            }
          }
        }
      }
    }
  };

  {
    auto xs = x.data();
    auto ks = kernel.data();
    auto ys = y.data();
    if (bias.defined()) {
      auto bs = bias.data();
      for (std::size_t i = 0; i < ys.size(); i += cout) {
        std::copy(bs.begin(), bs.end(), ys.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
    for_each_tap([&](std::size_t out_off, std::size_t in_off, std::size_t k_off) {
      double* yo = ys.data() + out_off;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double xv = xs[in_off + ci];
        const double* kr = ks.data() + k_off + ci * cout;
        for (std::size_t co = 0; co < cout; ++co) yo[co] += xv * kr[co];
      }
    });
  }

  if (tracked) {
    tape->record(y, {x, kernel, bias}, [x, kernel, bias, y, cin, cout, for_each_tap]() mutable {
      auto gy = y.grad();
      auto xs = x.data();
      auto ks = kernel.data();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for_each_tap([&](std::size_t out_off, std::size_t in_off, std::size_t k_off) {
          const double* go = gy.data() + out_off;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* kr = ks.data() + k_off + ci * cout;
            double acc = 0.0;
            for (std::size_t co = 0; co < cout; ++co) acc += go[co] * kr[co];
            gx[in_off + ci] += acc;
          }
        });
      }
      if (kernel.requires_grad()) {
        auto gk = kernel.grad_buffer();
        for_each_tap([&](std::size_t out_off, std::size_t in_off, std::size_t k_off) {
          const double* go = gy.data() + out_off;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = xs[in_off + ci];
            double* gkr = gk.data() + k_off + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) gkr[co] += xv * go[co];
          }
        });
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i % cout] += gy[i];
      }
    });
  }
  return y;
}

Tensor leaky_relu(Tape* tape, const Tensor& x, double slope) {
  return unary(
      tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor relu(Tape* tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  return unary(
      tape, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double s) { return s * (1.0 - s); });
}

Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, BatchNormStats& stats, bool training) {
  if (x.rank() < 2) {
    throw DimensionError("batch_norm needs rank >= 2, got " +
                         shape_str(x.shape()));
  }
  const std::size_t channels = x.shape().back();
  const std::size_t rows = x.size() / channels;
  if (gamma.size() != channels || beta.size() != channels ||
      stats.running_mean.size() != channels ||
      stats.running_var.size() != channels) {
    throw DimensionError("batch_norm parameters do not match " +
                         std::to_string(channels) + " channels");
  }
  if (training && x.dim(0) < 2) {
    throw DimensionError("batch_norm in training mode needs batch >= 2");
  }

  auto xs = x.data();
  std::vector<double> mean(channels, 0.0), inv_std(channels, 0.0);
  if (training) {
    std::vector<double> var(channels, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) mean[c] += xs[r * channels + c];
    }
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = xs[r * channels + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const double biased = var[c] / static_cast<double>(rows);
      const double unbiased =
          rows > 1 ? var[c] / static_cast<double>(rows - 1) : biased;
      inv_std[c] = 1.0 / std::sqrt(biased + stats.eps);
      stats.running_mean[c] =
          (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mean[c];
      stats.running_var[c] =
          (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }

  const bool tracked = needs_record(tape, {&x, &gamma, &beta});
  Tensor y = make_output(x.shape(), tracked);
  Tensor xhat(x.shape());
  {
    auto ys = y.data();
    auto xh = xhat.data();
    auto gs = gamma.data();
    auto bs = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = r * channels + c;
        xh[i] = (xs[i] - mean[c]) * inv_std[c];
        ys[i] = gs[c] * xh[i] + bs[c];
      }
    }
  }

  if (tracked) {
    tape->record(y, {x, gamma, beta},
                 [x, gamma, beta, y, xhat, inv_std, rows, channels, training]() mutable {
      auto gy = y.grad();
      auto xh = xhat.data();
      auto gs = gamma.data();
      std::vector<double> sum_dy(channels, 0.0), sum_dy_xhat(channels, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t i = r * channels + c;
          sum_dy[c] += gy[i];
          sum_dy_xhat[c] += gy[i] * xh[i];
        }
      }
      if (gamma.requires_grad()) {
        auto gg = gamma.grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_dy_xhat[c];
      }
      if (beta.requires_grad()) {
        auto gb = beta.grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_dy[c];
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        const double n = static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            if (training) {
              gx[i] += gs[c] * inv_std[c] / n *
                       (n * gy[i] - sum_dy[c] - xh[i] * sum_dy_xhat[c]);
            } else {
              gx[i] += gs[c] * inv_std[c] * gy[i];
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor reshape(Tape* tape, const Tensor& x, Shape shape) {
  const bool tracked = needs_record(tape, {&x});
  Tensor y = x.view(std::move(shape));
  y.set_requires_grad(tracked);
  if (tracked) {
    tape->record(y, {x}, [x, y]() mutable {
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

Tensor concat_last(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0) {
    throw DimensionError("concat_last: ranks differ");
  }
  const std::size_t da = a.shape().back(), db = b.shape().back();
  if (a.size() / da != b.size() / db) {
    throw DimensionError("concat_last: leading dims differ " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t rows = a.size() / da;
  Shape shape = a.shape();
  shape.back() = da + db;
  const bool tracked = needs_record(tape, {&a, &b});
  Tensor y = make_output(shape, tracked);
  auto as = a.data();
  auto bs = b.data();
  auto ys = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(as.begin() + static_cast<std::ptrdiff_t>(r * da), da,
                ys.begin() + static_cast<std::ptrdiff_t>(r * (da + db)));
    std::copy_n(bs.begin() + static_cast<std::ptrdiff_t>(r * db), db,
                ys.begin() + static_cast<std::ptrdiff_t>(r * (da + db) + da));
  }
  if (tracked) {
    tape->record(y, {a, b}, [a, b, y, rows, da, db]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < da; ++j) ga[r * da + j] += gy[r * (da + db) + j];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < db; ++j) {
            gb[r * db + j] += gy[r * (da + db) + da + j];
          }
        }
      }
    });
  }
  return y;
}

Tensor substitute(Tape* tape, const Tensor& p, std::span<const double> mask,
                  std::span<const double> values) {
  if (mask.size() != p.size() || values.size() != p.size()) {
    throw DimensionError("substitute: mask/values length does not match " +
                         shape_str(p.shape()));
  }
  const bool tracked = needs_record(tape, {&p});
  Tensor y = make_output(p.shape(), tracked);
  auto ps = p.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ys[i] = mask[i] != 0.0 ? values[i] : ps[i];
  }
  if (tracked) {
    std::vector<double> keep(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) keep[i] = mask[i] != 0.0 ? 0.0 : 1.0;
    tape->record(y, {p}, [p, y, keep = std::move(keep)]() mutable {
      auto gy = y.grad();
      auto gp = p.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += keep[i] * gy[i];
    });
  }
  return y;
}

Tensor mix_embeddings(Tape* tape, const Tensor& p, const Tensor& pos,
                      const Tensor& neg) {
  require_rank(p, 2, "mix_embeddings probabilities");
  require_rank(pos, 3, "mix_embeddings positive embeddings");
  require_same_shape(pos, neg, "mix_embeddings");
  if (pos.dim(0) != p.dim(0) || pos.dim(1) != p.dim(1)) {
    throw DimensionError("mix_embeddings: p " + shape_str(p.shape()) +
                         " vs embeddings " + shape_str(pos.shape()));
  }
  const std::size_t units = p.size(), m = pos.dim(2);
  const bool tracked = needs_record(tape, {&p, &pos, &neg});
  Tensor y = make_output(pos.shape(), tracked);
  auto ps = p.data();
  auto as = pos.data();
  auto bs = neg.data();
  auto ys = y.data();
  for (std::size_t u = 0; u < units; ++u) {
    const double w = ps[u];
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t i = u * m + j;
      ys[i] = w * as[i] + (1.0 - w) * bs[i];
    }
  }
  if (tracked) {
    tape->record(y, {p, pos, neg}, [p, pos, neg, y, units, m]() mutable {
      auto gy = y.grad();
      auto ps = p.data();
      auto as = pos.data();
      auto bs = neg.data();
      if (p.requires_grad()) {
        auto gp = p.grad_buffer();
        for (std::size_t u = 0; u < units; ++u) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            const std::size_t i = u * m + j;
            acc += gy[i] * (as[i] - bs[i]);
          }
          gp[u] += acc;
        }
      }
      if (pos.requires_grad()) {
        auto ga = pos.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += ps[i / m] * gy[i];
      }
      if (neg.requires_grad()) {
        auto gb = neg.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += (1.0 - ps[i / m]) * gy[i];
      }
    });
  }
  return y;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool tracked = needs_record(tape, {&a, &b});
  Tensor y = make_output(a.shape(), tracked);
  auto as = a.data();
  auto bs = b.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] + bs[i];
  if (tracked) {
    tape->record(y, {a, b}, [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool tracked = needs_record(tape, {&a, &b});
  Tensor y = make_output(a.shape(), tracked);
  auto as = a.data();
  auto bs = b.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] * bs[i];
  if (tracked) {
    tape->record(y, {a, b}, [a, b, y]() mutable {
      auto gy = y.grad();
      auto as = a.data();
      auto bs = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bs[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * as[i];
      }
    });
  }
  return y;
}

Tensor scale(Tape* tape, const Tensor& a, double factor) {
  return unary(
      tape, a, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Tensor sum(Tape* tape, const Tensor& a) {
  const bool tracked = needs_record(tape, {&a});
  Tensor y = make_output({}, tracked);
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  y.data()[0] = acc;
  if (tracked) {
    tape->record(y, {a}, [a, y]() mutable {
      const double g = y.grad()[0];
      auto ga = a.grad_buffer();
      for (auto& v : ga) v += g;
    });
  }
  return y;
}

Tensor weighted_softmax_ce(Tape* tape, const Tensor& logits,
                           std::span<const int> labels,
                           std::span<const double> class_weights) {
  require_rank(logits, 2, "weighted_softmax_ce logits");
  const std::size_t batch = logits.dim(0), n = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("weighted_softmax_ce: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(batch));
  }
  if (class_weights.size() != n) {
    throw DimensionError("weighted_softmax_ce: class weight count " +
                         std::to_string(class_weights.size()) + " != " +
                         std::to_string(n));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw IndexError("label " + std::to_string(y) + " outside [0, " +
                       std::to_string(n) + ")");
    }
  }
  std::vector<double> probs = softmax_rows(logits);
  auto zs = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* z = zs.data() + r * n;
    const double zmax = *std::max_element(z, z + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(z[j] - zmax);
    const auto y = static_cast<std::size_t>(labels[r]);
    total += class_weights[y] * (zmax + std::log(s) - z[y]);
  }
  const bool tracked = needs_record(tape, {&logits});
  Tensor loss = make_output({}, tracked);
  loss.data()[0] = total / static_cast<double>(batch);
  if (tracked) {
    std::vector<int> ys(labels.begin(), labels.end());
    std::vector<double> ws(class_weights.begin(), class_weights.end());
    tape->record(loss, {logits},
                 [logits, loss, probs = std::move(probs), ys = std::move(ys),
                  ws = std::move(ws), batch, n]() mutable {
      const double g = loss.grad()[0] / static_cast<double>(batch);
      auto gz = logits.grad_buffer();
      for (std::size_t r = 0; r < batch; ++r) {
        const auto y = static_cast<std::size_t>(ys[r]);
        const double w = ws[y] * g;
        for (std::size_t j = 0; j < n; ++j) {
          gz[r * n + j] += w * (probs[r * n + j] - (j == y ? 1.0 : 0.0));
        }
      }
    });
  }
  return loss;
}

MaskedLoss bce(Tape* tape, const Tensor& p, std::span<const double> targets,
               std::span<const double> mask) {
  if (targets.size() != p.size() || mask.size() != p.size()) {
    throw DimensionError("bce: targets/mask length does not match " +
                         shape_str(p.shape()));
  }
  double denom = 0.0;
  for (double m : mask) denom += m;
  const bool tracked = needs_record(tape, {&p});
  MaskedLoss result{make_output({}, tracked), denom == 0.0};
  if (result.empty_mask) {
    // Nothing to supervise: record a zero-gradient node so the loss still
    // composes with the rest of the graph.
    if (tracked) tape->record(result.value, {p}, [] {});
    return result;
  }
  auto ps = p.data();
  double total = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double q = std::clamp(ps[i], kProbClampLow, kProbClampHigh);
    total -= mask[i] * (targets[i] * std::log(q) + (1.0 - targets[i]) * std::log(1.0 - q));
  }
  result.value.data()[0] = total / denom;
  if (tracked) {
    std::vector<double> t(targets.begin(), targets.end());
    std::vector<double> m(mask.begin(), mask.end());
    tape->record(result.value, {p},
                 [p, out = result.value, t = std::move(t), m = std::move(m), denom]() mutable {
      const double g = out.grad()[0] / denom;
      auto ps = p.data();
      auto gp = p.grad_buffer();
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (m[i] == 0.0) continue;
        const double q = ps[i];
        if (q < kProbClampLow || q > kProbClampHigh) continue;
        gp[i] -= g * m[i] * (t[i] / q - (1.0 - t[i]) / (1.0 - q));
      }
    });
  }
  return result;
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  const std::size_t batch = logits.dim(0), n = logits.dim(1);
  std::vector<double> out(batch * n);
  auto zs = logits.data();
  for (std::size_t r = 0; r < batch; ++r) {
    const double* z = zs.data() + r * n;
    const double zmax = *std::max_element(z, z + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = std::exp(z[j] - zmax);
      s += out[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= s;
  }
  return out;
}

}  // namespace scl::ops
