#include "cvmcl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cvmcl::embed {

namespace {

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel) {
    return 0;
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

// Half-open bin [begin, end) of adaptive average pooling.
std::size_t bin_begin(std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; }
std::size_t bin_end(std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; }

// Range of output positions o for which o*stride + k - pad lies in [0, in).
void valid_range(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                 std::size_t& lo, std::size_t& hi) {
  // o*stride >= pad - k
  lo = 0;
  if (pad > k) {
    lo = (pad - k + stride - 1) / stride;
  }
  // o*stride + k - pad <= in - 1
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in) - 1 + static_cast<std::ptrdiff_t>(pad) -
                             static_cast<std::ptrdiff_t>(k);
  if (top < 0) {
    hi = 0;
    lo = 1;
    return;
  }
  hi = std::min(out, static_cast<std::size_t>(top) / stride + 1);
}

}  // namespace

EncoderLayout EncoderLayout::make(const EncoderConfig& config, View view) {
  const ViewDims& in = config.dims(view);
  const char* name = view == View::Ground ? "ground" : "satellite";
  if (in.rows == 0 || in.cols == 0 || in.channels == 0) {
    throw InvalidArgument(std::string("EncoderConfig: empty ") + name + " input dims");
  }
  if (config.layers.size() < 2) {
    throw InvalidArgument("EncoderConfig: need at least two conv layers");
  }
  if (config.mid_tap_layer + 1 >= config.layers.size()) {
    throw InvalidArgument("EncoderConfig: mid_tap_layer must precede the final layer");
  }
  if (config.embed_dim < 8) {
    throw InvalidArgument("EncoderConfig: embed_dim must be >= 8");
  }

  EncoderLayout layout;
  layout.input = in;
  layout.mid_tap = config.mid_tap_layer;
  layout.embed_dim = config.embed_dim;
  std::size_t offset = 0;
  std::size_t c = in.channels, h = in.rows, w = in.cols;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    const ConvLayerSpec& spec = config.layers[l];
    if (spec.filters == 0 || spec.kernel == 0 || spec.stride == 0) {
      throw InvalidArgument("EncoderConfig: layer " + std::to_string(l) + " has a zero field");
    }
    LayerShape s{};
    s.in_c = c;
    s.in_h = h;
    s.in_w = w;
    s.out_c = spec.filters;
    s.kernel = spec.kernel;
    s.stride = spec.stride;
    s.pad = spec.kernel / 2;
    s.pool = spec.pool;
    s.conv_h = conv_out(h, s.kernel, s.stride, s.pad);
    s.conv_w = conv_out(w, s.kernel, s.stride, s.pad);
    s.out_h = s.pool ? s.conv_h / 2 : s.conv_h;
    s.out_w = s.pool ? s.conv_w / 2 : s.conv_w;
    if (s.out_h == 0 || s.out_w == 0) {
      throw InvalidArgument(std::string("EncoderConfig: ") + name + " input too small for layer " +
                            std::to_string(l));
    }
    s.weight = {offset, s.out_c * s.in_c * s.kernel * s.kernel};
    offset += s.weight.size;
    s.bias = {offset, s.out_c};
    offset += s.bias.size;
    layout.layers.push_back(s);
    c = s.out_c;
    h = s.out_h;
    w = s.out_w;
  }
  const LayerShape& mid = layout.layers[layout.mid_tap];
  const LayerShape& last = layout.layers.back();
  if (mid.out_h < last.out_h || mid.out_w < last.out_w) {
    throw InvalidArgument(std::string("EncoderConfig: ") + name + " mid tap is smaller than the final layer");
  }
  if (mid.out_c != last.out_c) {
    throw InvalidArgument("EncoderConfig: mid tap and final layer must have the same filter count so pooled "
                          "feature counts match");
  }
  layout.feature_count = last.out_c * last.out_h * last.out_w;
  const std::size_t d = config.embed_dim;
  layout.high_w = {offset, d * layout.feature_count};
  offset += layout.high_w.size;
  layout.high_b = {offset, d};
  offset += d;
  layout.mid_w = {offset, d * layout.feature_count};
  offset += layout.mid_w.size;
  layout.mid_b = {offset, d};
  offset += d;
  layout.param_count = offset;
  return layout;
}

void EncoderConfig::validate() const {
  (void)EncoderLayout::make(*this, View::Ground);
  (void)EncoderLayout::make(*this, View::Satellite);
}

std::vector<TensorSlot> EncoderParams::tensors() const {
  std::vector<TensorSlot> out;
  for (const auto& l : layout.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  out.push_back(layout.high_w);
  out.push_back(layout.high_b);
  out.push_back(layout.mid_w);
  out.push_back(layout.mid_b);
  return out;
}

EncoderParams init_params(const EncoderConfig& config, View view, std::uint64_t seed) {
  EncoderParams p{EncoderLayout::make(config, view), {}};
  p.values.assign(p.layout.param_count, 0.0);
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(view) + 0x656e63);  // "enc"
  const auto fill = [&](TensorSlot slot, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : p.slot(slot)) {
      v = u(rng);
    }
  };
  for (const auto& l : p.layout.layers) {
    fill(l.weight, std::sqrt(6.0 / static_cast<double>(l.in_c * l.kernel * l.kernel)));
  }
  const double dense = std::sqrt(3.0 / static_cast<double>(p.layout.feature_count));
  fill(p.layout.high_w, dense);
  fill(p.layout.mid_w, dense);
  return p;
}

namespace {

// Offset of input element (oy*stride + ky - pad, kx - pad); may be negative for
// the padded border, callers only index it at valid output columns.
std::ptrdiff_t in_offset(const LayerShape& s, std::size_t oy, std::size_t ky, std::size_t kx) {
  const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
  return iy * static_cast<std::ptrdiff_t>(s.in_w) + static_cast<std::ptrdiff_t>(kx) -
         static_cast<std::ptrdiff_t>(s.pad);
}

void conv_forward(const LayerShape& s, const double* x, const double* wt, const double* b, double* z) {
  const std::size_t plane = s.conv_h * s.conv_w;
  for (std::size_t f = 0; f < s.out_c; ++f) {
    double* zf = z + f * plane;
    std::fill(zf, zf + plane, b[f]);
    for (std::size_t c = 0; c < s.in_c; ++c) {
      const double* xc = x + c * s.in_h * s.in_w;
      for (std::size_t ky = 0; ky < s.kernel; ++ky) {
        std::size_t oy_lo, oy_hi;
        valid_range(s.in_h, s.conv_h, ky, s.stride, s.pad, oy_lo, oy_hi);
        for (std::size_t kx = 0; kx < s.kernel; ++kx) {
          std::size_t ox_lo, ox_hi;
          valid_range(s.in_w, s.conv_w, kx, s.stride, s.pad, ox_lo, ox_hi);
          const double wv = wt[((f * s.in_c + c) * s.kernel + ky) * s.kernel + kx];
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            const double* row = xc + in_offset(s, oy, ky, kx);
            double* zrow = zf + oy * s.conv_w;
            if (s.stride == 1) {
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                zrow[ox] += wv * row[ox];
              }
            } else {
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                zrow[ox] += wv * row[ox * s.stride];
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward(const LayerShape& s, const double* x, const double* wt, const double* dz, double* dw, double* db,
                   double* dx) {
  const std::size_t plane = s.conv_h * s.conv_w;
  for (std::size_t f = 0; f < s.out_c; ++f) {
    const double* dzf = dz + f * plane;
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      sum += dzf[i];
    }
    db[f] += sum;
    for (std::size_t c = 0; c < s.in_c; ++c) {
      const double* xc = x + c * s.in_h * s.in_w;
      double* dxc = dx != nullptr ? dx + c * s.in_h * s.in_w : nullptr;
      for (std::size_t ky = 0; ky < s.kernel; ++ky) {
        std::size_t oy_lo, oy_hi;
        valid_range(s.in_h, s.conv_h, ky, s.stride, s.pad, oy_lo, oy_hi);
        for (std::size_t kx = 0; kx < s.kernel; ++kx) {
          std::size_t ox_lo, ox_hi;
          valid_range(s.in_w, s.conv_w, kx, s.stride, s.pad, ox_lo, ox_hi);
          const std::size_t widx = ((f * s.in_c + c) * s.kernel + ky) * s.kernel + kx;
          const double wv = wt[widx];
          double acc = 0.0;
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            const std::ptrdiff_t in_off = in_offset(s, oy, ky, kx);
            const double* row = xc + in_off;
            const double* dzrow = dzf + oy * s.conv_w;
            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
              acc += dzrow[ox] * row[ox * s.stride];
            }
            if (dxc != nullptr) {
              double* dxrow = dxc + in_off;
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                dxrow[ox * s.stride] += wv * dzrow[ox];
              }
            }
          }
          dw[widx] += acc;
        }
      }
    }
  }
}

void dense_forward(std::span<const double> w, std::span<const double> b, const std::vector<double>& x,
                   std::vector<double>& y) {
  const std::size_t d = b.size();
  const std::size_t k = x.size();
  y.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double* wi = w.data() + i * k;
    double s = b[i];
    for (std::size_t j = 0; j < k; ++j) {
      s += wi[j] * x[j];
    }
    y[i] = s;
  }
}

void dense_backward(std::span<const double> w, const std::vector<double>& x, std::span<const double> dy,
                    std::span<double> dw, std::span<double> db, std::vector<double>& dx) {
  const std::size_t d = dy.size();
  const std::size_t k = x.size();
  dx.assign(k, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double g = dy[i];
    db[i] += g;
    const double* wi = w.data() + i * k;
    double* dwi = dw.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      dwi[j] += g * x[j];
      dx[j] += g * wi[j];
    }
  }
}

}  // namespace

std::vector<double> forward(const EncoderParams& params, const Tensor3& input, ForwardCache* cache) {
  const EncoderLayout& L = params.layout;
  if (input.rows != L.input.rows || input.cols != L.input.cols || input.channels != L.input.channels) {
    throw InvalidArgument("encoder forward: input shape " + std::to_string(input.rows) + "x" +
                          std::to_string(input.cols) + "x" + std::to_string(input.channels) + " does not match " +
                          std::to_string(L.input.rows) + "x" + std::to_string(L.input.cols) + "x" +
                          std::to_string(L.input.channels));
  }
  ForwardCache local;
  ForwardCache& fc = cache != nullptr ? *cache : local;
  const std::size_t nl = L.layers.size();
  fc.layer_input.resize(nl);
  fc.preact.resize(nl);
  fc.argmax.resize(nl);
  fc.layer_output.resize(nl);

  // HWC -> CHW
  std::vector<double> x(input.size());
  for (std::size_t r = 0; r < input.rows; ++r) {
    for (std::size_t c = 0; c < input.cols; ++c) {
      for (std::size_t ch = 0; ch < input.channels; ++ch) {
        x[(ch * input.rows + r) * input.cols + c] = input.at(r, c, ch);
      }
    }
  }

  for (std::size_t l = 0; l < nl; ++l) {
    const LayerShape& s = L.layers[l];
    fc.layer_input[l] = std::move(x);
    auto& z = fc.preact[l];
    z.assign(s.out_c * s.conv_h * s.conv_w, 0.0);
    conv_forward(s, fc.layer_input[l].data(), params.slot(s.weight).data(), params.slot(s.bias).data(), z.data());
    auto& y = fc.layer_output[l];
    if (!s.pool) {
      y.resize(z.size());
      std::transform(z.begin(), z.end(), y.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
      fc.argmax[l].clear();
    } else {
      y.assign(s.out_c * s.out_h * s.out_w, 0.0);
      auto& am = fc.argmax[l];
      am.assign(y.size(), 0);
      for (std::size_t f = 0; f < s.out_c; ++f) {
        for (std::size_t oy = 0; oy < s.out_h; ++oy) {
          for (std::size_t ox = 0; ox < s.out_w; ++ox) {
            std::size_t best = (f * s.conv_h + 2 * oy) * s.conv_w + 2 * ox;
            for (std::size_t dy = 0; dy < 2; ++dy) {
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = (f * s.conv_h + 2 * oy + dy) * s.conv_w + 2 * ox + dx;
                if (z[idx] > z[best]) {
                  best = idx;
                }
              }
            }
            const std::size_t o = (f * s.out_h + oy) * s.out_w + ox;
            am[o] = static_cast<std::uint32_t>(best);
            y[o] = z[best] > 0.0 ? z[best] : 0.0;
          }
        }
      }
    }
    x = y;
  }

  const LayerShape& mid = L.layers[L.mid_tap];
  const LayerShape& last = L.layers.back();
  const auto& tap = fc.layer_output[L.mid_tap];
  fc.mid_pooled.assign(L.feature_count, 0.0);
  for (std::size_t c = 0; c < mid.out_c; ++c) {
    for (std::size_t i = 0; i < last.out_h; ++i) {
      const std::size_t r0 = bin_begin(i, mid.out_h, last.out_h), r1 = bin_end(i, mid.out_h, last.out_h);
      for (std::size_t j = 0; j < last.out_w; ++j) {
        const std::size_t c0 = bin_begin(j, mid.out_w, last.out_w), c1 = bin_end(j, mid.out_w, last.out_w);
        double s = 0.0;
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t q = c0; q < c1; ++q) {
            s += tap[(c * mid.out_h + r) * mid.out_w + q];
          }
        }
        fc.mid_pooled[(c * last.out_h + i) * last.out_w + j] = s / static_cast<double>((r1 - r0) * (c1 - c0));
      }
    }
  }

  dense_forward(params.slot(L.high_w), params.slot(L.high_b), fc.layer_output.back(), fc.high_out);
  dense_forward(params.slot(L.mid_w), params.slot(L.mid_b), fc.mid_pooled, fc.mid_out);
  std::vector<double> e(L.embed_dim);
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = fc.high_out[i] + fc.mid_out[i];
  }
  return e;
}

void backward(const EncoderParams& params, const ForwardCache& fc, std::span<const double> grad_embedding,
              std::span<double> grad_params) {
  const EncoderLayout& L = params.layout;
  if (grad_embedding.size() != L.embed_dim || grad_params.size() != L.param_count) {
    throw InvalidArgument("encoder backward: gradient buffer size mismatch");
  }
  const auto gslot = [&](TensorSlot s) { return grad_params.subspan(s.offset, s.size); };

  std::vector<double> d_high, d_mid;
  dense_backward(params.slot(L.high_w), fc.layer_output.back(), grad_embedding, gslot(L.high_w), gslot(L.high_b),
                 d_high);
  dense_backward(params.slot(L.mid_w), fc.mid_pooled, grad_embedding, gslot(L.mid_w), gslot(L.mid_b), d_mid);

  const LayerShape& mid = L.layers[L.mid_tap];
  const LayerShape& last = L.layers.back();
  std::vector<double> d_tap(mid.out_c * mid.out_h * mid.out_w, 0.0);
  for (std::size_t c = 0; c < mid.out_c; ++c) {
    for (std::size_t i = 0; i < last.out_h; ++i) {
      const std::size_t r0 = bin_begin(i, mid.out_h, last.out_h), r1 = bin_end(i, mid.out_h, last.out_h);
      for (std::size_t j = 0; j < last.out_w; ++j) {
        const std::size_t c0 = bin_begin(j, mid.out_w, last.out_w), c1 = bin_end(j, mid.out_w, last.out_w);
        const double g = d_mid[(c * last.out_h + i) * last.out_w + j] / static_cast<double>((r1 - r0) * (c1 - c0));
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t q = c0; q < c1; ++q) {
            d_tap[(c * mid.out_h + r) * mid.out_w + q] += g;
          }
        }
      }
    }
  }

  std::vector<double> dy = std::move(d_high);
  for (std::size_t l = L.layers.size(); l-- > 0;) {
    const LayerShape& s = L.layers[l];
    if (l == L.mid_tap) {
      for (std::size_t i = 0; i < dy.size(); ++i) {
        dy[i] += d_tap[i];
      }
    }
    const auto& z = fc.preact[l];
    std::vector<double> dz(z.size(), 0.0);
    if (!s.pool) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        dz[i] = z[i] > 0.0 ? dy[i] : 0.0;
      }
    } else {
      const auto& am = fc.argmax[l];
      for (std::size_t o = 0; o < am.size(); ++o) {
        if (z[am[o]] > 0.0) {
          dz[am[o]] += dy[o];
        }
      }
    }
    std::vector<double> dx;
    if (l > 0) {
      dx.assign(s.in_c * s.in_h * s.in_w, 0.0);
    }
    conv_backward(s, fc.layer_input[l].data(), params.slot(s.weight).data(), dz.data(), gslot(s.weight).data(),
                  gslot(s.bias).data(), l > 0 ? dx.data() : nullptr);
    dy = std::move(dx);
  }
}

}  // namespace cvmcl::embed
