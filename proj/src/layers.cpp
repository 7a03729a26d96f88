#include "pxl/layers.hpp"

#include <cmath>
#include <memory>

#include "pxl/kernels.hpp"
#include "pxl/ops.hpp"

namespace pxl {

namespace {

template <class T>
void im2col(const T* img, i64 C, i64 H, i64 W, i64 kh, i64 kw, i64 stride, i64 pad,
            i64 Ho, i64 Wo, T* col) {
  i64 row = 0;
  for (i64 c = 0; c < C; ++c) {
    for (i64 di = 0; di < kh; ++di) {
      for (i64 dj = 0; dj < kw; ++dj, ++row) {
        T* out = col + row * Ho * Wo;
        for (i64 oh = 0; oh < Ho; ++oh) {
          const i64 ih = oh * stride - pad + di;
          if (ih < 0 || ih >= H) {
            std::fill(out + oh * Wo, out + (oh + 1) * Wo, T(0));
            continue;
          }
          const T* src = img + (c * H + ih) * W;
          T* orow = out + oh * Wo;
          if (stride == 1) {
            // iw = ow - pad + dj is in bounds for ow in [lo, hi)
            const i64 lo = std::max<i64>(0, pad - dj);
            const i64 hi = std::min<i64>(Wo, W + pad - dj);
            std::fill(orow, orow + lo, T(0));
            std::copy(src + lo - pad + dj, src + hi - pad + dj, orow + lo);
            std::fill(orow + hi, orow + Wo, T(0));
          } else {
            for (i64 ow = 0; ow < Wo; ++ow) {
              const i64 iw = ow * stride - pad + dj;
              orow[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im_accum(const T* col, i64 C, i64 H, i64 W, i64 kh, i64 kw, i64 stride, i64 pad,
                  i64 Ho, i64 Wo, T* img) {
  i64 row = 0;
  for (i64 c = 0; c < C; ++c) {
    for (i64 di = 0; di < kh; ++di) {
      for (i64 dj = 0; dj < kw; ++dj, ++row) {
        const T* in = col + row * Ho * Wo;
        for (i64 oh = 0; oh < Ho; ++oh) {
          const i64 ih = oh * stride - pad + di;
          if (ih < 0 || ih >= H) continue;
          T* dst = img + (c * H + ih) * W;
          if (stride == 1) {
            const i64 lo = std::max<i64>(0, pad - dj);
            const i64 hi = std::min<i64>(Wo, W + pad - dj);
            if (hi > lo) kernels::axpy(T(1), in + oh * Wo + lo, dst + lo - pad + dj, hi - lo);
          } else {
            for (i64 ow = 0; ow < Wo; ++ow) {
              const i64 iw = ow * stride - pad + dj;
              if (iw >= 0 && iw < W) dst[iw] += in[oh * Wo + ow];
            }
          }
        }
      }
    }
  }
}

template <class MakeBack>
Var record_with_self(Graph& g, Tensor out, const char* opname,
                     const std::vector<Var>& inputs, MakeBack make_back) {
  const int self = static_cast<int>(g.size());
  return g.record(std::move(out), opname, inputs, make_back(self));
}

}  // namespace

namespace ops {

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  Graph& g = *x.g;
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  PXL_CHECK(xs.size() == 4 && ws.size() == 4 && b.shape().size() == 1, ShapeError,
            "conv2d expects x[B,C,H,W], w[oc,ic,kh,kw], b[oc]; got ", shape_str(xs), " ",
            shape_str(ws), " ", shape_str(b.shape()));
  const i64 B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const i64 OC = ws[0], IC = ws[1], KH = ws[2], KW = ws[3];
  PXL_CHECK(IC == C, ShapeError, "conv2d channel mismatch: input has ", C, ", kernel wants ", IC);
  PXL_CHECK(b.shape()[0] == OC, ShapeError, "conv2d bias extent ", b.shape()[0], " != ", OC);
  PXL_CHECK(KH % 2 == 1 && KW % 2 == 1, ShapeError, "conv2d kernels must be odd, got ", KH, "x", KW);
  PXL_CHECK(stride >= 1 && pad >= 0, ContractError, "conv2d stride/pad out of range");
  PXL_CHECK((H + 2 * pad - KH) % stride == 0 && (W + 2 * pad - KW) % stride == 0 &&
                H + 2 * pad >= KH && W + 2 * pad >= KW,
            ShapeError, "conv2d output extent not integral for ", H, "x", W, " k=", KH,
            " stride=", stride, " pad=", pad);
  const i64 Ho = (H + 2 * pad - KH) / stride + 1;
  const i64 Wo = (W + 2 * pad - KW) / stride + 1;
  const i64 K = C * KH * KW;   // col rows
  const i64 S = Ho * Wo;       // col cols

  Tensor out({B, OC, Ho, Wo}, g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> col(static_cast<size_t>(K * S));
    const T* xv = x.val().data<T>();
    const T* wv = w.val().data<T>();
    const T* bv = b.val().data<T>();
    T* ov = out.data<T>();
    for (i64 bi = 0; bi < B; ++bi) {
      im2col(xv + bi * C * H * W, C, H, W, KH, KW, stride, pad, Ho, Wo, col.data());
      T* obatch = ov + bi * OC * S;
      kernels::gemm_nn(wv, col.data(), obatch, OC, K, S, false);
      for (i64 oc = 0; oc < OC; ++oc) {
        const T bias = bv[oc];
        T* orow = obatch + oc * S;
        for (i64 s = 0; s < S; ++s) orow[s] += bias;
      }
    }
  });

  const int xid = x.id, wid = w.id, bid = b.id;
  const i64 st = stride, pd = pad;
  return record_with_self(g, std::move(out), "conv2d", {x, w, b}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = gg.value(self).grad<T>();
        const T* xv = gg.value(xid).data<T>();
        const T* wv = gg.value(wid).data<T>();
        std::vector<T> col(static_cast<size_t>(K * S));
        const bool want_x = gg.wants_grad(xid);
        const bool want_w = gg.wants_grad(wid);
        const bool want_b = gg.wants_grad(bid);
        T* gx = want_x ? gg.grad_buf<T>(xid) : nullptr;
        T* gw = want_w ? gg.grad_buf<T>(wid) : nullptr;
        T* gb = want_b ? gg.grad_buf<T>(bid) : nullptr;
        std::vector<T> gcol(want_x ? static_cast<size_t>(K * S) : 0);
        for (i64 bi = 0; bi < B; ++bi) {
          const T* gbatch = go + bi * OC * S;
          if (want_w || want_x)
            im2col(xv + bi * C * H * W, C, H, W, KH, KW, st, pd, Ho, Wo, col.data());
          if (want_w) kernels::gemm_nt(gbatch, col.data(), gw, OC, S, K, true);
          if (want_b)
            for (i64 oc = 0; oc < OC; ++oc) gb[oc] += kernels::sum(gbatch + oc * S, S);
          if (want_x) {
            kernels::gemm_tn(wv, gbatch, gcol.data(), K, OC, S, false);
            col2im_accum(gcol.data(), C, H, W, KH, KW, st, pd, Ho, Wo, gx + bi * C * H * W);
          }
        }
      });
    };
  });
}

Var maxpool2d(Var x, int k, int stride) {
  Graph& g = *x.g;
  const Shape& xs = x.shape();
  PXL_CHECK(xs.size() == 4, ShapeError, "maxpool2d expects [B,C,H,W], got ", shape_str(xs));
  PXL_CHECK(k >= 1 && stride >= 1, ContractError, "maxpool2d window/stride out of range");
  const i64 B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  PXL_CHECK((H - k) % stride == 0 && (W - k) % stride == 0 && H >= k && W >= k, ShapeError,
            "maxpool2d extent ", H, "x", W, " not divisible for k=", k, " stride=", stride);
  const i64 Ho = (H - k) / stride + 1;
  const i64 Wo = (W - k) / stride + 1;

  Tensor out({B, C, Ho, Wo}, g.mode());
  auto argmax = std::make_shared<std::vector<i64>>(static_cast<size_t>(B * C * Ho * Wo));
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = x.val().data<T>();
    T* ov = out.data<T>();
    i64 oi = 0;
    for (i64 bc = 0; bc < B * C; ++bc) {
      const T* plane = xv + bc * H * W;
      for (i64 oh = 0; oh < Ho; ++oh) {
        for (i64 ow = 0; ow < Wo; ++ow, ++oi) {
          i64 best = -1;
          T bestv = T(0);
          for (i64 di = 0; di < k; ++di) {
            const i64 ih = oh * stride + di;
            for (i64 dj = 0; dj < k; ++dj) {
              const i64 iw = ow * stride + dj;
              const i64 idx = ih * W + iw;
              if (best < 0 || plane[idx] > bestv) {
                best = idx;
                bestv = plane[idx];
              }
            }
          }
          ov[oi] = bestv;
          (*argmax)[static_cast<size_t>(oi)] = bc * H * W + best;
        }
      }
    }
  });

  const int xid = x.id;
  const i64 on = B * C * Ho * Wo;
  return record_with_self(g, std::move(out), "maxpool2d", {x}, [=](int self) {
    return [=](Graph& gg) {
      if (!gg.wants_grad(xid)) return;
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = gg.value(self).grad<T>();
        T* gx = gg.grad_buf<T>(xid);
        for (i64 i = 0; i < on; ++i) gx[(*argmax)[static_cast<size_t>(i)]] += go[i];
      });
    };
  });
}

Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
              double eps, double momentum, bool train) {
  Graph& g = *x.g;
  const Shape& xs = x.shape();
  PXL_CHECK(xs.size() == 2 || xs.size() == 4, ShapeError,
            "batchnorm expects [S,C] or [B,C,H,W], got ", shape_str(xs));
  const i64 C = xs[1];
  const i64 outer = xs[0];
  const i64 inner = xs.size() == 2 ? 1 : xs[2] * xs[3];
  const i64 P = outer * inner;
  PXL_CHECK(gamma.shape() == Shape{C} && beta.shape() == Shape{C}, ShapeError,
            "batchnorm gamma/beta must be [", C, "]");
  PXL_CHECK(running_mean.shape() == Shape{C} && running_var.shape() == Shape{C}, ShapeError,
            "batchnorm running stats must be [", C, "]");
  PXL_CHECK(!train || P >= 2, ContractError,
            "batchnorm train mode needs a population of at least 2 per channel, got ", P);
  PXL_CHECK(eps > 0 && momentum > 0 && momentum < 1, ContractError,
            "batchnorm eps/momentum out of range");

  Tensor out(xs, g.mode());
  auto xhat = std::make_shared<Tensor>(xs, g.mode());
  auto invstd = std::make_shared<Tensor>(Shape{C}, g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = x.val().data<T>();
    const T* gv = gamma.val().data<T>();
    const T* bv = beta.val().data<T>();
    T* ov = out.data<T>();
    T* xh = xhat->data<T>();
    T* is = invstd->data<T>();
    for (i64 c = 0; c < C; ++c) {
      T m, v;
      if (train) {
        T s = 0;
        for (i64 o = 0; o < outer; ++o) {
          const T* base = xv + (o * C + c) * inner;
          for (i64 i = 0; i < inner; ++i) s += base[i];
        }
        m = s / static_cast<T>(P);
        T sq = 0;
        for (i64 o = 0; o < outer; ++o) {
          const T* base = xv + (o * C + c) * inner;
          for (i64 i = 0; i < inner; ++i) {
            const T d = base[i] - m;
            sq += d * d;
          }
        }
        v = sq / static_cast<T>(P);  // biased
        running_mean.set(c, (1.0 - momentum) * running_mean.at(c) + momentum * double(m));
        running_var.set(c, (1.0 - momentum) * running_var.at(c) + momentum * double(v));
      } else {
        m = static_cast<T>(running_mean.at(c));
        v = static_cast<T>(running_var.at(c));
      }
      const T istd = T(1) / std::sqrt(v + static_cast<T>(eps));
      is[c] = istd;
      for (i64 o = 0; o < outer; ++o) {
        const T* base = xv + (o * C + c) * inner;
        T* xho = xh + (o * C + c) * inner;
        T* oo = ov + (o * C + c) * inner;
        for (i64 i = 0; i < inner; ++i) {
          const T h = (base[i] - m) * istd;
          xho[i] = h;
          oo[i] = gv[c] * h + bv[c];
        }
      }
    }
  });

  const int xid = x.id, gid = gamma.id, bid = beta.id;
  const char* name = train ? "batchnorm_train" : "batchnorm_eval";
  return record_with_self(g, std::move(out), name, {x, gamma, beta}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = gg.value(self).grad<T>();
        const T* xh = xhat->data<T>();
        const T* is = invstd->data<T>();
        const T* gv = gg.value(gid).data<T>();
        const bool want_x = gg.wants_grad(xid);
        const bool want_g = gg.wants_grad(gid);
        const bool want_b = gg.wants_grad(bid);
        T* gx = want_x ? gg.grad_buf<T>(xid) : nullptr;
        T* ggm = want_g ? gg.grad_buf<T>(gid) : nullptr;
        T* gbt = want_b ? gg.grad_buf<T>(bid) : nullptr;
        for (i64 c = 0; c < C; ++c) {
          T sgo = 0, sgx = 0;
          for (i64 o = 0; o < outer; ++o) {
            const T* gb = go + (o * C + c) * inner;
            const T* hb = xh + (o * C + c) * inner;
            for (i64 i = 0; i < inner; ++i) {
              sgo += gb[i];
              sgx += gb[i] * hb[i];
            }
          }
          if (want_g) ggm[c] += sgx;
          if (want_b) gbt[c] += sgo;
          if (!want_x) continue;
          const T a = gv[c] * is[c];
          if (train) {
            const T mgo = sgo / static_cast<T>(P);
            const T mgx = sgx / static_cast<T>(P);
            for (i64 o = 0; o < outer; ++o) {
              const T* gb = go + (o * C + c) * inner;
              const T* hb = xh + (o * C + c) * inner;
              T* xb = gx + (o * C + c) * inner;
              for (i64 i = 0; i < inner; ++i)
                xb[i] += a * (gb[i] - mgo - hb[i] * mgx);
            }
          } else {
            // fixed affine: mean/var do not depend on x
            for (i64 o = 0; o < outer; ++o) {
              const T* gb = go + (o * C + c) * inner;
              T* xb = gx + (o * C + c) * inner;
              for (i64 i = 0; i < inner; ++i) xb[i] += a * gb[i];
            }
          }
        }
      });
    };
  });
}

Var dropout(Var x, double rate, bool train, Rng& rng) {
  PXL_CHECK(rate >= 0.0 && rate < 1.0, ContractError, "dropout rate must be in [0,1), got ", rate);
  if (!train || rate == 0.0) return x;  // identity
  Graph& g = *x.g;
  const i64 n = x.val().numel();
  Tensor out(x.shape(), g.mode());
  auto mask = std::make_shared<Tensor>(x.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    const T* xv = x.val().data<T>();
    T* mv = mask->data<T>();
    T* ov = out.data<T>();
    for (i64 i = 0; i < n; ++i) {
      mv[i] = rng.uniform() >= rate ? keep : T(0);
      ov[i] = xv[i] * mv[i];
    }
  });
  const int xid = x.id;
  return record_with_self(g, std::move(out), "dropout", {x}, [=](int self) {
    return [=](Graph& gg) {
      if (!gg.wants_grad(xid)) return;
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = gg.value(self).grad<T>();
        const T* mv = mask->data<T>();
        T* gx = gg.grad_buf<T>(xid);
        for (i64 i = 0; i < n; ++i) gx[i] += go[i] * mv[i];
      });
    };
  });
}

}  // namespace ops

std::vector<LayerMeta> backbone_all_layers(const BackboneSpec& spec) {
  std::vector<LayerMeta> out;
  i64 stride = 1;
  for (size_t s = 0; s < spec.stages.size(); ++s) {
    for (int c = 0; c < spec.stages[s].num_convs; ++c)
      out.push_back({cat("conv", s + 1, "_", c + 1), spec.stages[s].channels, stride});
    if (s + 1 < spec.stages.size()) stride *= 2;
  }
  out.push_back({"head", spec.head_channels, stride});
  return out;
}

std::vector<LayerMeta> backbone_tap_metas(const BackboneSpec& spec) {
  const auto all = backbone_all_layers(spec);
  std::vector<LayerMeta> out;
  for (const std::string& tap : spec.taps) {
    bool found = false;
    for (const auto& m : all) {
      if (m.name == tap) {
        out.push_back(m);
        found = true;
        break;
      }
    }
    PXL_CHECK(found, ConfigError, "tap layer '", tap, "' does not exist in the backbone");
  }
  PXL_CHECK(!out.empty(), ConfigError, "backbone needs at least one tap layer");
  return out;
}

i64 hypercolumn_dim(const BackboneSpec& spec) {
  i64 d = 0;
  for (const auto& m : backbone_tap_metas(spec)) d += m.channels;
  return d;
}

i64 backbone_max_stride(const BackboneSpec& spec) {
  i64 s = 1;
  for (size_t i = 0; i + 1 < spec.stages.size(); ++i) s *= 2;
  return s;
}

namespace {

void init_conv_layer(ParamSet& ps, const std::string& prefix, i64 oc, i64 ic, i64 kh, i64 kw,
                     bool bn, double sigma, Rng& rng, ScalarMode mode) {
  ps.add(prefix + ".w", Tensor::gaussian({oc, ic, kh, kw}, 0.0, sigma, rng, mode), true, true);
  // the batch-norm mean subtraction cancels a conv bias exactly, so under
  // bn the bias stays a frozen zero
  ps.add(prefix + ".b", Tensor::zeros({oc}, mode), /*trainable=*/!bn, false);
  if (bn) {
    ps.add(prefix + ".bn.gamma", Tensor::full({oc}, 1.0, mode), true, false);
    ps.add(prefix + ".bn.beta", Tensor::zeros({oc}, mode), true, false);
    ps.add(prefix + ".bn.rmean", Tensor::zeros({oc}, mode), false, false);
    ps.add(prefix + ".bn.rvar", Tensor::full({oc}, 1.0, mode), false, false);
  }
}

}  // namespace

void init_backbone(const BackboneSpec& spec, ParamSet& params, Rng& rng, ScalarMode mode) {
  PXL_CHECK(!spec.stages.empty(), ConfigError, "backbone needs at least one stage");
  PXL_CHECK(spec.init_sigma >= 0, ConfigError, "backbone init sigma must be >= 0");
  i64 in_ch = spec.in_channels;
  for (size_t s = 0; s < spec.stages.size(); ++s) {
    for (int c = 0; c < spec.stages[s].num_convs; ++c) {
      init_conv_layer(params, cat("backbone.conv", s + 1, "_", c + 1), spec.stages[s].channels,
                      in_ch, 3, 3, spec.batchnorm, spec.init_sigma, rng, mode);
      in_ch = spec.stages[s].channels;
    }
  }
  init_conv_layer(params, "backbone.head", spec.head_channels, in_ch, 1, 1, spec.batchnorm,
                  spec.init_sigma, rng, mode);
}

FeatureMapSet backbone_forward(Graph& g, const BackboneSpec& spec, ParamSet& params,
                               Var input, bool train, ParamBinding* binding) {
  const Shape& xs = input.shape();
  PXL_CHECK(xs.size() == 4, ShapeError, "backbone input must be [B,C,H,W], got ", shape_str(xs));
  PXL_CHECK(xs[1] == spec.in_channels, ShapeError, "backbone expects ", spec.in_channels,
            " input channels, got ", xs[1]);
  const i64 max_stride = backbone_max_stride(spec);
  PXL_CHECK(xs[2] % max_stride == 0 && xs[3] % max_stride == 0, ShapeError,
            "backbone input ", xs[2], "x", xs[3], " must be divisible by the pool stack (",
            max_stride, ")");

  // frozen entries enter the graph as plain inputs: no gradient, no update
  auto bind = [&](const std::string& name) {
    const ParamEntry& e = params.entry(name);
    if (!e.trainable) return g.input(e.tensor.clone());
    Var v = g.param(params.at(name));
    if (binding) binding->bind(name, v);
    return v;
  };

  auto conv_block = [&](Var in, const std::string& prefix, int kernel) {
    Var w = bind(prefix + ".w");
    Var b = bind(prefix + ".b");
    Var y = ops::conv2d(in, w, b, 1, kernel == 3 ? 1 : 0);
    if (spec.batchnorm) {
      Var gamma = bind(prefix + ".bn.gamma");
      Var beta = bind(prefix + ".bn.beta");
      y = ops::batchnorm(y, gamma, beta, params.at(prefix + ".bn.rmean"),
                         params.at(prefix + ".bn.rvar"), kBatchNormEps, kBatchNormMomentum,
                         train);
    }
    return ops::relu(y);
  };

  std::vector<std::pair<std::string, Var>> produced;
  Var cur = input;
  for (size_t s = 0; s < spec.stages.size(); ++s) {
    for (int c = 0; c < spec.stages[s].num_convs; ++c) {
      const std::string name = cat("conv", s + 1, "_", c + 1);
      cur = conv_block(cur, "backbone." + name, 3);
      produced.emplace_back(name, cur);
    }
    if (s + 1 < spec.stages.size()) cur = ops::maxpool2d(cur, 2, 2);
  }
  cur = conv_block(cur, "backbone.head", 1);
  produced.emplace_back("head", cur);

  FeatureMapSet out;
  out.metas = backbone_tap_metas(spec);
  for (const auto& meta : out.metas) {
    for (const auto& [name, var] : produced) {
      if (name == meta.name) {
        out.taps.push_back(var);
        break;
      }
    }
  }
  PXL_CHECK(out.taps.size() == out.metas.size(), ConfigError, "tap resolution failed");
  return out;
}

}  // namespace pxl
