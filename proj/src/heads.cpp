#include "pxl/heads.hpp"

#include "pxl/ops.hpp"

#include <cmath>
#include <memory>

namespace pxl {

i64 head_out_width(TaskKind kind, i64 classes) {
  switch (kind) {
    case TaskKind::segmentation: return classes;
    case TaskKind::normals: return 3;
    case TaskKind::edges: return 1;
  }
  throw ConfigError("unknown task kind");
}

void init_mlp(const MlpSpec& spec, i64 in_dim, ParamSet& params, Rng& rng, ScalarMode mode) {
  PXL_CHECK(spec.out_width >= 1, ConfigError, "head output width must be >= 1");
  PXL_CHECK(spec.dropout >= 0.0 && spec.dropout < 1.0, ConfigError,
            "head dropout must be in [0,1)");
  if (spec.feature_bn) {
    params.add("head.feat_bn.gamma", Tensor::full({in_dim}, 1.0, mode), true, false);
    params.add("head.feat_bn.beta", Tensor::zeros({in_dim}, mode), true, false);
    params.add("head.feat_bn.rmean", Tensor::zeros({in_dim}, mode), false, false);
    params.add("head.feat_bn.rvar", Tensor::full({in_dim}, 1.0, mode), false, false);
  }
  i64 cur = in_dim;
  const size_t n_layers = spec.hidden.size() + 1;
  for (size_t i = 0; i < n_layers; ++i) {
    const bool last = i + 1 == n_layers;
    const i64 next = last ? spec.out_width : spec.hidden[i];
    const double sigma = last ? spec.final_sigma : spec.init_sigma;
    params.add(cat("head.fc", i, ".w"), Tensor::gaussian({cur, next}, 0.0, sigma, rng, mode),
               true, true);
    params.add(cat("head.fc", i, ".b"), Tensor::zeros({next}, mode), true, false);
    cur = next;
  }
}

Var mlp_forward(Graph& g, const MlpSpec& spec, ParamSet& params, Var h, bool train,
                Rng& rng, ParamBinding* binding) {
  PXL_CHECK(h.shape().size() == 2, ShapeError, "mlp input must be [rows x D], got ",
            shape_str(h.shape()));
  auto bind = [&](const std::string& name) {
    const ParamEntry& e = params.entry(name);
    if (!e.trainable) return g.input(e.tensor.clone());
    Var v = g.param(params.at(name));
    if (binding) binding->bind(name, v);
    return v;
  };
  Var cur = h;
  if (spec.feature_bn) {
    Var gamma = bind("head.feat_bn.gamma");
    Var beta = bind("head.feat_bn.beta");
    cur = ops::batchnorm(cur, gamma, beta, params.at("head.feat_bn.rmean"),
                         params.at("head.feat_bn.rvar"), kBatchNormEps, kBatchNormMomentum,
                         train);
  }
  const size_t n_layers = spec.hidden.size() + 1;
  for (size_t i = 0; i < n_layers; ++i) {
    Var w = bind(cat("head.fc", i, ".w"));
    Var b = bind(cat("head.fc", i, ".b"));
    PXL_CHECK(cur.shape()[1] == w.shape()[0], ShapeError, "mlp width mismatch at layer ", i,
              ": rows are ", cur.shape()[1], ", weights want ", w.shape()[0]);
    cur = ops::add(ops::matmul(cur, w), b);
    if (i + 1 < n_layers) {
      cur = ops::relu(cur);
      cur = ops::dropout(cur, spec.dropout, train, rng);
    }
  }
  return cur;
}

namespace ops {

namespace {

template <class MakeBack>
Var record_with_self(Graph& g, Tensor out, const char* opname,
                     const std::vector<Var>& inputs, MakeBack make_back) {
  const int self = static_cast<int>(g.size());
  return g.record(std::move(out), opname, inputs, make_back(self));
}

}  // namespace

Var softmax_xent(Var logits, const std::vector<int>& labels, int ignore_label) {
  Graph& g = *logits.g;
  const Shape& ls = logits.shape();
  PXL_CHECK(ls.size() == 2, ShapeError, "softmax_xent expects [S x K] logits, got ",
            shape_str(ls));
  const i64 S = ls[0], K = ls[1];
  PXL_CHECK(static_cast<i64>(labels.size()) == S, ShapeError, "softmax_xent got ", labels.size(),
            " labels for ", S, " rows");
  i64 valid = 0;
  for (int y : labels) {
    if (y == ignore_label) continue;
    PXL_CHECK(y >= 0 && y < K, ContractError, "label ", y, " outside [0,", K, ")");
    ++valid;
  }
  PXL_CHECK(valid > 0, ContractError, "softmax_xent: all rows carry the ignore label");

  Tensor out({}, g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* z = logits.val().data<T>();
    T loss = 0;
    for (i64 r = 0; r < S; ++r) {
      if (labels[static_cast<size_t>(r)] == ignore_label) continue;
      const T* row = z + r * K;
      T mx = row[0];
      for (i64 k = 1; k < K; ++k) mx = std::max(mx, row[k]);
      T se = 0;
      for (i64 k = 0; k < K; ++k) se += std::exp(row[k] - mx);
      loss += (mx + std::log(se)) - row[labels[static_cast<size_t>(r)]];
    }
    out.data<T>()[0] = loss / static_cast<T>(valid);
  });

  const int lid = logits.id;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  const i64 nvalid = valid;
  return record_with_self(g, std::move(out), "softmax_xent", {logits}, [=](int self) {
    return [=](Graph& gg) {
      if (!gg.wants_grad(lid)) return;
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T go = gg.value(self).grad<T>()[0];
        const T* z = gg.value(lid).data<T>();
        T* gz = gg.grad_buf<T>(lid);
        const T scale = go / static_cast<T>(nvalid);
        for (i64 r = 0; r < S; ++r) {
          const int y = (*labels_copy)[static_cast<size_t>(r)];
          if (y == ignore_label) continue;
          const T* row = z + r * K;
          T mx = row[0];
          for (i64 k = 1; k < K; ++k) mx = std::max(mx, row[k]);
          T se = 0;
          for (i64 k = 0; k < K; ++k) se += std::exp(row[k] - mx);
          T* grow = gz + r * K;
          for (i64 k = 0; k < K; ++k) {
            const T p = std::exp(row[k] - mx) / se;
            grow[k] += scale * (p - (k == y ? T(1) : T(0)));
          }
        }
      });
    };
  });
}

Var euclidean_normal_loss(Var pred, const std::vector<std::array<double, 3>>& targets) {
  Graph& g = *pred.g;
  const Shape& ps = pred.shape();
  PXL_CHECK(ps.size() == 2 && ps[1] == 3, ShapeError,
            "euclidean_normal_loss expects [S x 3] predictions, got ", shape_str(ps));
  const i64 S = ps[0];
  PXL_CHECK(static_cast<i64>(targets.size()) == S, ShapeError, "got ", targets.size(),
            " targets for ", S, " rows");
  for (const auto& t : targets) {
    const double norm = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]);
    PXL_CHECK(std::fabs(norm - 1.0) <= 1e-4, ContractError,
              "normal target is not unit length (norm ", norm, ")");
  }

  auto tgt = std::make_shared<Tensor>(Shape{S, 3}, g.mode());
  for (i64 r = 0; r < S; ++r)
    for (i64 c = 0; c < 3; ++c) tgt->set(r * 3 + c, targets[static_cast<size_t>(r)][size_t(c)]);

  Tensor out({}, g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = pred.val().data<T>();
    const T* t = tgt->data<T>();
    T loss = 0;
    for (i64 i = 0; i < S * 3; ++i) {
      const T d = p[i] - t[i];
      loss += d * d;
    }
    out.data<T>()[0] = loss / static_cast<T>(S);
  });

  const int pid = pred.id;
  return record_with_self(g, std::move(out), "euclidean_normal_loss", {pred}, [=](int self) {
    return [=](Graph& gg) {
      if (!gg.wants_grad(pid)) return;
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T go = gg.value(self).grad<T>()[0];
        const T* p = gg.value(pid).data<T>();
        const T* t = tgt->data<T>();
        T* gp = gg.grad_buf<T>(pid);
        const T scale = T(2) * go / static_cast<T>(S);
        for (i64 i = 0; i < S * 3; ++i) gp[i] += scale * (p[i] - t[i]);
      });
    };
  });
}

Var balanced_bce(Var logits, const std::vector<int>& labels) {
  Graph& g = *logits.g;
  const Shape& ls = logits.shape();
  const bool flat = ls.size() == 1;
  PXL_CHECK(flat || (ls.size() == 2 && ls[1] == 1), ShapeError,
            "balanced_bce expects [S] or [S x 1] logits, got ", shape_str(ls));
  const i64 S = ls[0];
  PXL_CHECK(S >= 1, ContractError, "balanced_bce on an empty batch");
  PXL_CHECK(static_cast<i64>(labels.size()) == S, ShapeError, "got ", labels.size(),
            " labels for ", S, " rows");
  i64 pos = 0, neg = 0;
  for (int y : labels) {
    PXL_CHECK(y == 0 || y == 1, ContractError, "balanced_bce labels must be 0/1, got ", y);
    (y == 1 ? pos : neg)++;
  }

  const double wpos = 0.5 / static_cast<double>(std::max<i64>(pos, 1));
  const double wneg = 0.5 / static_cast<double>(std::max<i64>(neg, 1));

  Tensor out({}, g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* z = logits.val().data<T>();
    T loss_pos = 0, loss_neg = 0;
    for (i64 r = 0; r < S; ++r) {
      const int y = labels[static_cast<size_t>(r)];
      // stable: max(z,0) - z*y + log1p(exp(-|z|))
      const T l = std::max(z[r], T(0)) - z[r] * static_cast<T>(y) +
                  std::log1p(std::exp(-std::fabs(z[r])));
      (y == 1 ? loss_pos : loss_neg) += l;
    }
    out.data<T>()[0] = static_cast<T>(wpos) * loss_pos + static_cast<T>(wneg) * loss_neg;
  });

  const int lid = logits.id;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return record_with_self(g, std::move(out), "balanced_bce", {logits}, [=](int self) {
    return [=](Graph& gg) {
      if (!gg.wants_grad(lid)) return;
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T go = gg.value(self).grad<T>()[0];
        const T* z = gg.value(lid).data<T>();
        T* gz = gg.grad_buf<T>(lid);
        for (i64 r = 0; r < S; ++r) {
          const int y = (*labels_copy)[static_cast<size_t>(r)];
          T sig;
          if (z[r] >= T(0)) {
            sig = T(1) / (T(1) + std::exp(-z[r]));
          } else {
            const T e = std::exp(z[r]);
            sig = e / (T(1) + e);
          }
          gz[r] += go * static_cast<T>(y == 1 ? wpos : wneg) * (sig - static_cast<T>(y));
        }
      });
    };
  });
}

}  // namespace ops

Var task_loss(Var logits, const PixelBatch& batch) {
  switch (batch.kind) {
    case TaskKind::segmentation:
      return ops::softmax_xent(logits, batch.class_targets, kIgnoreLabel);
    case TaskKind::normals:
      return ops::euclidean_normal_loss(logits, batch.vec_targets);
    case TaskKind::edges:
      return ops::balanced_bce(logits, batch.class_targets);
  }
  throw ConfigError("unknown task kind");
}

}  // namespace pxl
