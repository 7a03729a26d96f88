#include "pxl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "pxl/kernels.hpp"

namespace pxl::ops {

namespace {

void require_same_graph(Var a, Var b, const char* op) {
  PXL_CHECK(a.g == b.g, ContractError, "op '", op, "' mixes graphs");
}

// A backward closure usually needs its own node id for the upstream gradient,
// which record() only assigns on insertion. make_back(self) builds the
// closure with the final id baked in.
template <class MakeBack>
Var record_with_self(Graph& g, Tensor out, const char* opname,
                     const std::vector<Var>& inputs, MakeBack make_back) {
  const int self = static_cast<int>(g.size());
  return g.record(std::move(out), opname, inputs, make_back(self));
}

template <class T>
const T* out_grad(Graph& g, int self) {
  return g.value(self).grad<T>();
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  PXL_CHECK(sa.size() == 2 && sb.size() == 2, ShapeError, "matmul needs 2-d operands, got ",
            shape_str(sa), " and ", shape_str(sb));
  PXL_CHECK(sa[1] == sb[0], ShapeError, "matmul inner extents differ: ", shape_str(sa), " vs ",
            shape_str(sb));
  const i64 m = sa[0], k = sa[1], n = sb[1];
  Graph& g = *a.g;
  Tensor out({m, n}, g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    kernels::gemm_nn(a.val().data<T>(), b.val().data<T>(), out.data<T>(), m, k, n, false);
  });
  const int aid = a.id, bid = b.id;
  return record_with_self(g, std::move(out), "matmul", {a, b}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = out_grad<T>(gg, self);
        if (gg.wants_grad(aid))
          kernels::gemm_nt(go, gg.value(bid).data<T>(), gg.grad_buf<T>(aid), m, n, k, true);
        if (gg.wants_grad(bid))
          kernels::gemm_tn(gg.value(aid).data<T>(), go, gg.grad_buf<T>(bid), k, m, n, true);
      });
    };
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b, "add");
  Graph& g = *a.g;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool bias_row = sb.size() == 1 && !sa.empty() && sa.back() == sb[0] && sa != sb;
  PXL_CHECK(sa == sb || bias_row, ShapeError, "add shapes ", shape_str(sa), " vs ", shape_str(sb),
            " (need identical, or 1-d b matching the trailing axis)");
  Tensor out(sa, g.mode());
  const int aid = a.id, bid = b.id;
  const i64 n = a.val().numel();
  if (!bias_row) {
    dispatch_mode(g.mode(), [&](auto tag) {
      using T = decltype(tag);
      kernels::vadd(a.val().data<T>(), b.val().data<T>(), out.data<T>(), n);
    });
    return record_with_self(g, std::move(out), "add", {a, b}, [=](int self) {
      return [=](Graph& gg) {
        dispatch_mode(gg.mode(), [&](auto tag) {
          using T = decltype(tag);
          const T* go = out_grad<T>(gg, self);
          if (gg.wants_grad(aid)) kernels::axpy(T(1), go, gg.grad_buf<T>(aid), n);
          if (gg.wants_grad(bid)) kernels::axpy(T(1), go, gg.grad_buf<T>(bid), n);
        });
      };
    });
  }
  const i64 cols = sb[0];
  const i64 rows = n / cols;
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* av = a.val().data<T>();
    const T* bv = b.val().data<T>();
    T* ov = out.data<T>();
    for (i64 r = 0; r < rows; ++r) kernels::vadd(av + r * cols, bv, ov + r * cols, cols);
  });
  return record_with_self(g, std::move(out), "add_rowbias", {a, b}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = out_grad<T>(gg, self);
        if (gg.wants_grad(aid)) kernels::axpy(T(1), go, gg.grad_buf<T>(aid), n);
        if (gg.wants_grad(bid)) kernels::colwise_sum(go, gg.grad_buf<T>(bid), rows, cols, true);
      });
    };
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b, "sub");
  Graph& g = *a.g;
  PXL_CHECK(a.shape() == b.shape(), ShapeError, "sub shapes differ: ", shape_str(a.shape()),
            " vs ", shape_str(b.shape()));
  const i64 n = a.val().numel();
  Tensor out(a.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    kernels::vsub(a.val().data<T>(), b.val().data<T>(), out.data<T>(), n);
  });
  const int aid = a.id, bid = b.id;
  return record_with_self(g, std::move(out), "sub", {a, b}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = out_grad<T>(gg, self);
        if (gg.wants_grad(aid)) kernels::axpy(T(1), go, gg.grad_buf<T>(aid), n);
        if (gg.wants_grad(bid)) kernels::axpy(T(-1), go, gg.grad_buf<T>(bid), n);
      });
    };
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b, "mul");
  Graph& g = *a.g;
  PXL_CHECK(a.shape() == b.shape(), ShapeError, "mul shapes differ: ", shape_str(a.shape()),
            " vs ", shape_str(b.shape()));
  const i64 n = a.val().numel();
  Tensor out(a.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    kernels::vmul(a.val().data<T>(), b.val().data<T>(), out.data<T>(), n);
  });
  const int aid = a.id, bid = b.id;
  return record_with_self(g, std::move(out), "mul", {a, b}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = out_grad<T>(gg, self);
        if (gg.wants_grad(aid)) {
          T* ga = gg.grad_buf<T>(aid);
          const T* bv = gg.value(bid).data<T>();
          for (i64 i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
        }
        if (gg.wants_grad(bid)) {
          T* gb = gg.grad_buf<T>(bid);
          const T* av = gg.value(aid).data<T>();
          for (i64 i = 0; i < n; ++i) gb[i] += go[i] * av[i];
        }
      });
    };
  });
}

Var scale(Var a, double alpha) {
  Graph& g = *a.g;
  const i64 n = a.val().numel();
  Tensor out(a.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    kernels::scale(static_cast<T>(alpha), a.val().data<T>(), out.data<T>(), n);
  });
  const int aid = a.id;
  return record_with_self(g, std::move(out), "scale", {a}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        if (gg.wants_grad(aid))
          kernels::axpy(static_cast<T>(alpha), out_grad<T>(gg, self), gg.grad_buf<T>(aid), n);
      });
    };
  });
}

Var relu(Var a) {
  Graph& g = *a.g;
  const i64 n = a.val().numel();
  Tensor out(a.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    kernels::relu(a.val().data<T>(), out.data<T>(), n);
  });
  const int aid = a.id;
  return record_with_self(g, std::move(out), "relu", {a}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        if (gg.wants_grad(aid))
          kernels::relu_backward(gg.value(aid).data<T>(), out_grad<T>(gg, self),
                                 gg.grad_buf<T>(aid), n);
      });
    };
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.g;
  const i64 n = a.val().numel();
  Tensor out(a.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.val().data<T>();
    T* y = out.data<T>();
    for (i64 i = 0; i < n; ++i) {
      if (x[i] >= T(0)) {
        y[i] = T(1) / (T(1) + std::exp(-x[i]));
      } else {
        const T e = std::exp(x[i]);
        y[i] = e / (T(1) + e);
      }
    }
  });
  const int aid = a.id;
  return record_with_self(g, std::move(out), "sigmoid", {a}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        if (!gg.wants_grad(aid)) return;
        const T* y = gg.value(self).data<T>();
        const T* go = out_grad<T>(gg, self);
        T* ga = gg.grad_buf<T>(aid);
        for (i64 i = 0; i < n; ++i) ga[i] += go[i] * y[i] * (T(1) - y[i]);
      });
    };
  });
}

Var exp(Var a) {
  Graph& g = *a.g;
  const i64 n = a.val().numel();
  Tensor out(a.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.val().data<T>();
    T* y = out.data<T>();
    for (i64 i = 0; i < n; ++i) y[i] = std::exp(x[i]);
  });
  const int aid = a.id;
  return record_with_self(g, std::move(out), "exp", {a}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        if (!gg.wants_grad(aid)) return;
        const T* y = gg.value(self).data<T>();
        const T* go = out_grad<T>(gg, self);
        T* ga = gg.grad_buf<T>(aid);
        for (i64 i = 0; i < n; ++i) ga[i] += go[i] * y[i];
      });
    };
  });
}

Var log(Var a) {
  Graph& g = *a.g;
  const i64 n = a.val().numel();
  if (g.strict()) {
    for (i64 i = 0; i < n; ++i)
      PXL_CHECK(a.val().at(i) > 0.0, DomainError, "log of non-positive value ", a.val().at(i),
                " at flat index ", i);
  }
  Tensor out(a.shape(), g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.val().data<T>();
    T* y = out.data<T>();
    for (i64 i = 0; i < n; ++i) y[i] = std::log(x[i]);
  });
  const int aid = a.id;
  return record_with_self(g, std::move(out), "log", {a}, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        if (!gg.wants_grad(aid)) return;
        const T* x = gg.value(aid).data<T>();
        const T* go = out_grad<T>(gg, self);
        T* ga = gg.grad_buf<T>(aid);
        for (i64 i = 0; i < n; ++i) ga[i] += go[i] / x[i];
      });
    };
  });
}

namespace {

struct ReducePlan {
  Shape out_shape;
  std::vector<i64> out_index;  // flat input index -> flat output index
  i64 count = 1;               // elements folded into each output cell
};

ReducePlan plan_reduce(const Shape& in, const std::vector<int>& axes) {
  const int nd = static_cast<int>(in.size());
  std::vector<bool> reduced(static_cast<size_t>(nd), false);
  if (axes.empty()) {
    reduced.assign(static_cast<size_t>(nd), true);
  } else {
    for (int ax : axes) {
      PXL_CHECK(ax >= 0 && ax < nd, ShapeError, "reduce axis ", ax, " out of range for ",
                shape_str(in));
      reduced[static_cast<size_t>(ax)] = true;
    }
  }
  ReducePlan plan;
  for (int d = 0; d < nd; ++d) {
    if (reduced[static_cast<size_t>(d)])
      plan.count *= in[static_cast<size_t>(d)];
    else
      plan.out_shape.push_back(in[static_cast<size_t>(d)]);
  }
  PXL_CHECK(plan.count >= 1, DomainError, "empty reduction extent");
  // Row-major strides of input and of the kept dims in output.
  std::vector<i64> in_stride(static_cast<size_t>(nd), 1);
  for (int d = nd - 2; d >= 0; --d)
    in_stride[static_cast<size_t>(d)] =
        in_stride[static_cast<size_t>(d + 1)] * in[static_cast<size_t>(d + 1)];
  std::vector<i64> out_stride(static_cast<size_t>(nd), 0);
  i64 acc = 1;
  for (int d = nd - 1; d >= 0; --d) {
    if (!reduced[static_cast<size_t>(d)]) {
      out_stride[static_cast<size_t>(d)] = acc;
      acc *= in[static_cast<size_t>(d)];
    }
  }
  const i64 total = numel(in);
  plan.out_index.resize(static_cast<size_t>(total));
  for (i64 i = 0; i < total; ++i) {
    i64 rem = i, oi = 0;
    for (int d = 0; d < nd; ++d) {
      const i64 c = rem / in_stride[static_cast<size_t>(d)];
      rem %= in_stride[static_cast<size_t>(d)];
      oi += c * out_stride[static_cast<size_t>(d)];
    }
    plan.out_index[static_cast<size_t>(i)] = oi;
  }
  return plan;
}

}  // namespace

Var reduce(Var a, Reduce op, const std::vector<int>& axes) {
  Graph& g = *a.g;
  ReducePlan plan = plan_reduce(a.shape(), axes);
  const i64 in_n = a.val().numel();
  const i64 out_n = numel(plan.out_shape);
  Tensor out(plan.out_shape, g.mode());
  auto argmax = std::make_shared<std::vector<i64>>();
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.val().data<T>();
    T* y = out.data<T>();
    if (op == Reduce::max) {
      argmax->assign(static_cast<size_t>(out_n), -1);
      std::fill(y, y + out_n, -std::numeric_limits<T>::infinity());
      for (i64 i = 0; i < in_n; ++i) {
        const i64 oi = plan.out_index[static_cast<size_t>(i)];
        if ((*argmax)[static_cast<size_t>(oi)] < 0 || x[i] > y[oi]) {
          y[oi] = x[i];
          (*argmax)[static_cast<size_t>(oi)] = i;
        }
      }
    } else {
      for (i64 i = 0; i < in_n; ++i) y[plan.out_index[static_cast<size_t>(i)]] += x[i];
      if (op == Reduce::mean) {
        const T inv = T(1) / static_cast<T>(plan.count);
        for (i64 j = 0; j < out_n; ++j) y[j] *= inv;
      }
    }
  });
  const int aid = a.id;
  const char* name = op == Reduce::sum ? "sum" : op == Reduce::mean ? "mean" : "max";
  auto out_index = std::make_shared<std::vector<i64>>(std::move(plan.out_index));
  const i64 count = plan.count;
  return record_with_self(g, std::move(out), name, {a}, [=](int self) {
    return [=](Graph& gg) {
      if (!gg.wants_grad(aid)) return;
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = out_grad<T>(gg, self);
        T* ga = gg.grad_buf<T>(aid);
        if (op == Reduce::max) {
          const i64 on = gg.value(self).numel();
          for (i64 j = 0; j < on; ++j) ga[(*argmax)[static_cast<size_t>(j)]] += go[j];
        } else if (op == Reduce::sum) {
          for (i64 i = 0; i < in_n; ++i) ga[i] += go[(*out_index)[static_cast<size_t>(i)]];
        } else {
          const T inv = T(1) / static_cast<T>(count);
          for (i64 i = 0; i < in_n; ++i)
            ga[i] += go[(*out_index)[static_cast<size_t>(i)]] * inv;
        }
      });
    };
  });
}

Var sum(Var a) { return reduce(a, Reduce::sum, {}); }
Var mean(Var a) { return reduce(a, Reduce::mean, {}); }

Var row_select(Var a, const std::vector<i64>& rows) {
  Graph& g = *a.g;
  PXL_CHECK(a.shape().size() == 2, ShapeError, "row_select expects [S x D], got ",
            shape_str(a.shape()));
  const i64 S = a.shape()[0], D = a.shape()[1];
  for (i64 r : rows)
    PXL_CHECK(r >= 0 && r < S, ContractError, "row ", r, " outside [0,", S, ")");
  const i64 n = static_cast<i64>(rows.size());
  Tensor out({n, D}, g.mode());
  auto rows_copy = std::make_shared<std::vector<i64>>(rows);
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    const T* av = a.val().data<T>();
    T* ov = out.data<T>();
    for (i64 i = 0; i < n; ++i)
      std::copy(av + (*rows_copy)[size_t(i)] * D, av + ((*rows_copy)[size_t(i)] + 1) * D,
                ov + i * D);
  });
  const int aid = a.id;
  return record_with_self(g, std::move(out), "row_select", {a}, [=](int self) {
    return [=](Graph& gg) {
      if (!gg.wants_grad(aid)) return;
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = out_grad<T>(gg, self);
        T* ga = gg.grad_buf<T>(aid);
        for (i64 i = 0; i < n; ++i)
          kernels::axpy(T(1), go + i * D, ga + (*rows_copy)[size_t(i)] * D, D);
      });
    };
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  PXL_CHECK(!parts.empty(), ContractError, "concat_rows needs at least one part");
  Graph& g = *parts[0].g;
  const i64 D = parts[0].shape()[1];
  i64 total = 0;
  for (const Var& p : parts) {
    PXL_CHECK(p.shape().size() == 2 && p.shape()[1] == D, ShapeError,
              "concat_rows parts must share the column extent");
    total += p.shape()[0];
  }
  Tensor out({total, D}, g.mode());
  std::vector<i64> offsets;
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    T* ov = out.data<T>();
    i64 off = 0;
    for (const Var& p : parts) {
      offsets.push_back(off);
      const i64 cnt = p.shape()[0] * D;
      std::copy(p.val().data<T>(), p.val().data<T>() + cnt, ov + off);
      off += cnt;
    }
  });
  std::vector<int> ids;
  std::vector<i64> sizes;
  for (const Var& p : parts) {
    ids.push_back(p.id);
    sizes.push_back(p.shape()[0] * D);
  }
  auto off_copy = std::make_shared<std::vector<i64>>(offsets);
  auto sz_copy = std::make_shared<std::vector<i64>>(sizes);
  auto id_copy = std::make_shared<std::vector<int>>(ids);
  return record_with_self(g, std::move(out), "concat_rows", parts, [=](int self) {
    return [=](Graph& gg) {
      dispatch_mode(gg.mode(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = out_grad<T>(gg, self);
        for (size_t i = 0; i < id_copy->size(); ++i) {
          if (!gg.wants_grad((*id_copy)[i])) continue;
          kernels::axpy(T(1), go + (*off_copy)[i], gg.grad_buf<T>((*id_copy)[i]),
                        (*sz_copy)[i]);
        }
      });
    };
  });
}

}  // namespace pxl::ops
