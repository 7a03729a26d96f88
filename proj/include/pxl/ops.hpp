#pragma once

#include <vector>

#include "pxl/graph.hpp"

namespace pxl::ops {

// a [m x k] * b [k x n] -> [m x n]
Var matmul(Var a, Var b);

// Binary elementwise ops need identical shapes; add also accepts a 1-d b
// broadcast over the trailing axis (bias rows).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double alpha);

Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);

enum class Reduce { sum, mean, max };

// Reduce over the given axes (empty = all axes). Reduced axes are dropped
// from the shape; a full reduction yields a scalar. Max routes its gradient
// to the first-encountered argmax (lowest flat index on ties).
Var reduce(Var a, Reduce op, const std::vector<int>& axes = {});
Var sum(Var a);
Var mean(Var a);

// Row gather from a [S x D] matrix; backward scatters additively.
Var row_select(Var a, const std::vector<i64>& rows);

// Vertical concatenation of [S_i x D] matrices with a split backward.
Var concat_rows(const std::vector<Var>& parts);

}  // namespace pxl::ops
