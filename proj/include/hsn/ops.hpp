#pragma once

// Differentiable primitives over Tensor. Shapes follow the row-major
// convention used throughout: a batch of vectors is a matrix with one vector
// per row.

#include "hsn/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hsn::ops {

// Elementwise arithmetic. Shapes must match exactly unless noted.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// Broadcasting: `row` is 1xC, `col` is Rx1, `s` is 1x1.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor add_col(const Tensor& a, const Tensor& col);
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor mul_scalar(const Tensor& a, const Tensor& s);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Rx1 vector of row sums.
Tensor row_sum(const Tensor& a);
/// 1xC vector of column means.
Tensor col_mean(const Tensor& a);

Tensor exp(const Tensor& a);
/// Natural log; entries <= 0 map to `floor` with zero gradient.
Tensor safe_log(const Tensor& a, double floor = -1e9);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

/// out[r] = a[idx[r]]; gradient scatters back.
Tensor gather_rows(const Tensor& a, std::span<const std::int64_t> idx);
/// Rx1 with out[r] = a(r, idx[r]).
Tensor pick(const Tensor& a, std::span<const std::int64_t> idx);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Stacks `times` copies of `a` vertically.
Tensor tile_rows(const Tensor& a, Eigen::Index times);

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);

/// Forward value max(x, threshold); gradient passes only when x > threshold.
Tensor floor_threshold(const Tensor& x, double threshold);

/// Multi-head scaled dot-product attention over a batch of `batch` sequences.
/// q: (batch*tq) x D, k/v: (batch*tk) x D. Optional prefix keys/values of
/// shape (batch*lp) x D are prepended to every sequence's keys and values and
/// are visible from all query positions. When `causal` is set (requires
/// tq == tk) query t only sees key positions <= t of the non-prefix part.
struct AttentionShape {
  Eigen::Index batch = 1;
  Eigen::Index tq = 0;
  Eigen::Index tk = 0;
  Eigen::Index prefix = 0;
  Eigen::Index heads = 1;
  bool causal = false;
};
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionShape& shape,
                 const Tensor& prefix_k = Tensor(), const Tensor& prefix_v = Tensor());

/// Edge scorer on all ordered symbol pairs: out(i,j) = w2 . tanh(u_i + v_j + b1) + b2,
/// with u: KxH, v: KxH, b1: 1xH, w2: 1xH, b2: 1x1.
Tensor pairwise_mlp(const Tensor& u, const Tensor& v, const Tensor& b1, const Tensor& w2,
                    const Tensor& b2);

/// Mean over a batch of biased-walk transition matrices.
/// weights: BxK positive node weights (one row per walk), adj: KxK nonnegative.
/// Q^n(k,j) = w_n(k) adj(k,j) / sum_m w_n(m) adj(m,j); columns with zero mass
/// fall back to the uniform distribution over all K nodes.
Tensor batch_transition_mean(const Tensor& weights, const Tensor& adj);

/// One step of the marginal recursion for a batch of walks:
/// out(n,:) = Q^n z(n,:) with Q^n built from weights(n,:) and adj as above.
Tensor walk_step(const Tensor& z, const Tensor& weights, const Tensor& adj);

/// Sum over all entries of w * log(q / p); entries with w == 0 contribute 0.
/// Zero entries of q or p are floored at log = -1e9 (zero gradient there).
Tensor weighted_log_ratio(const Tensor& w, const Tensor& q, const Tensor& p);

/// Sum over entries where mask != 0 of KL[Bernoulli(sigmoid(logit)) || Bernoulli(p)].
Tensor bernoulli_kl_logits(const Tensor& logits, double p, const Matrix& mask);

}  // namespace hsn::ops
