// Copyright 2026 The handloop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hpe/ops.hpp"

// Route large matrix products through the system BLAS; noticeably faster
// than Eigen's built-in kernels on this target.
#define EIGEN_USE_BLAS
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

namespace hpe {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Reductions must stay single-threaded: results have to be reproducible and
// the throughput target is defined for one core.
extern "C" void openblas_set_num_threads(int);
struct BlasThreadPin {
  BlasThreadPin() { openblas_set_num_threads(1); }
} const blas_thread_pin;

#ifndef NDEBUG
void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("non-finite value in output of ") +
                               op);
}
#define HPE_CHECK_FINITE(t, op) check_finite(t, op)
#else
#define HPE_CHECK_FINITE(t, op) ((void)0)
#endif

bool any_grad(std::initializer_list<const TensorPtr*> ts) {
  for (auto* t : ts)
    if ((*t)->requires_grad) return true;
  return false;
}

void require_rank3(const TensorPtr& t, const char* what) {
  if (t->shape.size() != 3)
    throw ShapeError(std::string(what) + " must be rank 3, got shape " +
                     shape_str(t->shape));
}

// im2col for a valid/zero-padded convolution: one row per output pixel, one
// column per (channel, ky, kx) tap.
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int ho,
            int wo, MatrixXd& pat) {
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  pat.resize(static_cast<long>(ho) * wo, static_cast<long>(C) * kh * kw);
  for (int c = 0; c < C; ++c) {
    const double* xc = x.data.data() + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const long q = (static_cast<long>(c) * kh + ky) * kw + kx;
        double* col = pat.col(q).data();  // column-major: rows contiguous
        long r = 0;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            std::fill(col + r, col + r + wo, 0.0);
            r += wo;
            continue;
          }
          const double* row = xc + static_cast<size_t>(iy) * W;
          if (stride == 1) {
            // ix = ox + kx - pad; contiguous copy of the in-range span.
            const int lo = std::max(0, pad - kx);
            const int hi = std::min(wo, W + pad - kx);  // exclusive
            std::fill(col + r, col + r + lo, 0.0);
            if (hi > lo)
              std::copy(row + lo + kx - pad, row + hi + kx - pad,
                        col + r + lo);
            std::fill(col + r + std::max(lo, hi), col + r + wo, 0.0);
            r += wo;
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride + kx - pad;
              col[r++] = (ix < 0 || ix >= W) ? 0.0 : row[ix];
            }
          }
        }
      }
    }
  }
}

// Scatter-add of the im2col gradient back onto the input.
void col2im(const MatrixXd& dpat, int kh, int kw, int stride, int pad, int ho,
            int wo, Tensor& dx_holder, std::vector<double>& dx) {
  const int C = dx_holder.shape[0], H = dx_holder.shape[1],
            W = dx_holder.shape[2];
  for (int c = 0; c < C; ++c) {
    double* xc = dx.data() + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const long q = (static_cast<long>(c) * kh + ky) * kw + kx;
        long r = 0;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            r += wo;
            continue;
          }
          double* row = xc + static_cast<size_t>(iy) * W;
          for (int ox = 0; ox < wo; ++ox, ++r) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) row[ix] += dpat(r, q);
          }
        }
      }
    }
  }
}

MatrixXd filters_as_matrix(const Tensor& w) {
  const int K = w.shape[0];
  const long taps = w.numel() / K;
  MatrixXd wm(taps, K);
  for (int k = 0; k < K; ++k)
    for (long q = 0; q < taps; ++q) wm(q, k) = w.data[k * taps + q];
  return wm;
}

}  // namespace

TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& filters,
                 const TensorPtr& bias, int stride, int pad) {
  require_rank3(input, "conv2d input");
  if (filters->shape.size() != 4)
    throw ShapeError("conv2d filters must be rank 4, got shape " +
                     shape_str(filters->shape));
  if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  const int K = filters->shape[0], FC = filters->shape[1],
            kh = filters->shape[2], kw = filters->shape[3];
  if (FC != C)
    throw ShapeError("conv2d channel mismatch: input has " +
                     std::to_string(C) + " channels, filters expect " +
                     std::to_string(FC));
  if (bias->numel() != K)
    throw ShapeError("conv2d bias length " + std::to_string(bias->numel()) +
                     " != filter count " + std::to_string(K));
  if (kh > H + 2 * pad || kw > W + 2 * pad)
    throw ShapeError("conv2d filter " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " larger than padded input " +
                     shape_str(input->shape));
  const int ho = (H + 2 * pad - kh) / stride + 1;
  const int wo = (W + 2 * pad - kw) / stride + 1;

  // Single-filter stride-1 convolutions (the synthesizer's combining layer)
  // skip the patch matrix entirely: tap-wise fused multiply-adds over
  // contiguous row spans are much cheaper when K == 1.
  if (K == 1 && stride == 1) {
    TensorPtr out = Tensor::make({1, ho, wo});
    double* o = out->data.data();
    std::fill(o, o + static_cast<size_t>(ho) * wo, bias->data[0]);
    // Zero-padded input copy removes all edge branches; the inner loop is a
    // plain kw-tap stencil the compiler vectorizes.
    const int HP = H + 2 * pad, WP = W + 2 * pad;
    static thread_local std::vector<double> padded;
    padded.assign(static_cast<size_t>(C) * HP * WP, 0.0);
    for (int c = 0; c < C; ++c)
      for (int iy = 0; iy < H; ++iy)
        std::copy(input->data.data() + (static_cast<size_t>(c) * H + iy) * W,
                  input->data.data() + (static_cast<size_t>(c) * H + iy) * W + W,
                  padded.data() + (static_cast<size_t>(c) * HP + iy + pad) * WP +
                      pad);
    for (int oy = 0; oy < ho; ++oy) {
      double* __restrict__ orow = o + static_cast<size_t>(oy) * wo;
      for (int c = 0; c < C; ++c) {
        const double* wc =
            filters->data.data() + static_cast<size_t>(c) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const double* __restrict__ xrow =
              padded.data() + (static_cast<size_t>(c) * HP + oy + ky) * WP;
          if (kw == 5) {
            const double w0 = wc[ky * 5], w1 = wc[ky * 5 + 1],
                         w2 = wc[ky * 5 + 2], w3 = wc[ky * 5 + 3],
                         w4 = wc[ky * 5 + 4];
            for (int ox = 0; ox < wo; ++ox)
              orow[ox] += w0 * xrow[ox] + w1 * xrow[ox + 1] +
                          w2 * xrow[ox + 2] + w3 * xrow[ox + 3] +
                          w4 * xrow[ox + 4];
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              double acc = 0.0;
              for (int kx = 0; kx < kw; ++kx)
                acc += wc[ky * kw + kx] * xrow[ox + kx];
              orow[ox] += acc;
            }
          }
        }
      }
    }
    HPE_CHECK_FINITE(*out, "conv2d");
    if (tape.grad_enabled() && any_grad({&input, &filters, &bias})) {
      out->requires_grad = true;
      TensorPtr x = input, w = filters, b = bias;
      tape.record(
          [x, w, b, out, pad, ho, wo, kh, kw, C, H, W]() {
            const double* g = out->grad.data();
            if (b->requires_grad) {
              b->ensure_grad();
              double acc = 0.0;
              for (long r = 0; r < static_cast<long>(ho) * wo; ++r) acc += g[r];
              b->grad[0] += acc;
            }
            const bool need_w = w->requires_grad, need_x = x->requires_grad;
            if (need_w) w->ensure_grad();
            if (need_x) x->ensure_grad();
            if (!need_w && !need_x) return;
            for (int c = 0; c < C; ++c) {
              const double* xc = x->data.data() + static_cast<size_t>(c) * H * W;
              double* dxc = need_x
                                ? x->grad.data() + static_cast<size_t>(c) * H * W
                                : nullptr;
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  const size_t qi = (static_cast<size_t>(c) * kh + ky) * kw + kx;
                  const int lo = std::max(0, pad - kx);
                  const int hi = std::min(wo, W + pad - kx);
                  if (hi <= lo) continue;
                  double dw_acc = 0.0;
                  for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    Eigen::Map<const VectorXd> grow(
                        g + static_cast<size_t>(oy) * wo + lo, hi - lo);
                    const size_t xoff =
                        static_cast<size_t>(iy) * W + lo + kx - pad;
                    if (need_w)
                      dw_acc += grow.dot(
                          Eigen::Map<const VectorXd>(xc + xoff, hi - lo));
                    if (need_x)
                      Eigen::Map<VectorXd>(dxc + xoff, hi - lo) +=
                          w->data[qi] * grow;
                  }
                  if (need_w) w->grad[qi] += dw_acc;
                }
            }
          },
          out);
    }
    return out;
  }

  const bool needs_grad = tape.grad_enabled() && any_grad({&input, &filters, &bias});
  static thread_local MatrixXd scratch_pat, scratch_res;
  std::shared_ptr<MatrixXd> pat;
  if (needs_grad) pat = std::make_shared<MatrixXd>();
  MatrixXd& patref = needs_grad ? *pat : scratch_pat;
  im2col(*input, kh, kw, stride, pad, ho, wo, patref);
  MatrixXd wm = filters_as_matrix(*filters);
  MatrixXd& res = scratch_res;
  res.noalias() = patref * wm;  // (ho*wo, K)

  TensorPtr out = Tensor::make({K, ho, wo});
  for (int k = 0; k < K; ++k) {
    const double b = bias->data[k];
    double* dst = out->data.data() + static_cast<size_t>(k) * ho * wo;
    for (long r = 0; r < static_cast<long>(ho) * wo; ++r) dst[r] = res(r, k) + b;
  }
  HPE_CHECK_FINITE(*out, "conv2d");

  if (needs_grad) {
    out->requires_grad = true;
    TensorPtr x = input, w = filters, b = bias;
    auto wm_saved = std::make_shared<MatrixXd>(std::move(wm));
    tape.record(
        [x, w, b, out, pat, wm_saved, stride, pad, ho, wo, kh, kw, K]() {
          const long rows = static_cast<long>(ho) * wo;
          MatrixXd g(rows, K);
          for (int k = 0; k < K; ++k) {
            const double* src =
                out->grad.data() + static_cast<size_t>(k) * ho * wo;
            for (long r = 0; r < rows; ++r) g(r, k) = src[r];
          }
          if (b->requires_grad) {
            b->ensure_grad();
            for (int k = 0; k < K; ++k) b->grad[k] += g.col(k).sum();
          }
          if (w->requires_grad) {
            w->ensure_grad();
            MatrixXd dw = pat->transpose() * g;
            const long taps = dw.rows();
            for (int k = 0; k < K; ++k)
              for (long q = 0; q < taps; ++q) w->grad[k * taps + q] += dw(q, k);
          }
          if (x->requires_grad) {
            x->ensure_grad();
            MatrixXd dpat = g * wm_saved->transpose();
            col2im(dpat, kh, kw, stride, pad, ho, wo, *x, x->grad);
          }
        },
        out);
  }
  return out;
}

namespace {

// Tap offsets of one parity class of the fused unpool(2) + 5x5/pad-2 conv.
// For output parity p, contributing kernel indices d satisfy d == p (mod 2);
// the input offset for kernel index d is (d - 2 + p) / 2.
struct ParityClass {
  int n;          // taps per dimension (3 for parity 0, 2 for parity 1)
  int kidx[3];    // kernel indices
  int offset[3];  // input offsets relative to the output cell
};

ParityClass parity_class(int p) {
  if (p == 0) return {3, {0, 2, 4}, {-1, 0, 1}};
  return {2, {1, 3, 0}, {0, 1, 0}};
}

void im2col_parity(const Tensor& x, const ParityClass& cy,
                   const ParityClass& cx, MatrixXd& pat) {
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  pat.resize(static_cast<long>(H) * W, static_cast<long>(C) * cy.n * cx.n);
  for (int c = 0; c < C; ++c) {
    const double* xc = x.data.data() + static_cast<size_t>(c) * H * W;
    for (int a = 0; a < cy.n; ++a) {
      for (int bi = 0; bi < cx.n; ++bi) {
        const long q = (static_cast<long>(c) * cy.n + a) * cx.n + bi;
        const int off = cx.offset[bi];
        double* col = pat.col(q).data();
        long r = 0;
        for (int v = 0; v < H; ++v) {
          const int iy = v + cy.offset[a];
          if (iy < 0 || iy >= H) {
            std::fill(col + r, col + r + W, 0.0);
            r += W;
            continue;
          }
          const double* row = xc + static_cast<size_t>(iy) * W;
          const int lo = std::max(0, -off);
          const int hi = std::min(W, W - off);  // exclusive
          std::fill(col + r, col + r + lo, 0.0);
          if (hi > lo) std::copy(row + lo + off, row + hi + off, col + r + lo);
          std::fill(col + r + std::max(lo, hi), col + r + W, 0.0);
          r += W;
        }
      }
    }
  }
}

MatrixXd filters_parity_matrix(const Tensor& w, const ParityClass& cy,
                               const ParityClass& cx) {
  const int K = w.shape[0], C = w.shape[1];
  MatrixXd wm(static_cast<long>(C) * cy.n * cx.n, K);
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c)
      for (int a = 0; a < cy.n; ++a)
        for (int bi = 0; bi < cx.n; ++bi)
          wm((static_cast<long>(c) * cy.n + a) * cx.n + bi, k) =
              w.data[((static_cast<size_t>(k) * C + c) * 5 + cy.kidx[a]) * 5 +
                     cx.kidx[bi]];
  return wm;
}

}  // namespace

TensorPtr unpool_conv2d(Tape& tape, const TensorPtr& input,
                        const TensorPtr& filters, const TensorPtr& bias,
                        int factor) {
  require_rank3(input, "unpool_conv2d input");
  if (factor != 2)
    throw ShapeError("unpool_conv2d supports factor 2 only");
  if (filters->shape.size() != 4 || filters->shape[2] != 5 ||
      filters->shape[3] != 5)
    throw ShapeError("unpool_conv2d expects 5x5 filters, got shape " +
                     shape_str(filters->shape));
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  const int K = filters->shape[0];
  if (filters->shape[1] != C)
    throw ShapeError("unpool_conv2d channel mismatch: input has " +
                     std::to_string(C) + " channels, filters expect " +
                     std::to_string(filters->shape[1]));
  if (bias->numel() != K)
    throw ShapeError("unpool_conv2d bias length mismatch");

  const bool needs_grad = tape.grad_enabled() && any_grad({&input, &filters, &bias});
  TensorPtr out = Tensor::make({K, 2 * H, 2 * W});
  // Inference reuses scratch buffers; training keeps the patch matrices
  // alive for the backward pass.
  static thread_local MatrixXd scratch_pat, scratch_res;
  std::shared_ptr<std::array<MatrixXd, 4>> pats;
  if (needs_grad) pats = std::make_shared<std::array<MatrixXd, 4>>();
  for (int py = 0; py < 2; ++py) {
    ParityClass cy = parity_class(py);
    for (int px = 0; px < 2; ++px) {
      ParityClass cx = parity_class(px);
      MatrixXd& pat = needs_grad ? (*pats)[py * 2 + px] : scratch_pat;
      im2col_parity(*input, cy, cx, pat);
      MatrixXd wm = filters_parity_matrix(*filters, cy, cx);
      MatrixXd& res = scratch_res;
      res.noalias() = pat * wm;  // (H*W, K)
      for (int k = 0; k < K; ++k) {
        const double b = bias->data[k];
        double* dst = out->data.data() + static_cast<size_t>(k) * 4 * H * W;
        long r = 0;
        for (int v = 0; v < H; ++v)
          for (int u = 0; u < W; ++u, ++r)
            dst[(2 * v + py) * (2 * W) + 2 * u + px] = res(r, k) + b;
      }
    }
  }
  HPE_CHECK_FINITE(*out, "unpool_conv2d");

  if (needs_grad) {
    out->requires_grad = true;
    TensorPtr x = input, w = filters, b = bias;
    tape.record(
        [x, w, b, out, pats, H, W, K, C]() {
          const long rows = static_cast<long>(H) * W;
          for (int py = 0; py < 2; ++py) {
            ParityClass cy = parity_class(py);
            for (int px = 0; px < 2; ++px) {
              ParityClass cx = parity_class(px);
              MatrixXd g(rows, K);
              for (int k = 0; k < K; ++k) {
                const double* src =
                    out->grad.data() + static_cast<size_t>(k) * 4 * H * W;
                long r = 0;
                for (int v = 0; v < H; ++v)
                  for (int u = 0; u < W; ++u, ++r)
                    g(r, k) = src[(2 * v + py) * (2 * W) + 2 * u + px];
              }
              const MatrixXd& pat = (*pats)[py * 2 + px];
              if (b->requires_grad) {
                b->ensure_grad();
                for (int k = 0; k < K; ++k) b->grad[k] += g.col(k).sum();
              }
              if (w->requires_grad) {
                w->ensure_grad();
                MatrixXd dw = pat.transpose() * g;
                for (int k = 0; k < K; ++k)
                  for (int c = 0; c < C; ++c)
                    for (int a = 0; a < cy.n; ++a)
                      for (int bi = 0; bi < cx.n; ++bi)
                        w->grad[((static_cast<size_t>(k) * C + c) * 5 +
                                 cy.kidx[a]) *
                                    5 +
                                cx.kidx[bi]] +=
                            dw((static_cast<long>(c) * cy.n + a) * cx.n + bi,
                               k);
              }
              if (x->requires_grad) {
                x->ensure_grad();
                MatrixXd wm = filters_parity_matrix(*w, cy, cx);
                MatrixXd dpat = g * wm.transpose();
                for (int c = 0; c < C; ++c) {
                  double* xc = x->grad.data() + static_cast<size_t>(c) * H * W;
                  for (int a = 0; a < cy.n; ++a) {
                    for (int bi = 0; bi < cx.n; ++bi) {
                      const long q =
                          (static_cast<long>(c) * cy.n + a) * cx.n + bi;
                      long r = 0;
                      for (int v = 0; v < H; ++v) {
                        const int iy = v + cy.offset[a];
                        if (iy < 0 || iy >= H) {
                          r += W;
                          continue;
                        }
                        double* row = xc + static_cast<size_t>(iy) * W;
                        for (int u = 0; u < W; ++u, ++r) {
                          const int ix = u + cx.offset[bi];
                          if (ix >= 0 && ix < W) row[ix] += dpat(r, q);
                        }
                      }
                    }
                  }
                }
              }
            }
          }
        },
        out);
  }
  return out;
}

TensorPtr max_pool2d(Tape& tape, const TensorPtr& input, int window,
                     std::vector<int>* argmax_out) {
  require_rank3(input, "max_pool2d input");
  if (window < 2) throw ShapeError("max_pool2d window must be >= 2");
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  if (H % window != 0 || W % window != 0)
    throw ShapeError("max_pool2d: extents " + shape_str(input->shape) +
                     " not divisible by window " + std::to_string(window));
  const int ho = H / window, wo = W / window;
  TensorPtr out = Tensor::make({C, ho, wo});
  auto argmax = std::make_shared<std::vector<int>>(out->numel());
  for (int c = 0; c < C; ++c) {
    const double* xc = input->data.data() + static_cast<size_t>(c) * H * W;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = -1;
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            const int idx = (oy * window + dy) * W + ox * window + dx;
            if (xc[idx] > best) {  // strict: first winner kept on ties
              best = xc[idx];
              best_idx = c * H * W + idx;
            }
          }
        }
        const int o = (c * ho + oy) * wo + ox;
        out->data[o] = best;
        (*argmax)[o] = best_idx;
      }
    }
  }
  if (argmax_out) *argmax_out = *argmax;

  if (tape.grad_enabled() && input->requires_grad) {
    out->requires_grad = true;
    TensorPtr x = input;
    tape.record(
        [x, out, argmax]() {
          x->ensure_grad();
          for (size_t o = 0; o < out->grad.size(); ++o)
            x->grad[(*argmax)[o]] += out->grad[o];
        },
        out);
  }
  return out;
}

TensorPtr unpool2d(Tape& tape, const TensorPtr& input, int factor) {
  require_rank3(input, "unpool2d input");
  if (factor < 2) throw ShapeError("unpool2d factor must be >= 2");
  const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
  TensorPtr out = Tensor::make({C, H * factor, W * factor});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        out->data[(static_cast<size_t>(c) * H * factor + y * factor) * W *
                      factor +
                  x * factor] =
            input->data[(static_cast<size_t>(c) * H + y) * W + x];

  if (tape.grad_enabled() && input->requires_grad) {
    out->requires_grad = true;
    TensorPtr x = input;
    tape.record(
        [x, out, C, H, W, factor]() {
          x->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
              for (int xx = 0; xx < W; ++xx)
                x->grad[(static_cast<size_t>(c) * H + y) * W + xx] +=
                    out->grad[(static_cast<size_t>(c) * H * factor +
                               y * factor) *
                                  W * factor +
                              xx * factor];
        },
        out);
  }
  return out;
}

TensorPtr fully_connected(Tape& tape, const TensorPtr& input,
                          const TensorPtr& weights, const TensorPtr& bias) {
  if (weights->shape.size() != 2)
    throw ShapeError("fully_connected weights must be rank 2, got " +
                     shape_str(weights->shape));
  const int m = weights->shape[0], n = weights->shape[1];
  if (input->numel() != n)
    throw ShapeError("fully_connected: input length " +
                     std::to_string(input->numel()) + " != weight columns " +
                     std::to_string(n));
  if (bias->numel() != m)
    throw ShapeError("fully_connected: bias length " +
                     std::to_string(bias->numel()) + " != weight rows " +
                     std::to_string(m));

  Eigen::Map<const MatrixXd> wm(weights->data.data(), n, m);  // transposed view
  Eigen::Map<const VectorXd> xv(input->data.data(), n);
  TensorPtr out = Tensor::make({m});
  Eigen::Map<VectorXd> ov(out->data.data(), m);
  ov.noalias() = wm.transpose() * xv;
  for (int i = 0; i < m; ++i) out->data[i] += bias->data[i];
  HPE_CHECK_FINITE(*out, "fully_connected");

  if (tape.grad_enabled() && any_grad({&input, &weights, &bias})) {
    out->requires_grad = true;
    TensorPtr x = input, w = weights, b = bias;
    tape.record(
        [x, w, b, out, m, n]() {
          Eigen::Map<const VectorXd> g(out->grad.data(), m);
          if (b->requires_grad) {
            b->ensure_grad();
            Eigen::Map<VectorXd>(b->grad.data(), m) += g;
          }
          if (w->requires_grad) {
            w->ensure_grad();
            Eigen::Map<const VectorXd> xv(x->data.data(), n);
            Eigen::Map<MatrixXd> dw(w->grad.data(), n, m);
            dw.noalias() += xv * g.transpose();
          }
          if (x->requires_grad) {
            x->ensure_grad();
            Eigen::Map<const MatrixXd> wm(w->data.data(), n, m);
            Eigen::Map<VectorXd>(x->grad.data(), n).noalias() += wm * g;
          }
        },
        out);
  }
  return out;
}

TensorPtr relu(Tape& tape, const TensorPtr& input) {
  TensorPtr out = Tensor::make(input->shape);
  for (size_t i = 0; i < input->data.size(); ++i)
    out->data[i] = input->data[i] > 0.0 ? input->data[i] : 0.0;
  if (tape.grad_enabled() && input->requires_grad) {
    out->requires_grad = true;
    TensorPtr x = input;
    tape.record(
        [x, out]() {
          x->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i)
            if (x->data[i] > 0.0) x->grad[i] += out->grad[i];
        },
        out);
  }
  return out;
}

TensorPtr relu_inplace(Tape& tape, const TensorPtr& input) {
  for (double& v : input->data) v = std::max(v, 0.0);
  if (tape.grad_enabled() && input->requires_grad) {
    TensorPtr x = input;
    // Post-activation data is its own mask: clipped entries are exactly 0.
    tape.record(
        [x]() {
          if (x->grad.empty()) return;
          for (size_t i = 0; i < x->data.size(); ++i)
            if (x->data[i] <= 0.0) x->grad[i] = 0.0;
        },
        input);
  }
  return input;
}

TensorPtr concat(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != b->shape.size() || a->shape.empty())
    throw ShapeError("concat: rank mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  for (size_t i = 1; i < a->shape.size(); ++i)
    if (a->shape[i] != b->shape[i])
      throw ShapeError("concat: trailing extents differ, " +
                       shape_str(a->shape) + " vs " + shape_str(b->shape));
  std::vector<int> shape = a->shape;
  shape[0] += b->shape[0];
  TensorPtr out = Tensor::make(shape);
  std::copy(a->data.begin(), a->data.end(), out->data.begin());
  std::copy(b->data.begin(), b->data.end(),
            out->data.begin() + a->data.size());
  if (tape.grad_enabled() && any_grad({&a, &b})) {
    out->requires_grad = true;
    TensorPtr ta = a, tb = b;
    tape.record(
        [ta, tb, out]() {
          const size_t na = ta->data.size();
          if (ta->requires_grad) {
            ta->ensure_grad();
            for (size_t i = 0; i < na; ++i) ta->grad[i] += out->grad[i];
          }
          if (tb->requires_grad) {
            tb->ensure_grad();
            for (size_t i = 0; i < tb->data.size(); ++i)
              tb->grad[i] += out->grad[na + i];
          }
        },
        out);
  }
  return out;
}

TensorPtr reshape(Tape& tape, const TensorPtr& input, std::vector<int> shape) {
  TensorPtr out = std::make_shared<Tensor>();
  out->shape = std::move(shape);
  out->data = input->data;
  if (out->numel() != input->numel())
    throw ShapeError("reshape: element count changes from " +
                     shape_str(input->shape) + " to " + shape_str(out->shape));
  if (tape.grad_enabled() && input->requires_grad) {
    out->requires_grad = true;
    TensorPtr x = input;
    tape.record(
        [x, out]() {
          x->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i)
            x->grad[i] += out->grad[i];
        },
        out);
  }
  return out;
}

TensorPtr mse(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    throw ShapeError("mse: shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  const double inv_n = 1.0 / a->numel();
  double acc = 0.0;
  for (size_t i = 0; i < a->data.size(); ++i) {
    const double d = a->data[i] - b->data[i];
    acc += d * d;
  }
  TensorPtr out = Tensor::scalar(acc * inv_n);
  if (tape.grad_enabled() && any_grad({&a, &b})) {
    out->requires_grad = true;
    TensorPtr ta = a, tb = b;
    tape.record(
        [ta, tb, out, inv_n]() {
          const double g = out->grad[0] * 2.0 * inv_n;
          if (ta->requires_grad) {
            ta->ensure_grad();
            for (size_t i = 0; i < ta->data.size(); ++i)
              ta->grad[i] += g * (ta->data[i] - tb->data[i]);
          }
          if (tb->requires_grad) {
            tb->ensure_grad();
            for (size_t i = 0; i < tb->data.size(); ++i)
              tb->grad[i] -= g * (ta->data[i] - tb->data[i]);
          }
        },
        out);
  }
  return out;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  TensorPtr out = Tensor::make(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = a->data[i] + b->data[i];
  if (tape.grad_enabled() && any_grad({&a, &b})) {
    out->requires_grad = true;
    TensorPtr ta = a, tb = b;
    tape.record(
        [ta, tb, out]() {
          if (ta->requires_grad) {
            ta->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i)
              ta->grad[i] += out->grad[i];
          }
          if (tb->requires_grad) {
            tb->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i)
              tb->grad[i] += out->grad[i];
          }
        },
        out);
  }
  return out;
}

TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    throw ShapeError("sub: shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  TensorPtr out = Tensor::make(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = a->data[i] - b->data[i];
  if (tape.grad_enabled() && any_grad({&a, &b})) {
    out->requires_grad = true;
    TensorPtr ta = a, tb = b;
    tape.record(
        [ta, tb, out]() {
          if (ta->requires_grad) {
            ta->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i)
              ta->grad[i] += out->grad[i];
          }
          if (tb->requires_grad) {
            tb->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i)
              tb->grad[i] -= out->grad[i];
          }
        },
        out);
  }
  return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& a, double c) {
  TensorPtr out = Tensor::make(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * c;
  if (tape.grad_enabled() && a->requires_grad) {
    out->requires_grad = true;
    TensorPtr ta = a;
    tape.record(
        [ta, out, c]() {
          ta->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i)
            ta->grad[i] += c * out->grad[i];
        },
        out);
  }
  return out;
}

TensorPtr sum(Tape& tape, const TensorPtr& a) {
  double acc = 0.0;
  for (double v : a->data) acc += v;
  TensorPtr out = Tensor::scalar(acc);
  if (tape.grad_enabled() && a->requires_grad) {
    out->requires_grad = true;
    TensorPtr ta = a;
    tape.record(
        [ta, out]() {
          ta->ensure_grad();
          for (size_t i = 0; i < ta->data.size(); ++i)
            ta->grad[i] += out->grad[0];
        },
        out);
  }
  return out;
}

TensorPtr sum_squares(Tape& tape, const TensorPtr& a) {
  double acc = 0.0;
  for (double v : a->data) acc += v * v;
  TensorPtr out = Tensor::scalar(acc);
  if (tape.grad_enabled() && a->requires_grad) {
    out->requires_grad = true;
    TensorPtr ta = a;
    tape.record(
        [ta, out]() {
          ta->ensure_grad();
          for (size_t i = 0; i < ta->data.size(); ++i)
            ta->grad[i] += 2.0 * ta->data[i] * out->grad[0];
        },
        out);
  }
  return out;
}

TensorPtr l2_norm(Tape& tape, const TensorPtr& a) {
  double acc = 0.0;
  for (double v : a->data) acc += v * v;
  const double norm = std::sqrt(acc);
  TensorPtr out = Tensor::scalar(norm);
  if (tape.grad_enabled() && a->requires_grad) {
    out->requires_grad = true;
    TensorPtr ta = a;
    tape.record(
        [ta, out, norm]() {
          if (norm == 0.0) return;  // subgradient 0 at the origin
          ta->ensure_grad();
          const double g = out->grad[0] / norm;
          for (size_t i = 0; i < ta->data.size(); ++i)
            ta->grad[i] += g * ta->data[i];
        },
        out);
  }
  return out;
}

double finite_diff_check(const std::function<TensorPtr(Tape&)>& f,
                         const TensorPtr& x, double step) {
  const bool old_rg = x->requires_grad;
  x->requires_grad = true;
  x->grad.clear();
  std::vector<double> analytic;
  {
    Tape tape;
    TensorPtr loss = f(tape);
    tape.backward(loss);
    x->ensure_grad();
    analytic = x->grad;
    x->grad.clear();
  }
  x->requires_grad = false;
  double max_err = 0.0;
  for (size_t i = 0; i < x->data.size(); ++i) {
    const double saved = x->data[i];
    x->data[i] = saved + step;
    Tape tp;
    const double fp = f(tp)->data[0];
    x->data[i] = saved - step;
    Tape tm;
    const double fm = f(tm)->data[0];
    x->data[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(1.0, std::abs(analytic[i]));
    if (err > max_err) max_err = err;
  }
  x->requires_grad = old_rg;
  return max_err;
}

void init_uniform(Tensor& weights, int fan_in, int fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : weights.data) v = rng.uniform(-s, s);
}

}  // namespace hpe
