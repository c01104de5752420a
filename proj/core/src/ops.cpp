#include "cpcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <Eigen/Core>

#include "cpcnn/errors.hpp"

namespace cpcnn {

namespace {

using std::size_t;

template <typename T>
bool tracks(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const auto* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return -floor_div(-a, b); }

// Output positions o in [lo, hi] whose input coordinate o*stride + tap - pad
// falls inside [0, in).
struct Span {
  int lo;
  int hi;
};
Span valid_range(int in, int out, int tap, int stride, int pad) {
  return Span{std::max(0, ceil_div(pad - tap, stride)), std::min(out - 1, floor_div(in - 1 + pad - tap, stride))};
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " + shape_string(s));
}

template <typename T>
T sigmoid(T r) {
  return T(1) / (T(1) + std::exp(-r));
}

}  // namespace

int conv_output_size(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0, Eigen::OuterStride<>>;

// Row-major C = op(A) * op(B), or C += ... when accumulate. op(A) is m x k,
// op(B) is k x n; leading dimensions are row strides of the stored matrices.
template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  const ConstMatMap<T> A(a, ta ? k : m, ta ? m : k, Eigen::OuterStride<>(lda));
  const ConstMatMap<T> B(b, tb ? n : k, tb ? k : n, Eigen::OuterStride<>(ldb));
  MatMap<T> C(c, m, n, Eigen::OuterStride<>(ldc));
  if (!accumulate) C.setZero();
  if (ta && tb)
    C.noalias() += A.transpose() * B.transpose();
  else if (ta)
    C.noalias() += A.transpose() * B;
  else if (tb)
    C.noalias() += A * B.transpose();
  else
    C.noalias() += A * B;
}

// A mask tile: output rows [o0, o1) all read input channels [i0, i1).
struct Tile {
  int o0, o1, i0, i1;
};

// Tiles covering the allowed (o, i) pairs. Consecutive output rows with the
// same pattern share tiles; a missing mask is one full tile.
std::vector<Tile> mask_tiles(const ChannelMask* mask, int O, int I) {
  if (!mask) return {Tile{0, O, 0, I}};
  std::vector<Tile> tiles;
  int o0 = 0;
  while (o0 < O) {
    int o1 = o0 + 1;
    while (o1 < O && std::equal(mask->row(o0), mask->row(o0) + I, mask->row(o1))) ++o1;
    const std::uint8_t* r = mask->row(o0);
    for (int i = 0; i < I;) {
      if (!r[i]) {
        ++i;
        continue;
      }
      int j = i;
      while (j < I && r[j]) ++j;
      tiles.push_back(Tile{o0, o1, i, j});
      i = j;
    }
    o0 = o1;
  }
  return tiles;
}

// Convolution lowered to one matrix product over the whole batch. Kernel
// taps that only ever touch padding are dropped from the column matrix,
// which matters once feature maps shrink to 1x1 or 2x2.
struct ConvPlan {
  int N, I, H, W, O, K, OH, OW, stride, padding;
  std::vector<int> taps;  // ky * K + kx of taps with at least one in-bounds read
  std::vector<Span> ry, rx;
  int rows() const { return I * static_cast<int>(taps.size()); }
  // Padded with zero columns to a multiple of 48 (three AVX-512 float
  // packets) so every real column takes the same vectorized kernel path and
  // identical images in a batch give bit-identical outputs.
  int cols() const { return (N * OH * OW + 47) / 48 * 48; }
};

ConvPlan make_plan(int N, int I, int H, int W, int O, int K, int OH, int OW, int stride, int padding) {
  ConvPlan p{N, I, H, W, O, K, OH, OW, stride, padding, {}, {}, {}};
  for (int ky = 0; ky < K; ++ky)
    for (int kx = 0; kx < K; ++kx) {
      const Span sy = valid_range(H, OH, ky, stride, padding);
      const Span sx = valid_range(W, OW, kx, stride, padding);
      if (sy.lo > sy.hi || sx.lo > sx.hi) continue;
      p.taps.push_back(ky * K + kx);
      p.ry.push_back(sy);
      p.rx.push_back(sx);
    }
  return p;
}

// col[(i, t), (n, oy, ox)] = x[n, i, oy*s + ky - pad, ox*s + kx - pad], zero outside.
template <typename T>
std::vector<T> im2col(const ConvPlan& p, const T* x) {
  const size_t cols = static_cast<size_t>(p.cols());
  const size_t plane = static_cast<size_t>(p.OH) * p.OW;
  std::vector<T> col(static_cast<size_t>(p.rows()) * cols, T(0));
  const size_t T_ = p.taps.size();
  for (int i = 0; i < p.I; ++i)
    for (size_t t = 0; t < T_; ++t) {
      const int ky = p.taps[t] / p.K, kx = p.taps[t] % p.K;
      T* row = col.data() + (static_cast<size_t>(i) * T_ + t) * cols;
      for (int n = 0; n < p.N; ++n) {
        const T* xp = x + (static_cast<size_t>(n) * p.I + i) * p.H * p.W;
        T* dst = row + static_cast<size_t>(n) * plane;
        for (int oy = p.ry[t].lo; oy <= p.ry[t].hi; ++oy) {
          const T* xr = xp + static_cast<size_t>(oy * p.stride + ky - p.padding) * p.W + (kx - p.padding);
          T* dr = dst + static_cast<size_t>(oy) * p.OW;
          for (int ox = p.rx[t].lo; ox <= p.rx[t].hi; ++ox) dr[ox] = xr[ox * p.stride];
        }
      }
    }
  return col;
}

template <typename T>
void col2im_add(const ConvPlan& p, const T* col, T* gx) {
  const size_t cols = static_cast<size_t>(p.cols());
  const size_t plane = static_cast<size_t>(p.OH) * p.OW;
  const size_t T_ = p.taps.size();
  for (int i = 0; i < p.I; ++i)
    for (size_t t = 0; t < T_; ++t) {
      const int ky = p.taps[t] / p.K, kx = p.taps[t] % p.K;
      const T* row = col + (static_cast<size_t>(i) * T_ + t) * cols;
      for (int n = 0; n < p.N; ++n) {
        T* gp = gx + (static_cast<size_t>(n) * p.I + i) * p.H * p.W;
        const T* src = row + static_cast<size_t>(n) * plane;
        for (int oy = p.ry[t].lo; oy <= p.ry[t].hi; ++oy) {
          T* gr = gp + static_cast<size_t>(oy * p.stride + ky - p.padding) * p.W + (kx - p.padding);
          const T* sr = src + static_cast<size_t>(oy) * p.OW;
          for (int ox = p.rx[t].lo; ox <= p.rx[t].hi; ++ox) gr[ox * p.stride] += sr[ox];
        }
      }
    }
}

// Weights restricted to the kept taps, with masked (o, i) blocks zeroed.
template <typename T>
std::vector<T> pack_weights(const ConvPlan& p, const T* w, const ChannelMask* mask) {
  const size_t T_ = p.taps.size();
  const size_t kk = static_cast<size_t>(p.K) * p.K;
  std::vector<T> packed(static_cast<size_t>(p.O) * p.rows(), T(0));
  for (int o = 0; o < p.O; ++o)
    for (int i = 0; i < p.I; ++i) {
      if (mask && !mask->at(o, i)) continue;
      const T* src = w + (static_cast<size_t>(o) * p.I + i) * kk;
      T* dst = packed.data() + static_cast<size_t>(o) * p.rows() + static_cast<size_t>(i) * T_;
      for (size_t t = 0; t < T_; ++t) dst[t] = src[p.taps[t]];
    }
  return packed;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ChannelMask* mask,
                 int stride, int padding) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  const int N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), K = w.dim(2);
  if (w.dim(1) != I || w.dim(3) != K)
    throw ShapeError("conv2d weight " + shape_string(w.shape()) + " incompatible with input " + shape_string(x.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != O)) throw ShapeError("conv2d bias shape mismatch");
  if (mask && (mask->out_channels() != O || mask->in_channels() != I))
    throw ShapeError("conv2d mask is " + std::to_string(mask->out_channels()) + "x" + std::to_string(mask->in_channels()) +
                     ", weight needs " + std::to_string(O) + "x" + std::to_string(I));
  if (stride < 1 || padding < 0) throw ShapeError("conv2d stride must be >= 1 and padding >= 0");
  const int OH = conv_output_size(H, K, stride, padding);
  const int OW = conv_output_size(W, K, stride, padding);
  if (OH < 1 || OW < 1) throw ShapeError("conv2d output would be empty");

  const ConvPlan plan = make_plan(N, I, H, W, O, K, OH, OW, stride, padding);
  const size_t plane = static_cast<size_t>(OH) * OW;
  const size_t cols = static_cast<size_t>(plan.cols());
  const int rows = plan.rows();
  const int nt = static_cast<int>(plan.taps.size());
  const auto tiles = std::make_shared<const std::vector<Tile>>(mask_tiles(mask, O, I));

  Tensor<T> out(Shape{N, O, OH, OW});
  {
    const std::vector<T> col = im2col(plan, x.ptr());
    const std::vector<T> wp = pack_weights(plan, w.ptr(), mask);
    std::vector<T> prod(static_cast<size_t>(O) * cols, T(0));
    for (const Tile& t : *tiles) {
      const int r0 = t.i0 * nt, nr = (t.i1 - t.i0) * nt;
      gemm(false, false, t.o1 - t.o0, plan.cols(), nr, wp.data() + static_cast<size_t>(t.o0) * rows + r0, rows,
           col.data() + static_cast<size_t>(r0) * cols, plan.cols(), prod.data() + static_cast<size_t>(t.o0) * cols,
           plan.cols(), true);
    }
    T* od = out.ptr();
    for (int o = 0; o < O; ++o) {
      const T bias = b.defined() ? b[static_cast<size_t>(o)] : T(0);
      for (int n = 0; n < N; ++n) {
        const T* src = prod.data() + static_cast<size_t>(o) * cols + static_cast<size_t>(n) * plane;
        T* dst = od + (static_cast<size_t>(n) * O + o) * plane;
        for (size_t k = 0; k < plane; ++k) dst[k] = src[k] + bias;
      }
    }
  }

  if (tracks(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape->record([=, mask_copy = mask ? std::make_shared<ChannelMask>(*mask) : nullptr]() mutable {
      auto gout = out.grad();
      // gout as an [O, N*plane] matrix.
      std::vector<T> g(static_cast<size_t>(O) * cols);
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
          std::copy_n(gout.data() + (static_cast<size_t>(n) * O + o) * plane, plane,
                      g.data() + static_cast<size_t>(o) * cols + static_cast<size_t>(n) * plane);
      if (b.defined() && b.requires_grad()) {
        auto gb = b.grad();
        for (int o = 0; o < O; ++o) {
          T acc(0);
          const T* gr = g.data() + static_cast<size_t>(o) * cols;
          for (size_t k = 0; k < cols; ++k) acc += gr[k];
          gb[static_cast<size_t>(o)] += acc;
        }
      }
      if (w.requires_grad()) {
        const std::vector<T> col = im2col(plan, x.ptr());
        std::vector<T> gwp(static_cast<size_t>(O) * rows, T(0));
        for (const Tile& t : *tiles) {
          const int r0 = t.i0 * nt, nr = (t.i1 - t.i0) * nt;
          gemm(false, true, t.o1 - t.o0, nr, plan.cols(), g.data() + static_cast<size_t>(t.o0) * cols, plan.cols(),
               col.data() + static_cast<size_t>(r0) * cols, plan.cols(), gwp.data() + static_cast<size_t>(t.o0) * rows + r0,
               rows, false);
        }
        auto gw = w.grad();
        const size_t T_ = plan.taps.size();
        const size_t kk = static_cast<size_t>(K) * K;
        for (int o = 0; o < O; ++o)
          for (int i = 0; i < I; ++i) {
            if (mask_copy && !mask_copy->at(o, i)) continue;
            const T* src = gwp.data() + static_cast<size_t>(o) * plan.rows() + static_cast<size_t>(i) * T_;
            T* dst = gw.data() + (static_cast<size_t>(o) * I + i) * kk;
            for (size_t t = 0; t < T_; ++t) dst[plan.taps[t]] += src[t];
          }
      }
      if (x.requires_grad()) {
        const std::vector<T> wp = pack_weights(plan, w.ptr(), mask_copy.get());
        std::vector<T> gcol(static_cast<size_t>(rows) * cols, T(0));
        for (const Tile& t : *tiles) {
          const int r0 = t.i0 * nt, nr = (t.i1 - t.i0) * nt;
          gemm(true, false, nr, plan.cols(), t.o1 - t.o0, wp.data() + static_cast<size_t>(t.o0) * rows + r0, rows,
               g.data() + static_cast<size_t>(t.o0) * cols, plan.cols(), gcol.data() + static_cast<size_t>(r0) * cols,
               plan.cols(), true);
        }
        col2im_add(plan, gcol.data(), x.grad().data());
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode) {
  require_rank(x.shape(), 4, "batch_norm input");
  const int N = x.dim(0), C = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * static_cast<size_t>(x.dim(3));
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &state.running_mean, &state.running_var})
    if (p->rank() != 1 || p->dim(0) != C) throw ShapeError("batch_norm parameter shape mismatch for " + std::to_string(C) + " channels");

  const size_t M = static_cast<size_t>(N) * plane;
  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> invstd(static_cast<size_t>(C));
  const T* xd = x.ptr();
  for (int c = 0; c < C; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (int n = 0; n < N; ++n) {
        const T* p = xd + (static_cast<size_t>(n) * C + c) * plane;
        for (size_t k = 0; k < plane; ++k) mean += static_cast<double>(p[k]);
      }
      mean /= static_cast<double>(M);
      for (int n = 0; n < N; ++n) {
        const T* p = xd + (static_cast<size_t>(n) * C + c) * plane;
        for (size_t k = 0; k < plane; ++k) {
          const double d = static_cast<double>(p[k]) - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(M);
      const double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1) : var;
      auto& rm = state.running_mean[static_cast<size_t>(c)];
      auto& rv = state.running_var[static_cast<size_t>(c)];
      rm = static_cast<T>((1.0 - kBatchNormMomentum) * static_cast<double>(rm) + kBatchNormMomentum * mean);
      rv = static_cast<T>((1.0 - kBatchNormMomentum) * static_cast<double>(rv) + kBatchNormMomentum * unbiased);
    } else {
      mean = static_cast<double>(state.running_mean[static_cast<size_t>(c)]);
      var = static_cast<double>(state.running_var[static_cast<size_t>(c)]);
    }
    const T is = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
    const T mu = static_cast<T>(mean);
    invstd[static_cast<size_t>(c)] = is;
    const T g = gamma[static_cast<size_t>(c)], bt = beta[static_cast<size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const size_t off = (static_cast<size_t>(n) * C + c) * plane;
      for (size_t k = 0; k < plane; ++k) {
        const T h = (xd[off + k] - mu) * is;
        xhat[off + k] = h;
        out[off + k] = g * h + bt;
      }
    }
  }

  if (tracks(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record([=]() mutable {
      auto gout = out.grad();
      for (int c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gh = 0.0;
        for (int n = 0; n < N; ++n) {
          const size_t off = (static_cast<size_t>(n) * C + c) * plane;
          for (size_t k = 0; k < plane; ++k) {
            sum_g += static_cast<double>(gout[off + k]);
            sum_gh += static_cast<double>(gout[off + k]) * static_cast<double>(xhat[off + k]);
          }
        }
        if (gamma.requires_grad()) gamma.grad()[static_cast<size_t>(c)] += static_cast<T>(sum_gh);
        if (beta.requires_grad()) beta.grad()[static_cast<size_t>(c)] += static_cast<T>(sum_g);
        if (!x.requires_grad()) continue;
        auto gx = x.grad();
        const T g = gamma[static_cast<size_t>(c)];
        const T is = invstd[static_cast<size_t>(c)];
        if (mode == Mode::eval) {
          for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * plane;
            for (size_t k = 0; k < plane; ++k) gx[off + k] += gout[off + k] * g * is;
          }
        } else {
          const T mean_g = static_cast<T>(sum_g / static_cast<double>(M));
          const T mean_gh = static_cast<T>(sum_gh / static_cast<double>(M));
          for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * plane;
            for (size_t k = 0; k < plane; ++k)
              gx[off + k] += g * is * (gout[off + k] - mean_g - xhat[off + k] * mean_gh);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const size_t n = x.size();
  for (size_t k = 0; k < n; ++k) out[k] = x[k] > T(0) ? x[k] : T(0);
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([=]() mutable {
      auto gout = out.grad();
      auto gx = x.grad();
      for (size_t k = 0; k < n; ++k)
        if (x[k] > T(0)) gx[k] += gout[k];
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_sum(Tape<T>* tape, std::span<const Tensor<T>> inputs, const Tensor<T>& raw) {
  if (inputs.empty()) throw ShapeError("weighted_sum needs at least one input");
  if (raw.rank() != 1 || raw.size() != inputs.size())
    throw ShapeError("weighted_sum expects " + std::to_string(inputs.size()) + " weights, got " + shape_string(raw.shape()));
  const Shape& shape = inputs.front().shape();
  for (const auto& t : inputs)
    if (t.shape() != shape) throw ShapeError("weighted_sum inputs differ in shape: " + shape_string(shape) + " vs " + shape_string(t.shape()));

  const size_t K = inputs.size();
  const size_t n = shape_size(shape);
  std::vector<T> sig(K);
  for (size_t k = 0; k < K; ++k) sig[k] = sigmoid(raw[k]);
  Tensor<T> out(shape);
  for (size_t k = 0; k < K; ++k) {
    const T* src = inputs[k].ptr();
    const T s = sig[k];
    for (size_t e = 0; e < n; ++e) out[e] += s * src[e];
  }

  bool any = tracks(tape, {&raw});
  for (const auto& t : inputs) any = any || tracks(tape, {&t});
  if (any) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> in(inputs.begin(), inputs.end());
    tape->record([=]() mutable {
      auto gout = out.grad();
      for (size_t k = 0; k < K; ++k) {
        if (raw.requires_grad()) {
          double dot = 0.0;
          const T* src = in[k].ptr();
          for (size_t e = 0; e < n; ++e) dot += static_cast<double>(gout[e]) * static_cast<double>(src[e]);
          raw.grad()[k] += static_cast<T>(dot * static_cast<double>(sig[k]) * (1.0 - static_cast<double>(sig[k])));
        }
        if (in[k].requires_grad()) {
          auto gx = in[k].grad();
          for (size_t e = 0; e < n; ++e) gx[e] += sig[k] * gout[e];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool input");
  const int N = x.dim(0), C = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * static_cast<size_t>(x.dim(3));
  if (plane == 0) throw ShapeError("global_avg_pool needs a non-empty spatial plane");
  Tensor<T> out(Shape{N, C});
  for (size_t nc = 0; nc < static_cast<size_t>(N) * C; ++nc) {
    T acc(0);
    for (size_t k = 0; k < plane; ++k) acc += x[nc * plane + k];
    out[nc] = acc / static_cast<T>(plane);
  }
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([=]() mutable {
      auto gout = out.grad();
      auto gx = x.grad();
      const T scale = T(1) / static_cast<T>(plane);
      for (size_t nc = 0; nc < static_cast<size_t>(N) * C; ++nc)
        for (size_t k = 0; k < plane; ++k) gx[nc * plane + k] += gout[nc] * scale;
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(w.shape(), 2, "linear weight");
  const int N = x.dim(0), C = x.dim(1), K = w.dim(0);
  if (w.dim(1) != C) throw ShapeError("linear weight " + shape_string(w.shape()) + " incompatible with input " + shape_string(x.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != K)) throw ShapeError("linear bias shape mismatch");
  Tensor<T> out(Shape{N, K});
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      T acc = b.defined() ? b[static_cast<size_t>(k)] : T(0);
      const T* xr = x.ptr() + static_cast<size_t>(n) * C;
      const T* wr = w.ptr() + static_cast<size_t>(k) * C;
      for (int c = 0; c < C; ++c) acc += xr[c] * wr[c];
      out[static_cast<size_t>(n) * K + k] = acc;
    }
  if (tracks(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape->record([=]() mutable {
      auto gout = out.grad();
      for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
          const T g = gout[static_cast<size_t>(n) * K + k];
          if (b.defined() && b.requires_grad()) b.grad()[static_cast<size_t>(k)] += g;
          if (w.requires_grad()) {
            auto gw = w.grad();
            for (int c = 0; c < C; ++c) gw[static_cast<size_t>(k) * C + c] += g * x[static_cast<size_t>(n) * C + c];
          }
          if (x.requires_grad()) {
            auto gx = x.grad();
            for (int c = 0; c < C; ++c) gx[static_cast<size_t>(n) * C + c] += g * w[static_cast<size_t>(k) * C + c];
          }
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  const int N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != static_cast<size_t>(N)) throw ShapeError("label count does not match batch size");
  if (N == 0) throw ShapeError("softmax_cross_entropy on an empty batch");
  std::vector<T> prob(static_cast<size_t>(N) * K);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const int y = labels[static_cast<size_t>(n)];
    if (y < 0 || y >= K) throw ParameterError("label " + std::to_string(y) + " out of range [0, " + std::to_string(K) + ")");
    const T* row = logits.ptr() + static_cast<size_t>(n) * K;
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) m = std::max(m, static_cast<double>(row[k]));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - m);
    const double lse = m + std::log(z);
    for (int k = 0; k < K; ++k) prob[static_cast<size_t>(n) * K + k] = static_cast<T>(std::exp(static_cast<double>(row[k]) - lse));
    total += lse - static_cast<double>(row[y]);
  }
  Tensor<T> out(Shape{1}, static_cast<T>(total / N));
  if (tracks(tape, {&logits})) {
    out.set_requires_grad(true);
    std::vector<int> y(labels.begin(), labels.end());
    tape->record([=]() mutable {
      const T g = out.grad()[0] / static_cast<T>(N);
      auto gl = logits.grad();
      for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
          const size_t idx = static_cast<size_t>(n) * K + k;
          gl[idx] += g * (prob[idx] - (k == y[static_cast<size_t>(n)] ? T(1) : T(0)));
        }
    });
  }
  return out;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "argmax_rows");
  const int N = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    const T* row = logits.ptr() + static_cast<size_t>(n) * K;
    out[static_cast<size_t>(n)] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  return out;
}

#define CPCNN_INSTANTIATE_OPS(T)                                                                                       \
  template Tensor<T> conv2d(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ChannelMask*, int, \
                            int);                                                                                      \
  template Tensor<T> batch_norm(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&,  \
                                Mode);                                                                                 \
  template Tensor<T> relu(Tape<T>*, const Tensor<T>&);                                                                 \
  template Tensor<T> weighted_sum(Tape<T>*, std::span<const Tensor<T>>, const Tensor<T>&);                            \
  template Tensor<T> global_avg_pool(Tape<T>*, const Tensor<T>&);                                                      \
  template Tensor<T> linear(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> softmax_cross_entropy(Tape<T>*, const Tensor<T>&, std::span<const int>);                          \
  template std::vector<int> argmax_rows(const Tensor<T>&);

CPCNN_INSTANTIATE_OPS(float)
CPCNN_INSTANTIATE_OPS(double)

}  // namespace cpcnn
