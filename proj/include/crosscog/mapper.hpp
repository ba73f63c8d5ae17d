#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "crosscog/dense.hpp"
#include "crosscog/errors.hpp"
#include "crosscog/rng.hpp"

namespace crosscog {

/// One language-cognitive mapper: affine layers with ReLU between them and a
/// bare affine output layer. Inputs and outputs are column vectors; batched
/// entry points take one column per entity.
template <class Scalar>
struct Mlp {
  std::vector<Mat<Scalar>> W;  // W[l] maps layer l input (cols) to output (rows)
  std::vector<Vec<Scalar>> b;

  int in_dim() const { return static_cast<int>(W.front().cols()); }
  int out_dim() const { return static_cast<int>(W.back().rows()); }
  int n_layers() const { return static_cast<int>(W.size()); }
};

/// Xavier-uniform weights, zero biases, deterministic per seed.
template <class Scalar>
Mlp<Scalar> init_mlp(int in_dim, const std::vector<int>& hidden, int out_dim,
                     std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1)
    throw Error(ErrorCode::ConfigError, "mlp dims must be positive");
  std::vector<int> dims;
  dims.push_back(in_dim);
  for (int h : hidden) {
    if (h < 1) throw Error(ErrorCode::ConfigError, "mlp hidden dim must be positive");
    dims.push_back(h);
  }
  dims.push_back(out_dim);

  Mlp<Scalar> mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    auto rng = make_rng(seed, static_cast<std::uint64_t>(l));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat<Scalar> w(fan_out, fan_in);
    for (int c = 0; c < fan_in; ++c)
      for (int r = 0; r < fan_out; ++r) w(r, c) = static_cast<Scalar>(dist(rng));
    mlp.W.push_back(std::move(w));
    mlp.b.push_back(Vec<Scalar>::Zero(fan_out));
  }
  return mlp;
}

/// Layer inputs and pre-activations kept from a forward pass; backward
/// consumes them. Reusable across calls to avoid reallocation.
template <class Scalar>
struct MlpTrace {
  std::vector<Mat<Scalar>> inputs;  // inputs[l] feeds layer l
  std::vector<Mat<Scalar>> pre;     // pre[l] = W[l]*inputs[l] + b[l]
};

template <class Scalar>
Mat<Scalar> forward(const Mlp<Scalar>& mlp, const Mat<Scalar>& x,
                    MlpTrace<Scalar>* trace = nullptr) {
  if (x.rows() != mlp.in_dim())
    throw Error(ErrorCode::DimMismatch,
                "mapper input has " + std::to_string(x.rows()) + " rows, expected " +
                    std::to_string(mlp.in_dim()));
  if (trace) {
    trace->inputs.resize(mlp.W.size());
    trace->pre.resize(mlp.W.size());
  }
  Mat<Scalar> a = x;
  for (std::size_t l = 0; l < mlp.W.size(); ++l) {
    if (trace) trace->inputs[l] = a;
    Mat<Scalar> z = (mlp.W[l] * a).colwise() + mlp.b[l];
    if (trace) trace->pre[l] = z;
    if (l + 1 < mlp.W.size())
      a = relu(z.array()).matrix();
    else
      a = std::move(z);
  }
  return a;
}

template <class Scalar>
Vec<Scalar> forward(const Mlp<Scalar>& mlp, const Vec<Scalar>& x) {
  return forward(mlp, Mat<Scalar>(x)).col(0);
}

template <class Scalar>
struct MlpGrad {
  std::vector<Mat<Scalar>> W;
  std::vector<Vec<Scalar>> b;

  explicit MlpGrad(const Mlp<Scalar>& mlp) {
    for (std::size_t l = 0; l < mlp.W.size(); ++l) {
      W.push_back(Mat<Scalar>::Zero(mlp.W[l].rows(), mlp.W[l].cols()));
      b.push_back(Vec<Scalar>::Zero(mlp.b[l].size()));
    }
  }

  void set_zero() {
    for (auto& w : W) w.setZero();
    for (auto& v : b) v.setZero();
  }
};

/// Exact reverse-mode pass; adds into `grad` and returns the gradient w.r.t.
/// the forward input. ReLU subgradient at 0 is 0.
template <class Scalar>
Mat<Scalar> backward(const Mlp<Scalar>& mlp, const MlpTrace<Scalar>& trace,
                     const Mat<Scalar>& upstream, MlpGrad<Scalar>& grad) {
  if (upstream.rows() != mlp.out_dim() ||
      upstream.cols() != trace.inputs.front().cols())
    throw Error(ErrorCode::DimMismatch, "mapper upstream gradient shape mismatch");
  Mat<Scalar> dz = upstream;
  for (int l = mlp.n_layers() - 1; l >= 0; --l) {
    grad.W[l] += dz * trace.inputs[l].transpose();
    grad.b[l] += dz.rowwise().sum();
    Mat<Scalar> dx = mlp.W[l].transpose() * dz;
    if (l == 0) return dx;
    dz = (dx.array() * (trace.pre[l - 1].array() > Scalar(0)).template cast<Scalar>())
             .matrix();
  }
  return dz;  // unreachable; n_layers >= 1
}

}  // namespace crosscog
