#include <cmath>
#include <cstdint>
#include <vector>

#include "crosscog/adam.hpp"
#include "crosscog/errors.hpp"
#include "crosscog/mapper.hpp"
#include "doctest.h"

using namespace crosscog;

namespace {

// Scalar probe loss: L = sum_ij C_ij * Y_ij, so dL/dY = C. Any gradient the
// backward pass reports must match central differences of this loss.
double probe_loss(const Mlp<double>& mlp, const MatD& x, const MatD& c) {
  return (forward(mlp, x).array() * c.array()).sum();
}

double central_diff(double& slot, double h, const Mlp<double>& mlp, const MatD& x,
                    const MatD& c) {
  const double saved = slot;
  slot = saved + h;
  const double up = probe_loss(mlp, x, c);
  slot = saved - h;
  const double down = probe_loss(mlp, x, c);
  slot = saved;
  return (up - down) / (2.0 * h);
}

bool close_rel(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= abs_floor + rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("mapper backward matches central finite differences") {
  const double h = 1e-5;
  Mlp<double> mlp = init_mlp<double>(16, {8, 4}, 2, 31);
  // Nudge biases off zero so every layer's bias gradient is exercised away
  // from the init point.
  for (std::size_t l = 0; l < mlp.b.size(); ++l)
    for (int i = 0; i < mlp.b[l].size(); ++i)
      mlp.b[l](i) = 0.01 * static_cast<double>(i + 1) * (l % 2 ? -1.0 : 1.0);

  auto rng = make_rng(97, 5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatD x(16, 3);
  for (int j = 0; j < x.cols(); ++j)
    for (int i = 0; i < x.rows(); ++i) x(i, j) = gauss(rng);
  MatD c(2, 3);
  for (int j = 0; j < c.cols(); ++j)
    for (int i = 0; i < c.rows(); ++i) c(i, j) = gauss(rng);

  MlpTrace<double> trace;
  forward(mlp, x, &trace);
  MlpGrad<double> grad(mlp);
  const MatD dx = backward(mlp, trace, c, grad);

  int checked = 0;
  for (std::size_t l = 0; l < mlp.W.size(); ++l) {
    for (int cc = 0; cc < mlp.W[l].cols(); ++cc)
      for (int r = 0; r < mlp.W[l].rows(); ++r) {
        const double fd = central_diff(mlp.W[l](r, cc), h, mlp, x, c);
        CHECK_MESSAGE(close_rel(grad.W[l](r, cc), fd, 1e-4, 1e-7),
                      "W[" << l << "](" << r << "," << cc << ") analytic "
                           << grad.W[l](r, cc) << " vs fd " << fd);
        ++checked;
      }
    for (int i = 0; i < mlp.b[l].size(); ++i) {
      const double fd = central_diff(mlp.b[l](i), h, mlp, x, c);
      CHECK_MESSAGE(close_rel(grad.b[l](i), fd, 1e-4, 1e-7),
                    "b[" << l << "](" << i << ") analytic " << grad.b[l](i)
                         << " vs fd " << fd);
      ++checked;
    }
  }
  CHECK(checked == 16 * 8 + 8 + 8 * 4 + 4 + 4 * 2 + 2);

  // Input gradient from the same pass.
  for (int j = 0; j < x.cols(); ++j)
    for (int i = 0; i < x.rows(); ++i) {
      const double fd = central_diff(x(i, j), h, mlp, x, c);
      CHECK_MESSAGE(close_rel(dx(i, j), fd, 1e-4, 1e-7),
                    "dx(" << i << "," << j << ") analytic " << dx(i, j) << " vs fd "
                          << fd);
    }
}

TEST_CASE("single affine layer gradients by hand") {
  Mlp<double> mlp;
  mlp.W.push_back((MatD(2, 2) << 1.0, 2.0, 3.0, 4.0).finished());
  mlp.b.push_back((VecD(2) << 0.5, -0.5).finished());

  VecD x(2);
  x << 1.0, -1.0;
  MlpTrace<double> trace;
  const MatD y = forward(mlp, MatD(x), &trace);
  CHECK(y(0, 0) == doctest::Approx(-0.5));
  CHECK(y(1, 0) == doctest::Approx(-1.5));

  MlpGrad<double> grad(mlp);
  MatD upstream = MatD::Ones(2, 1);
  const MatD dx = backward(mlp, trace, upstream, grad);

  // dL/dW = u x^T, dL/db = u, dL/dx = W^T u.
  CHECK(grad.W[0](0, 0) == doctest::Approx(1.0));
  CHECK(grad.W[0](0, 1) == doctest::Approx(-1.0));
  CHECK(grad.W[0](1, 0) == doctest::Approx(1.0));
  CHECK(grad.W[0](1, 1) == doctest::Approx(-1.0));
  CHECK(grad.b[0](0) == doctest::Approx(1.0));
  CHECK(grad.b[0](1) == doctest::Approx(1.0));
  CHECK(dx(0, 0) == doctest::Approx(4.0));
  CHECK(dx(1, 0) == doctest::Approx(6.0));
}

TEST_CASE("relu blocks gradient through inactive units") {
  Mlp<double> mlp;
  mlp.W.push_back(MatD::Identity(2, 2));
  mlp.b.push_back(VecD::Zero(2));
  mlp.W.push_back((MatD(1, 2) << 1.0, 1.0).finished());
  mlp.b.push_back(VecD::Zero(1));

  VecD x(2);
  x << 2.0, -3.0;
  MlpTrace<double> trace;
  const MatD y = forward(mlp, MatD(x), &trace);
  CHECK(y(0, 0) == doctest::Approx(2.0));

  MlpGrad<double> grad(mlp);
  const MatD up = MatD::Ones(1, 1);
  const MatD dx = backward(mlp, trace, up, grad);

  CHECK(grad.W[1](0, 0) == doctest::Approx(2.0));
  CHECK(grad.W[1](0, 1) == doctest::Approx(0.0));  // dead unit's activation is 0
  CHECK(grad.W[0](0, 0) == doctest::Approx(2.0));
  CHECK(grad.W[0](0, 1) == doctest::Approx(-3.0));
  CHECK(grad.W[0](1, 0) == doctest::Approx(0.0));  // masked row
  CHECK(grad.W[0](1, 1) == doctest::Approx(0.0));
  CHECK(grad.b[0](0) == doctest::Approx(1.0));
  CHECK(grad.b[0](1) == doctest::Approx(0.0));
  CHECK(dx(0, 0) == doctest::Approx(1.0));
  CHECK(dx(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("mlp init is xavier-bounded, zero-biased, seed-deterministic") {
  const auto a = init_mlp<double>(16, {8}, 4, 123);
  const auto b = init_mlp<double>(16, {8}, 4, 123);
  const auto other = init_mlp<double>(16, {8}, 4, 124);

  REQUIRE(a.n_layers() == 2);
  CHECK(a.in_dim() == 16);
  CHECK(a.out_dim() == 4);
  CHECK(a.W[0].rows() == 8);
  CHECK(a.W[0].cols() == 16);
  CHECK(a.W[1].rows() == 4);
  CHECK(a.W[1].cols() == 8);

  const double bound0 = std::sqrt(6.0 / (16 + 8));
  const double bound1 = std::sqrt(6.0 / (8 + 4));
  CHECK(a.W[0].array().abs().maxCoeff() <= bound0);
  CHECK(a.W[1].array().abs().maxCoeff() <= bound1);
  CHECK(a.b[0].isZero());
  CHECK(a.b[1].isZero());

  CHECK((a.W[0] - b.W[0]).norm() == 0.0);
  CHECK((a.W[1] - b.W[1]).norm() == 0.0);
  CHECK((a.W[0] - other.W[0]).norm() > 0.0);

  CHECK_THROWS_AS((init_mlp<double>(0, {8}, 4, 1)), Error);
  CHECK_THROWS_AS((init_mlp<double>(16, {0}, 4, 1)), Error);
  CHECK_THROWS_AS((init_mlp<double>(16, {8}, 0, 1)), Error);
}

TEST_CASE("batched forward equals per-column forward") {
  const auto mlp = init_mlp<double>(6, {5}, 3, 77);
  auto rng = make_rng(77, 9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatD x(6, 4);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 6; ++i) x(i, j) = gauss(rng);

  const MatD batched = forward(mlp, x);
  for (int j = 0; j < 4; ++j) {
    const VecD single = forward(mlp, VecD(x.col(j)));
    CHECK((batched.col(j) - single).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("mapper shape checks") {
  const auto mlp = init_mlp<double>(6, {5}, 3, 1);
  CHECK_THROWS_AS(forward(mlp, MatD(MatD::Zero(7, 2))), Error);

  MlpTrace<double> trace;
  forward(mlp, MatD(MatD::Zero(6, 2)), &trace);
  MlpGrad<double> grad(mlp);
  MatD bad = MatD::Zero(3, 5);  // wrong column count
  CHECK_THROWS_AS(backward(mlp, trace, bad, grad), Error);
  MatD bad_rows = MatD::Zero(4, 2);
  CHECK_THROWS_AS(backward(mlp, trace, bad_rows, grad), Error);
}

TEST_CASE("backward accumulates into the gradient buffer") {
  const auto mlp = init_mlp<double>(4, {3}, 2, 9);
  MatD x = MatD::Ones(4, 1);
  MlpTrace<double> trace;
  forward(mlp, x, &trace);

  MlpGrad<double> grad(mlp);
  const MatD up = MatD::Ones(2, 1);
  backward(mlp, trace, up, grad);
  const MatD once = grad.W[0];
  backward(mlp, trace, up, grad);
  CHECK((grad.W[0] - 2.0 * once).norm() == doctest::Approx(0.0));

  grad.set_zero();
  CHECK(grad.W[0].isZero());
  CHECK(grad.b[1].isZero());
}

TEST_CASE("adam first step has the bias-corrected closed form") {
  // After one step m-hat = g and v-hat = g^2, so the update is
  // lr * g / (|g| + eps) elementwise.
  Adam<double> opt(0.05);
  MatD param = (MatD(2, 2) << 1.0, -2.0, 0.5, 3.0).finished();
  const MatD start = param;
  const MatD g = (MatD(2, 2) << 0.3, -0.7, 0.0, 2.0).finished();

  opt.begin_step();
  opt.update(param, g);
  CHECK(opt.step_count() == 1);

  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const double expect =
          start(i, j) - 0.05 * g(i, j) / (std::abs(g(i, j)) + 1e-8);
      CHECK(param(i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("adam leaves parameters alone under zero gradient") {
  Adam<double> opt(0.1);
  VecD param = (VecD(3) << 1.0, 2.0, 3.0).finished();
  const VecD start = param;
  for (int s = 0; s < 5; ++s) {
    opt.begin_step();
    opt.update(param, VecD(VecD::Zero(3)));
  }
  CHECK((param - start).norm() == doctest::Approx(0.0));
  CHECK(opt.step_count() == 5);
}

TEST_CASE("adam rejects tensor order changes and shape mismatches") {
  Adam<double> opt(0.01);
  MatD a = MatD::Ones(2, 2);
  VecD b = VecD::Ones(3);

  opt.begin_step();
  opt.update(a, MatD(MatD::Ones(2, 2)));
  opt.update(b, VecD(VecD::Ones(3)));

  opt.begin_step();
  CHECK_THROWS_AS(opt.update(b, VecD(VecD::Ones(3))), Error);  // slot 0 was 2x2

  Adam<double> fresh(0.01);
  fresh.begin_step();
  MatD p = MatD::Ones(2, 2);
  MatD wrong = MatD::Ones(2, 3);
  CHECK_THROWS_AS(fresh.update(p, wrong), Error);
}

TEST_CASE("adam minimizes a quadratic") {
  Adam<double> opt(0.1);
  VecD x = (VecD(2) << -4.0, 9.0).finished();
  const VecD target = (VecD(2) << 3.0, -1.0).finished();
  for (int s = 0; s < 800; ++s) {
    opt.begin_step();
    const VecD g = 2.0 * (x - target);
    opt.update(x, g);
  }
  CHECK((x - target).norm() < 1e-3);
}
