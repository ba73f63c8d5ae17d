#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "crosscog/cdm.hpp"
#include "crosscog/errors.hpp"
#include "doctest.h"

using namespace crosscog;

namespace {

struct Toy {
  CdmParams<double> params;
  VecD h_s, h_e;
  MatD H_c;
  std::vector<int> active;
};

Toy make_toy(CdmVariant variant, int d, int K, std::uint64_t seed) {
  Toy toy;
  toy.params = init_cdm<double>(variant, d, variant == CdmVariant::mirt ? 0 : 4, seed);
  if (toy.params.has_head()) {
    // Push the head off its init point so every tensor has nonzero gradient
    // and some hidden units sit on each side of the relu.
    for (int j = 0; j < toy.params.head_b1.size(); ++j)
      toy.params.head_b1[j] = (j % 2 ? -0.07 : 0.11);
    toy.params.head_b2[0] = 0.03;
  }
  if (variant == CdmVariant::kancd) {
    toy.params.diff_scale[0] = 1.1;
    toy.params.diff_bias[0] = -0.2;
  }
  auto rng = make_rng(seed, 50);
  std::normal_distribution<double> gauss(0.0, 0.6);
  toy.h_s = VecD(d);
  toy.h_e = VecD(d);
  toy.H_c = MatD(d, K);
  for (int i = 0; i < d; ++i) toy.h_s[i] = gauss(rng);
  for (int i = 0; i < d; ++i) toy.h_e[i] = gauss(rng);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < d; ++i) toy.H_c(i, k) = gauss(rng);
  toy.active = {0, 2};
  return toy;
}

double pred(const Toy& t) {
  return predict<double>(t.params, t.h_s, t.h_e, t.H_c, t.active);
}

double central_diff(double& slot, double h, const Toy& t) {
  const double saved = slot;
  slot = saved + h;
  const double up = pred(t);
  slot = saved - h;
  const double down = pred(t);
  slot = saved;
  return (up - down) / (2.0 * h);
}

bool close_rel(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= abs_floor + rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("cdm backward matches central finite differences on every input") {
  const double h = 1e-6;
  for (CdmVariant variant : {CdmVariant::mirt, CdmVariant::ncdm, CdmVariant::kancd}) {
    CAPTURE(to_string(variant));
    Toy toy = make_toy(variant, 8, 3, 211);

    CdmTrace<double> trace;
    const double p = predict<double>(toy.params, toy.h_s, toy.h_e, toy.H_c,
                                     toy.active, &trace);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    if (toy.params.has_head()) {
      // Keep the finite differences away from relu kinks.
      CHECK(trace.hid_pre.array().abs().minCoeff() > 1e-4);
    }

    // Gradients are reported at the logit; seed with dz = dp/dz = p(1-p) so
    // the analytic result is directly dp/dtheta.
    const double dz = p * (1.0 - p);
    CdmGrad<double> grad(toy.params);
    VecD dh_s = VecD::Zero(8), dh_e = VecD::Zero(8);
    MatD dH_c = MatD::Zero(8, 3);
    cdm_backward<double>(toy.params, toy.h_s, toy.h_e, toy.H_c, toy.active, trace,
                         dz, grad, dh_s, dh_e, dH_c);

    for_each_tensor(toy.params, grad,
                    [&](VecD& param, VecD& analytic) {
                      for (int i = 0; i < param.size(); ++i) {
                        const double fd = central_diff(param[i], h, toy);
                        CHECK_MESSAGE(close_rel(analytic[i], fd, 1e-4, 1e-8),
                                      to_string(variant) << " param entry " << i
                                                         << ": " << analytic[i]
                                                         << " vs fd " << fd);
                      }
                    });
    for (int i = 0; i < 8; ++i) {
      const double fd_s = central_diff(toy.h_s[i], h, toy);
      CHECK_MESSAGE(close_rel(dh_s[i], fd_s, 1e-4, 1e-8),
                    to_string(variant) << " dh_s[" << i << "]");
      const double fd_e = central_diff(toy.h_e[i], h, toy);
      CHECK_MESSAGE(close_rel(dh_e[i], fd_e, 1e-4, 1e-8),
                    to_string(variant) << " dh_e[" << i << "]");
    }
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 8; ++i) {
        const double fd = central_diff(toy.H_c(i, k), h, toy);
        CHECK_MESSAGE(close_rel(dH_c(i, k), fd, 1e-4, 1e-8),
                      to_string(variant) << " dH_c(" << i << "," << k << ")");
      }
    // Concept 1 is q-inactive; mirt never touches H_c at all.
    CHECK(dH_c.col(1).isZero());
  }
}

TEST_CASE("backward accumulates across records") {
  Toy toy = make_toy(CdmVariant::ncdm, 8, 3, 212);
  CdmTrace<double> trace;
  predict<double>(toy.params, toy.h_s, toy.h_e, toy.H_c, toy.active, &trace);

  CdmGrad<double> grad(toy.params);
  VecD dh_s = VecD::Zero(8), dh_e = VecD::Zero(8);
  MatD dH_c = MatD::Zero(8, 3);
  cdm_backward<double>(toy.params, toy.h_s, toy.h_e, toy.H_c, toy.active, trace,
                       0.25, grad, dh_s, dh_e, dH_c);
  const VecD once_wd = grad.w_d;
  const VecD once_dhs = dh_s;
  cdm_backward<double>(toy.params, toy.h_s, toy.h_e, toy.H_c, toy.active, trace,
                       0.25, grad, dh_s, dh_e, dH_c);
  CHECK((grad.w_d - 2.0 * once_wd).norm() == doctest::Approx(0.0));
  CHECK((dh_s - 2.0 * once_dhs).norm() == doctest::Approx(0.0));
}

TEST_CASE("identical student and exercise vectors score one half at init") {
  // mas_k == diff_k cancels the head input; a fresh head with zero biases
  // then emits logit 0 for ncdm and for kancd with identity difficulty map.
  for (CdmVariant variant : {CdmVariant::ncdm, CdmVariant::kancd}) {
    auto params = init_cdm<double>(variant, 6, 5, 42);
    auto rng = make_rng(9, 9);
    std::normal_distribution<double> gauss(0.0, 1.0);
    VecD v(6);
    for (int i = 0; i < 6; ++i) v[i] = gauss(rng);
    MatD H_c(6, 2);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 6; ++i) H_c(i, k) = gauss(rng);
    const double p =
        predict<double>(params, v, v, H_c, std::vector<int>{0, 1});
    CHECK(p == doctest::Approx(0.5).epsilon(1e-12));

    // An easier difficulty map (negative bias) breaks the cancellation with
    // positive head input, which the fresh non-negative head passes through.
    if (variant == CdmVariant::kancd) {
      params.diff_bias[0] = -0.5;
      const double shifted =
          predict<double>(params, v, v, H_c, std::vector<int>{0, 1});
      CHECK(shifted > 0.5 + 1e-6);
    }
  }
}

TEST_CASE("kancd with identity difficulty map matches ncdm predictions") {
  auto ncdm = init_cdm<double>(CdmVariant::ncdm, 6, 5, 42);
  auto kancd = init_cdm<double>(CdmVariant::kancd, 6, 5, 42);
  REQUIRE(kancd.diff_scale[0] == 1.0);
  REQUIRE(kancd.diff_bias[0] == 0.0);

  auto rng = make_rng(10, 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecD h_s(6), h_e(6);
  MatD H_c(6, 3);
  for (int i = 0; i < 6; ++i) h_s[i] = gauss(rng);
  for (int i = 0; i < 6; ++i) h_e[i] = gauss(rng);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 6; ++i) H_c(i, k) = gauss(rng);

  const std::vector<int> active{0, 1, 2};
  const double pn = predict<double>(ncdm, h_s, h_e, H_c, active);
  const double pk = predict<double>(kancd, h_s, h_e, H_c, active);
  CHECK(pn == doctest::Approx(pk).epsilon(1e-15));
}

TEST_CASE("mirt prediction has the closed dot-product form") {
  auto params = init_cdm<double>(CdmVariant::mirt, 4, 0, 7);
  VecD h_s(4), h_e(4);
  h_s << 0.5, -1.0, 0.25, 2.0;
  h_e << 1.0, 0.5, -0.5, 0.0;
  MatD H_c = MatD::Zero(4, 2);
  const double z = h_s.dot(h_e) + params.w_b.dot(h_e);
  const double p =
      predict<double>(params, h_s, h_e, H_c, std::vector<int>{0});
  CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-15));

  // Zero exercise vector kills both terms regardless of parameters.
  const double p0 = predict<double>(params, h_s, VecD(VecD::Zero(4)), H_c,
                                    std::vector<int>{0});
  CHECK(p0 == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("mastery is the sigmoid of concept projections") {
  auto params = init_cdm<double>(CdmVariant::kancd, 5, 3, 3);
  auto rng = make_rng(11, 4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecD h_s(5);
  for (int i = 0; i < 5; ++i) h_s[i] = gauss(rng);
  MatD H_c(5, 4);
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 5; ++i) H_c(i, k) = gauss(rng);

  const VecD m = mastery<double>(params, h_s, H_c);
  REQUIRE(m.size() == 4);
  for (int k = 0; k < 4; ++k) {
    const double z = H_c.col(k).dot(h_s);
    CHECK(m[k] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-14));
  }

  MatD H_s(5, 2);
  H_s.col(0) = h_s;
  H_s.col(1) = -h_s;
  const MatD mm = mastery_matrix<double>(params, H_s, H_c);
  REQUIRE(mm.rows() == 2);
  REQUIRE(mm.cols() == 4);
  CHECK((mm.row(0).transpose() - m).norm() == doctest::Approx(0.0));
  for (int k = 0; k < 4; ++k)
    CHECK(mm(1, k) == doctest::Approx(1.0 - mm(0, k)).epsilon(1e-12));
}

TEST_CASE("projected heads never decrease under raised mastery") {
  auto rng = make_rng(501, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (CdmVariant variant : {CdmVariant::ncdm, CdmVariant::kancd}) {
    CAPTURE(to_string(variant));
    auto params = init_cdm<double>(variant, 4, 6, 77);
    // Garble the head, then restore feasibility the way training does.
    for (int j = 0; j < params.head_w1.size(); ++j) params.head_w1[j] = gauss(rng);
    for (int j = 0; j < params.head_w2.size(); ++j) params.head_w2[j] = gauss(rng);
    for (int j = 0; j < params.head_b1.size(); ++j) params.head_b1[j] = gauss(rng) * 0.3;
    params.head_b2[0] = gauss(rng) * 0.3;
    project_nonneg(params);
    CHECK(params.head_w1.minCoeff() >= 0.0);
    CHECK(params.head_w2.minCoeff() >= 0.0);
    // Projection may zero both weights of every unit; keep one alive so the
    // strictness counter below has something to count.
    params.head_w1[0] = 0.8;
    params.head_w2[0] = 0.9;
    params.head_b1[0] = 0.0;

    int strict = 0;
    for (int trial = 0; trial < 2000; ++trial) {
      const int A = 1 + static_cast<int>(rng() % 4);
      VecD lo(A), hi(A), diff(A);
      for (int a = 0; a < A; ++a) {
        const double u = unit(rng), v = unit(rng);
        lo[a] = std::min(u, v);
        hi[a] = std::max(u, v);
        diff[a] = unit(rng);
      }
      const double disc = unit(rng);
      const double p_lo = predict_from_mastery<double>(params, lo, diff, disc);
      const double p_hi = predict_from_mastery<double>(params, hi, diff, disc);
      CHECK(p_hi >= p_lo - 1e-12);
      if (p_hi > p_lo + 1e-12) ++strict;
    }
    CHECK(strict > 0);  // the head is not degenerate for these parameters
  }

  auto mirt = init_cdm<double>(CdmVariant::mirt, 4, 0, 1);
  VecD one = VecD::Ones(1);
  CHECK_THROWS_AS(predict_from_mastery<double>(mirt, one, one, 0.5), Error);
}

TEST_CASE("parameters are concept-count agnostic") {
  auto params = init_cdm<double>(CdmVariant::kancd, 8, 4, 99);
  params.diff_scale[0] = 0.9;
  params.diff_bias[0] = 0.1;

  auto rng = make_rng(88, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecD h_s(8), h_e(8);
  for (int i = 0; i < 8; ++i) h_s[i] = gauss(rng);
  for (int i = 0; i < 8; ++i) h_e[i] = gauss(rng);

  MatD small(8, 3);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 8; ++i) small(i, k) = gauss(rng);

  // Same three concept vectors buried in a 17-wide bank.
  MatD big = MatD::Zero(8, 17);
  for (int k = 0; k < 17; ++k)
    for (int i = 0; i < 8; ++i) big(i, k) = gauss(rng);
  big.col(4) = small.col(0);
  big.col(9) = small.col(1);
  big.col(13) = small.col(2);

  const double p_small =
      predict<double>(params, h_s, h_e, small, std::vector<int>{0, 1, 2});
  const double p_big =
      predict<double>(params, h_s, h_e, big, std::vector<int>{4, 9, 13});
  CHECK(p_small == p_big);

  const VecD m_small = mastery<double>(params, h_s, small);
  const VecD m_big = mastery<double>(params, h_s, big);
  CHECK(m_big.size() == 17);
  CHECK(m_big[4] == m_small[0]);
  CHECK(m_big[9] == m_small[1]);
  CHECK(m_big[13] == m_small[2]);
}

TEST_CASE("cdm input validation") {
  auto params = init_cdm<double>(CdmVariant::ncdm, 4, 3, 5);
  VecD ok = VecD::Zero(4);
  VecD wrong = VecD::Zero(5);
  MatD H_c = MatD::Zero(4, 2);

  CHECK_THROWS_AS(predict<double>(params, wrong, ok, H_c, std::vector<int>{0}),
                  Error);
  CHECK_THROWS_AS(predict<double>(params, ok, ok, H_c, std::vector<int>{}), Error);
  CHECK_THROWS_AS(predict<double>(params, ok, ok, H_c, std::vector<int>{2}), Error);
  CHECK_THROWS_AS(predict<double>(params, ok, ok, H_c, std::vector<int>{-1}), Error);
  CHECK_THROWS_AS(mastery<double>(params, wrong, H_c), Error);

  VecD a = VecD::Ones(2), b = VecD::Ones(3);
  CHECK_THROWS_AS(predict_from_mastery<double>(params, a, b, 0.5), Error);
  CHECK_THROWS_AS(
      predict_from_mastery<double>(params, VecD(), VecD(), 0.5), Error);

  CHECK_THROWS_AS((init_cdm<double>(CdmVariant::ncdm, 0, 3, 1)), Error);
  CHECK_THROWS_AS((init_cdm<double>(CdmVariant::ncdm, 4, 0, 1)), Error);
  CHECK_THROWS_AS(parse_cdm_variant("irt"), Error);
  CHECK(parse_cdm_variant("mirt") == CdmVariant::mirt);
  CHECK(parse_cdm_variant("ncdm") == CdmVariant::ncdm);
  CHECK(parse_cdm_variant("kancd") == CdmVariant::kancd);
}

TEST_CASE("tensor visitation order is fixed per variant") {
  auto collect = [](CdmVariant v) {
    auto params = init_cdm<double>(v, 4, v == CdmVariant::mirt ? 0 : 3, 1);
    std::vector<std::string> names;
    for_each_tensor(params,
                    [&](const char* name, const VecD&) { names.push_back(name); });
    return names;
  };
  CHECK(collect(CdmVariant::mirt) == std::vector<std::string>{"cdm.w_b"});
  CHECK(collect(CdmVariant::ncdm) ==
        std::vector<std::string>{"cdm.w_d", "cdm.head_w1", "cdm.head_b1",
                                 "cdm.head_w2", "cdm.head_b2"});
  CHECK(collect(CdmVariant::kancd) ==
        std::vector<std::string>{"cdm.w_d", "cdm.head_w1", "cdm.head_b1",
                                 "cdm.head_w2", "cdm.head_b2", "cdm.diff_scale",
                                 "cdm.diff_bias"});
}
