#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crosscog/dense.hpp"
#include "crosscog/errors.hpp"
#include "crosscog/rng.hpp"

namespace crosscog {

enum class CdmVariant { mirt, ncdm, kancd };

inline const char* to_string(CdmVariant v) {
  switch (v) {
    case CdmVariant::mirt: return "mirt";
    case CdmVariant::ncdm: return "ncdm";
    case CdmVariant::kancd: return "kancd";
  }
  return "?";
}

inline CdmVariant parse_cdm_variant(const std::string& s) {
  if (s == "mirt") return CdmVariant::mirt;
  if (s == "ncdm") return CdmVariant::ncdm;
  if (s == "kancd") return CdmVariant::kancd;
  throw Error(ErrorCode::ConfigError, "unknown cdm variant '" + s + "'");
}

/// Interaction-function parameters. Everything is sized by the cognitive
/// dimension d or the per-concept head width, never by a concept count, so
/// one parameter set serves domains with any K.
///
/// mirt   p = sigmoid(h_s·h_e + w_b·h_e)
/// ncdm   per q-active concept k: input_k = disc·(Mas_k − diff_k) with
///        Mas_k = sigmoid(h_s·h_ck), diff_k = sigmoid(h_e·h_ck),
///        disc = sigmoid(w_d·h_e); p = sigmoid(mean_k head(input_k)) where
///        head is a shared scalar→hidden→scalar MLP with non-negative
///        weights (kept feasible by project_nonneg after each step)
/// kancd  ncdm with diff_k = sigmoid(scale·(h_e·h_ck) + bias)
template <class Scalar>
struct CdmParams {
  CdmVariant variant = CdmVariant::kancd;
  int d = 0;
  int head_hidden = 0;

  Vec<Scalar> w_b;         // mirt, length d
  Vec<Scalar> w_d;         // ncdm/kancd, length d
  Vec<Scalar> head_w1;     // head_hidden, >= 0
  Vec<Scalar> head_b1;     // head_hidden
  Vec<Scalar> head_w2;     // head_hidden, >= 0
  Vec<Scalar> head_b2;     // 1
  Vec<Scalar> diff_scale;  // 1, kancd only
  Vec<Scalar> diff_bias;   // 1, kancd only

  bool has_head() const { return variant != CdmVariant::mirt; }
};

/// Visits active tensors in a fixed order (checkpoint sections and Adam slot
/// identity both depend on it).
template <class Scalar, class Fn>
void for_each_tensor(CdmParams<Scalar>& p, Fn&& fn) {
  if (p.variant == CdmVariant::mirt) {
    fn("cdm.w_b", p.w_b);
    return;
  }
  fn("cdm.w_d", p.w_d);
  fn("cdm.head_w1", p.head_w1);
  fn("cdm.head_b1", p.head_b1);
  fn("cdm.head_w2", p.head_w2);
  fn("cdm.head_b2", p.head_b2);
  if (p.variant == CdmVariant::kancd) {
    fn("cdm.diff_scale", p.diff_scale);
    fn("cdm.diff_bias", p.diff_bias);
  }
}

template <class Scalar, class Fn>
void for_each_tensor(const CdmParams<Scalar>& p, Fn&& fn) {
  for_each_tensor(const_cast<CdmParams<Scalar>&>(p),
                  [&](const char* name, const Vec<Scalar>& t) { fn(name, t); });
}

template <class Scalar>
CdmParams<Scalar> init_cdm(CdmVariant variant, int d, int head_hidden,
                           std::uint64_t seed) {
  if (d < 1) throw Error(ErrorCode::ConfigError, "cdm needs d >= 1");
  CdmParams<Scalar> p;
  p.variant = variant;
  p.d = d;
  auto xavier = [](Eigen::Index len, int fan_in, int fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Vec<Scalar> v(len);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(dist(rng));
    return v;
  };
  if (variant == CdmVariant::mirt) {
    auto rng = make_rng(seed, 0);
    p.w_b = xavier(d, d, 1, rng);
    return p;
  }
  if (head_hidden < 1) throw Error(ErrorCode::ConfigError, "cdm head needs hidden >= 1");
  p.head_hidden = head_hidden;
  auto rng0 = make_rng(seed, 0);
  p.w_d = xavier(d, d, 1, rng0);
  auto rng1 = make_rng(seed, 1);
  p.head_w1 = xavier(head_hidden, 1, head_hidden, rng1).cwiseAbs();  // start feasible
  p.head_b1 = Vec<Scalar>::Zero(head_hidden);
  auto rng2 = make_rng(seed, 2);
  p.head_w2 = xavier(head_hidden, head_hidden, 1, rng2).cwiseAbs();
  p.head_b2 = Vec<Scalar>::Zero(1);
  if (variant == CdmVariant::kancd) {
    p.diff_scale = Vec<Scalar>::Ones(1);
    p.diff_bias = Vec<Scalar>::Zero(1);
  }
  return p;
}

/// Clamps the monotonicity-carrying head weights at zero. No-op for mirt.
template <class Scalar>
void project_nonneg(CdmParams<Scalar>& p) {
  if (!p.has_head()) return;
  p.head_w1 = p.head_w1.cwiseMax(Scalar(0));
  p.head_w2 = p.head_w2.cwiseMax(Scalar(0));
}

/// Mastery read-out, one entry per domain concept; shared by all variants.
template <class Scalar>
Vec<Scalar> mastery(const CdmParams<Scalar>& p,
                    const Eigen::Ref<const Vec<Scalar>>& h_s,
                    const Mat<Scalar>& H_c) {
  if (h_s.size() != p.d || H_c.rows() != p.d)
    throw Error(ErrorCode::DimMismatch, "mastery inputs disagree with cdm d");
  return sigmoid((H_c.transpose() * h_s).array()).matrix();
}

/// Rows = students, cols = concepts.
template <class Scalar>
Mat<Scalar> mastery_matrix(const CdmParams<Scalar>& p, const Mat<Scalar>& H_s,
                           const Mat<Scalar>& H_c) {
  if (H_s.rows() != p.d || H_c.rows() != p.d)
    throw Error(ErrorCode::DimMismatch, "mastery inputs disagree with cdm d");
  return sigmoid((H_s.transpose() * H_c).array()).matrix();
}

/// Intermediates from one predict() call, consumed by cdm_backward.
template <class Scalar>
struct CdmTrace {
  Scalar z = 0;  // final pre-sigmoid logit
  Scalar p = 0;
  // head variants only
  Vec<Scalar> mas, diff, raw;  // per active concept; raw = h_e·h_ck
  Scalar disc = 0;
  Vec<Scalar> input;
  Mat<Scalar> hid_pre;  // head_hidden x active
  Vec<Scalar> zk;
};

template <class Scalar>
Scalar predict(const CdmParams<Scalar>& p, const Eigen::Ref<const Vec<Scalar>>& h_s,
               const Eigen::Ref<const Vec<Scalar>>& h_e, const Mat<Scalar>& H_c,
               const std::vector<int>& active, CdmTrace<Scalar>* trace = nullptr) {
  if (h_s.size() != p.d || h_e.size() != p.d || H_c.rows() != p.d)
    throw Error(ErrorCode::DimMismatch, "predict inputs disagree with cdm d");
  if (active.empty())
    throw Error(ErrorCode::EmptyQRow, "exercise touches no concepts");

  if (p.variant == CdmVariant::mirt) {
    const Scalar z = h_s.dot(h_e) + p.w_b.dot(h_e);
    if (trace) {
      trace->z = z;
      trace->p = sigmoid(z);
      return trace->p;
    }
    return sigmoid(z);
  }

  const auto A = static_cast<Eigen::Index>(active.size());
  CdmTrace<Scalar> local;
  CdmTrace<Scalar>& t = trace ? *trace : local;
  t.mas.resize(A);
  t.diff.resize(A);
  t.raw.resize(A);
  t.input.resize(A);
  t.hid_pre.resize(p.head_hidden, A);
  t.zk.resize(A);

  t.disc = sigmoid(p.w_d.dot(h_e));
  for (Eigen::Index a = 0; a < A; ++a) {
    const int k = active[static_cast<std::size_t>(a)];
    if (k < 0 || k >= H_c.cols())
      throw Error(ErrorCode::DimMismatch, "q row references concept out of range");
    t.raw[a] = h_e.dot(H_c.col(k));
    t.mas[a] = sigmoid(h_s.dot(H_c.col(k)));
    t.diff[a] = p.variant == CdmVariant::kancd
                    ? sigmoid(p.diff_scale[0] * t.raw[a] + p.diff_bias[0])
                    : sigmoid(t.raw[a]);
    t.input[a] = t.disc * (t.mas[a] - t.diff[a]);
    t.hid_pre.col(a) = p.head_w1 * t.input[a] + p.head_b1;
    t.zk[a] = p.head_w2.dot(relu(t.hid_pre.col(a).array()).matrix()) + p.head_b2[0];
  }
  t.z = t.zk.mean();
  t.p = sigmoid(t.z);
  return t.p;
}

/// Head-only evaluation from given mastery/difficulty/discrimination values;
/// the entry point for monotonicity sweeps. Head variants only.
template <class Scalar>
Scalar predict_from_mastery(const CdmParams<Scalar>& p, const Vec<Scalar>& mas,
                            const Vec<Scalar>& diff, Scalar disc) {
  if (!p.has_head())
    throw Error(ErrorCode::ConfigError, "mirt has no mastery-driven head");
  if (mas.size() != diff.size() || mas.size() == 0)
    throw Error(ErrorCode::EmptyQRow, "mastery sweep needs matched non-empty inputs");
  Vec<Scalar> zk(mas.size());
  for (Eigen::Index a = 0; a < mas.size(); ++a) {
    const Scalar input = disc * (mas[a] - diff[a]);
    zk[a] = p.head_w2.dot(relu((p.head_w1 * input + p.head_b1).array()).matrix()) +
            p.head_b2[0];
  }
  return sigmoid(zk.mean());
}

template <class Scalar>
struct CdmGrad {
  Vec<Scalar> w_b, w_d, head_w1, head_b1, head_w2, head_b2, diff_scale, diff_bias;

  explicit CdmGrad(const CdmParams<Scalar>& p) {
    auto zero_like = [](const Vec<Scalar>& t) { return Vec<Scalar>::Zero(t.size()).eval(); };
    w_b = zero_like(p.w_b);
    w_d = zero_like(p.w_d);
    head_w1 = zero_like(p.head_w1);
    head_b1 = zero_like(p.head_b1);
    head_w2 = zero_like(p.head_w2);
    head_b2 = zero_like(p.head_b2);
    diff_scale = zero_like(p.diff_scale);
    diff_bias = zero_like(p.diff_bias);
  }

  void set_zero() {
    w_b.setZero();
    w_d.setZero();
    head_w1.setZero();
    head_b1.setZero();
    head_w2.setZero();
    head_b2.setZero();
    diff_scale.setZero();
    diff_bias.setZero();
  }
};

template <class Scalar, class Fn>
void for_each_tensor(CdmParams<Scalar>& p, CdmGrad<Scalar>& g, Fn&& fn) {
  if (p.variant == CdmVariant::mirt) {
    fn(p.w_b, g.w_b);
    return;
  }
  fn(p.w_d, g.w_d);
  fn(p.head_w1, g.head_w1);
  fn(p.head_b1, g.head_b1);
  fn(p.head_w2, g.head_w2);
  fn(p.head_b2, g.head_b2);
  if (p.variant == CdmVariant::kancd) {
    fn(p.diff_scale, g.diff_scale);
    fn(p.diff_bias, g.diff_bias);
  }
}

/// Reverse-mode pass from d_z = dL/dz (gradient at the final pre-sigmoid
/// logit). Adds into every output buffer, so one entity shared by several
/// records accumulates naturally. dH_c gets contributions only on q-active
/// columns; mirt leaves it untouched.
template <class Scalar>
void cdm_backward(const CdmParams<Scalar>& p, const Eigen::Ref<const Vec<Scalar>>& h_s,
                  const Eigen::Ref<const Vec<Scalar>>& h_e, const Mat<Scalar>& H_c,
                  const std::vector<int>& active, const CdmTrace<Scalar>& t,
                  Scalar d_z, CdmGrad<Scalar>& grad, Eigen::Ref<Vec<Scalar>> dh_s,
                  Eigen::Ref<Vec<Scalar>> dh_e, Mat<Scalar>& dH_c) {
  if (dh_s.size() != p.d || dh_e.size() != p.d || dH_c.rows() != p.d ||
      dH_c.cols() != H_c.cols())
    throw Error(ErrorCode::DimMismatch, "backward buffers disagree with cdm shapes");

  if (p.variant == CdmVariant::mirt) {
    grad.w_b += d_z * h_e;
    dh_s += d_z * h_e;
    dh_e += d_z * (h_s + p.w_b);
    return;
  }

  const auto A = static_cast<Eigen::Index>(active.size());
  const Scalar dzk = d_z / static_cast<Scalar>(A);
  Scalar ddisc = 0;
  for (Eigen::Index a = 0; a < A; ++a) {
    const int k = active[static_cast<std::size_t>(a)];
    const Vec<Scalar> hid = relu(t.hid_pre.col(a).array()).matrix();
    grad.head_w2 += dzk * hid;
    grad.head_b2[0] += dzk;
    const Vec<Scalar> dpre =
        (dzk * p.head_w2.array() *
         (t.hid_pre.col(a).array() > Scalar(0)).template cast<Scalar>())
            .matrix();
    grad.head_w1 += dpre * t.input[a];
    grad.head_b1 += dpre;
    const Scalar dinput = p.head_w1.dot(dpre);

    const Scalar dmas = dinput * t.disc;
    const Scalar ddiff = -dinput * t.disc;
    ddisc += dinput * (t.mas[a] - t.diff[a]);

    const Scalar dmas_logit = dmas * t.mas[a] * (Scalar(1) - t.mas[a]);
    dh_s += dmas_logit * H_c.col(k);
    dH_c.col(k) += dmas_logit * h_s;

    const Scalar ddiff_logit = ddiff * t.diff[a] * (Scalar(1) - t.diff[a]);
    if (p.variant == CdmVariant::kancd) {
      grad.diff_scale[0] += ddiff_logit * t.raw[a];
      grad.diff_bias[0] += ddiff_logit;
      const Scalar draw = ddiff_logit * p.diff_scale[0];
      dh_e += draw * H_c.col(k);
      dH_c.col(k) += draw * h_e;
    } else {
      dh_e += ddiff_logit * H_c.col(k);
      dH_c.col(k) += ddiff_logit * h_e;
    }
  }
  const Scalar ddisc_logit = ddisc * t.disc * (Scalar(1) - t.disc);
  grad.w_d += ddisc_logit * h_e;
  dh_e += ddisc_logit * p.w_d;
}

}  // namespace crosscog
