#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "crosscog/dense.hpp"
#include "crosscog/errors.hpp"

namespace crosscog {

/// Adam with bias correction. One instance owns the moments for a fixed set
/// of tensors, identified by the order in which update() is called inside a
/// begin_step()/update...() round; callers must keep that order stable.
template <class Scalar>
class Adam {
 public:
  explicit Adam(Scalar lr, Scalar beta1 = Scalar(0.9),
                Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void begin_step() {
    ++step_;
    cursor_ = 0;
  }

  template <class ParamDerived, class GradDerived>
  void update(Eigen::MatrixBase<ParamDerived>& param,
              const Eigen::MatrixBase<GradDerived>& grad) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
      throw Error(ErrorCode::DimMismatch, "adam gradient shape mismatch");
    if (cursor_ == slots_.size())
      slots_.push_back({Mat<Scalar>::Zero(param.rows(), param.cols()),
                        Mat<Scalar>::Zero(param.rows(), param.cols())});
    Slot& slot = slots_[cursor_++];
    if (slot.m.rows() != param.rows() || slot.m.cols() != param.cols())
      throw Error(ErrorCode::DimMismatch, "adam tensor order changed between steps");

    slot.m = beta1_ * slot.m + (Scalar(1) - beta1_) * grad.derived();
    slot.v.array() = beta2_ * slot.v.array() +
                     (Scalar(1) - beta2_) * grad.derived().array().square();
    const Scalar mc = Scalar(1) - std::pow(beta1_, Scalar(step_));
    const Scalar vc = Scalar(1) - std::pow(beta2_, Scalar(step_));
    param.derived().array() -=
        lr_ * (slot.m.array() / mc) / ((slot.v.array() / vc).sqrt() + eps_);
  }

  long step_count() const { return step_; }
  Scalar learning_rate() const { return lr_; }

 private:
  struct Slot {
    Mat<Scalar> m, v;
  };

  Scalar lr_, beta1_, beta2_, eps_;
  std::vector<Slot> slots_;
  std::size_t cursor_ = 0;
  long step_ = 0;
};

}  // namespace crosscog
