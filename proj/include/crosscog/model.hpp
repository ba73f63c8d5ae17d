#pragma once

#include <string>
#include <vector>

#include "crosscog/cdm.hpp"
#include "crosscog/mapper.hpp"

namespace crosscog {

enum class Ablation { none, no_tcp, no_lcm };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_tcp: return "no_tcp";
    case Ablation::no_lcm: return "no_lcm";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no_tcp") return Ablation::no_tcp;
  if (s == "no_lcm") return Ablation::no_lcm;
  throw Error(ErrorCode::ConfigError, "unknown ablation '" + s + "'");
}

/// Everything trainable: the three entity mappers plus the interaction
/// function. Under no_lcm the mappers have zero layers and entities feed the
/// CDM directly (cdm.d equals the language dimension then).
template <class Scalar>
struct ModelParams {
  Mlp<Scalar> f_s, f_e, f_c;
  CdmParams<Scalar> cdm;
};

/// Fixed-order tensor walk shared by the optimizer, the checkpoint writer,
/// and the digest. fn takes (std::string name, tensor&) where tensor is a
/// Mat or Vec.
template <class Scalar, class Fn>
void for_each_tensor(ModelParams<Scalar>& m, Fn&& fn) {
  auto visit_mlp = [&](const char* prefix, Mlp<Scalar>& mlp) {
    for (std::size_t l = 0; l < mlp.W.size(); ++l) {
      fn(std::string(prefix) + ".W" + std::to_string(l), mlp.W[l]);
      fn(std::string(prefix) + ".b" + std::to_string(l), mlp.b[l]);
    }
  };
  visit_mlp("f_s", m.f_s);
  visit_mlp("f_e", m.f_e);
  visit_mlp("f_c", m.f_c);
  for_each_tensor(m.cdm, [&](const char* name, Vec<Scalar>& t) { fn(std::string(name), t); });
}

template <class Scalar, class Fn>
void for_each_tensor(const ModelParams<Scalar>& m, Fn&& fn) {
  for_each_tensor(const_cast<ModelParams<Scalar>&>(m),
                  [&](const std::string& name, const auto& t) { fn(name, t); });
}

struct ModelMeta {
  std::string tem_id;
  Ablation ablation = Ablation::none;
  int d = 0;
  int d_l = 0;
  int head_hidden = 0;
  std::vector<int> mapper_hidden;
  std::uint64_t seed = 0;
  std::vector<std::string> source_domains;
  std::vector<double> val_auc_per_domain;  // at the kept snapshot
  double val_auc_mean = 0.0;
  std::string config_echo_json;  // serialized train config, informational
};

struct TrainedModel {
  ModelParams<double> params;
  ModelMeta meta;
};

/// SHA-256 over the canonical single-precision serialization of all tensors
/// (names, shapes, little-endian f32 values in visit order). The frozen-model
/// contract compares this before and after inference.
std::string param_digest(const ModelParams<double>& params);

void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace crosscog
