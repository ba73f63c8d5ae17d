#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

#include "crosscog/corpus.hpp"
#include "crosscog/embed.hpp"
#include "crosscog/model.hpp"

namespace crosscog {

struct TrainConfig {
  int d = 64;
  std::vector<int> mapper_hidden = {512, 256};
  int head_hidden = 16;
  CdmVariant variant = CdmVariant::kancd;
  int batch_size = 256;
  double learning_rate = 2e-3;  // grid: 1e-5, 5e-5, 1e-4, 2.5e-4, 5e-4, 2e-3
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  std::vector<double> domain_weights;  // empty = uniform 1/M
  Ablation ablation = Ablation::none;
  bool pooled_validation = false;  // default: mean of per-domain val AUC
  std::ostream* epoch_log = nullptr;

  std::string to_json() const;
};

/// Binary cross-entropy with the probability clamped to [1e-7, 1-1e-7].
inline double bce_loss(double p, int y) {
  const double q = std::min(1.0 - 1e-7, std::max(1e-7, p));
  return y ? -std::log(q) : -std::log(1.0 - q);
}

/// Standard-normal stand-in vectors keyed by entity id, for the ablation
/// that strips textual profiles. Stable under record reordering.
DomainVectors random_vectors(const Domain& domain, int d_l, std::uint64_t seed);

/// Cognitive-space positions of every entity in one domain.
struct DomainCogVectors {
  MatD students;   // d x S
  MatD exercises;  // d x E
  MatD concepts;   // d x K
};

/// Applies the three mappers (or passes language vectors through under
/// no_lcm). The workhorse of validation, inference, and diagnosis.
DomainCogVectors map_domain(const ModelParams<double>& params, Ablation ablation,
                            const DomainVectors& vectors);

/// Per-record correctness probabilities under fixed parameters.
std::vector<double> predict_records(const ModelParams<double>& params,
                                    const DomainCogVectors& cog,
                                    const Domain& domain,
                                    std::span<const ResponseRecord> records);

/// The multi-domain objective sum_m w_m * meanBCE(train_m) at fixed
/// parameters, no update.
double evaluate_loss(const ModelParams<double>& params,
                     const std::vector<SplitDomain>& splits,
                     const std::vector<DomainVectors>& vectors,
                     const TrainConfig& cfg);

TrainedModel train_multi_domain(const std::vector<SplitDomain>& splits,
                                const std::vector<DomainVectors>& vectors,
                                const TrainConfig& cfg);

}  // namespace crosscog
