#pragma once

#include <span>
#include <string>
#include <vector>

#include "crosscog/corpus.hpp"
#include "crosscog/dense.hpp"
#include "crosscog/embed.hpp"
#include "crosscog/model.hpp"
#include "crosscog/profiles.hpp"
#include "crosscog/train.hpp"

namespace crosscog {

/// Frozen-model read-out of one unseen domain. `model_digest` is the
/// parameter digest taken before the pass and compared after it, so the
/// stored value doubles as the frozen-contract witness.
struct TargetDiagnosis {
  std::string domain_name;
  DomainCogVectors cog;             // mapped entity vectors, columns by dense index
  MatD mastery;                     // S x K
  std::vector<double> predictions;  // aligned with the records argument
  std::string model_digest;
};

/// Diagnoses a domain the model never trained on. Profiles and ACR come from
/// the target's train split alone; predictions are computed on `records`
/// (callers usually pass the test split). No parameter is touched.
TargetDiagnosis diagnose_target(const TrainedModel& model, const SplitDomain& target,
                                TextEmbedder& tem,
                                std::span<const ResponseRecord> records);

inline TargetDiagnosis diagnose_target(const TrainedModel& model,
                                       const SplitDomain& target, TextEmbedder& tem) {
  return diagnose_target(model, target, tem, target.test);
}

struct EditOutcome {
  VecD mastery_before;  // K
  VecD mastery_after;
  std::vector<double> predictions_before;  // on the records argument
  std::vector<double> predictions_after;
};

/// Re-diagnoses one student after blending their pooled interaction vector
/// with a hypothetical one: combined = alpha*old + (1-alpha)*new, in language
/// space, then through the frozen student mapper. `diag` supplies the target
/// domain's exercise and concept vectors so editing many students stays cheap.
EditOutcome edit_profile(const TrainedModel& model, const SplitDomain& target,
                         const TargetDiagnosis& diag,
                         std::span<const InteractionProfile> old_interactions,
                         std::span<const InteractionProfile> new_interactions,
                         TextEmbedder& tem, std::span<const ResponseRecord> records,
                         double alpha = 0.7);

}  // namespace crosscog
