#include "crosscog/zeroshot.hpp"

#include <stdexcept>

#include "crosscog/cdm.hpp"
#include "crosscog/mapper.hpp"

namespace crosscog {
namespace {

void check_tem(const TrainedModel& model, TextEmbedder& tem) {
  if (model.meta.tem_id != tem.id())
    throw Error(ErrorCode::TemMismatch, "model was trained with '" + model.meta.tem_id +
                                            "' but got '" + tem.id() + "'");
  if (tem.dim() != model.meta.d_l)
    throw Error(ErrorCode::TemMismatch,
                "embedder dim " + std::to_string(tem.dim()) + " != model d_l " +
                    std::to_string(model.meta.d_l));
}

VecD map_student(const TrainedModel& model, const VecD& h_l) {
  if (model.meta.ablation == Ablation::no_lcm) return h_l;
  return forward(model.params.f_s, h_l);
}

}  // namespace

TargetDiagnosis diagnose_target(const TrainedModel& model, const SplitDomain& target,
                                TextEmbedder& tem,
                                std::span<const ResponseRecord> records) {
  if (target.train.empty())
    throw Error(ErrorCode::EmptyTargetTrain,
                "target domain '" + target.domain.name + "' has no train records");

  const std::string digest_before = param_digest(model.params);

  DomainVectors lang;
  if (model.meta.ablation == Ablation::no_tcp) {
    // Stand-in vectors; the embedder is not consulted, so no identity check.
    lang = random_vectors(target.domain, model.meta.d_l, model.meta.seed);
  } else {
    check_tem(model, tem);
    const DomainProfiles profiles = build_domain_profiles(target);
    lang = embed_domain(tem, target.domain, profiles);
  }

  TargetDiagnosis diag;
  diag.domain_name = target.domain.name;
  diag.cog = map_domain(model.params, model.meta.ablation, lang);
  diag.mastery = mastery_matrix(model.params.cdm, diag.cog.students, diag.cog.concepts);
  diag.predictions = predict_records(model.params, diag.cog, target.domain, records);

  const std::string digest_after = param_digest(model.params);
  if (digest_before != digest_after)
    throw std::logic_error("parameters changed during diagnosis");
  diag.model_digest = digest_after;
  return diag;
}

EditOutcome edit_profile(const TrainedModel& model, const SplitDomain& target,
                         const TargetDiagnosis& diag,
                         std::span<const InteractionProfile> old_interactions,
                         std::span<const InteractionProfile> new_interactions,
                         TextEmbedder& tem, std::span<const ResponseRecord> records,
                         double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw Error(ErrorCode::ConfigError, "alpha must be in [0,1]");
  if (new_interactions.empty())
    throw Error(ErrorCode::EmptyEdit, "no interactions to blend in");
  if (model.meta.ablation == Ablation::no_tcp)
    throw Error(ErrorCode::ConfigError,
                "profile editing needs textual profiles; model was trained without them");
  check_tem(model, tem);

  const VecD h_minus = student_language_vector(tem, old_interactions);
  const VecD h_plus = student_language_vector(tem, new_interactions);
  const VecD h_comb = alpha * h_minus + (1.0 - alpha) * h_plus;

  const VecD s_before = map_student(model, h_minus);
  const VecD s_after = map_student(model, h_comb);

  EditOutcome out;
  out.mastery_before = mastery<double>(model.params.cdm, s_before, diag.cog.concepts);
  out.mastery_after = mastery<double>(model.params.cdm, s_after, diag.cog.concepts);

  out.predictions_before.reserve(records.size());
  out.predictions_after.reserve(records.size());
  for (const auto& rec : records) {
    const auto it = target.domain.exercise_index.find(rec.exercise_id);
    if (it == target.domain.exercise_index.end())
      throw Error(ErrorCode::DanglingReference,
                  "unknown exercise '" + rec.exercise_id + "' in edit records");
    const auto& active = target.domain.q[static_cast<std::size_t>(it->second)];
    out.predictions_before.push_back(predict<double>(model.params.cdm, s_before,
                                             diag.cog.exercises.col(it->second),
                                             diag.cog.concepts, active));
    out.predictions_after.push_back(predict<double>(model.params.cdm, s_after,
                                            diag.cog.exercises.col(it->second),
                                            diag.cog.concepts, active));
  }
  return out;
}

}  // namespace crosscog
