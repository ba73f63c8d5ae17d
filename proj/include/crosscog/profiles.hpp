#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crosscog/corpus.hpp"

namespace crosscog {

/// Template revision identifier, recorded in output metadata so alternate
/// phrasings can be A/B-tested against cached embeddings.
inline constexpr const char* kProfileVersion = "tcp-v1";

struct ConceptProfile {
  std::string concept_id;
  std::string text;  // the concept's name, whitespace-trimmed
};

struct ExerciseProfile {
  std::string exercise_id;
  double acr = 0.0;  // raw value; text carries the 2-decimal rendering
  bool acr_is_fallback = false;
  std::string text;
};

struct InteractionProfile {
  std::string student_id;
  std::string exercise_id;
  int score = 0;
  std::string text;
};

/// A student's profile is the set of their training interactions.
struct StudentProfile {
  std::string student_id;
  std::vector<InteractionProfile> interactions;
};

/// Per-exercise average correct rate over training records only. Exercises
/// without training responses fall back to the domain training mean and are
/// flagged.
struct AcrTable {
  std::vector<double> acr;       // by exercise dense index
  std::vector<char> fallback;    // 1 where the domain mean was substituted
  double domain_mean = 0.0;      // mean score over all training records
};

/// Formats an ACR with round-half-even at 2 decimals ("0.75").
std::string format_acr(double acr);

/// ACR of one exercise over the given training records. Throws
/// NoTrainingData when the exercise has no training response.
double exercise_acr(const std::string& exercise_id,
                    std::span<const ResponseRecord> train_records);

AcrTable compute_acr_table(const Domain& domain,
                           std::span<const ResponseRecord> train_records);

std::string render_concept_profile(const std::string& name);

/// "Exercise on concepts: {sorted names}. Average correct rate: {acr}."
std::string render_exercise_profile(std::vector<std::string> concept_names,
                                    double acr);

/// "Concepts: {sorted names}. Exercise average correct rate: {acr}.
///  Student answer: {correct|incorrect}."
std::string render_interaction_profile(std::vector<std::string> concept_names,
                                       double acr, int score);

StudentProfile build_student_profile(const std::string& student_id,
                                     std::span<const ResponseRecord> train_records,
                                     const Domain& domain,
                                     const AcrTable& acr);

/// All profiles of one domain, rendered from its training split only.
struct DomainProfiles {
  std::vector<std::string> concept_texts;   // by concept index
  std::vector<std::string> exercise_texts;  // by exercise index
  AcrTable acr;
  std::vector<StudentProfile> students;     // by student index
};

DomainProfiles build_domain_profiles(const SplitDomain& split);

/// JSON-lines audit dump: one {kind, id, text, acr?} object per entity.
void dump_profiles(const Domain& domain, const DomainProfiles& profiles,
                   std::ostream& out);

}  // namespace crosscog
