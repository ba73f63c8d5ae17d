#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crosscog/corpus.hpp"
#include "crosscog/dense.hpp"

namespace crosscog {

inline constexpr const char* kWordPoolVersion = "wordpool-v2";

/// Curriculum-like terms used as concept names; fixed and versioned so
/// generated corpora are stable across builds.
std::span<const char* const> word_pool();

struct SynthConfig {
  int n_domains = 3;
  int n_students = 800;
  int n_exercises = 200;
  int n_concepts = 12;
  int responses_per_student = 100;
  double shared_vocab_fraction = 0.8;  // concept names reused verbatim across domains
  int latent_dim = 4;
  double guess = 0.15;
  double slip = 0.10;
  double difficulty_shift = 0.0;  // added to every b_e; negative = easier items
  int min_concepts_per_exercise = 1;
  int max_concepts_per_exercise = 3;
  std::uint64_t seed = 0;
};

/// One generated domain plus the latent quantities that produced it. The
/// response model is p = (1-slip)*sigmoid(a_e*(theta_s . v_e - b_e)) +
/// guess*(1-sigmoid(...)) with v_e the mean loading of the exercise's
/// concepts. Loadings are keyed by concept NAME, so shared names carry the
/// same latent meaning in every domain.
struct SynthDomain {
  Domain domain;
  MatD theta;           // latent_dim x S
  VecD difficulty;      // E
  VecD discrimination;  // E
  MatD loadings;        // latent_dim x K
  MatD true_prob;       // S x E
};

struct SynthData {
  SynthConfig config;
  std::vector<SynthDomain> domains;
};

SynthData generate(const SynthConfig& cfg);

/// sigmoid(theta' * loadings): the generator's own mastery read-out, S x K.
MatD true_mastery(const SynthDomain& sd);

/// AUC of the true response probabilities against the realized scores; the
/// ceiling any model can reach on these records.
double oracle_auc_bound(const SynthDomain& sd, std::span<const ResponseRecord> records);

/// records.csv, qmatrix.csv, names.csv under dir (created if missing).
void write_domain_files(const Domain& domain, const std::string& dir);

void write_ground_truth(const SynthData& data, const std::string& path);

}  // namespace crosscog
