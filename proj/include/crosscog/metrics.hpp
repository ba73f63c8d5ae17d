#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crosscog/corpus.hpp"
#include "crosscog/dense.hpp"
#include "crosscog/train.hpp"

namespace crosscog {

/// Exact Mann-Whitney AUC with midrank tie handling: P(score_pos > score_neg)
/// plus half credit on ties.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct DoaOptions {
  bool weighted = false;  // weight concepts by their valid-pair count
  int exhaustive_limit = 2000;        // full pair enumeration up to this many students
  std::size_t sampled_pairs = 200000;  // per concept, above the limit
  std::uint64_t seed = 0;
};

struct DoaResult {
  double doa = 0.0;
  int n_valid_concepts = 0;
};

/// Degree of agreement between the mastery ordering and observed outcomes.
/// Per concept k, over ordered student pairs (a,b) with Mas_{a,k} > Mas_{b,k}
/// (count Z): each pair contributes (#co-answered k-exercises where a correct,
/// b incorrect) / (#co-answered k-exercises scored differently), or 0 when
/// that denominator is empty; DOA_k is the pair sum over Z. Concepts need
/// Z > 0 and at least one nonzero-denominator pair to enter the aggregate.
///
/// `mastery` is students x concepts over the domain's dense indices; `records`
/// defines who answered what.
DoaResult doa(const MatD& mastery, const Domain& domain,
              std::span<const ResponseRecord> records, const DoaOptions& opts = {});

struct EvalReport {
  double auc = 0.0;
  double doa = 0.0;
  std::size_t n_records = 0;
  int n_doa_concepts = 0;
};

/// AUC on `auc_records`, DOA on `doa_records` (callers choose the scope).
EvalReport evaluate(const ModelParams<double>& params, const DomainCogVectors& cog,
                    const Domain& domain, std::span<const ResponseRecord> auc_records,
                    std::span<const ResponseRecord> doa_records,
                    const DoaOptions& opts = {});

}  // namespace crosscog
