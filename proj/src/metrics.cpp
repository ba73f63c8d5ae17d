#include "crosscog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crosscog/cdm.hpp"
#include "crosscog/rng.hpp"

namespace crosscog {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::DimMismatch, "auc inputs differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1)
      throw Error(ErrorCode::MalformedRow, "auc labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw Error(ErrorCode::SingleClass, "auc needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups; rank sum of positives gives the U statistic.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t r = i; r <= j; ++r)
      if (labels[order[r]]) pos_rank_sum += midrank;
    i = j + 1;
  }
  const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

// Outcomes restricted to one concept: per exercise, who scored 1 and who 0.
struct ConceptAnswers {
  std::vector<std::vector<int>> pos, neg;  // per exercise (local index), student ids
};

}  // namespace

DoaResult doa(const MatD& mastery, const Domain& domain,
              std::span<const ResponseRecord> records, const DoaOptions& opts) {
  const int S = domain.n_students();
  const int K = domain.n_concepts();
  if (mastery.rows() != S || mastery.cols() != K)
    throw Error(ErrorCode::DimMismatch, "mastery matrix shape disagrees with domain");

  // records -> (student, exercise, y) in dense indices
  std::vector<int> rs, re, ry;
  rs.reserve(records.size());
  re.reserve(records.size());
  ry.reserve(records.size());
  for (const auto& rec : records) {
    const auto si = domain.student_index.find(rec.student_id);
    const auto ei = domain.exercise_index.find(rec.exercise_id);
    if (si == domain.student_index.end() || ei == domain.exercise_index.end())
      throw Error(ErrorCode::DanglingReference,
                  "doa record references entities outside the domain");
    rs.push_back(si->second);
    re.push_back(ei->second);
    ry.push_back(rec.score);
  }

  // exercises per concept
  std::vector<std::vector<int>> exercises_of(static_cast<std::size_t>(K));
  for (int e = 0; e < domain.n_exercises(); ++e)
    for (int k : domain.q[static_cast<std::size_t>(e)])
      exercises_of[static_cast<std::size_t>(k)].push_back(e);

  const bool exhaustive = S <= opts.exhaustive_limit;
  double doa_sum = 0.0;
  double weight_sum = 0.0;
  int n_valid = 0;

  // Reused N x N pair counters for the exhaustive path.
  std::vector<std::int32_t> pair_pn;
  if (exhaustive) pair_pn.assign(static_cast<std::size_t>(S) * static_cast<std::size_t>(S), 0);

  for (int k = 0; k < K; ++k) {
    const auto& exs = exercises_of[static_cast<std::size_t>(k)];
    if (exs.empty()) continue;

    // who answered which k-exercise, split by outcome
    std::vector<std::vector<int>> pos(exs.size()), neg(exs.size());
    std::vector<int> local(static_cast<std::size_t>(domain.n_exercises()), -1);
    for (std::size_t j = 0; j < exs.size(); ++j) local[static_cast<std::size_t>(exs[j])] = static_cast<int>(j);
    for (std::size_t r = 0; r < rs.size(); ++r) {
      const int lj = local[static_cast<std::size_t>(re[r])];
      if (lj < 0) continue;
      (ry[r] ? pos : neg)[static_cast<std::size_t>(lj)].push_back(rs[r]);
    }

    double concept_sum = 0.0;
    std::size_t z = 0;
    std::size_t nonzero_den_pairs = 0;

    if (exhaustive) {
      std::fill(pair_pn.begin(), pair_pn.end(), 0);
      auto at = [&](int a, int b) -> std::int32_t& {
        return pair_pn[static_cast<std::size_t>(a) * static_cast<std::size_t>(S) +
                       static_cast<std::size_t>(b)];
      };
      for (std::size_t j = 0; j < exs.size(); ++j)
        for (int a : pos[j])
          for (int b : neg[j]) ++at(a, b);

      for (int a = 0; a < S; ++a) {
        for (int b = 0; b < S; ++b) {
          if (a == b || !(mastery(a, k) > mastery(b, k))) continue;
          ++z;
          const std::int32_t num = at(a, b);
          const std::int32_t den = num + at(b, a);
          if (den > 0) {
            concept_sum += static_cast<double>(num) / static_cast<double>(den);
            ++nonzero_den_pairs;
          }
        }
      }
    } else {
      // per-student outcome map on k-exercises, then seeded pair sampling
      std::vector<std::vector<std::pair<int, int>>> answered(
          static_cast<std::size_t>(S));  // (local exercise, y)
      for (std::size_t j = 0; j < exs.size(); ++j) {
        for (int a : pos[j]) answered[static_cast<std::size_t>(a)].push_back({static_cast<int>(j), 1});
        for (int a : neg[j]) answered[static_cast<std::size_t>(a)].push_back({static_cast<int>(j), 0});
      }
      std::vector<int> outcome(exs.size(), -1);
      auto rng = make_rng(opts.seed, 0xD0A0ull + static_cast<std::uint64_t>(k));
      for (std::size_t draw = 0; draw < opts.sampled_pairs; ++draw) {
        const int a = static_cast<int>(rng() % static_cast<std::uint64_t>(S));
        const int b = static_cast<int>(rng() % static_cast<std::uint64_t>(S));
        if (a == b || !(mastery(a, k) > mastery(b, k))) continue;
        ++z;
        for (const auto& [j, y] : answered[static_cast<std::size_t>(b)]) outcome[static_cast<std::size_t>(j)] = y;
        int num = 0, den = 0;
        for (const auto& [j, y] : answered[static_cast<std::size_t>(a)]) {
          const int yb = outcome[static_cast<std::size_t>(j)];
          if (yb < 0 || yb == y) continue;
          ++den;
          num += y;
        }
        for (const auto& [j, y] : answered[static_cast<std::size_t>(b)]) outcome[static_cast<std::size_t>(j)] = -1;
        if (den > 0) {
          concept_sum += static_cast<double>(num) / static_cast<double>(den);
          ++nonzero_den_pairs;
        }
      }
    }

    if (z == 0 || nonzero_den_pairs == 0) continue;
    const double doa_k = concept_sum / static_cast<double>(z);
    const double w = opts.weighted ? static_cast<double>(nonzero_den_pairs) : 1.0;
    doa_sum += w * doa_k;
    weight_sum += w;
    ++n_valid;
  }

  if (n_valid == 0)
    throw Error(ErrorCode::NoValidConcepts, "no concept has a scorable student pair");
  return {doa_sum / weight_sum, n_valid};
}

EvalReport evaluate(const ModelParams<double>& params, const DomainCogVectors& cog,
                    const Domain& domain, std::span<const ResponseRecord> auc_records,
                    std::span<const ResponseRecord> doa_records,
                    const DoaOptions& opts) {
  EvalReport report;
  report.n_records = auc_records.size();

  const auto p = predict_records(params, cog, domain, auc_records);
  std::vector<int> y;
  y.reserve(auc_records.size());
  for (const auto& r : auc_records) y.push_back(r.score);
  report.auc = auc(p, y);

  const MatD mas = mastery_matrix(params.cdm, cog.students, cog.concepts);
  const auto d = doa(mas, domain, doa_records, opts);
  report.doa = d.doa;
  report.n_doa_concepts = d.n_valid_concepts;
  return report;
}

}  // namespace crosscog
