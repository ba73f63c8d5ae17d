#include "crosscog/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "crosscog/adam.hpp"
#include "crosscog/metrics.hpp"
#include "crosscog/rng.hpp"
#include "json.hpp"

namespace crosscog {
namespace {

using nlohmann::json;

struct IndexedRecords {
  std::vector<int> student, exercise;
  std::vector<int> y;
};

IndexedRecords index_records(const Domain& domain,
                             std::span<const ResponseRecord> records) {
  IndexedRecords out;
  out.student.reserve(records.size());
  out.exercise.reserve(records.size());
  out.y.reserve(records.size());
  for (const auto& rec : records) {
    const auto si = domain.student_index.find(rec.student_id);
    const auto ei = domain.exercise_index.find(rec.exercise_id);
    if (si == domain.student_index.end() || ei == domain.exercise_index.end())
      throw Error(ErrorCode::DanglingReference,
                  "record " + rec.student_id + "/" + rec.exercise_id +
                      " references entities outside the domain");
    out.student.push_back(si->second);
    out.exercise.push_back(ei->second);
    out.y.push_back(rec.score);
  }
  return out;
}

std::vector<double> resolve_weights(const TrainConfig& cfg, std::size_t n_domains) {
  if (cfg.domain_weights.empty())
    return std::vector<double>(n_domains, 1.0 / static_cast<double>(n_domains));
  if (cfg.domain_weights.size() != n_domains)
    throw Error(ErrorCode::ConfigError, "domain_weights count differs from domain count");
  for (double w : cfg.domain_weights)
    if (!(w > 0.0))
      throw Error(ErrorCode::ConfigError, "domain_weights must be positive");
  return cfg.domain_weights;
}

void validate_inputs(const std::vector<SplitDomain>& splits,
                     const std::vector<DomainVectors>& vectors,
                     const TrainConfig& cfg) {
  if (splits.empty())
    throw Error(ErrorCode::ConfigError, "training needs at least one source domain");
  if (splits.size() != vectors.size())
    throw Error(ErrorCode::ConfigError, "one DomainVectors per source domain required");
  if (cfg.d < 1 || cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 0)
    throw Error(ErrorCode::ConfigError, "train config dims/epochs out of range");
  if (!(cfg.learning_rate > 0.0))
    throw Error(ErrorCode::ConfigError, "learning rate must be positive");

  const auto d_l = vectors.front().students.rows();
  for (std::size_t m = 0; m < splits.size(); ++m) {
    const Domain& dom = splits[m].domain;
    const DomainVectors& v = vectors[m];
    if (splits[m].train.empty())
      throw Error(ErrorCode::NoTrainingData,
                  "domain '" + dom.name + "' has no training records");
    if (v.students.cols() != dom.n_students() || v.exercises.cols() != dom.n_exercises() ||
        v.concepts.cols() != dom.n_concepts())
      throw Error(ErrorCode::MissingVector,
                  "domain '" + dom.name + "' is missing entity language vectors");
    if (v.students.rows() != d_l || v.exercises.rows() != d_l ||
        v.concepts.rows() != d_l)
      throw Error(ErrorCode::DimMismatch,
                  "language vectors disagree on d_l across domains");
    if (v.tem_id != vectors.front().tem_id)
      throw Error(ErrorCode::TemMismatch,
                  "source domains embedded with different tems");
  }
}

// One entity's worth of columns gathered per batch; scratch reused across
// batches of the same domain.
struct BatchScratch {
  std::vector<int> student_slot, exercise_slot;  // dense idx -> batch column
};

struct EpochAccumulator {
  double loss_sum = 0.0;
  std::size_t n = 0;
};

}  // namespace

std::string TrainConfig::to_json() const {
  json j;
  j["d"] = d;
  j["mapper_hidden"] = mapper_hidden;
  j["head_hidden"] = head_hidden;
  j["cdm_variant"] = std::string(crosscog::to_string(variant));
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  j["domain_weights"] = domain_weights;
  j["ablation"] = std::string(crosscog::to_string(ablation));
  j["pooled_validation"] = pooled_validation;
  return j.dump();
}

DomainVectors random_vectors(const Domain& domain, int d_l, std::uint64_t seed) {
  if (d_l < 1) throw Error(ErrorCode::ConfigError, "random vectors need d_l >= 1");
  DomainVectors out;
  out.tem_id = "random-normal-v1";
  auto draw = [&](const std::string& key, Eigen::Index col, MatD& into) {
    auto rng = make_rng(seed, fnv1a64(key));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < d_l; ++r) into(r, col) = normal(rng);
  };
  out.students.resize(d_l, domain.n_students());
  for (int s = 0; s < domain.n_students(); ++s)
    draw("s:" + domain.students[static_cast<std::size_t>(s)], s, out.students);
  out.exercises.resize(d_l, domain.n_exercises());
  for (int e = 0; e < domain.n_exercises(); ++e)
    draw("e:" + domain.exercises[static_cast<std::size_t>(e)], e, out.exercises);
  out.concepts.resize(d_l, domain.n_concepts());
  for (int k = 0; k < domain.n_concepts(); ++k)
    draw("c:" + domain.concepts[static_cast<std::size_t>(k)], k, out.concepts);
  return out;
}

DomainCogVectors map_domain(const ModelParams<double>& params, Ablation ablation,
                            const DomainVectors& vectors) {
  DomainCogVectors cog;
  if (ablation == Ablation::no_lcm) {
    cog.students = vectors.students;
    cog.exercises = vectors.exercises;
    cog.concepts = vectors.concepts;
    return cog;
  }
  cog.students = forward(params.f_s, vectors.students);
  cog.exercises = forward(params.f_e, vectors.exercises);
  cog.concepts = forward(params.f_c, vectors.concepts);
  return cog;
}

std::vector<double> predict_records(const ModelParams<double>& params,
                                    const DomainCogVectors& cog,
                                    const Domain& domain,
                                    std::span<const ResponseRecord> records) {
  const auto idx = index_records(domain, records);
  std::vector<double> out;
  out.reserve(records.size());
  CdmTrace<double> trace;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const int e = idx.exercise[r];
    out.push_back(predict<double>(params.cdm, cog.students.col(idx.student[r]),
                          cog.exercises.col(e), cog.concepts,
                          domain.q[static_cast<std::size_t>(e)], &trace));
  }
  return out;
}

double evaluate_loss(const ModelParams<double>& params,
                     const std::vector<SplitDomain>& splits,
                     const std::vector<DomainVectors>& vectors,
                     const TrainConfig& cfg) {
  validate_inputs(splits, vectors, cfg);
  const auto weights = resolve_weights(cfg, splits.size());

  const std::vector<DomainVectors>* vecs = &vectors;
  std::vector<DomainVectors> replaced;
  if (cfg.ablation == Ablation::no_tcp) {
    for (std::size_t m = 0; m < splits.size(); ++m)
      replaced.push_back(random_vectors(splits[m].domain,
                                        static_cast<int>(vectors[m].students.rows()),
                                        cfg.seed));
    vecs = &replaced;
  }

  double total = 0.0;
  for (std::size_t m = 0; m < splits.size(); ++m) {
    const auto cog = map_domain(params, cfg.ablation, (*vecs)[m]);
    const auto p = predict_records(params, cog, splits[m].domain, splits[m].train);
    double sum = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r)
      sum += bce_loss(p[r], splits[m].train[r].score);
    total += weights[m] * sum / static_cast<double>(p.size());
  }
  return total;
}

TrainedModel train_multi_domain(const std::vector<SplitDomain>& splits,
                                const std::vector<DomainVectors>& vectors,
                                const TrainConfig& cfg) {
  validate_inputs(splits, vectors, cfg);
  const auto M = splits.size();
  const auto weights = resolve_weights(cfg, M);
  const int d_l = static_cast<int>(vectors.front().students.rows());

  const std::vector<DomainVectors>* vecs = &vectors;
  std::vector<DomainVectors> replaced;
  if (cfg.ablation == Ablation::no_tcp) {
    for (std::size_t m = 0; m < M; ++m)
      replaced.push_back(random_vectors(splits[m].domain, d_l, cfg.seed));
    vecs = &replaced;
  }

  ModelParams<double> params;
  const int cdm_d = cfg.ablation == Ablation::no_lcm ? d_l : cfg.d;
  if (cfg.ablation != Ablation::no_lcm) {
    params.f_s = init_mlp<double>(d_l, cfg.mapper_hidden, cfg.d, derive_seed(cfg.seed, 101));
    params.f_e = init_mlp<double>(d_l, cfg.mapper_hidden, cfg.d, derive_seed(cfg.seed, 102));
    params.f_c = init_mlp<double>(d_l, cfg.mapper_hidden, cfg.d, derive_seed(cfg.seed, 103));
  }
  params.cdm = init_cdm<double>(cfg.variant, cdm_d,
                                cfg.variant == CdmVariant::mirt ? 0 : cfg.head_hidden,
                                derive_seed(cfg.seed, 104));

  std::vector<IndexedRecords> train_idx;
  train_idx.reserve(M);
  std::size_t n_valid_total = 0;
  for (std::size_t m = 0; m < M; ++m) {
    train_idx.push_back(index_records(splits[m].domain, splits[m].train));
    n_valid_total += splits[m].valid.size();
  }

  Adam<double> adam(cfg.learning_rate);
  MlpGrad<double> g_s(params.f_s), g_e(params.f_e), g_c(params.f_c);
  CdmGrad<double> g_cdm(params.cdm);
  MlpTrace<double> t_s, t_e, t_c;
  CdmTrace<double> trace;
  std::vector<BatchScratch> scratch(M);
  for (std::size_t m = 0; m < M; ++m) {
    scratch[m].student_slot.assign(
        static_cast<std::size_t>(splits[m].domain.n_students()), -1);
    scratch[m].exercise_slot.assign(
        static_cast<std::size_t>(splits[m].domain.n_exercises()), -1);
  }

  ModelParams<double> best_params = params;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::vector<double> best_val_auc(M, -1.0);
  double best_val_mean = -1.0;
  int epochs_since_best = 0;

  auto run_batch = [&](std::size_t m, const std::vector<int>& order, std::size_t lo,
                       std::size_t hi) -> double {
    const Domain& dom = splits[m].domain;
    const IndexedRecords& rec = train_idx[m];
    const DomainVectors& v = (*vecs)[m];
    const auto B = hi - lo;
    BatchScratch& sc = scratch[m];

    std::vector<int> us, ue;          // unique entity dense indices
    std::vector<int> rs(B), re(B);    // batch-local slots per record
    for (std::size_t i = 0; i < B; ++i) {
      const int r = order[lo + i];
      const int s = rec.student[static_cast<std::size_t>(r)];
      const int e = rec.exercise[static_cast<std::size_t>(r)];
      if (sc.student_slot[static_cast<std::size_t>(s)] < 0) {
        sc.student_slot[static_cast<std::size_t>(s)] = static_cast<int>(us.size());
        us.push_back(s);
      }
      if (sc.exercise_slot[static_cast<std::size_t>(e)] < 0) {
        sc.exercise_slot[static_cast<std::size_t>(e)] = static_cast<int>(ue.size());
        ue.push_back(e);
      }
      rs[i] = sc.student_slot[static_cast<std::size_t>(s)];
      re[i] = sc.exercise_slot[static_cast<std::size_t>(e)];
    }
    for (int s : us) sc.student_slot[static_cast<std::size_t>(s)] = -1;
    for (int e : ue) sc.exercise_slot[static_cast<std::size_t>(e)] = -1;

    MatD x_s(d_l, static_cast<Eigen::Index>(us.size()));
    for (std::size_t i = 0; i < us.size(); ++i) x_s.col(static_cast<Eigen::Index>(i)) = v.students.col(us[i]);
    MatD x_e(d_l, static_cast<Eigen::Index>(ue.size()));
    for (std::size_t i = 0; i < ue.size(); ++i) x_e.col(static_cast<Eigen::Index>(i)) = v.exercises.col(ue[i]);

    const bool mapped = cfg.ablation != Ablation::no_lcm;
    const MatD h_s = mapped ? forward(params.f_s, x_s, &t_s) : x_s;
    const MatD h_e = mapped ? forward(params.f_e, x_e, &t_e) : x_e;
    const MatD h_c = mapped ? forward(params.f_c, v.concepts, &t_c) : v.concepts;

    MatD dh_s = MatD::Zero(cdm_d, h_s.cols());
    MatD dh_e = MatD::Zero(cdm_d, h_e.cols());
    MatD dh_c = MatD::Zero(cdm_d, h_c.cols());
    g_cdm.set_zero();
    if (mapped) {
      g_s.set_zero();
      g_e.set_zero();
      g_c.set_zero();
    }

    double loss_sum = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      const int r = order[lo + i];
      const int e = rec.exercise[static_cast<std::size_t>(r)];
      const int y = rec.y[static_cast<std::size_t>(r)];
      const auto& active = dom.q[static_cast<std::size_t>(e)];
      const double p = predict<double>(params.cdm, h_s.col(rs[i]), h_e.col(re[i]), h_c,
                               active, &trace);
      // Clamped bce would hide a NaN prediction, so catch divergence here.
      if (!std::isfinite(p))
        throw Error(ErrorCode::NonFiniteLoss,
                    "non-finite prediction in domain '" + dom.name + "' (step " +
                        std::to_string(adam.step_count() + 1) + ")");
      loss_sum += bce_loss(p, y);
      const double d_z = weights[m] * (p - static_cast<double>(y)) /
                         static_cast<double>(B);
      cdm_backward<double>(params.cdm, h_s.col(rs[i]), h_e.col(re[i]), h_c, active, trace,
                   d_z, g_cdm, dh_s.col(rs[i]), dh_e.col(re[i]), dh_c);
    }
    const double batch_loss = loss_sum / static_cast<double>(B);
    if (!std::isfinite(batch_loss))
      throw Error(ErrorCode::NonFiniteLoss,
                  "loss diverged in domain '" + dom.name + "' (step " +
                      std::to_string(adam.step_count() + 1) + ")");

    if (mapped) {
      backward(params.f_s, t_s, dh_s, g_s);
      backward(params.f_e, t_e, dh_e, g_e);
      backward(params.f_c, t_c, dh_c, g_c);
    }

    adam.begin_step();
    if (mapped) {
      auto step_mlp = [&](Mlp<double>& mlp, MlpGrad<double>& g) {
        for (std::size_t l = 0; l < mlp.W.size(); ++l) {
          adam.update(mlp.W[l], g.W[l]);
          adam.update(mlp.b[l], g.b[l]);
        }
      };
      step_mlp(params.f_s, g_s);
      step_mlp(params.f_e, g_e);
      step_mlp(params.f_c, g_c);
    }
    for_each_tensor(params.cdm, g_cdm,
                    [&](Vec<double>& p_t, Vec<double>& g_t) { adam.update(p_t, g_t); });
    project_nonneg(params.cdm);
    return loss_sum;
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<std::vector<int>> order(M);
    std::vector<std::size_t> cursor(M, 0);
    for (std::size_t m = 0; m < M; ++m) {
      order[m].resize(train_idx[m].y.size());
      std::iota(order[m].begin(), order[m].end(), 0);
      auto rng = make_rng(derive_seed(cfg.seed, 0x45504F43ull + static_cast<std::uint64_t>(epoch)),
                          static_cast<std::uint64_t>(m));
      seeded_shuffle(order[m], rng);
    }

    std::vector<EpochAccumulator> acc(M);
    std::size_t turn = 0;
    while (true) {
      std::size_t probes = 0;
      while (probes < M && cursor[turn % M] >= order[turn % M].size()) {
        ++turn;
        ++probes;
      }
      if (probes == M) break;
      const std::size_t m = turn % M;
      ++turn;
      const std::size_t lo = cursor[m];
      const std::size_t hi =
          std::min(order[m].size(), lo + static_cast<std::size_t>(cfg.batch_size));
      cursor[m] = hi;
      acc[m].loss_sum += run_batch(m, order[m], lo, hi);
      acc[m].n += hi - lo;
    }

    double objective = 0.0;
    for (std::size_t m = 0; m < M; ++m)
      objective += weights[m] * acc[m].loss_sum / static_cast<double>(acc[m].n);

    // Validation read-out with the current parameters.
    std::vector<double> val_auc(M, -1.0);
    std::vector<double> pooled_p;
    std::vector<int> pooled_y;
    double val_auc_sum = 0.0;
    std::size_t val_domains = 0;
    for (std::size_t m = 0; m < M; ++m) {
      if (splits[m].valid.empty()) continue;
      const auto cog = map_domain(params, cfg.ablation, (*vecs)[m]);
      const auto p = predict_records(params, cog, splits[m].domain, splits[m].valid);
      std::vector<int> y;
      y.reserve(p.size());
      for (const auto& r : splits[m].valid) y.push_back(r.score);
      if (cfg.pooled_validation) {
        pooled_p.insert(pooled_p.end(), p.begin(), p.end());
        pooled_y.insert(pooled_y.end(), y.begin(), y.end());
      }
      val_auc[m] = auc(p, y);
      val_auc_sum += val_auc[m];
      ++val_domains;
    }
    double val_mean = -1.0;
    if (val_domains > 0)
      val_mean = cfg.pooled_validation ? auc(pooled_p, pooled_y)
                                       : val_auc_sum / static_cast<double>(val_domains);

    // No validation data anywhere: fall back to the training objective so
    // early stopping still has a signal.
    const double metric = n_valid_total > 0 ? val_mean : -objective;
    if (metric > best_metric) {
      best_metric = metric;
      best_params = params;
      best_val_auc = val_auc;
      best_val_mean = val_mean;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }

    if (cfg.epoch_log) {
      json line;
      line["epoch"] = epoch;
      line["objective"] = objective;
      json per = json::array();
      for (double a : val_auc) per.push_back(a < 0 ? json() : json(a));
      line["val_auc_per_domain"] = std::move(per);
      line["val_auc_mean"] = val_mean < 0 ? json() : json(val_mean);
      line["lr"] = cfg.learning_rate;
      *cfg.epoch_log << line.dump() << "\n";
      cfg.epoch_log->flush();
    }

    if (epochs_since_best > cfg.patience) break;
  }

  TrainedModel model;
  model.params = std::move(best_params);
  model.meta.tem_id = vectors.front().tem_id;
  model.meta.ablation = cfg.ablation;
  model.meta.d = cfg.d;
  model.meta.d_l = d_l;
  model.meta.head_hidden = cfg.variant == CdmVariant::mirt ? 0 : cfg.head_hidden;
  model.meta.mapper_hidden =
      cfg.ablation == Ablation::no_lcm ? std::vector<int>{} : cfg.mapper_hidden;
  model.meta.seed = cfg.seed;
  for (const auto& sp : splits) model.meta.source_domains.push_back(sp.domain.name);
  model.meta.val_auc_per_domain = best_val_auc;
  model.meta.val_auc_mean = best_val_mean;
  model.meta.config_echo_json = cfg.to_json();
  return model;
}

}  // namespace crosscog
