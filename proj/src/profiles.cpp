#include "crosscog/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "crosscog/errors.hpp"
#include "json.hpp"

namespace crosscog {
namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string join_sorted(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}

std::vector<std::string> concept_names_of(const Domain& d, int exercise_idx) {
  std::vector<std::string> names;
  names.reserve(d.q[exercise_idx].size());
  for (int c : d.q[exercise_idx]) names.push_back(d.concept_names[c]);
  return names;
}

}  // namespace

std::string format_acr(double acr) {
  // nearbyint under the default rounding mode is round-half-even.
  double scaled = std::nearbyint(acr * 100.0);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", scaled / 100.0);
  return buf;
}

double exercise_acr(const std::string& exercise_id,
                    std::span<const ResponseRecord> train_records) {
  long long sum = 0, count = 0;
  for (const auto& r : train_records) {
    if (r.exercise_id != exercise_id) continue;
    sum += r.score;
    ++count;
  }
  if (count == 0)
    throw Error(ErrorCode::NoTrainingData,
                "exercise '" + exercise_id + "' has no training response");
  return static_cast<double>(sum) / static_cast<double>(count);
}

AcrTable compute_acr_table(const Domain& domain,
                           std::span<const ResponseRecord> train_records) {
  std::vector<long long> sum(domain.n_exercises(), 0);
  std::vector<long long> count(domain.n_exercises(), 0);
  long long total_sum = 0, total_count = 0;
  for (const auto& r : train_records) {
    int e = domain.exercise_index.at(r.exercise_id);
    sum[e] += r.score;
    ++count[e];
    total_sum += r.score;
    ++total_count;
  }
  if (total_count == 0)
    throw Error(ErrorCode::NoTrainingData,
                "domain '" + domain.name + "' has no training records");

  AcrTable table;
  table.domain_mean = static_cast<double>(total_sum) / static_cast<double>(total_count);
  table.acr.resize(domain.n_exercises());
  table.fallback.resize(domain.n_exercises(), 0);
  for (int e = 0; e < domain.n_exercises(); ++e) {
    if (count[e] > 0) {
      table.acr[e] = static_cast<double>(sum[e]) / static_cast<double>(count[e]);
    } else {
      table.acr[e] = table.domain_mean;
      table.fallback[e] = 1;
    }
  }
  return table;
}

std::string render_concept_profile(const std::string& name) {
  std::string text = trim(name);
  if (text.empty()) throw Error(ErrorCode::EmptyName, "concept name is empty");
  return text;
}

std::string render_exercise_profile(std::vector<std::string> concept_names,
                                    double acr) {
  if (concept_names.empty())
    throw Error(ErrorCode::NoConcepts, "exercise profile needs >= 1 concept");
  return "Exercise on concepts: " + join_sorted(std::move(concept_names)) +
         ". Average correct rate: " + format_acr(acr) + ".";
}

std::string render_interaction_profile(std::vector<std::string> concept_names,
                                       double acr, int score) {
  if (concept_names.empty())
    throw Error(ErrorCode::NoConcepts, "interaction profile needs >= 1 concept");
  return "Concepts: " + join_sorted(std::move(concept_names)) +
         ". Exercise average correct rate: " + format_acr(acr) +
         ". Student answer: " + (score == 1 ? "correct" : "incorrect") + ".";
}

StudentProfile build_student_profile(const std::string& student_id,
                                     std::span<const ResponseRecord> train_records,
                                     const Domain& domain,
                                     const AcrTable& acr) {
  StudentProfile profile;
  profile.student_id = student_id;
  for (const auto& r : train_records) {
    if (r.student_id != student_id) continue;
    int e = domain.exercise_index.at(r.exercise_id);
    InteractionProfile ip;
    ip.student_id = student_id;
    ip.exercise_id = r.exercise_id;
    ip.score = r.score;
    ip.text = render_interaction_profile(concept_names_of(domain, e),
                                         acr.acr[e], r.score);
    profile.interactions.push_back(std::move(ip));
  }
  if (profile.interactions.empty())
    throw Error(ErrorCode::NoTrainingRecords,
                "student '" + student_id + "' has no training records");
  return profile;
}

DomainProfiles build_domain_profiles(const SplitDomain& split) {
  const Domain& d = split.domain;
  DomainProfiles out;
  out.acr = compute_acr_table(d, split.train);

  out.concept_texts.reserve(d.n_concepts());
  for (int c = 0; c < d.n_concepts(); ++c)
    out.concept_texts.push_back(render_concept_profile(d.concept_names[c]));

  out.exercise_texts.reserve(d.n_exercises());
  for (int e = 0; e < d.n_exercises(); ++e)
    out.exercise_texts.push_back(
        render_exercise_profile(concept_names_of(d, e), out.acr.acr[e]));

  // Group the training records by student, preserving record order.
  std::vector<std::vector<ResponseRecord>> per_student(d.n_students());
  for (const auto& r : split.train)
    per_student[d.student_index.at(r.student_id)].push_back(r);

  out.students.reserve(d.n_students());
  for (int s = 0; s < d.n_students(); ++s)
    out.students.push_back(
        build_student_profile(d.students[s], per_student[s], d, out.acr));
  return out;
}

void dump_profiles(const Domain& domain, const DomainProfiles& profiles,
                   std::ostream& out) {
  using nlohmann::json;
  for (int c = 0; c < domain.n_concepts(); ++c) {
    json j{{"kind", "concept"},
           {"id", domain.concepts[c]},
           {"text", profiles.concept_texts[c]}};
    out << j.dump() << '\n';
  }
  for (int e = 0; e < domain.n_exercises(); ++e) {
    json j{{"kind", "exercise"},
           {"id", domain.exercises[e]},
           {"text", profiles.exercise_texts[e]},
           {"acr", profiles.acr.acr[e]}};
    out << j.dump() << '\n';
  }
  for (const auto& sp : profiles.students) {
    for (const auto& ip : sp.interactions) {
      json j{{"kind", "interaction"},
             {"id", ip.student_id + ":" + ip.exercise_id},
             {"text", ip.text}};
      out << j.dump() << '\n';
    }
  }
}

}  // namespace crosscog
