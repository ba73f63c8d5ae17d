#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace crosscog {

/// One graded response. `order_index` positions the record inside the
/// student's log (file row order, or the timestamp column when present)
/// and drives first-attempt deduplication.
struct ResponseRecord {
  std::string student_id;
  std::string exercise_id;
  int score = 0;  // 0 or 1
  std::int64_t order_index = 0;
};

/// One platform/subject's response logs plus Q-matrix and concept names.
/// Dense indices are assigned in first-appearance order: students and
/// exercises by the records file, concepts by the Q-matrix file.
/// Immutable after construction; safe to share read-only across threads.
struct Domain {
  std::string name;
  std::vector<ResponseRecord> records;

  std::vector<std::string> students;   // dense index -> id
  std::vector<std::string> exercises;  // dense index -> id
  std::vector<std::string> concepts;   // dense index -> id
  std::unordered_map<std::string, int> student_index;
  std::unordered_map<std::string, int> exercise_index;
  std::unordered_map<std::string, int> concept_index;

  std::vector<std::vector<int>> q;          // exercise idx -> sorted concept idxs
  std::vector<std::string> concept_names;   // concept idx -> display name

  int n_students() const { return static_cast<int>(students.size()); }
  int n_exercises() const { return static_cast<int>(exercises.size()); }
  int n_concepts() const { return static_cast<int>(concepts.size()); }
};

/// Per-student 70/20/10 partition of a domain's records.
struct SplitDomain {
  Domain domain;
  std::vector<ResponseRecord> train;
  std::vector<ResponseRecord> valid;
  std::vector<ResponseRecord> test;
};

Domain load_domain(const std::string& records_path,
                   const std::string& qmatrix_path,
                   const std::string& names_path,
                   const std::string& name = "");

/// Builds a Domain from in-memory parts (used by the synthetic generator
/// and tests). Runs the same validation as load_domain.
Domain make_domain(std::string name, std::vector<ResponseRecord> records,
                   const std::vector<std::pair<std::string, std::string>>& q_links,
                   const std::vector<std::pair<std::string, std::string>>& names);

/// Keeps, per (student, exercise) pair, only the record with the minimal
/// order_index. Survivors stay in their original relative order.
Domain dedup_first_attempt(const Domain& d);

/// Drops students with fewer than min_responses records and prunes
/// exercises/concepts left unreferenced. Indices are reassigned in
/// first-appearance order of the surviving records.
Domain filter_students(const Domain& d, int min_responses);

SplitDomain split_per_student(const Domain& d,
                              std::array<double, 3> ratios,
                              std::uint64_t seed);

inline SplitDomain split_per_student(const Domain& d, std::uint64_t seed) {
  return split_per_student(d, {0.7, 0.2, 0.1}, seed);
}

/// Canonical preprocessing: dedup -> filter -> split.
SplitDomain preprocess(const Domain& d, int min_responses, std::uint64_t seed);

}  // namespace crosscog
