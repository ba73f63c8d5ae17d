#include "crosscog/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "crosscog/errors.hpp"
#include "crosscog/rng.hpp"

namespace crosscog {
namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return in;
}

struct RawRows {
  std::vector<std::vector<std::string>> rows;  // data rows, header stripped
  std::vector<int> line_numbers;               // 1-based, matching rows
  std::size_t n_columns = 0;
};

RawRows read_csv(const std::string& path, std::size_t min_cols,
                 std::size_t max_cols) {
  auto in = open_or_throw(path);
  RawRows out;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv_row(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() < min_cols || fields.size() > max_cols)
        throw Error(ErrorCode::MalformedRow,
                    path + ":" + std::to_string(lineno) + ": header has " +
                        std::to_string(fields.size()) + " columns");
      out.n_columns = fields.size();
      continue;
    }
    if (fields.size() != out.n_columns)
      throw Error(ErrorCode::MalformedRow,
                  path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(out.n_columns) + " columns, got " +
                      std::to_string(fields.size()));
    out.rows.push_back(std::move(fields));
    out.line_numbers.push_back(lineno);
  }
  return out;
}

std::int64_t parse_nonneg_int(const std::string& s, const std::string& ctx) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
    throw Error(ErrorCode::MalformedRow, ctx + ": not a non-negative integer: '" + s + "'");
  return v;
}

Domain build_domain(std::string name, std::vector<ResponseRecord> records,
                    const std::vector<std::pair<std::string, std::string>>& q_links,
                    const std::vector<std::pair<std::string, std::string>>& names) {
  if (records.empty()) throw Error(ErrorCode::EmptyDomain, "domain '" + name + "' has no records");

  Domain d;
  d.name = std::move(name);

  for (const auto& r : records) {
    if (d.student_index.emplace(r.student_id, d.n_students()).second)
      d.students.push_back(r.student_id);
    if (d.exercise_index.emplace(r.exercise_id, d.n_exercises()).second)
      d.exercises.push_back(r.exercise_id);
  }

  // (student, exercise, order_index) must be unique within a domain.
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  for (const auto& r : records) {
    std::string key = r.student_id + '\x1f' + r.exercise_id + '\x1f' +
                      std::to_string(r.order_index);
    if (!seen.insert(std::move(key)).second)
      throw Error(ErrorCode::MalformedRow,
                  "duplicate (student, exercise, order_index): (" +
                      r.student_id + ", " + r.exercise_id + ", " +
                      std::to_string(r.order_index) + ")");
  }
  d.records = std::move(records);

  std::unordered_map<std::string, std::string> name_of;
  for (const auto& [cid, cname] : names) name_of[cid] = cname;

  // Concepts indexed in Q-file appearance order; links to exercises that
  // never occur in the records are ignored.
  d.q.resize(d.n_exercises());
  for (const auto& [eid, cid] : q_links) {
    auto it = d.exercise_index.find(eid);
    if (it == d.exercise_index.end()) continue;
    auto [cit, inserted] = d.concept_index.emplace(cid, d.n_concepts());
    if (inserted) {
      d.concepts.push_back(cid);
      auto nit = name_of.find(cid);
      if (nit == name_of.end() || nit->second.empty())
        throw Error(ErrorCode::DanglingReference,
                    "concept '" + cid + "' has no name");
      d.concept_names.push_back(nit->second);
    }
    d.q[it->second].push_back(cit->second);
  }
  for (int e = 0; e < d.n_exercises(); ++e) {
    auto& row = d.q[e];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    if (row.empty())
      throw Error(ErrorCode::DanglingReference,
                  "exercise '" + d.exercises[e] + "' has no Q-matrix row");
  }
  return d;
}

}  // namespace

Domain make_domain(std::string name, std::vector<ResponseRecord> records,
                   const std::vector<std::pair<std::string, std::string>>& q_links,
                   const std::vector<std::pair<std::string, std::string>>& names) {
  return build_domain(std::move(name), std::move(records), q_links, names);
}

Domain load_domain(const std::string& records_path,
                   const std::string& qmatrix_path,
                   const std::string& names_path,
                   const std::string& name) {
  RawRows raw = read_csv(records_path, 3, 4);
  const bool has_timestamp = raw.n_columns == 4;

  std::vector<ResponseRecord> records;
  records.reserve(raw.rows.size());
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    const auto& f = raw.rows[i];
    const std::string ctx = records_path + ":" + std::to_string(raw.line_numbers[i]);
    ResponseRecord r;
    r.student_id = f[0];
    r.exercise_id = f[1];
    if (r.student_id.empty() || r.exercise_id.empty())
      throw Error(ErrorCode::MalformedRow, ctx + ": empty id");
    if (f[2] == "0") r.score = 0;
    else if (f[2] == "1") r.score = 1;
    else throw Error(ErrorCode::MalformedRow, ctx + ": score must be literal 0 or 1, got '" + f[2] + "'");
    // Row order is the default attempt order; a timestamp column overrides it.
    r.order_index = has_timestamp ? parse_nonneg_int(f[3], ctx)
                                  : static_cast<std::int64_t>(i);
    records.push_back(std::move(r));
  }

  RawRows qraw = read_csv(qmatrix_path, 2, 2);
  std::vector<std::pair<std::string, std::string>> q_links;
  q_links.reserve(qraw.rows.size());
  for (auto& f : qraw.rows) q_links.emplace_back(std::move(f[0]), std::move(f[1]));

  RawRows nraw = read_csv(names_path, 2, 2);
  std::vector<std::pair<std::string, std::string>> names;
  names.reserve(nraw.rows.size());
  for (auto& f : nraw.rows) names.emplace_back(std::move(f[0]), std::move(f[1]));

  std::string domain_name = name;
  if (domain_name.empty())
    domain_name = std::filesystem::path(records_path).parent_path().filename().string();
  if (domain_name.empty()) domain_name = "domain";

  return build_domain(std::move(domain_name), std::move(records), q_links, names);
}

Domain dedup_first_attempt(const Domain& d) {
  // Minimal order_index wins per (student, exercise); ties cannot occur
  // because the triple is unique.
  std::unordered_map<std::string, std::size_t> best;
  best.reserve(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    std::string key = r.student_id + '\x1f' + r.exercise_id;
    auto [it, inserted] = best.emplace(std::move(key), i);
    if (!inserted && r.order_index < d.records[it->second].order_index)
      it->second = i;
  }
  std::vector<char> keep(d.records.size(), 0);
  for (const auto& [key, idx] : best) keep[idx] = 1;

  std::vector<ResponseRecord> survivors;
  survivors.reserve(best.size());
  for (std::size_t i = 0; i < d.records.size(); ++i)
    if (keep[i]) survivors.push_back(d.records[i]);

  std::vector<std::pair<std::string, std::string>> q_links;
  for (int e = 0; e < d.n_exercises(); ++e)
    for (int c : d.q[e]) q_links.emplace_back(d.exercises[e], d.concepts[c]);
  std::vector<std::pair<std::string, std::string>> names;
  for (int c = 0; c < d.n_concepts(); ++c)
    names.emplace_back(d.concepts[c], d.concept_names[c]);

  return build_domain(d.name, std::move(survivors), q_links, names);
}

Domain filter_students(const Domain& d, int min_responses) {
  if (min_responses < 1)
    throw Error(ErrorCode::ConfigError, "min_responses must be >= 1");

  std::unordered_map<std::string, int> counts;
  for (const auto& r : d.records) ++counts[r.student_id];

  std::vector<ResponseRecord> survivors;
  survivors.reserve(d.records.size());
  for (const auto& r : d.records)
    if (counts[r.student_id] >= min_responses) survivors.push_back(r);

  if (survivors.empty())
    throw Error(ErrorCode::EmptyDomain,
                "no student in '" + d.name + "' has >= " +
                    std::to_string(min_responses) + " responses");

  std::vector<std::pair<std::string, std::string>> q_links;
  for (int e = 0; e < d.n_exercises(); ++e)
    for (int c : d.q[e]) q_links.emplace_back(d.exercises[e], d.concepts[c]);
  std::vector<std::pair<std::string, std::string>> names;
  for (int c = 0; c < d.n_concepts(); ++c)
    names.emplace_back(d.concepts[c], d.concept_names[c]);

  // build_domain re-derives indices from surviving records, which prunes
  // unreferenced exercises and concepts.
  return build_domain(d.name, std::move(survivors), q_links, names);
}

SplitDomain split_per_student(const Domain& d, std::array<double, 3> ratios,
                              std::uint64_t seed) {
  for (double r : ratios)
    if (!(r > 0.0)) throw Error(ErrorCode::ConfigError, "split ratios must be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw Error(ErrorCode::ConfigError, "split ratios must sum to 1");

  std::vector<std::vector<std::size_t>> per_student(d.students.size());
  for (std::size_t i = 0; i < d.records.size(); ++i)
    per_student[d.student_index.at(d.records[i].student_id)].push_back(i);

  SplitDomain out;
  out.domain = d;
  for (int s = 0; s < d.n_students(); ++s) {
    auto idxs = per_student[s];
    auto rng = make_rng(seed, static_cast<std::uint64_t>(s));
    seeded_shuffle(idxs, rng);
    const std::size_t n = idxs.size();
    const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * n));
    const auto n_valid = static_cast<std::size_t>(std::floor(ratios[1] * n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = d.records[idxs[i]];
      if (i < n_train) out.train.push_back(r);
      else if (i < n_train + n_valid) out.valid.push_back(r);
      else out.test.push_back(r);
    }
  }
  return out;
}

SplitDomain preprocess(const Domain& d, int min_responses, std::uint64_t seed) {
  return split_per_student(filter_students(dedup_first_attempt(d), min_responses), seed);
}

}  // namespace crosscog
