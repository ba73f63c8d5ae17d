#include <algorithm>
#include <map>
#include <set>

#include "crosscog/corpus.hpp"
#include "crosscog/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace crosscog;

namespace {

void write_toy_domain(const TempDir& dir) {
  write_file(dir.file("records.csv"),
             "student_id,exercise_id,score\n"
             "s1,e1,1\n"
             "s1,e2,0\n"
             "s2,e1,0\n"
             "s2,e3,1\n");
  write_file(dir.file("qmatrix.csv"),
             "exercise_id,concept_id\n"
             "e1,c1\n"
             "e2,c1\n"
             "e2,c2\n"
             "e3,c2\n");
  write_file(dir.file("names.csv"),
             "concept_id,concept_name\n"
             "c1,Angle\n"
             "c2,Fraction\n");
}

Domain load_toy(const TempDir& dir) {
  return load_domain(dir.file("records.csv"), dir.file("qmatrix.csv"),
                     dir.file("names.csv"), "toy");
}

std::multiset<std::string> record_keys(const std::vector<ResponseRecord>& rs) {
  std::multiset<std::string> out;
  for (const auto& r : rs)
    out.insert(r.student_id + "|" + r.exercise_id + "|" + std::to_string(r.order_index));
  return out;
}

}  // namespace

TEST_CASE("load_domain assigns dense indices in first-appearance order") {
  TempDir dir;
  write_toy_domain(dir);
  const Domain d = load_toy(dir);

  CHECK(d.name == "toy");
  CHECK(d.students == std::vector<std::string>{"s1", "s2"});
  CHECK(d.exercises == std::vector<std::string>{"e1", "e2", "e3"});
  CHECK(d.concepts == std::vector<std::string>{"c1", "c2"});
  CHECK(d.concept_names == std::vector<std::string>{"Angle", "Fraction"});
  CHECK(d.q[0] == std::vector<int>{0});
  CHECK(d.q[1] == std::vector<int>{0, 1});
  CHECK(d.q[2] == std::vector<int>{1});
  // row order is the attempt order when there is no timestamp column
  CHECK(d.records[0].order_index == 0);
  CHECK(d.records[3].order_index == 3);
}

TEST_CASE("load_domain: timestamp column overrides row order") {
  TempDir dir;
  write_toy_domain(dir);
  write_file(dir.file("records.csv"),
             "student_id,exercise_id,score,timestamp\n"
             "s1,e1,1,50\n"
             "s1,e2,0,10\n");
  write_file(dir.file("qmatrix.csv"), "exercise_id,concept_id\ne1,c1\ne2,c1\n");
  const Domain d = load_toy(dir);
  CHECK(d.records[0].order_index == 50);
  CHECK(d.records[1].order_index == 10);
}

TEST_CASE("load_domain rejects malformed input") {
  TempDir dir;
  write_toy_domain(dir);

  SUBCASE("non-binary score") {
    write_file(dir.file("records.csv"), "student_id,exercise_id,score\ns1,e1,2\n");
    CHECK_THROWS_WITH_AS(load_toy(dir), doctest::Contains("score"), Error);
  }
  SUBCASE("wrong column count") {
    write_file(dir.file("records.csv"), "student_id,exercise_id,score\ns1,e1\n");
    CHECK_THROWS_AS(load_toy(dir), Error);
  }
  SUBCASE("exercise without q row") {
    write_file(dir.file("qmatrix.csv"), "exercise_id,concept_id\ne1,c1\ne2,c1\n");
    try {
      load_toy(dir);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DanglingReference);
    }
  }
  SUBCASE("concept without name") {
    write_file(dir.file("names.csv"), "concept_id,concept_name\nc1,Angle\n");
    try {
      load_toy(dir);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DanglingReference);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_domain(dir.file("nope.csv"), dir.file("qmatrix.csv"),
                                dir.file("names.csv")),
                    Error);
  }
}

TEST_CASE("duplicate (student, exercise, order_index) is rejected") {
  std::vector<ResponseRecord> rs = {{"s1", "e1", 1, 0}, {"s1", "e1", 0, 0}};
  CHECK_THROWS_AS(make_domain("d", rs, {{"e1", "c1"}}, {{"c1", "A"}}), Error);
}

TEST_CASE("dedup keeps the earliest attempt and is idempotent") {
  std::vector<ResponseRecord> rs = {
      {"s1", "e1", 0, 5}, {"s1", "e1", 1, 2}, {"s1", "e2", 1, 1}, {"s2", "e1", 1, 9}};
  const Domain d =
      make_domain("d", rs, {{"e1", "c1"}, {"e2", "c1"}}, {{"c1", "A"}});
  const Domain once = dedup_first_attempt(d);

  REQUIRE(once.records.size() == 3);
  // s1/e1 keeps the order_index=2 attempt (score 1)
  bool found = false;
  for (const auto& r : once.records)
    if (r.student_id == "s1" && r.exercise_id == "e1") {
      found = true;
      CHECK(r.order_index == 2);
      CHECK(r.score == 1);
    }
  CHECK(found);

  const Domain twice = dedup_first_attempt(once);
  CHECK(record_keys(twice.records) == record_keys(once.records));
}

TEST_CASE("filter_students drops sparse students and prunes orphans") {
  std::vector<ResponseRecord> rs = {
      {"s1", "e1", 1, 0}, {"s1", "e2", 0, 1}, {"s2", "e3", 1, 2}};
  const Domain d = make_domain(
      "d", rs, {{"e1", "c1"}, {"e2", "c1"}, {"e3", "c2"}},
      {{"c1", "A"}, {"c2", "B"}});

  const Domain f = filter_students(d, 2);
  CHECK(f.students == std::vector<std::string>{"s1"});
  CHECK(f.exercises == std::vector<std::string>{"e1", "e2"});
  // c2 was only reachable through s2's exercise
  CHECK(f.concepts == std::vector<std::string>{"c1"});

  CHECK_THROWS_AS(filter_students(d, 10), Error);
  CHECK_THROWS_AS(filter_students(d, 0), Error);
}

TEST_CASE("split sizes follow floor-based ratios with remainder to test") {
  // 5 records: floor(3.5)=3 train, floor(1.0)=1 valid, 1 test
  std::vector<ResponseRecord> rs;
  for (int i = 0; i < 5; ++i)
    rs.push_back({"s1", "e" + std::to_string(i), i % 2, i});
  std::vector<std::pair<std::string, std::string>> q;
  for (int i = 0; i < 5; ++i) q.emplace_back("e" + std::to_string(i), "c1");
  const Domain d = make_domain("d", rs, q, {{"c1", "A"}});

  const SplitDomain sp = split_per_student(d, 42);
  CHECK(sp.train.size() == 3);
  CHECK(sp.valid.size() == 1);
  CHECK(sp.test.size() == 1);

  // partition: every record lands in exactly one side
  auto all = record_keys(sp.train);
  for (const auto& k : record_keys(sp.valid)) all.insert(k);
  for (const auto& k : record_keys(sp.test)) all.insert(k);
  CHECK(all == record_keys(d.records));
}

TEST_CASE("split is deterministic per seed and varies across seeds") {
  std::vector<ResponseRecord> rs;
  std::vector<std::pair<std::string, std::string>> q;
  for (int s = 0; s < 4; ++s)
    for (int e = 0; e < 10; ++e)
      rs.push_back({"s" + std::to_string(s), "e" + std::to_string(e), (s + e) % 2,
                    e});
  for (int e = 0; e < 10; ++e) q.emplace_back("e" + std::to_string(e), "c1");
  const Domain d = make_domain("d", rs, q, {{"c1", "A"}});

  const SplitDomain a = split_per_student(d, 1);
  const SplitDomain b = split_per_student(d, 1);
  CHECK(record_keys(a.train) == record_keys(b.train));
  CHECK(record_keys(a.test) == record_keys(b.test));

  const SplitDomain c = split_per_student(d, 2);
  CHECK(record_keys(a.train) != record_keys(c.train));
}

TEST_CASE("preprocess chains dedup, filter and split") {
  std::vector<ResponseRecord> rs;
  std::vector<std::pair<std::string, std::string>> q;
  for (int e = 0; e < 10; ++e) {
    rs.push_back({"s1", "e" + std::to_string(e), 1, e});
    q.emplace_back("e" + std::to_string(e), "c1");
  }
  rs.push_back({"s1", "e0", 0, 100});  // retry, dropped by dedup
  rs.push_back({"s2", "e0", 1, 0});    // sparse student, dropped by filter
  const Domain d = make_domain("d", rs, q, {{"c1", "A"}});

  const SplitDomain sp = preprocess(d, 5, 3);
  CHECK(sp.domain.n_students() == 1);
  CHECK(sp.train.size() + sp.valid.size() + sp.test.size() == 10);
  for (const auto& r : sp.train)
    CHECK(!(r.student_id == "s1" && r.exercise_id == "e0" && r.order_index == 100));
}
