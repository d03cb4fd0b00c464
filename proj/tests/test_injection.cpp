#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "dquag/error.hpp"
#include "dquag/injection.hpp"
#include "support.hpp"

using namespace dquag;

namespace {

const Schema kMixed = testing::make_schema({{"id", ColumnKind::numeric},
                                            {"score", ColumnKind::numeric},
                                            {"city", ColumnKind::categorical},
                                            {"limit", ColumnKind::numeric}});

// score in [0, 10], limit >= score, city from a small word list.
RawTable mixed_table(std::size_t rows, std::uint64_t seed) {
  static const std::vector<std::string> cities{"Oslo", "Lima", "Quito", "Bern", "Dakar"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  RawTable t;
  t.schema = kMixed;
  for (std::size_t i = 0; i < rows; ++i) {
    const double score = u(rng);
    t.rows.push_back({std::to_string(i), format_number(score), cities[rng() % cities.size()],
                      format_number(score + u(rng))});
  }
  return t;
}

InjectionPlan plan_for(std::vector<std::string> targets, std::vector<ErrorKind> kinds, std::uint64_t seed,
                       double rate = 0.2) {
  InjectionPlan p;
  p.targets = std::move(targets);
  p.kinds = std::move(kinds);
  p.seed = seed;
  p.rate = rate;
  return p;
}

std::set<std::pair<std::size_t, std::size_t>> cell_set(const ErrorMask& m) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : m.cells) out.insert({c.row, c.column});
  return out;
}

void check_coverage(const RawTable& clean, const Injection& inj) {
  for (std::size_t i = 0; i < clean.rows.size(); ++i)
    for (std::size_t c = 0; c < clean.schema.size(); ++c) {
      if (inj.mask.contains(i, c)) CHECK(inj.table.rows[i][c] != clean.rows[i][c]);
      else CHECK(inj.table.rows[i][c] == clean.rows[i][c]);
    }
}

}  // namespace

TEST_CASE("corruption count rounds half up") {
  CHECK(corruption_count(0.2, 100) == 20);
  CHECK(corruption_count(0.25, 10) == 3);
  CHECK(corruption_count(0.2, 1) == 0);
  CHECK(corruption_count(0.5, 1) == 1);
  CHECK(corruption_count(1.0, 7) == 7);
}

TEST_CASE("missing values") {
  auto clean = mixed_table(100, 1);
  auto inj = inject_missing(clean, plan_for({"score", "city"}, {ErrorKind::missing}, 3));
  CHECK(inj.mask.size() == 40);
  CHECK(inj.mask.count(ErrorKind::missing) == 40);
  for (const auto& c : inj.mask.cells) CHECK_FALSE(inj.table.rows[c.row][c.column].has_value());
  check_coverage(clean, inj);
  auto all = inject_missing(clean, plan_for({"limit"}, {ErrorKind::missing}, 3, 1.0));
  for (const auto& row : all.table.rows) CHECK_FALSE(row[3].has_value());
  auto again = inject_missing(clean, plan_for({"score", "city"}, {ErrorKind::missing}, 3));
  CHECK(again.mask.cells == inj.mask.cells);
  CHECK(again.table.rows == inj.table.rows);
  CHECK(inject_missing(clean, plan_for({"score", "city"}, {ErrorKind::missing}, 4)).mask.cells != inj.mask.cells);
}

TEST_CASE("numeric anomalies leave the clean range") {
  auto clean = mixed_table(500, 2);
  auto inj = inject_numeric_anomaly(clean, plan_for({"score", "city"}, {ErrorKind::numeric_anomaly}, 5));
  CHECK(inj.mask.size() == 100);  // categorical target is not eligible
  double lo = 1e300, hi = -1e300;
  for (const auto& row : clean.rows) {
    lo = std::min(lo, *parse_number(*row[1]));
    hi = std::max(hi, *parse_number(*row[1]));
  }
  for (const auto& c : inj.mask.cells) {
    const double v = *parse_number(*inj.table.rows[c.row][c.column]);
    CHECK(v > hi + (hi - lo));
    CHECK(v <= hi + 3.0 * (hi - lo) + 1e-9);
  }
  check_coverage(clean, inj);
}

TEST_CASE("anomaly replays the seeded generator") {
  RawTable t;
  t.schema = testing::make_schema({{"v", ColumnKind::numeric}});
  t.rows = {{"0"}, {"1"}};
  auto inj = inject_numeric_anomaly(t, plan_for({"v"}, {ErrorKind::numeric_anomaly}, 7, 0.5));
  REQUIRE(inj.mask.size() == 1);
  auto rng = injection_rng(7, ErrorKind::numeric_anomaly, 0);
  const std::size_t row = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  CHECK(inj.mask.cells[0].row == row);
  CHECK(*inj.table.rows[row][0] == format_number(1.0 + (3.0 - 2.0 * u) * 1.0));
}

TEST_CASE("qwerty neighbours") {
  auto sorted = [](std::string s) {
    std::sort(s.begin(), s.end());
    return s;
  };
  CHECK(sorted(qwerty_neighbors('a')) == "qswz");
  CHECK(sorted(qwerty_neighbors('g')) == "bfhtvy");
  CHECK(sorted(qwerty_neighbors('A')) == "qswz");
  CHECK(sorted(qwerty_neighbors('p')) == "lo");
  CHECK(qwerty_neighbors('7').empty());
}

TEST_CASE("typos change one letter to a neighbour") {
  RawTable t;
  t.schema = testing::make_schema({{"name", ColumnKind::categorical}});
  for (int i = 0; i < 200; ++i) t.rows.push_back({i % 2 ? std::string("Ab") : std::string("x-1 Road")});
  t.rows.push_back({std::string("123")});
  auto inj = inject_typos(t, plan_for({"name"}, {ErrorKind::typo}, 9, 0.5));
  CHECK(inj.mask.size() == corruption_count(0.5, 201));
  for (const auto& c : inj.mask.cells) {
    const auto& before = *t.rows[c.row][0];
    const auto& after = *inj.table.rows[c.row][0];
    CHECK(before != "123");
    REQUIRE(before.size() == after.size());
    int diffs = 0;
    for (std::size_t p = 0; p < before.size(); ++p) {
      if (before[p] == after[p]) continue;
      ++diffs;
      CHECK(std::isalpha(static_cast<unsigned char>(before[p])));
      CHECK(qwerty_neighbors(before[p]).find(char(std::tolower(after[p]))) != std::string::npos);
      CHECK(bool(std::isupper(static_cast<unsigned char>(before[p]))) == bool(std::isupper(static_cast<unsigned char>(after[p]))));
    }
    CHECK(diffs == 1);
  }
}

TEST_CASE("ordered-pair conflicts") {
  auto clean = mixed_table(300, 3);
  auto rule = ordered_pair_rule(clean, "score", "limit", "score_over_limit");
  for (const auto& row : clean.rows) CHECK(rule.consistent(row));
  InjectionPlan plan = plan_for({}, {ErrorKind::conflict}, 11, 0.1);
  auto inj = inject_conflict(clean, rule, plan);
  CHECK(inj.mask.size() == 30);
  for (const auto& c : inj.mask.cells) {
    CHECK(c.column == 1);
    const auto& row = inj.table.rows[c.row];
    CHECK(*parse_number(*row[1]) > *parse_number(*row[3]));
    CHECK_FALSE(rule.consistent(row));
  }
  check_coverage(clean, inj);
  plan.rate = 0.0;
  auto none = inject_conflict(clean, rule, plan);
  CHECK(none.mask.size() == 0);
  CHECK(none.table.rows == clean.rows);
}

TEST_CASE("custom conflict rule: group bookings without adults") {
  auto schema = testing::make_schema(
      {{"type", ColumnKind::categorical}, {"adults", ColumnKind::numeric}, {"babies", ColumnKind::numeric}});
  RawTable t;
  t.schema = schema;
  for (int i = 0; i < 100; ++i) t.rows.push_back({i % 4 ? "Transient" : "Group", std::to_string(1 + i % 3), "0"});
  ConflictRule rule;
  rule.name = "group_without_adults";
  rule.columns = {"type", "adults", "babies"};
  rule.guard = [](const Row& r) { return *r[0] == "Group" && *r[1] != "0"; };
  rule.consistent = [](const Row& r) { return !(*r[1] == "0" && *parse_number(*r[2]) > 0); };
  rule.mutation = [](Row& r, std::mt19937_64& rng) {
    r[1] = "0";
    r[2] = std::to_string(1 + rng() % 3);
  };
  auto inj = inject_conflict(t, rule, plan_for({}, {ErrorKind::conflict}, 2, 0.2));
  CHECK(inj.mask.rows().size() == 20);
  CHECK(inj.mask.size() == 40);
  for (auto i : inj.mask.rows()) {
    CHECK(*inj.table.rows[i][0] == "Group");
    CHECK(*inj.table.rows[i][1] == "0");
    CHECK_FALSE(rule.consistent(inj.table.rows[i]));
  }
  rule.guard = [](const Row&) { return false; };
  CHECK_THROWS_AS(inject_conflict(t, rule, plan_for({}, {ErrorKind::conflict}, 2, 0.2)), NoEligibleRows);
}

TEST_CASE("combination conflicts") {
  auto clean = mixed_table(400, 4);
  auto rule = combination_rule(clean, {"score", "city", "limit"});
  InjectionPlan plan = plan_for({}, {ErrorKind::conflict}, 6, 0.05);
  auto inj = inject_conflict(clean, rule, plan);
  CHECK(inj.mask.rows().size() == 20);
  for (auto i : inj.mask.rows()) {
    CHECK_FALSE(rule.consistent(inj.table.rows[i]));
    CHECK(*inj.table.rows[i][2] == "Quito");
  }
  CHECK_THROWS_AS(combination_rule(clean, {"score", "city"}), InvalidArgument);
}

TEST_CASE("make_dirty composes kinds without overlap") {
  auto clean = mixed_table(1000, 5);
  auto plan = plan_for({"score", "city", "limit"},
                       {ErrorKind::missing, ErrorKind::numeric_anomaly, ErrorKind::typo, ErrorKind::conflict}, 43);
  plan.conflicts = {{"order", "ordered_pair", {"score", "limit"}}};
  auto dirty = make_dirty(clean, plan);
  check_coverage(clean, dirty);
  CHECK(cell_set(dirty.mask).size() == dirty.mask.size());

  // each kind alone, then resolved by priority
  auto m = cell_set(inject_missing(clean, plan).mask);
  auto a = cell_set(inject_numeric_anomaly(clean, plan).mask);
  auto ty = cell_set(inject_typos(clean, plan).mask);
  CHECK(m.size() == 600);
  CHECK(a.size() == 400);
  CHECK(ty.size() == 200);
  std::size_t anomaly_kept = 0, typo_kept = 0;
  for (auto c : a) anomaly_kept += m.count(c) ? 0 : 1;
  for (auto c : ty) typo_kept += m.count(c) ? 0 : 1;
  CHECK(dirty.mask.count(ErrorKind::missing) == 600);
  CHECK(dirty.mask.count(ErrorKind::numeric_anomaly) == anomaly_kept);
  CHECK(dirty.mask.count(ErrorKind::typo) == typo_kept);
  // overlaps per column are hypergeometric with mean 40 each
  const double overlap = double(a.size() - anomaly_kept);
  CHECK(std::abs(overlap - 80.0) <= 3.0 * std::sqrt(2 * 200 * 0.2 * 0.8 * 800.0 / 999.0));
  auto claimed = m;
  claimed.insert(a.begin(), a.end());
  claimed.insert(ty.begin(), ty.end());
  std::size_t conflict_rows = 0;
  for (const auto& c : dirty.mask.cells)
    if (c.kind == ErrorKind::conflict) {
      CHECK(c.column == 1);
      CHECK_FALSE(claimed.count({c.row, c.column}));
      ++conflict_rows;
    }
  CHECK(conflict_rows <= 200);
  CHECK(conflict_rows > 0);

  auto only_missing = plan;
  only_missing.kinds = {ErrorKind::missing};
  CHECK(make_dirty(clean, only_missing).mask.cells == inject_missing(clean, plan).mask.cells);
  CHECK(make_dirty(clean, plan).table.rows == dirty.table.rows);
}

TEST_CASE("plan validation and json") {
  auto clean = mixed_table(10, 6);
  auto plan = plan_for({"score"}, {ErrorKind::missing}, 1);
  CHECK_NOTHROW(plan.validate(clean.schema));
  auto bad = plan;
  bad.targets = {"nope"};
  CHECK_THROWS_AS(bad.validate(clean.schema), SchemaMismatch);
  bad = plan;
  bad.rate = 1.5;
  CHECK_THROWS_AS(bad.validate(clean.schema), InvalidArgument);
  bad = plan;
  bad.kinds = {ErrorKind::conflict};
  CHECK_THROWS(make_dirty(clean, bad));
  plan.conflicts = {{"c", "ordered_pair", {"score", "limit"}}};
  nlohmann::json j = plan;
  auto back = j.get<InjectionPlan>();
  CHECK(nlohmann::json(back) == j);
  CHECK(j["kinds"][0] == "missing");
  testing::TempDir dir;
  CHECK_THROWS_AS(load_plan(dir.file("none.json")), IoError);
  auto inj = inject_missing(clean, plan_for({"score"}, {ErrorKind::missing}, 1, 0.2));
  CHECK(mask_csv(inj.mask, clean.schema).rfind("row,column,kind\n", 0) == 0);
  CHECK(mask_csv(inj.mask, clean.schema).find(",score,missing\n") != std::string::npos);
}
