#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dquag/error.hpp"
#include "dquag/quality.hpp"
#include "support.hpp"

using namespace dquag;
using Eigen::Index;

namespace {

std::vector<double> errors_with_exceeders(std::size_t n, std::size_t over, double threshold) {
  std::vector<double> e(n, threshold * 0.5);
  for (std::size_t i = 0; i < over; ++i) e[i * (n / std::max<std::size_t>(over, 1))] = threshold * 2.0;
  return e;
}

// Bundle whose only populated part is the codec; enough for repair.
ModelBundle codec_bundle() {
  auto schema = testing::make_schema(
      {{"color", ColumnKind::categorical}, {"v", ColumnKind::numeric}, {"when", ColumnKind::timestamp}});
  auto clean = parse_csv_text("color,v,when\nblue,0,2020-01-01\nred,10,2021-12-31\n", schema);
  ModelBundle b;
  b.codec = fit_codec(clean);
  return b;
}

ReconstructionReport report_for(const ModelBundle& b, Matrix repairs) {
  ReconstructionReport r;
  r.feature_names = b.codec.feature_names();
  r.repairs = std::move(repairs);
  r.feature_errors = Matrix::Zero(r.repairs.rows(), r.repairs.cols());
  r.instance_errors.assign(std::size_t(r.repairs.rows()), 0.0);
  return r;
}

// 36 numeric columns driven by two latent factors.
RawTable factor_table(std::size_t rows, std::uint64_t seed) {
  std::vector<std::pair<std::string, ColumnKind>> cols;
  for (int c = 0; c < 36; ++c) cols.emplace_back("m" + std::to_string(c), ColumnKind::numeric);
  RawTable t;
  t.schema = testing::make_schema(cols);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t i = 0; i < rows; ++i) {
    const double a = u(rng), b = u(rng);
    Row row;
    for (int c = 0; c < 36; ++c) {
      const double w = c / 35.0;
      row.push_back(format_number(100.0 * (w * a + (1.0 - w) * b) + noise(rng)));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

TEST_CASE("verdict at the cutoff") {
  Hyperparams hp;
  const double cutoff = verdict_cutoff(hp);
  CHECK(cutoff == doctest::Approx(0.06).epsilon(1e-12));
  auto seven = verdict_from_errors(errors_with_exceeders(100, 7, 1.0), 1.0, cutoff);
  CHECK(seven.r_error == 0.07);
  CHECK(seven.problematic());
  CHECK(seven.flagged_instances.size() == 7);
  auto six = verdict_from_errors(errors_with_exceeders(100, 6, 1.0), 1.0, cutoff);
  CHECK(six.r_error == 0.06);
  CHECK_FALSE(six.problematic());
  // an error equal to the threshold does not exceed it
  std::vector<double> at(10, 1.0);
  CHECK(verdict_from_errors(at, 1.0, cutoff).r_error == 0.0);
  CHECK_THROWS_AS(verdict_from_errors(std::vector<double>{}, 1.0, cutoff), EmptyReport);
}

TEST_CASE("verdict is permutation invariant and monotone in the threshold") {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> e(300);
  for (auto& v : e) v = ex(rng);
  auto base = verdict_from_errors(e, 1.5, 0.06);
  auto shuffled = e;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto other = verdict_from_errors(shuffled, 1.5, 0.06);
  CHECK(other.r_error == base.r_error);
  CHECK(other.verdict == base.verdict);
  double previous = 2.0;
  for (double t = 0.0; t < 6.0; t += 0.25) {
    const double r = verdict_from_errors(e, t, 0.06).r_error;
    CHECK(r <= previous);
    previous = r;
  }
}

TEST_CASE("feature flagging") {
  std::vector<double> wide(36, 1.0);
  wide[17] = 100.0;
  CHECK(flag_features(wide) == std::vector<std::size_t>{17});
  CHECK(flag_features(std::vector<double>{1, 1, 1, 1, 100}).empty());
  CHECK(flag_features(std::vector<double>{3.0}).empty());
  CHECK(flag_features(std::vector<double>(10, 0.2)).empty());
  auto scaled = wide;
  for (auto& v : scaled) v *= 7.3;
  CHECK(flag_features(scaled) == flag_features(wide));
  // mean + sqrt(n - 1) sigma bounds every value, so short rows never flag
  std::mt19937_64 rng(6);
  std::lognormal_distribution<double> heavy(0.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> e(2 + trial % 25);
    for (auto& v : e) v = heavy(rng);
    CHECK(flag_features(e).empty());
  }
}

TEST_CASE("verdict json") {
  ValidationVerdict v;
  v.verdict = Verdict::problematic;
  v.r_error = 0.5;
  v.threshold = 0.1;
  v.flagged_instances = {1};
  v.flagged_cells = {{1, "age"}};
  auto j = verdict_to_json(v);
  CHECK(j["verdict"] == "problematic");
  CHECK(j["flagged_cells"][0][0] == 1);
  CHECK(j["flagged_cells"][0][1] == "age");
  CHECK(change_log_csv({{2, "city", "Oslo", "Paris, TX"}}) == "instance,feature,old,new\n2,city,Oslo,\"Paris, TX\"\n");
}

TEST_CASE("repair decodes flagged cells only") {
  auto b = codec_bundle();
  auto data = parse_csv_text("color,v,when\nblue,3,2021-02-10\nblue,,2020-05-05\n", b.schema());
  Matrix out(2, 5);
  out << 0.9, 0.42, 0.0, 0.0, 1.0,  //
      0.2, 0.5, 1.0, 0.5, 0.0;
  auto r = report_for(b, out);
  ValidationVerdict v;
  v.flagged_cells = {{0, "color"}, {0, "when.day"}, {1, "v"}};
  auto fixed = repair(data, r, v, b);
  CHECK(*fixed.table.rows[0][0] == "red");
  CHECK(*fixed.table.rows[0][1] == "3");
  // day decodes to 31 and is clamped to February
  CHECK(*fixed.table.rows[0][2] == "2021-02-28");
  CHECK(*fixed.table.rows[1][1] == "5");
  CHECK(*fixed.table.rows[1][0] == "blue");
  REQUIRE(fixed.changes.size() == 3);
  CHECK(fixed.changes[2].old_value == "");
  CHECK(fixed.changes[2].new_value == "5");

  auto again = repair(fixed.table, r, v, b);
  CHECK(again.changes.empty());
  CHECK(again.table.rows == fixed.table.rows);

  auto untouched = repair(data, r, ValidationVerdict{}, b);
  CHECK(untouched.table.rows == data.rows);
  CHECK(untouched.changes.empty());
}

TEST_CASE("repair rebuilds a missing timestamp from every part") {
  auto b = codec_bundle();
  auto data = parse_csv_text("color,v,when\nred,1,\n", b.schema());
  Matrix out(1, 5);
  out << 1.0, 0.1, 1.0, 1.0 / 11.0, 14.0 / 30.0;
  ValidationVerdict v;
  v.flagged_cells = {{0, "when.month"}};
  auto fixed = repair(data, report_for(b, out), v, b);
  CHECK(*fixed.table.rows[0][2] == "2021-02-15");
  ValidationVerdict bad;
  bad.flagged_cells = {{0, "nope"}};
  CHECK_THROWS_AS(repair(data, report_for(b, out), bad, b), SchemaMismatch);
}

TEST_CASE("scoring the clean set reproduces the profile") {
  RawTable t = factor_table(300, 1);
  t.rows.resize(300);
  auto codec = fit_codec(t);
  auto data = encode(t, codec);
  FeatureGraph g(codec.feature_names());
  for (std::size_t i = 0; i + 1 < 36; ++i) g.add_edge(i, i + 1);
  Hyperparams hp;
  hp.seed = 2;
  hp.epochs = 2;
  hp.hidden_dim = 4;
  hp.decoder_hidden = 8;
  auto bundle = train(codec, data, g, hp);
  auto report = score(t, bundle);
  REQUIRE(report.size() == bundle.profile.errors.size());
  for (std::size_t i = 0; i < report.size(); ++i)
    CHECK(std::abs(report.instance_errors[i] - bundle.profile.errors[i]) <= 1e-12);
  auto v = verdict(report, bundle);
  CHECK(v.r_error == doctest::Approx(0.05).epsilon(1e-12));
  CHECK_FALSE(v.problematic());
  RawTable other;
  other.schema = testing::make_schema({{"m0", ColumnKind::numeric}});
  CHECK_THROWS_AS(score(other, bundle), SchemaMismatch);
}

TEST_CASE("wide table: corrupted cells are flagged and repaired") {
  const RawTable clean = factor_table(1500, 2);
  auto codec = fit_codec(clean);
  auto data = encode(clean, codec);
  FeatureGraph g(codec.feature_names());
  for (std::size_t i = 0; i < 36; ++i)
    for (std::size_t k = i + 1; k < std::min<std::size_t>(36, i + 4); ++k) g.add_edge(i, k);
  Hyperparams hp;
  hp.seed = 3;
  hp.epochs = 30;
  hp.hidden_dim = 8;
  hp.decoder_hidden = 64;
  auto bundle = train(codec, data, g, hp);

  RawTable dirty = factor_table(200, 4);
  const RawTable truth = dirty;
  std::vector<std::size_t> hit;
  for (std::size_t i = 0; i < dirty.rows.size(); i += 4) {
    dirty.rows[i][20] = "400";
    hit.push_back(i);
  }
  auto report = score(dirty, bundle);
  auto v = verdict(report, bundle);
  CHECK(v.problematic());
  std::size_t caught = 0;
  for (const auto& c : v.flagged_cells) {
    CHECK(c.feature == "m20");
    caught += std::binary_search(hit.begin(), hit.end(), c.instance) ? 1 : 0;
  }
  MESSAGE("flagged cells " << v.flagged_cells.size() << " of " << hit.size());
  CHECK(caught == hit.size());
  auto fixed = repair(dirty, report, v, bundle);
  auto rescored = score(fixed.table, bundle);
  double deviation = 0.0, corruption = 0.0, before = 0.0, after = 0.0;
  for (auto i : hit) {
    const double repaired = *parse_number(*fixed.table.rows[i][20]), original = *parse_number(*truth.rows[i][20]);
    CHECK(repaired >= codec.features[20].min);
    CHECK(repaired <= codec.features[20].max);
    deviation += std::abs(repaired - original);
    corruption += std::abs(400.0 - original);
    before += report.instance_errors[i];
    after += rescored.instance_errors[i];
  }
  MESSAGE("cell deviation " << deviation / corruption << " of the corruption, row error " << after / before);
  CHECK(deviation < 0.1 * corruption);
  CHECK(after < 0.01 * before);
  for (std::size_t i = 0; i < dirty.rows.size(); ++i)
    if (!std::binary_search(hit.begin(), hit.end(), i)) CHECK(fixed.table.rows[i] == dirty.rows[i]);
}
