#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "dquag/bench.hpp"
#include "dquag/error.hpp"
#include "support.hpp"

using namespace dquag;

namespace {

SyntheticSpec doubling_spec(double noise) {
  SyntheticSpec s;
  s.rows = 2000;
  s.numeric = 3;
  s.categorical = 1;
  s.seed = 5;
  s.dependencies = {{"x2", "x0", 2.0, "", 0.0, 0.0, noise}};
  return s;
}

ModelBundle threshold_bundle(double threshold) {
  ModelBundle b;
  b.profile.threshold = threshold;
  return b;
}

ModelBundle tiny_bundle(const RawTable& clean, const SyntheticSpec& spec) {
  auto codec = fit_codec(clean);
  Hyperparams hp;
  hp.seed = 1;
  hp.epochs = 2;
  hp.hidden_dim = 8;
  hp.decoder_hidden = 16;
  return train(codec, encode(clean, codec), dependency_graph(spec), hp);
}

}  // namespace

TEST_CASE("generator: exact dependency and byte-stable output") {
  auto spec = doubling_spec(0.0);
  auto t = gen_synthetic(spec);
  REQUIRE(t.row_count() == 2000);
  CHECK(t.schema.names() == std::vector<std::string>{"x0", "x1", "x2", "c0"});
  for (const auto& row : t.rows) CHECK(*parse_number(*row[2]) == 2.0 * *parse_number(*row[0]));
  CHECK(to_csv_text(gen_synthetic(spec)) == to_csv_text(t));
  spec.seed = 6;
  CHECK(to_csv_text(gen_synthetic(spec)) != to_csv_text(t));
  const auto& words = category_words();
  for (const auto& row : t.rows) {
    auto it = std::find(words.begin(), words.end(), *row[3]);
    REQUIRE(it != words.end());
    CHECK(std::size_t(it - words.begin()) < spec.categories);
    const double x1 = *parse_number(*row[1]);
    CHECK(x1 >= spec.low);
    CHECK(x1 < spec.high);
  }
}

TEST_CASE("generator: noise has the half-normal mean") {
  const double sigma = 0.01;
  auto spec = doubling_spec(sigma);
  spec.rows = 20000;
  auto t = gen_synthetic(spec);
  double total = 0.0;
  for (const auto& row : t.rows) total += std::abs(*parse_number(*row[2]) - 2.0 * *parse_number(*row[0]));
  const double mean = total / double(t.row_count());
  const double expected = sigma * std::sqrt(2.0 / M_PI);
  CHECK(std::abs(mean - expected) <= 3.0 * sigma / std::sqrt(double(t.row_count())));
}

TEST_CASE("spec validation, json and dependency graph") {
  auto spec = desk_scale_spec(42);
  CHECK_NOTHROW(spec.validate());
  nlohmann::json j = spec;
  CHECK(nlohmann::json(j.get<SyntheticSpec>()) == j);
  auto g = dependency_graph(spec);
  CHECK(g.nodes() == spec.schema().names());
  CHECK(g.edge_count() == 4);
  CHECK(g.has_edge(*g.index_of("x0"), *g.index_of("x2")));
  CHECK(g.has_edge(*g.index_of("x4"), *g.index_of("x5")));
  auto bad = spec;
  bad.dependencies.push_back({"x9", "x0"});
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.categories = 99;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("batch suites") {
  auto suite = make_batch_suite(1000, 800, 44);
  REQUIRE(suite.batches.size() == 100);
  std::set<std::vector<std::size_t>> distinct;
  for (std::size_t b = 0; b < 100; ++b) {
    const auto& batch = suite.batches[b];
    CHECK(batch.dirty == (b >= 50));
    CHECK(batch.rows.size() == (batch.dirty ? 80u : 100u));
    CHECK(std::is_sorted(batch.rows.begin(), batch.rows.end()));
    CHECK(std::adjacent_find(batch.rows.begin(), batch.rows.end()) == batch.rows.end());
    CHECK(batch.rows.back() < (batch.dirty ? 800u : 1000u));
    distinct.insert(batch.rows);
  }
  CHECK(distinct.size() == 100);
  CHECK(make_batch_suite(1000, 800, 44).batches[7].rows == suite.batches[7].rows);
  CHECK(make_batch_suite(1000, 800, 45).batches[7].rows != suite.batches[7].rows);
  CHECK_THROWS_AS(sample_rows(10, 11, 1, 0), TooFewRows);
  CHECK(sample_rows(10, 10, 1, 0).size() == 10);
}

TEST_CASE("summary metrics") {
  std::vector<BatchOutcome> all_right, all_flagged, none_flagged;
  for (int b = 0; b < 100; ++b) {
    const bool dirty = b >= 50;
    all_right.push_back({dirty, dirty, 0.0});
    all_flagged.push_back({dirty, true, 0.0});
    none_flagged.push_back({dirty, false, 0.0});
  }
  CHECK(summarize(all_right).accuracy == 1.0);
  CHECK(summarize(all_right).recall == 1.0);
  CHECK(summarize(all_flagged).accuracy == 0.5);
  CHECK(summarize(all_flagged).recall == 1.0);
  CHECK(summarize(none_flagged).accuracy == 0.5);
  CHECK(summarize(none_flagged).recall == 0.0);

  std::mt19937_64 rng(3);
  std::vector<BatchOutcome> mixed;
  int tp = 0, tn = 0, fp = 0, fn = 0;
  for (int b = 0; b < 137; ++b) {
    const bool dirty = rng() % 3 == 0, flagged = rng() % 2 == 0;
    mixed.push_back({dirty, flagged, 0.0});
    (dirty ? (flagged ? tp : fn) : (flagged ? fp : tn))++;
  }
  auto r = summarize(mixed);
  CHECK(r.accuracy == doctest::Approx(double(tp + tn) / double(tp + tn + fp + fn)).epsilon(1e-15));
  CHECK(r.recall == doctest::Approx(double(tp) / double(tp + fn)).epsilon(1e-15));
}

TEST_CASE("separation over precomputed errors") {
  std::vector<double> clean(1000, 0.5), dirty(1000, 0.5);
  for (std::size_t i = 0; i < dirty.size(); i += 5) dirty[i] = 2.0;  // 20% above threshold
  for (std::size_t i = 0; i < clean.size(); i += 50) clean[i] = 2.0;  // 2%
  auto bundle = threshold_bundle(1.0);
  auto suite = make_batch_suite(1000, 1000, 9);
  auto r = run_separation(bundle, clean, dirty, suite);
  REQUIRE(r.batches.size() == 100);
  for (std::size_t b = 0; b < 100; ++b) {
    const auto& rows = suite.batches[b].rows;
    const auto& src = suite.batches[b].dirty ? dirty : clean;
    std::size_t over = 0;
    for (auto i : rows) over += src[i] > 1.0 ? 1 : 0;
    const double rate = double(over) / double(rows.size());
    CHECK(r.batches[b].r_error == rate);
    CHECK(r.batches[b].flagged == (rate > 0.06 * (1 + 1e-12)));
  }
  CHECK(r.recall == 1.0);
  CHECK(r.accuracy > 0.9);
  nlohmann::json j = to_json(r);
  CHECK(j["accuracy"] == r.accuracy);
}

TEST_CASE("sample-size sweep") {
  std::vector<double> clean(600), dirty(600);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& e : clean) e = u(rng) < 0.03 ? 2.0 : 0.1;
  for (auto& e : dirty) e = u(rng) < 0.3 ? 2.0 : 0.1;
  auto bundle = threshold_bundle(1.0);
  auto rows = run_sample_size_sweep(bundle, clean, dirty, {10, 50, 500}, 44);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].accuracy >= rows[0].accuracy);
  CHECK_THROWS_AS(run_sample_size_sweep(bundle, clean, dirty, {601}, 44), TooFewRows);
  auto full = run_sample_size_sweep(bundle, clean, dirty, {600}, 44, 5);
  CHECK((full[0].accuracy == 0.5 || full[0].accuracy == 1.0 || full[0].accuracy == 0.0));
  CHECK(sweep_csv(rows).rfind("size,accuracy,recall\n", 0) == 0);
}

TEST_CASE("scalability table shape") {
  auto spec = desk_scale_spec(42);
  spec.rows = 400;
  auto clean = gen_synthetic(spec);
  auto bundle = tiny_bundle(clean, spec);
  auto rows = run_scalability(bundle, {200, 400}, {8, 4}, 3);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.seconds > 0.0);
  CHECK(timing_csv(rows).rfind("rows,dims,seconds\n", 0) == 0);
}

TEST_CASE("ablation runs every variant") {
  auto spec = desk_scale_spec(42);
  spec.rows = 600;
  auto train_clean = gen_synthetic(spec);
  spec.seed = 1042;
  auto holdout = gen_synthetic(spec);
  Hyperparams hp;
  hp.epochs = 3;
  hp.hidden_dim = 8;
  hp.decoder_hidden = 16;
  const std::vector<EncoderVariant> variants{EncoderVariant::gat_gin, EncoderVariant::gcn, EncoderVariant::gcn_gat,
                                             EncoderVariant::gcn_gin};
  auto rows = run_ablation(train_clean, train_clean, holdout, dependency_graph(spec), variants, {7, 8}, hp);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    REQUIRE(r.gaps.size() == 2);
    for (double g : r.gaps) CHECK(std::isfinite(g));
    CHECK(r.mean_gap == doctest::Approx((r.gaps[0] + r.gaps[1]) / 2).epsilon(1e-15));
  }
  auto csv = ablation_csv(rows);
  CHECK(csv.rfind("encoder,mean_gap,gap_0,gap_1\n", 0) == 0);
  CHECK(csv.find("\nGCN+GIN,") != std::string::npos);
  CHECK(flagged_percent(std::vector<double>{1, 2, 3, 4}, 2.5) == 50.0);
}

TEST_CASE("run directories and logs") {
  testing::TempDir dir;
  nlohmann::json config{{"suite", "separation"}, {"seed", 44}};
  auto a = make_run_dir(dir.path(), config);
  auto b = make_run_dir(dir.path(), config);
  CHECK(a == b);
  CHECK(a.filename().string().size() == 16);
  CHECK(a.filename().string() == sha256_hex(config.dump()).substr(0, 16));
  std::ifstream in(a / "config.json");
  CHECK(nlohmann::json::parse(in) == config);
  CHECK(make_run_dir(dir.path(), {{"seed", 45}}) != a);
  {
    RunLog log(a / "log.jsonl");
    log.event("start");
    log.event("batch", {{"index", 3}});
  }
  std::ifstream lines(a / "log.jsonl");
  std::string line;
  std::vector<nlohmann::json> events;
  while (std::getline(lines, line)) events.push_back(nlohmann::json::parse(line));
  REQUIRE(events.size() == 2);
  CHECK(events[1]["event"] == "batch");
  CHECK(events[1]["index"] == 3);
  CHECK(events[0].contains("unix_ms"));
}
