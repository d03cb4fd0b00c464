#include "dquag/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "dquag/error.hpp"

namespace dquag {

namespace {

std::vector<std::size_t> partial_shuffle(std::size_t rows, std::size_t size, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rows - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> gather(std::span<const double> errors, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(errors[r]);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Rows drawn uniformly inside the codec's clean ranges.
RawTable sample_from_codec(const Codec& codec, std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RawTable t{codec.schema, {}};
  t.rows.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    Row row(codec.schema.size());
    for (std::size_t c = 0; c < codec.schema.size(); ++c) {
      const auto feats = codec.features_of_column(c);
      const auto& f0 = codec.features[feats.front()];
      if (f0.is_categorical()) {
        std::uniform_int_distribution<std::size_t> pick(0, f0.vocabulary.size() - 1);
        row[c] = f0.vocabulary[pick(rng)];
      } else if (codec.schema[c].kind == ColumnKind::timestamp) {
        int parts[3] = {0, 1, 1};
        for (auto j : feats) {
          const auto& f = codec.features[j];
          parts[static_cast<int>(*f.part)] = static_cast<int>(std::round(f.min + unit(rng) * (f.max - f.min)));
        }
        Date d{parts[0], std::clamp(parts[1], 1, 12), 1};
        d.day = std::clamp(parts[2], 1, days_in_month(d.year, d.month));
        row[c] = format_date(d);
      } else {
        row[c] = format_number(f0.min + unit(rng) * (f0.max - f0.min));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

ModelBundle untrained_bundle(std::size_t dims, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.rows = 1000;
  spec.numeric = dims;
  spec.categorical = 0;
  spec.seed = seed;
  const auto calib = gen_synthetic(spec);
  ModelBundle b;
  b.codec = fit_codec(calib);
  b.graph = FeatureGraph(b.codec.feature_names());
  for (std::size_t j = 1; j < dims; ++j) b.graph.add_edge(j - 1, j);
  b.hyperparams.seed = seed;
  b.params = init_model(dims, b.hyperparams.hidden_dim, b.hyperparams.decoder_hidden, b.hyperparams.variant, seed);
  b.profile = calibrate_profile(b, encode(calib, b.codec));
  return b;
}

}  // namespace

const std::vector<std::string>& category_words() {
  static const std::vector<std::string> words{
      "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
      "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
      "xray", "yankee", "zulu"};
  return words;
}

Schema SyntheticSpec::schema() const {
  std::vector<Column> cols;
  for (std::size_t k = 0; k < numeric; ++k)
    cols.push_back({"x" + std::to_string(k), ColumnKind::numeric, "numeric measurement " + std::to_string(k)});
  for (std::size_t k = 0; k < categorical; ++k)
    cols.push_back({"c" + std::to_string(k), ColumnKind::categorical, "category label " + std::to_string(k)});
  return Schema(std::move(cols));
}

void SyntheticSpec::validate() const {
  if (rows == 0) throw InvalidArgument("synthetic spec needs rows > 0");
  if (numeric + categorical == 0) throw InvalidArgument("synthetic spec needs at least one column");
  if (categorical > 0 && (categories < 2 || categories > category_words().size()))
    throw InvalidArgument("categories must lie in [2, " + std::to_string(category_words().size()) + "]");
  if (!(high > low)) throw InvalidArgument("synthetic range needs high > low");
  const auto s = schema();
  for (const auto& d : dependencies) {
    for (const auto* name : {&d.target, &d.a}) {
      auto idx = s.index_of(*name);
      if (!idx || s[*idx].kind != ColumnKind::numeric) throw InvalidArgument("dependency column '" + *name + "' is not numeric");
    }
    if (!d.b.empty()) {
      auto idx = s.index_of(d.b);
      if (!idx || s[*idx].kind != ColumnKind::numeric) throw InvalidArgument("dependency column '" + d.b + "' is not numeric");
    }
    if (d.noise < 0.0) throw InvalidArgument("dependency noise must be >= 0");
  }
}

void to_json(nlohmann::json& j, const SyntheticSpec& spec) {
  auto deps = nlohmann::json::array();
  for (const auto& d : spec.dependencies)
    deps.push_back({{"target", d.target}, {"a", d.a}, {"coef_a", d.coef_a}, {"b", d.b}, {"coef_b", d.coef_b},
                    {"intercept", d.intercept}, {"noise", d.noise}});
  j = nlohmann::json{{"rows", spec.rows}, {"numeric", spec.numeric}, {"categorical", spec.categorical},
                     {"categories", spec.categories}, {"low", spec.low}, {"high", spec.high},
                     {"dependencies", std::move(deps)}, {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& spec) {
  spec = SyntheticSpec{};
  spec.rows = j.value("rows", spec.rows);
  spec.numeric = j.value("numeric", spec.numeric);
  spec.categorical = j.value("categorical", spec.categorical);
  spec.categories = j.value("categories", spec.categories);
  spec.low = j.value("low", spec.low);
  spec.high = j.value("high", spec.high);
  spec.seed = j.value("seed", spec.seed);
  if (j.contains("dependencies"))
    for (const auto& jd : j.at("dependencies")) {
      Dependency d;
      d.target = jd.at("target").get<std::string>();
      d.a = jd.at("a").get<std::string>();
      d.coef_a = jd.value("coef_a", 1.0);
      d.b = jd.value("b", std::string{});
      d.coef_b = jd.value("coef_b", 0.0);
      d.intercept = jd.value("intercept", 0.0);
      d.noise = jd.value("noise", 0.0);
      spec.dependencies.push_back(std::move(d));
    }
}

RawTable gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RawTable t{spec.schema(), {}};
  struct Dep {
    std::size_t target, a;
    std::optional<std::size_t> b;
    const Dependency* d;
  };
  std::vector<Dep> deps;
  for (const auto& d : spec.dependencies)
    deps.push_back({*t.schema.index_of(d.target), *t.schema.index_of(d.a),
                    d.b.empty() ? std::nullopt : t.schema.index_of(d.b), &d});
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> category(0, spec.categories == 0 ? 0 : spec.categories - 1);
  std::vector<double> x(spec.numeric);
  t.rows.reserve(spec.rows);
  for (std::size_t i = 0; i < spec.rows; ++i) {
    Row row(t.schema.size());
    for (auto& v : x) v = spec.low + (spec.high - spec.low) * unit(rng);
    for (std::size_t k = 0; k < spec.categorical; ++k) row[spec.numeric + k] = category_words()[category(rng)];
    for (const auto& dep : deps) {
      double v = dep.d->coef_a * x[dep.a] + dep.d->intercept;
      if (dep.b) v += dep.d->coef_b * x[*dep.b];
      if (dep.d->noise > 0.0) v += dep.d->noise * gauss(rng);
      x[dep.target] = v;
    }
    for (std::size_t k = 0; k < spec.numeric; ++k) row[k] = format_number(x[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

FeatureGraph dependency_graph(const SyntheticSpec& spec) {
  spec.validate();
  FeatureGraph g(spec.schema().names());
  for (const auto& d : spec.dependencies) {
    g.add_edge(d.target, d.a);
    if (!d.b.empty()) g.add_edge(d.target, d.b);
  }
  return g;
}

SyntheticSpec desk_scale_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.dependencies = {{"x2", "x0", 1.0, "x1", 0.2, 5.0, 1.0}, {"x5", "x3", 0.5, "x4", 0.3, 0.0, 1.0}};
  return spec;
}

InjectionPlan desk_scale_plan(std::uint64_t seed) {
  InjectionPlan plan;
  plan.targets = {"x3", "x5", "c0"};
  plan.rate = 0.2;
  plan.kinds = {ErrorKind::missing, ErrorKind::numeric_anomaly, ErrorKind::typo};
  plan.seed = seed;
  return plan;
}

InjectionPlan desk_conflict_plan(std::uint64_t seed) {
  InjectionPlan plan;
  plan.rate = 0.2;
  plan.kinds = {ErrorKind::conflict};
  plan.conflicts = {{"x0_after_x2", "ordered_pair", {"x0", "x2"}}};
  plan.seed = seed;
  return plan;
}

std::vector<std::size_t> sample_rows(std::size_t rows, std::size_t size, std::uint64_t seed, std::size_t index) {
  if (size > rows)
    throw TooFewRows("sample of " + std::to_string(size) + " rows requested from " + std::to_string(rows));
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffULL), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(size)};
  std::mt19937_64 rng(seq);
  return partial_shuffle(rows, size, rng);
}

BatchSuite make_batch_suite(std::size_t clean_rows, std::size_t dirty_rows, std::uint64_t seed, std::size_t count,
                            double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("batch fraction must lie in (0, 1]");
  const auto clean_size = corruption_count(fraction, clean_rows);
  const auto dirty_size = corruption_count(fraction, dirty_rows);
  if (clean_size == 0 || dirty_size == 0) throw TooFewRows("source tables are too small for a batch suite");
  BatchSuite suite;
  for (std::size_t b = 0; b < count; ++b) suite.batches.push_back({sample_rows(clean_rows, clean_size, seed, b), false});
  for (std::size_t b = 0; b < count; ++b)
    suite.batches.push_back({sample_rows(dirty_rows, dirty_size, seed, count + b), true});
  return suite;
}

BenchResult summarize(std::vector<BatchOutcome> outcomes) {
  BenchResult r;
  std::size_t correct = 0, dirty = 0, caught = 0;
  for (const auto& o : outcomes) {
    if (o.flagged == o.dirty) ++correct;
    if (o.dirty) {
      ++dirty;
      if (o.flagged) ++caught;
    }
  }
  r.accuracy = outcomes.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(outcomes.size());
  r.recall = dirty == 0 ? 0.0 : static_cast<double>(caught) / static_cast<double>(dirty);
  r.batches = std::move(outcomes);
  return r;
}

BenchResult run_separation(const ModelBundle& bundle, std::span<const double> clean_errors,
                           std::span<const double> dirty_errors, const BatchSuite& suite) {
  const auto start = std::chrono::steady_clock::now();
  const double cutoff = verdict_cutoff(bundle.hyperparams);
  std::vector<BatchOutcome> outcomes;
  for (const auto& batch : suite.batches) {
    auto errors = gather(batch.dirty ? dirty_errors : clean_errors, batch.rows);
    auto v = verdict_from_errors(errors, bundle.profile.threshold, cutoff);
    outcomes.push_back({batch.dirty, v.problematic(), v.r_error});
  }
  auto r = summarize(std::move(outcomes));
  r.seconds = seconds_since(start);
  return r;
}

BenchResult run_separation(const ModelBundle& bundle, const RawTable& clean, const RawTable& dirty,
                           const BatchSuite& suite) {
  const auto start = std::chrono::steady_clock::now();
  auto rc = score(clean, bundle), rd = score(dirty, bundle);
  auto r = run_separation(bundle, rc.instance_errors, rd.instance_errors, suite);
  r.seconds = seconds_since(start);
  return r;
}

std::vector<TimingRow> run_scalability(const ModelBundle& bundle, const std::vector<std::size_t>& sizes,
                                       const std::vector<std::size_t>& dims, std::uint64_t seed) {
  std::vector<TimingRow> out;
  for (auto d : dims) {
    if (d == 0) throw InvalidArgument("scalability dims must be > 0");
    std::optional<ModelBundle> own;
    if (d != bundle.feature_count()) own = untrained_bundle(d, seed);
    const ModelBundle& b = own ? *own : bundle;
    for (auto rows : sizes) {
      if (rows == 0) throw InvalidArgument("scalability sizes must be > 0");
      const auto table = sample_from_codec(b.codec, rows, seed + rows);
      const auto start = std::chrono::steady_clock::now();
      auto report = score(table, b);
      auto v = verdict(report, b);
      (void)v;
      out.push_back({rows, d, seconds_since(start)});
    }
  }
  return out;
}

std::vector<SweepRow> run_sample_size_sweep(const ModelBundle& bundle, std::span<const double> clean_errors,
                                            std::span<const double> dirty_errors,
                                            const std::vector<std::size_t>& sizes, std::uint64_t seed,
                                            std::size_t count) {
  std::vector<SweepRow> out;
  const double cutoff = verdict_cutoff(bundle.hyperparams);
  for (auto size : sizes) {
    if (size == 0) throw InvalidArgument("sample sizes must be > 0");
    if (size > clean_errors.size() || size > dirty_errors.size())
      throw TooFewRows("sample size " + std::to_string(size) + " exceeds the source tables");
    std::vector<BatchOutcome> outcomes;
    for (std::size_t b = 0; b < 2 * count; ++b) {
      const bool dirty = b >= count;
      const auto src = dirty ? dirty_errors : clean_errors;
      auto errors = gather(src, sample_rows(src.size(), size, seed, b));
      auto v = verdict_from_errors(errors, bundle.profile.threshold, cutoff);
      outcomes.push_back({dirty, v.problematic(), v.r_error});
    }
    auto r = summarize(std::move(outcomes));
    out.push_back({size, r.accuracy, r.recall});
  }
  return out;
}

std::vector<SweepRow> run_sample_size_sweep(const ModelBundle& bundle, const RawTable& clean, const RawTable& dirty,
                                            const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  auto rc = score(clean, bundle), rd = score(dirty, bundle);
  return run_sample_size_sweep(bundle, rc.instance_errors, rd.instance_errors, sizes, seed);
}

double flagged_percent(std::span<const double> errors, double threshold) {
  if (errors.empty()) throw EmptyReport("no instances to count");
  const auto n = std::count_if(errors.begin(), errors.end(), [&](double e) { return e > threshold; });
  return 100.0 * static_cast<double>(n) / static_cast<double>(errors.size());
}

std::vector<AblationRow> run_ablation(const RawTable& train_clean, const RawTable& clean, const RawTable& dirty,
                                      const FeatureGraph& graph, const std::vector<EncoderVariant>& variants,
                                      const std::vector<std::uint64_t>& seeds, Hyperparams hp) {
  if (seeds.empty()) throw InvalidArgument("ablation needs at least one seed");
  const auto codec = fit_codec(train_clean);
  const auto x_train = encode(train_clean, codec);
  const auto x_clean = encode(clean, codec);
  const auto x_dirty = encode(dirty, codec);
  std::vector<AblationRow> out;
  for (auto variant : variants) {
    AblationRow row;
    row.variant = variant;
    for (auto seed : seeds) {
      hp.variant = variant;
      hp.seed = seed;
      const auto bundle = train(codec, x_train, graph, hp);
      const auto rc = score_encoded(x_clean, bundle), rd = score_encoded(x_dirty, bundle);
      row.gaps.push_back(flagged_percent(rd.instance_errors, bundle.profile.threshold) -
                         flagged_percent(rc.instance_errors, bundle.profile.threshold));
    }
    row.mean_gap = std::accumulate(row.gaps.begin(), row.gaps.end(), 0.0) / static_cast<double>(row.gaps.size());
    out.push_back(std::move(row));
  }
  return out;
}

std::filesystem::path make_run_dir(const std::filesystem::path& root, const nlohmann::json& config) {
  const auto text = config.dump();
  const auto dir = root / sha256_hex(text).substr(0, 16);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file((dir / "config.json").string(), config.dump(2) + "\n");
  return dir;
}

RunLog::RunLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw IoError("cannot open run log " + path.string());
}

void RunLog::event(const std::string& name, nlohmann::json fields) {
  using namespace std::chrono;
  fields["event"] = name;
  fields["unix_ms"] = duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  out_ << fields.dump() << "\n";
  out_.flush();
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::string out = "rows,dims,seconds\n";
  for (const auto& r : rows)
    out += std::to_string(r.rows) + "," + std::to_string(r.dims) + "," + format_number(r.seconds) + "\n";
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "size,accuracy,recall\n";
  for (const auto& r : rows)
    out += std::to_string(r.size) + "," + format_number(r.accuracy) + "," + format_number(r.recall) + "\n";
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "encoder,mean_gap";
  const std::size_t seeds = rows.empty() ? 0 : rows.front().gaps.size();
  for (std::size_t s = 0; s < seeds; ++s) out += ",gap_" + std::to_string(s);
  out += "\n";
  for (const auto& r : rows) {
    out += join_csv_line({std::string(to_string(r.variant)), format_number(r.mean_gap)});
    for (double g : r.gaps) out += "," + format_number(g);
    out += "\n";
  }
  return out;
}

nlohmann::json to_json(const BenchResult& result) {
  auto batches = nlohmann::json::array();
  for (const auto& b : result.batches)
    batches.push_back({{"label", b.dirty ? "dirty" : "clean"},
                       {"verdict", b.flagged ? "problematic" : "clean"},
                       {"r_error", b.r_error}});
  return {{"accuracy", result.accuracy}, {"recall", result.recall}, {"seconds", result.seconds},
          {"batches", std::move(batches)}};
}

}  // namespace dquag
