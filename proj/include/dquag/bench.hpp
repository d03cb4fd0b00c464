#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dquag/injection.hpp"
#include "dquag/quality.hpp"
#include "dquag/training.hpp"

namespace dquag {

/// target := coef_a * a + coef_b * b + intercept + noise * N(0, 1).
struct Dependency {
  std::string target;
  std::string a;
  double coef_a = 1.0;
  std::string b;  // empty: single-source dependency
  double coef_b = 0.0;
  double intercept = 0.0;
  double noise = 0.0;
};

/// Numeric columns x0.., categorical columns c0.. drawn per row in column
/// order from one mt19937_64(seed): each x ~ low + (high - low) * U[0, 1),
/// each c uniform over `categories` words; dependencies then overwrite their
/// targets in listed order, drawing N(0, 1) only when noise > 0.
struct SyntheticSpec {
  std::size_t rows = 5000;
  std::size_t numeric = 6;
  std::size_t categorical = 2;
  std::size_t categories = 5;
  double low = 0.0;
  double high = 100.0;
  std::vector<Dependency> dependencies;
  std::uint64_t seed = 42;

  Schema schema() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSpec& spec);
void from_json(const nlohmann::json& j, SyntheticSpec& spec);

/// Category words used by the generator, in code order.
const std::vector<std::string>& category_words();

RawTable gen_synthetic(const SyntheticSpec& spec);

/// The generator's declared relationships as a feature graph: each
/// dependency target joined to its sources.
FeatureGraph dependency_graph(const SyntheticSpec& spec);

/// 5,000 rows, x0..x5 and c0..c1, with x2 = x0 + 0.2 x1 + 5 and
/// x5 = 0.5 x3 + 0.3 x4 (unit noise on both).
SyntheticSpec desk_scale_spec(std::uint64_t seed = 42);
/// Missing, anomaly and typo errors at 20% on x3, x5 and c0.
InjectionPlan desk_scale_plan(std::uint64_t seed = 43);
/// Ordered-pair conflict x0 <= x2 at 20%.
InjectionPlan desk_conflict_plan(std::uint64_t seed = 43);

struct Batch {
  std::vector<std::size_t> rows;
  bool dirty = false;
};

struct BatchSuite {
  std::vector<Batch> batches;
};

/// `count` clean then `count` dirty batches, each a round-half-up(fraction *
/// rows) sample without replacement; batch b uses seed_seq{seed, b}.
BatchSuite make_batch_suite(std::size_t clean_rows, std::size_t dirty_rows, std::uint64_t seed,
                            std::size_t count = 50, double fraction = 0.1);

/// Sample of `size` distinct row indices, ascending.
std::vector<std::size_t> sample_rows(std::size_t rows, std::size_t size, std::uint64_t seed, std::size_t index);

struct BatchOutcome {
  bool dirty = false;
  bool flagged = false;
  double r_error = 0.0;
};

struct BenchResult {
  double accuracy = 0.0;
  double recall = 0.0;
  std::vector<BatchOutcome> batches;
  double seconds = 0.0;
};

/// Accuracy and recall from a verdict log.
BenchResult summarize(std::vector<BatchOutcome> outcomes);

/// Batch verdicts over precomputed instance errors of the two source tables.
BenchResult run_separation(const ModelBundle& bundle, std::span<const double> clean_errors,
                           std::span<const double> dirty_errors, const BatchSuite& suite);
BenchResult run_separation(const ModelBundle& bundle, const RawTable& clean, const RawTable& dirty,
                           const BatchSuite& suite);

struct TimingRow {
  std::size_t rows = 0;
  std::size_t dims = 0;
  double seconds = 0.0;
};

/// Wall time of encode + score + verdict on generated tables; dims other than
/// the bundle's own use an untrained model of that width.
std::vector<TimingRow> run_scalability(const ModelBundle& bundle, const std::vector<std::size_t>& sizes,
                                       const std::vector<std::size_t>& dims, std::uint64_t seed);

struct SweepRow {
  std::size_t size = 0;
  double accuracy = 0.0;
  double recall = 0.0;
};

std::vector<SweepRow> run_sample_size_sweep(const ModelBundle& bundle, std::span<const double> clean_errors,
                                            std::span<const double> dirty_errors,
                                            const std::vector<std::size_t>& sizes, std::uint64_t seed,
                                            std::size_t count = 50);
std::vector<SweepRow> run_sample_size_sweep(const ModelBundle& bundle, const RawTable& clean, const RawTable& dirty,
                                            const std::vector<std::size_t>& sizes, std::uint64_t seed);

struct AblationRow {
  EncoderVariant variant = EncoderVariant::gat_gin;
  std::vector<double> gaps;  // per seed, percentage points
  double mean_gap = 0.0;
};

/// Trains each variant per seed on `train_clean`; gap = % flagged on `dirty`
/// minus % flagged on `clean`.
std::vector<AblationRow> run_ablation(const RawTable& train_clean, const RawTable& clean, const RawTable& dirty,
                                      const FeatureGraph& graph, const std::vector<EncoderVariant>& variants,
                                      const std::vector<std::uint64_t>& seeds, Hyperparams hp);

/// Percentage of rows with error above `threshold`.
double flagged_percent(std::span<const double> errors, double threshold);

/// Output directory `root/<first 16 hex of sha256(config)>` with config.json.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const nlohmann::json& config);

/// Line-delimited JSON events.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  void event(const std::string& name, nlohmann::json fields = nlohmann::json::object());

 private:
  std::ofstream out_;
};

std::string timing_csv(const std::vector<TimingRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json to_json(const BenchResult& result);

}  // namespace dquag
