#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dquag/codec.hpp"
#include "dquag/feature_graph.hpp"
#include "dquag/gnn.hpp"
#include "json.hpp"

namespace dquag {

struct Hyperparams {
  double alpha = 1.0;
  double beta = 1.0;
  double learning_rate = 0.01;
  int batch_size = 128;
  int epochs = 50;
  double percentile = 0.95;
  /// Verdict multiplier r: a dataset is problematic when more than
  /// (1 - percentile) * r of its instances exceed the threshold.
  double rate_multiplier = 1.2;
  std::uint64_t seed = 0;
  double weight_floor = 1e-6;
  int hidden_dim = 64;
  int decoder_hidden = 128;
  EncoderVariant variant = EncoderVariant::gat_gin;

  /// Throws InvalidArgument when a field is out of its domain.
  void validate() const;
};

void to_json(nlohmann::json& j, const Hyperparams& hp);
void from_json(const nlohmann::json& j, Hyperparams& hp);

struct CleanErrorProfile {
  /// Per-instance errors on the clean set (reservoir-capped when persisted).
  std::vector<double> errors;
  double threshold = 0.0;
  /// Size of the full clean error list the threshold was computed from.
  std::size_t total_count = 0;
};

inline constexpr int kBundleVersion = 1;
inline constexpr std::size_t kProfileCap = 100000;

struct ModelBundle {
  int version = kBundleVersion;
  Codec codec;
  FeatureGraph graph;
  ModelParams params;
  Hyperparams hyperparams;
  CleanErrorProfile profile;

  const Schema& schema() const { return codec.schema; }
  std::size_t feature_count() const { return codec.feature_count(); }
};

struct InstanceError {
  std::vector<double> per_feature;
  double mean = 0.0;
};

/// e_j = (x_j - xhat_j)^2 and their mean.
InstanceError instance_error(std::span<const double> x, std::span<const double> xhat);

/// w_i = 1 / (floor + e_i), rescaled so the weights average to exactly 1.
std::vector<double> sample_weights(std::span<const double> errors, double floor = 1e-6);

/// (1/N) sum_i w_i ||x_i - xhat_i||^2. `weights` are constants (no gradient).
ad::Var validation_loss(ad::Var x, ad::Var reconstruction, const std::vector<double>& weights);
/// (1/N) sum_i ||x_i - xtilde_i||^2.
ad::Var repair_loss(ad::Var x, ad::Var repaired);
ad::Var total_loss(ad::Var validation, ad::Var repair, const Hyperparams& hp);
double total_loss(double validation, double repair, const Hyperparams& hp);

/// Nearest-rank percentile: the ceil(p * |E|)-th smallest value (1-based).
double calibrate_threshold(std::span<const double> errors, double percentile);

struct EpochStats {
  int epoch = 0;
  double validation_loss = 0.0;
  double repair_loss = 0.0;
  double total_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  double seconds = 0.0;
};

/// Both decoder outputs for every row of `x`, evaluated in fixed-size chunks
/// so results do not depend on the thread count.
struct ModelOutputs {
  Matrix validation;
  Matrix repair;
};
ModelOutputs run_model(const ModelParams& params, const GraphOperators& ops, const Matrix& x, int threads = 0);

/// Threads from DQUAG_THREADS (default 1).
int default_threads();

ModelBundle train(const Codec& codec, const EncodedMatrix& clean, const FeatureGraph& graph, const Hyperparams& hp,
                  TrainLog* log = nullptr);

/// Recomputes the clean error profile of `bundle` on `clean`.
CleanErrorProfile calibrate_profile(const ModelBundle& bundle, const EncodedMatrix& clean);

/// Seeded reservoir sample of at most `cap` values; order preserved when
/// nothing is dropped.
std::vector<double> reservoir_sample(const std::vector<double>& values, std::size_t cap, std::uint64_t seed);

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(const std::string& text);
void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

/// Keeps large scratch matrices out of mmap so training does not page-fault
/// on every batch. No-op outside glibc.
void tune_allocator();

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace dquag
