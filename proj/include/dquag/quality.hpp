#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dquag/training.hpp"

namespace dquag {

struct ReconstructionReport {
  std::vector<double> instance_errors;
  /// N x n squared errors of the validation decoder.
  Matrix feature_errors;
  /// N x n encoded outputs of the repair decoder.
  Matrix repairs;
  std::vector<std::string> feature_names;

  std::size_t size() const { return instance_errors.size(); }
};

/// Encodes `data` with the bundle codec and runs both decoders.
ReconstructionReport score(const RawTable& data, const ModelBundle& bundle, int threads = 0);
ReconstructionReport score_encoded(const EncodedMatrix& data, const ModelBundle& bundle, int threads = 0);

enum class Verdict { clean, problematic };
std::string_view to_string(Verdict v);

struct FlaggedCell {
  std::size_t instance = 0;
  std::string feature;
  bool operator==(const FlaggedCell&) const = default;
};

struct ValidationVerdict {
  Verdict verdict = Verdict::clean;
  double r_error = 0.0;
  double threshold = 0.0;
  std::vector<std::size_t> flagged_instances;
  std::vector<FlaggedCell> flagged_cells;

  bool problematic() const { return verdict == Verdict::problematic; }
};

/// (1 - percentile) * rate_multiplier.
double verdict_cutoff(const Hyperparams& hp);

/// Verdict from instance errors alone; flagged_cells stays empty.
ValidationVerdict verdict_from_errors(std::span<const double> errors, double threshold, double cutoff);

ValidationVerdict verdict(const ReconstructionReport& report, const ModelBundle& bundle);

/// Indices j with errors[j] > mean + 5 * population stddev.
std::vector<std::size_t> flag_features(std::span<const double> errors);

struct CellChange {
  std::size_t instance = 0;
  std::string column;
  std::string old_value;
  std::string new_value;
};

struct RepairedTable {
  RawTable table;
  std::vector<CellChange> changes;
};

RepairedTable repair(const RawTable& data, const ReconstructionReport& report, const ValidationVerdict& verdict,
                     const ModelBundle& bundle);

nlohmann::json verdict_to_json(const ValidationVerdict& v);
std::string change_log_csv(const std::vector<CellChange>& changes);

}  // namespace dquag
