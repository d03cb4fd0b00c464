#include "dquag/quality.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dquag/error.hpp"

namespace dquag {

ReconstructionReport score_encoded(const EncodedMatrix& data, const ModelBundle& bundle, int threads) {
  if (data.cols() != bundle.feature_count())
    throw SchemaMismatch("encoded width " + std::to_string(data.cols()) + " differs from the model's " +
                         std::to_string(bundle.feature_count()) + " features");
  ReconstructionReport report;
  report.feature_names = bundle.codec.feature_names();
  const auto ops = GraphOperators::from_graph(bundle.graph);
  auto outputs = run_model(bundle.params, ops, data.values, threads);
  report.feature_errors = (data.values - outputs.validation).array().square().matrix();
  report.repairs = std::move(outputs.repair);
  report.instance_errors.resize(data.rows());
  const auto n = static_cast<double>(data.cols());
  for (Eigen::Index i = 0; i < report.feature_errors.rows(); ++i)
    report.instance_errors[static_cast<std::size_t>(i)] = report.feature_errors.row(i).sum() / n;
  return report;
}

ReconstructionReport score(const RawTable& data, const ModelBundle& bundle, int threads) {
  if (!data.schema.same_layout(bundle.schema()))
    throw SchemaMismatch("input columns do not match the schema the model was trained on");
  return score_encoded(encode(data, bundle.codec), bundle, threads);
}

std::string_view to_string(Verdict v) { return v == Verdict::clean ? "clean" : "problematic"; }

double verdict_cutoff(const Hyperparams& hp) { return (1.0 - hp.percentile) * hp.rate_multiplier; }

ValidationVerdict verdict_from_errors(std::span<const double> errors, double threshold, double cutoff) {
  if (errors.empty()) throw EmptyReport("cannot render a verdict on zero instances");
  ValidationVerdict v;
  v.threshold = threshold;
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i] > threshold) v.flagged_instances.push_back(i);
  v.r_error = static_cast<double>(v.flagged_instances.size()) / static_cast<double>(errors.size());
  // 1 - 0.95 is not exactly 0.05; keep a rate equal to the cutoff on the clean side.
  v.verdict = v.r_error > cutoff * (1.0 + 1e-12) ? Verdict::problematic : Verdict::clean;
  return v;
}

ValidationVerdict verdict(const ReconstructionReport& report, const ModelBundle& bundle) {
  auto v = verdict_from_errors(report.instance_errors, bundle.profile.threshold, verdict_cutoff(bundle.hyperparams));
  for (auto i : v.flagged_instances) {
    const auto row = report.feature_errors.row(static_cast<Eigen::Index>(i));
    std::vector<double> errors(row.begin(), row.end());
    for (auto j : flag_features(errors)) v.flagged_cells.push_back({i, report.feature_names[j]});
  }
  return v;
}

std::vector<std::size_t> flag_features(std::span<const double> errors) {
  std::vector<std::size_t> flagged;
  if (errors.size() < 2) return flagged;
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= static_cast<double>(errors.size());
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  const double cutoff = mean + 5.0 * std::sqrt(var / static_cast<double>(errors.size()));
  for (std::size_t j = 0; j < errors.size(); ++j)
    if (errors[j] > cutoff) flagged.push_back(j);
  return flagged;
}

namespace {

double clamp_part(double v, TimestampPart part, int year, int month) {
  switch (part) {
    case TimestampPart::year: return v;
    case TimestampPart::month: return std::clamp(v, 1.0, 12.0);
    case TimestampPart::day: return std::clamp(v, 1.0, static_cast<double>(days_in_month(year, month)));
  }
  return v;
}

}  // namespace

RepairedTable repair(const RawTable& data, const ReconstructionReport& report, const ValidationVerdict& verdict,
                     const ModelBundle& bundle) {
  if (report.size() != data.rows.size()) throw ShapeMismatch("report and table row counts differ");
  RepairedTable out{data, {}};
  const auto& codec = bundle.codec;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> cells;
  for (const auto& cell : verdict.flagged_cells) {
    auto it = std::find(report.feature_names.begin(), report.feature_names.end(), cell.feature);
    if (it == report.feature_names.end()) throw SchemaMismatch("unknown flagged feature " + cell.feature);
    const auto j = static_cast<std::size_t>(it - report.feature_names.begin());
    cells[{cell.instance, codec.features[j].source_column}].push_back(j);
  }
  for (const auto& [key, features] : cells) {
    const auto [i, col] = key;
    auto& cell = out.table.rows[i][col];
    const std::string old_text = cell.value_or("");
    const auto repaired = [&](std::size_t j) {
      return decode_cell(report.repairs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), codec.features[j]);
    };
    std::string new_text;
    if (data.schema[col].kind == ColumnKind::timestamp) {
      std::optional<Date> date = cell ? parse_date(*cell) : std::nullopt;
      const bool have_date = date.has_value();
      if (!have_date) date = Date{};
      double parts[3] = {double(date->year), double(date->month), double(date->day)};
      for (auto j : codec.features_of_column(col)) {
        const auto part = *codec.features[j].part;
        const bool flagged = std::find(features.begin(), features.end(), j) != features.end();
        if (flagged || !have_date) parts[static_cast<int>(part)] = std::round(std::get<double>(repaired(j)));
      }
      Date d;
      d.year = static_cast<int>(parts[0]);
      d.month = static_cast<int>(clamp_part(parts[1], TimestampPart::month, d.year, 1));
      d.day = static_cast<int>(clamp_part(parts[2], TimestampPart::day, d.year, d.month));
      new_text = format_date(d);
    } else {
      new_text = decoded_text(repaired(features.front()));
    }
    if (cell && *cell == new_text) continue;
    cell = new_text;
    out.changes.push_back({i, data.schema[col].name, old_text, new_text});
  }
  return out;
}

nlohmann::json verdict_to_json(const ValidationVerdict& v) {
  auto cells = nlohmann::json::array();
  for (const auto& c : v.flagged_cells) cells.push_back(nlohmann::json::array({c.instance, c.feature}));
  return {{"verdict", std::string(to_string(v.verdict))},
          {"r_error", v.r_error},
          {"threshold", v.threshold},
          {"flagged_instances", v.flagged_instances},
          {"flagged_cells", std::move(cells)}};
}

std::string change_log_csv(const std::vector<CellChange>& changes) {
  std::string out = "instance,feature,old,new\n";
  for (const auto& c : changes)
    out += join_csv_line({std::to_string(c.instance), c.column, c.old_value, c.new_value}) + "\n";
  return out;
}

}  // namespace dquag
