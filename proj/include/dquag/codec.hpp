#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dquag/matrix.hpp"
#include "dquag/table.hpp"
#include "json.hpp"

namespace dquag {

enum class TimestampPart { year, month, day };

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;
};

/// Parses the leading `YYYY-MM-DD` of a timestamp; anything after a `T` or a
/// space is ignored.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& date);
int days_in_month(int year, int month);

/// One encoded column. Timestamps expand into three of these.
struct FeatureSpec {
  std::string name;
  std::size_t source_column = 0;
  ColumnKind kind = ColumnKind::numeric;
  std::optional<TimestampPart> part;
  double min = 0.0;
  double max = 0.0;
  /// Sorted distinct clean values; code == index.
  std::vector<std::string> vocabulary;

  bool is_categorical() const { return kind == ColumnKind::categorical; }
  /// max - min, or 1 for a constant timestamp part.
  double span() const;
};

/// Fitted per-column encoders. Immutable after `fit_codec`.
struct Codec {
  Schema schema;
  std::vector<FeatureSpec> features;
  double missing_sentinel = -1.0;

  std::size_t feature_count() const { return features.size(); }
  std::vector<std::string> feature_names() const;
  /// Indices of the encoded features produced by raw column `column`.
  std::vector<std::size_t> features_of_column(std::size_t column) const;
};

struct EncodedMatrix {
  Matrix values;
  std::vector<std::string> feature_names;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

Codec fit_codec(const RawTable& clean, double missing_sentinel = -1.0);

EncodedMatrix encode(const RawTable& table, const Codec& codec);

using DecodedValue = std::variant<double, std::string>;

/// Total inverse of the per-feature encoding: numeric values are clamped to
/// the clean range, categorical codes snap to the nearest valid index.
DecodedValue decode_cell(double value, const FeatureSpec& feature);
std::string decoded_text(const DecodedValue& value);

void to_json(nlohmann::json& j, const Codec& codec);
void from_json(const nlohmann::json& j, Codec& codec);

}  // namespace dquag
