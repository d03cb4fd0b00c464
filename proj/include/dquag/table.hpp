#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dquag {

enum class ColumnKind { numeric, categorical, timestamp };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view text);

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  /// Free-text description forwarded to the relationship prompt. Optional.
  std::string description;

  bool operator==(const Column&) const = default;
};

/// Ordered column list. Names are unique and non-empty; order is part of the
/// contract and survives encoding.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Column> columns);

  const std::vector<Column>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  const Column& operator[](std::size_t i) const { return columns_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::string> names() const;

  /// Schemas compare by name and kind; descriptions are advisory.
  bool same_layout(const Schema& other) const;
  bool operator==(const Schema& other) const { return same_layout(other); }

 private:
  std::vector<Column> columns_;
};

/// A cell is either text or the explicit missing marker.
using Cell = std::optional<std::string>;
using Row = std::vector<Cell>;

struct RawTable {
  Schema schema;
  std::vector<Row> rows;

  std::size_t row_count() const { return rows.size(); }
  /// Rows at the given indices, in the given order.
  RawTable select(const std::vector<std::size_t>& indices) const;
};

bool is_missing_text(std::string_view text);

/// RFC 4180 line splitting (quoted fields, doubled quotes). No embedded newlines.
std::vector<std::string> split_csv_line(std::string_view line);
std::string join_csv_line(const std::vector<std::string>& fields);

RawTable parse_csv(const std::string& path, const Schema& schema);
RawTable parse_csv_text(std::string_view text, const Schema& schema);
void write_csv(const RawTable& table, const std::string& path);
std::string to_csv_text(const RawTable& table);

Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);

void to_json(nlohmann::json& j, const Schema& schema);
void from_json(const nlohmann::json& j, Schema& schema);

std::optional<double> parse_number(std::string_view text);
/// Shortest text that parses back to exactly `value`.
std::string format_number(double value);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

}  // namespace dquag
