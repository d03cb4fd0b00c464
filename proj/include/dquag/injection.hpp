#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dquag/table.hpp"
#include "json.hpp"

namespace dquag {

/// Listed in collision priority order.
enum class ErrorKind { missing, numeric_anomaly, typo, conflict };
std::string_view to_string(ErrorKind kind);
ErrorKind error_kind_from_string(std::string_view text);

struct MaskedCell {
  std::size_t row = 0;
  std::size_t column = 0;
  ErrorKind kind = ErrorKind::missing;
  bool operator==(const MaskedCell&) const = default;
};

/// Corrupted cells sorted by (row, column); each cell appears once.
struct ErrorMask {
  std::vector<MaskedCell> cells;

  std::size_t size() const { return cells.size(); }
  bool contains(std::size_t row, std::size_t column) const;
  std::size_t count(ErrorKind kind) const;
  /// Rows with at least one corrupted cell, ascending.
  std::vector<std::size_t> rows() const;
};

struct ConflictSpec {
  std::string name;
  std::string kind;  // ordered_pair | combination
  std::vector<std::string> columns;
};

struct InjectionPlan {
  std::vector<std::string> targets;
  double rate = 0.2;
  std::vector<ErrorKind> kinds;
  std::vector<ConflictSpec> conflicts;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument / SchemaMismatch.
  void validate(const Schema& schema) const;
};

void to_json(nlohmann::json& j, const InjectionPlan& plan);
void from_json(const nlohmann::json& j, InjectionPlan& plan);
InjectionPlan load_plan(const std::string& path);

struct ConflictRule {
  std::string name;
  std::vector<std::string> columns;
  std::function<bool(const Row&)> guard;
  std::function<void(Row&, std::mt19937_64&)> mutation;
  std::function<bool(const Row&)> consistent;
};

/// Consistent iff A <= B. Mutation: A := B + u * (max_A - B), u in (0, 1],
/// applied to rows with A <= B < max_A.
ConflictRule ordered_pair_rule(const RawTable& clean, const std::string& a, const std::string& b,
                               std::string name = {});

/// Sets the first two columns to their highest clean value (largest number or
/// last category) and the third into its bottom decile (numeric) or first
/// category.
ConflictRule combination_rule(const RawTable& clean, const std::vector<std::string>& columns,
                              std::string name = {});

ConflictRule make_rule(const RawTable& clean, const ConflictSpec& spec);

struct Injection {
  RawTable table;
  ErrorMask mask;
};

/// Per-kind generator: std::seed_seq{seed & 0xffffffff, seed >> 32, kind, index}
/// where index is the schema column (or the rule position for conflicts).
std::mt19937_64 injection_rng(std::uint64_t seed, ErrorKind kind, std::size_t index);

/// round-half-up(rate * rows).
std::size_t corruption_count(double rate, std::size_t rows);

/// Letters adjacent to `c` on a US qwerty layout, lower case.
std::string qwerty_neighbors(char c);

Injection inject_missing(const RawTable& table, const InjectionPlan& plan);
Injection inject_numeric_anomaly(const RawTable& table, const InjectionPlan& plan);
Injection inject_typos(const RawTable& table, const InjectionPlan& plan);
Injection inject_conflict(const RawTable& table, const ConflictRule& rule, const InjectionPlan& plan,
                          std::size_t rule_index = 0);

/// Every requested kind draws its own selection; a cell keeps the first kind
/// that claims it in priority order.
Injection make_dirty(const RawTable& table, const InjectionPlan& plan);
Injection make_dirty(const RawTable& table, const InjectionPlan& plan, const std::vector<ConflictRule>& rules);

std::string mask_csv(const ErrorMask& mask, const Schema& schema);

}  // namespace dquag
