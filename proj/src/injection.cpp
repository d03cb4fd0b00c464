#include "dquag/injection.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "dquag/error.hpp"

namespace dquag {

namespace {

constexpr std::array<std::string_view, 4> kKindNames{"missing", "numeric_anomaly", "typo", "conflict"};

using CellSet = std::set<std::pair<std::size_t, std::size_t>>;

std::size_t column_index(const Schema& schema, const std::string& name) {
  auto idx = schema.index_of(name);
  if (!idx) throw SchemaMismatch("unknown column '" + name + "'");
  return *idx;
}

std::vector<std::size_t> choose(std::vector<std::size_t> eligible, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, eligible.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  eligible.resize(k);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

struct Range {
  double min = 0.0, max = 0.0;
};

std::optional<Range> numeric_range(const RawTable& table, std::size_t col) {
  std::optional<Range> r;
  for (const auto& row : table.rows) {
    if (!row[col]) continue;
    auto v = parse_number(*row[col]);
    if (!v) continue;
    if (!r) r = Range{*v, *v};
    r->min = std::min(r->min, *v);
    r->max = std::max(r->max, *v);
  }
  return r;
}

std::optional<double> number_at(const Row& row, std::size_t col) {
  if (!row[col]) return std::nullopt;
  return parse_number(*row[col]);
}

bool has_letter(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c) && c < 128; });
}

class Injector {
 public:
  Injector(const RawTable& table, const InjectionPlan& plan) : original_(table), plan_(plan), out_{table, {}} {}

  void run(ErrorKind kind) {
    switch (kind) {
      case ErrorKind::missing: missing(); break;
      case ErrorKind::numeric_anomaly: anomaly(); break;
      case ErrorKind::typo: typos(); break;
      case ErrorKind::conflict:
        for (std::size_t r = 0; r < plan_.conflicts.size(); ++r) conflict(make_rule(original_, plan_.conflicts[r]), r);
        break;
    }
  }

  void conflict(const ConflictRule& rule, std::size_t rule_index) {
    const auto k = corruption_count(plan_.rate, original_.rows.size());
    if (k == 0) return;
    std::vector<std::size_t> cols;
    for (const auto& c : rule.columns) cols.push_back(column_index(original_.schema, c));
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < original_.rows.size(); ++i)
      if (rule.guard(original_.rows[i])) eligible.push_back(i);
    if (eligible.empty()) throw NoEligibleRows("conflict rule '" + rule.name + "' matches no row");
    auto rng = injection_rng(plan_.seed, ErrorKind::conflict, rule_index);
    for (auto i : choose(eligible, k, rng)) {
      Row mutated = original_.rows[i];
      rule.mutation(mutated, rng);
      bool collides = false;
      for (std::size_t c = 0; c < mutated.size(); ++c)
        if (mutated[c] != original_.rows[i][c] && claimed_.count({i, c})) collides = true;
      if (collides) continue;
      for (std::size_t c = 0; c < mutated.size(); ++c)
        if (mutated[c] != original_.rows[i][c]) set(i, c, mutated[c], ErrorKind::conflict);
    }
  }

  Injection finish() {
    std::sort(out_.mask.cells.begin(), out_.mask.cells.end(), [](const MaskedCell& a, const MaskedCell& b) {
      return std::pair(a.row, a.column) < std::pair(b.row, b.column);
    });
    return std::move(out_);
  }

 private:
  void set(std::size_t row, std::size_t col, Cell value, ErrorKind kind) {
    out_.table.rows[row][col] = std::move(value);
    out_.mask.cells.push_back({row, col, kind});
    claimed_.insert({row, col});
  }

  template <typename Eligible, typename Apply>
  void per_column(ErrorKind kind, Eligible eligible_cell, Apply apply) {
    const auto k = corruption_count(plan_.rate, original_.rows.size());
    for (const auto& name : plan_.targets) {
      const auto col = column_index(original_.schema, name);
      std::vector<std::size_t> eligible;
      for (std::size_t i = 0; i < original_.rows.size(); ++i)
        if (eligible_cell(original_.rows[i], col)) eligible.push_back(i);
      if (eligible.empty()) continue;
      auto rng = injection_rng(plan_.seed, kind, col);
      for (auto i : choose(eligible, k, rng)) {
        Cell value = apply(original_.rows[i][col], col, rng);
        if (claimed_.count({i, col})) continue;
        set(i, col, std::move(value), kind);
      }
    }
  }

  void missing() {
    per_column(
        ErrorKind::missing, [](const Row& row, std::size_t col) { return row[col].has_value(); },
        [](const Cell&, std::size_t, std::mt19937_64&) { return Cell{}; });
  }

  void anomaly() {
    per_column(
        ErrorKind::numeric_anomaly,
        [&](const Row& row, std::size_t col) {
          return original_.schema[col].kind == ColumnKind::numeric && number_at(row, col).has_value();
        },
        [&](const Cell&, std::size_t col, std::mt19937_64& rng) {
          if (!ranges_.count(col)) ranges_[col] = *numeric_range(original_, col);
          const auto range = ranges_[col];
          std::uniform_real_distribution<double> unit(0.0, 1.0);
          const double u = 3.0 - 2.0 * unit(rng);
          double span = range.max - range.min;
          if (span <= 0.0) span = std::max(1.0, std::abs(range.max));
          return Cell{format_number(range.max + u * span)};
        });
  }

  void typos() {
    per_column(
        ErrorKind::typo,
        [&](const Row& row, std::size_t col) {
          return original_.schema[col].kind == ColumnKind::categorical && row[col] && has_letter(*row[col]);
        },
        [](const Cell& cell, std::size_t, std::mt19937_64& rng) {
          std::string text = *cell;
          std::vector<std::size_t> letters;
          for (std::size_t p = 0; p < text.size(); ++p)
            if (std::isalpha(static_cast<unsigned char>(text[p])) && static_cast<unsigned char>(text[p]) < 128)
              letters.push_back(p);
          std::uniform_int_distribution<std::size_t> pos(0, letters.size() - 1);
          const auto p = letters[pos(rng)];
          const auto options = qwerty_neighbors(text[p]);
          std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
          char c = options[pick(rng)];
          if (std::isupper(static_cast<unsigned char>(text[p]))) c = static_cast<char>(std::toupper(c));
          text[p] = c;
          return Cell{text};
        });
  }

  const RawTable& original_;
  const InjectionPlan& plan_;
  Injection out_;
  CellSet claimed_;
  std::map<std::size_t, Range> ranges_;
};

std::string default_name(const std::string& kind, const std::vector<std::string>& columns) {
  std::string name = kind;
  for (const auto& c : columns) name += ":" + c;
  return name;
}

}  // namespace

std::string_view to_string(ErrorKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

ErrorKind error_kind_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == text) return static_cast<ErrorKind>(i);
  throw InvalidArgument("unknown error kind '" + std::string(text) + "'");
}

bool ErrorMask::contains(std::size_t row, std::size_t column) const {
  return std::any_of(cells.begin(), cells.end(), [&](const MaskedCell& c) { return c.row == row && c.column == column; });
}

std::size_t ErrorMask::count(ErrorKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [&](const MaskedCell& c) { return c.kind == kind; }));
}

std::vector<std::size_t> ErrorMask::rows() const {
  std::vector<std::size_t> out;
  for (const auto& c : cells) out.push_back(c.row);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void InjectionPlan::validate(const Schema& schema) const {
  if (!(rate > 0.0 && rate <= 1.0)) throw InvalidArgument("injection rate must lie in (0, 1]");
  if (kinds.empty()) throw InvalidArgument("injection plan needs at least one error kind");
  for (const auto& t : targets) column_index(schema, t);
  for (const auto& c : conflicts) {
    if (c.kind != "ordered_pair" && c.kind != "combination")
      throw InvalidArgument("unknown conflict kind '" + c.kind + "'");
    for (const auto& name : c.columns) column_index(schema, name);
  }
}

void to_json(nlohmann::json& j, const InjectionPlan& plan) {
  auto kinds = nlohmann::json::array();
  for (auto k : plan.kinds) kinds.push_back(std::string(to_string(k)));
  auto conflicts = nlohmann::json::array();
  for (const auto& c : plan.conflicts) conflicts.push_back({{"name", c.name}, {"kind", c.kind}, {"columns", c.columns}});
  j = nlohmann::json{{"targets", plan.targets},
                     {"rate", plan.rate},
                     {"kinds", std::move(kinds)},
                     {"conflicts", std::move(conflicts)},
                     {"seed", plan.seed}};
}

void from_json(const nlohmann::json& j, InjectionPlan& plan) {
  plan.targets = j.value("targets", std::vector<std::string>{});
  plan.rate = j.value("rate", 0.2);
  plan.kinds.clear();
  for (const auto& k : j.at("kinds")) plan.kinds.push_back(error_kind_from_string(k.get<std::string>()));
  plan.conflicts.clear();
  if (j.contains("conflicts"))
    for (const auto& c : j.at("conflicts"))
      plan.conflicts.push_back({c.value("name", std::string{}), c.at("kind").get<std::string>(),
                                c.at("columns").get<std::vector<std::string>>()});
  plan.seed = j.at("seed").get<std::uint64_t>();
}

InjectionPlan load_plan(const std::string& path) {
  auto j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw InvalidArgument(path + ": plan is not valid JSON");
  try {
    return j.get<InjectionPlan>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

ConflictRule ordered_pair_rule(const RawTable& clean, const std::string& a, const std::string& b, std::string name) {
  const auto ia = column_index(clean.schema, a), ib = column_index(clean.schema, b);
  if (clean.schema[ia].kind != ColumnKind::numeric || clean.schema[ib].kind != ColumnKind::numeric)
    throw InvalidArgument("ordered_pair rule needs two numeric columns");
  const auto range = numeric_range(clean, ia);
  if (!range) throw NoEligibleRows("column '" + a + "' has no numeric values");
  const double max_a = range->max;
  ConflictRule rule;
  rule.name = name.empty() ? default_name("ordered_pair", {a, b}) : std::move(name);
  rule.columns = {a, b};
  rule.consistent = [ia, ib](const Row& row) {
    auto va = number_at(row, ia), vb = number_at(row, ib);
    return !va || !vb || *va <= *vb;
  };
  rule.guard = [ia, ib, max_a](const Row& row) {
    auto va = number_at(row, ia), vb = number_at(row, ib);
    return va && vb && *va <= *vb && *vb < max_a;
  };
  rule.mutation = [ia, ib, max_a](Row& row, std::mt19937_64& rng) {
    const double vb = *number_at(row, ib);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = 1.0 - unit(rng);
    double va = vb + u * (max_a - vb);
    if (!(va > vb)) va = std::nextafter(vb, max_a);
    row[ia] = format_number(va);
  };
  return rule;
}

ConflictRule combination_rule(const RawTable& clean, const std::vector<std::string>& columns, std::string name) {
  if (columns.size() != 3) throw InvalidArgument("combination rule needs exactly three columns");
  struct Slot {
    std::size_t col;
    bool categorical;
    std::string top;  // highest category
    std::string bottom;
    double high = 0.0;
    double low_min = 0.0, low_cut = 0.0;
  };
  std::vector<Slot> slots;
  for (std::size_t s = 0; s < 3; ++s) {
    Slot slot{column_index(clean.schema, columns[s]), false, {}, {}};
    const auto kind = clean.schema[slot.col].kind;
    if (kind == ColumnKind::timestamp) throw InvalidArgument("combination rule does not take timestamp columns");
    slot.categorical = kind == ColumnKind::categorical;
    if (slot.categorical) {
      std::set<std::string> vocab;
      for (const auto& row : clean.rows)
        if (row[slot.col]) vocab.insert(*row[slot.col]);
      if (vocab.size() < 2) throw NoEligibleRows("column '" + columns[s] + "' needs two categories");
      slot.top = *vocab.rbegin();
      slot.bottom = *vocab.begin();
    } else {
      std::vector<double> values;
      for (const auto& row : clean.rows)
        if (auto v = number_at(row, slot.col)) values.push_back(*v);
      if (values.empty()) throw NoEligibleRows("column '" + columns[s] + "' has no numeric values");
      std::sort(values.begin(), values.end());
      slot.high = values.back();
      slot.low_min = values.front();
      slot.low_cut = values[static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(values.size() - 1)))];
    }
    slots.push_back(std::move(slot));
  }
  auto is_high = [](const Slot& s, const Row& row) {
    if (s.categorical) return row[s.col] && *row[s.col] == s.top;
    auto v = number_at(row, s.col);
    return v && *v >= s.high;
  };
  auto is_low = [](const Slot& s, const Row& row) {
    if (s.categorical) return row[s.col] && *row[s.col] == s.bottom;
    auto v = number_at(row, s.col);
    return v && *v <= s.low_cut;
  };
  ConflictRule rule;
  rule.name = name.empty() ? default_name("combination", columns) : std::move(name);
  rule.columns = columns;
  rule.consistent = [=](const Row& row) {
    return !(is_high(slots[0], row) && is_high(slots[1], row) && is_low(slots[2], row));
  };
  rule.guard = [=, consistent = rule.consistent](const Row& row) {
    for (const auto& s : slots)
      if (!row[s.col]) return false;
    return consistent(row);
  };
  rule.mutation = [=](Row& row, std::mt19937_64& rng) {
    for (std::size_t s = 0; s < 2; ++s)
      row[slots[s].col] = slots[s].categorical ? slots[s].top : format_number(slots[s].high);
    const auto& low = slots[2];
    if (low.categorical) {
      row[low.col] = low.bottom;
    } else {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      row[low.col] = format_number(low.low_min + unit(rng) * (low.low_cut - low.low_min));
    }
  };
  return rule;
}

ConflictRule make_rule(const RawTable& clean, const ConflictSpec& spec) {
  if (spec.kind == "ordered_pair") {
    if (spec.columns.size() != 2) throw InvalidArgument("ordered_pair rule needs exactly two columns");
    return ordered_pair_rule(clean, spec.columns[0], spec.columns[1], spec.name);
  }
  if (spec.kind == "combination") return combination_rule(clean, spec.columns, spec.name);
  throw InvalidArgument("unknown conflict kind '" + spec.kind + "'");
}

std::mt19937_64 injection_rng(std::uint64_t seed, ErrorKind kind, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffULL), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kind), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

std::size_t corruption_count(double rate, std::size_t rows) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(rows) + 0.5 + 1e-9));
}

std::string qwerty_neighbors(char c) {
  static constexpr std::array<std::string_view, 3> kRows{"qwertyuiop", "asdfghjkl", "zxcvbnm"};
  const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::string out;
  for (std::size_t r = 0; r < kRows.size(); ++r) {
    const auto pos = kRows[r].find(lower);
    if (pos == std::string_view::npos) continue;
    const auto col = static_cast<std::ptrdiff_t>(pos);
    auto take = [&](std::size_t row, std::ptrdiff_t at) {
      if (at >= 0 && at < static_cast<std::ptrdiff_t>(kRows[row].size())) out.push_back(kRows[row][static_cast<std::size_t>(at)]);
    };
    take(r, col - 1);
    take(r, col + 1);
    if (r > 0) {
      take(r - 1, col);
      take(r - 1, col + 1);
    }
    if (r + 1 < kRows.size()) {
      take(r + 1, col - 1);
      take(r + 1, col);
    }
  }
  return out;
}

namespace {

Injection single(const RawTable& table, const InjectionPlan& plan, ErrorKind kind) {
  Injector inj(table, plan);
  inj.run(kind);
  return inj.finish();
}

}  // namespace

Injection inject_missing(const RawTable& table, const InjectionPlan& plan) {
  return single(table, plan, ErrorKind::missing);
}

Injection inject_numeric_anomaly(const RawTable& table, const InjectionPlan& plan) {
  return single(table, plan, ErrorKind::numeric_anomaly);
}

Injection inject_typos(const RawTable& table, const InjectionPlan& plan) { return single(table, plan, ErrorKind::typo); }

Injection inject_conflict(const RawTable& table, const ConflictRule& rule, const InjectionPlan& plan,
                          std::size_t rule_index) {
  Injector inj(table, plan);
  inj.conflict(rule, rule_index);
  return inj.finish();
}

Injection make_dirty(const RawTable& table, const InjectionPlan& plan, const std::vector<ConflictRule>& rules) {
  plan.validate(table.schema);
  Injector inj(table, plan);
  for (auto kind : {ErrorKind::missing, ErrorKind::numeric_anomaly, ErrorKind::typo}) {
    if (std::find(plan.kinds.begin(), plan.kinds.end(), kind) != plan.kinds.end()) inj.run(kind);
  }
  if (std::find(plan.kinds.begin(), plan.kinds.end(), ErrorKind::conflict) != plan.kinds.end())
    for (std::size_t r = 0; r < rules.size(); ++r) inj.conflict(rules[r], r);
  return inj.finish();
}

Injection make_dirty(const RawTable& table, const InjectionPlan& plan) {
  plan.validate(table.schema);
  std::vector<ConflictRule> rules;
  for (const auto& spec : plan.conflicts) rules.push_back(make_rule(table, spec));
  if (std::find(plan.kinds.begin(), plan.kinds.end(), ErrorKind::conflict) != plan.kinds.end() && rules.empty())
    throw InvalidArgument("conflict kind requested without conflict rules");
  return make_dirty(table, plan, rules);
}

std::string mask_csv(const ErrorMask& mask, const Schema& schema) {
  std::string out = "row,column,kind\n";
  for (const auto& c : mask.cells)
    out += join_csv_line({std::to_string(c.row), schema[c.column].name, std::string(to_string(c.kind))}) + "\n";
  return out;
}

}  // namespace dquag
