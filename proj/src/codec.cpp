#include "dquag/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "dquag/error.hpp"

namespace dquag {

namespace {

constexpr const char* kPartSuffix[] = {".year", ".month", ".day"};

int part_value(const Date& d, TimestampPart part) {
  switch (part) {
    case TimestampPart::year: return d.year;
    case TimestampPart::month: return d.month;
    case TimestampPart::day: return d.day;
  }
  return 0;
}

std::string_view part_name(TimestampPart p) {
  switch (p) {
    case TimestampPart::year: return "year";
    case TimestampPart::month: return "month";
    case TimestampPart::day: return "day";
  }
  return "year";
}

TimestampPart part_from_name(std::string_view s) {
  if (s == "year") return TimestampPart::year;
  if (s == "month") return TimestampPart::month;
  if (s == "day") return TimestampPart::day;
  throw CorruptBundle("unknown timestamp part '" + std::string(s) + "'");
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

int days_in_month(int year, int month) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month < 1 || month > 12) return 0;
  if (month == 2) {
    bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[month - 1];
}

std::optional<Date> parse_date(std::string_view text) {
  auto cut = text.find_first_of("T ");
  if (cut != std::string_view::npos) text = text.substr(0, cut);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto y = text.substr(0, 4), m = text.substr(5, 2), d = text.substr(8, 2);
  if (!all_digits(y) || !all_digits(m) || !all_digits(d)) return std::nullopt;
  Date date{std::stoi(std::string(y)), std::stoi(std::string(m)), std::stoi(std::string(d))};
  if (date.month < 1 || date.month > 12) return std::nullopt;
  if (date.day < 1 || date.day > days_in_month(date.year, date.month)) return std::nullopt;
  return date;
}

std::string format_date(const Date& date) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", date.year, date.month, date.day);
  return buf;
}

double FeatureSpec::span() const {
  double s = max - min;
  return s > 0.0 ? s : 1.0;
}

std::vector<std::string> Codec::feature_names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

std::vector<std::size_t> Codec::features_of_column(std::size_t column) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].source_column == column) out.push_back(i);
  return out;
}

Codec fit_codec(const RawTable& clean, double missing_sentinel) {
  if (clean.rows.empty()) throw EmptyInput("cannot fit a codec on an empty table");
  Codec codec;
  codec.schema = clean.schema;
  codec.missing_sentinel = missing_sentinel;

  for (std::size_t c = 0; c < clean.schema.size(); ++c) {
    const auto& col = clean.schema[c];
    switch (col.kind) {
      case ColumnKind::numeric: {
        std::set<double> distinct;
        double lo = 0.0, hi = 0.0;
        bool any = false;
        for (const auto& row : clean.rows) {
          if (!row[c]) continue;
          auto v = parse_number(*row[c]);
          if (!v || !std::isfinite(*v))
            throw DataError("clean column '" + col.name + "' holds non-numeric value '" + *row[c] + "'");
          lo = any ? std::min(lo, *v) : *v;
          hi = any ? std::max(hi, *v) : *v;
          any = true;
          if (distinct.size() < 2) distinct.insert(*v);
        }
        if (distinct.size() < 2)
          throw DegenerateColumn("numeric column '" + col.name + "' is constant or all-missing");
        FeatureSpec f;
        f.name = col.name;
        f.source_column = c;
        f.kind = ColumnKind::numeric;
        f.min = lo;
        f.max = hi;
        codec.features.push_back(std::move(f));
        break;
      }
      case ColumnKind::categorical: {
        std::set<std::string> vocab;
        for (const auto& row : clean.rows)
          if (row[c]) vocab.insert(*row[c]);
        if (vocab.empty()) throw DegenerateColumn("categorical column '" + col.name + "' is all-missing");
        FeatureSpec f;
        f.name = col.name;
        f.source_column = c;
        f.kind = ColumnKind::categorical;
        f.vocabulary.assign(vocab.begin(), vocab.end());
        f.min = 0.0;
        f.max = static_cast<double>(f.vocabulary.size() - 1);
        codec.features.push_back(std::move(f));
        break;
      }
      case ColumnKind::timestamp: {
        std::vector<Date> dates;
        for (const auto& row : clean.rows) {
          if (!row[c]) continue;
          auto d = parse_date(*row[c]);
          if (!d) throw DataError("clean column '" + col.name + "' holds unparseable timestamp '" + *row[c] + "'");
          dates.push_back(*d);
        }
        if (dates.empty()) throw DegenerateColumn("timestamp column '" + col.name + "' is all-missing");
        for (int p = 0; p < 3; ++p) {
          auto part = static_cast<TimestampPart>(p);
          FeatureSpec f;
          f.name = col.name + kPartSuffix[p];
          f.source_column = c;
          f.kind = ColumnKind::timestamp;
          f.part = part;
          f.min = f.max = part_value(dates.front(), part);
          for (const auto& d : dates) {
            f.min = std::min<double>(f.min, part_value(d, part));
            f.max = std::max<double>(f.max, part_value(d, part));
          }
          codec.features.push_back(std::move(f));
        }
        break;
      }
    }
  }
  return codec;
}

EncodedMatrix encode(const RawTable& table, const Codec& codec) {
  if (!table.schema.same_layout(codec.schema))
    throw SchemaMismatch("table schema differs from the codec's schema");

  const std::size_t n = codec.features.size();
  EncodedMatrix out;
  out.feature_names = codec.feature_names();
  out.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(n));

  // Unseen categories get codes |vocab|, |vocab|+1, ... in sorted order of
  // appearance within this table.
  std::vector<std::map<std::string, std::size_t>> unseen_rank(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& f = codec.features[j];
    if (!f.is_categorical()) continue;
    std::set<std::string> unseen;
    for (const auto& row : table.rows) {
      const auto& cell = row[f.source_column];
      if (cell && !std::binary_search(f.vocabulary.begin(), f.vocabulary.end(), *cell)) unseen.insert(*cell);
    }
    std::size_t rank = 0;
    for (const auto& u : unseen) unseen_rank[j][u] = rank++;
  }

  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    for (std::size_t j = 0; j < n; ++j) {
      const auto& f = codec.features[j];
      const auto& cell = row[f.source_column];
      double value = codec.missing_sentinel;
      if (cell) {
        switch (f.kind) {
          case ColumnKind::numeric: {
            auto v = parse_number(*cell);
            if (v && std::isfinite(*v)) value = (*v - f.min) / (f.max - f.min);
            break;
          }
          case ColumnKind::categorical: {
            const double vocab = static_cast<double>(f.vocabulary.size());
            auto it = std::lower_bound(f.vocabulary.begin(), f.vocabulary.end(), *cell);
            if (it != f.vocabulary.end() && *it == *cell) {
              value = vocab > 1 ? static_cast<double>(it - f.vocabulary.begin()) / (vocab - 1) : 0.0;
            } else {
              double code = vocab + static_cast<double>(unseen_rank[j].at(*cell));
              value = code / std::max(vocab - 1.0, 1.0);
            }
            break;
          }
          case ColumnKind::timestamp: {
            if (auto d = parse_date(*cell)) value = (part_value(*d, *f.part) - f.min) / f.span();
            break;
          }
        }
      }
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
    }
  }
  return out;
}

DecodedValue decode_cell(double value, const FeatureSpec& feature) {
  if (feature.is_categorical()) {
    const auto last = static_cast<double>(feature.vocabulary.size() - 1);
    double code = std::round(value * last);
    if (!std::isfinite(code)) code = 0.0;
    code = std::clamp(code, 0.0, last);
    return feature.vocabulary[static_cast<std::size_t>(code)];
  }
  double v = feature.min + value * (feature.max - feature.min);
  if (!std::isfinite(v)) v = feature.min;
  return std::clamp(v, feature.min, feature.max);
}

std::string decoded_text(const DecodedValue& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  return format_number(std::get<double>(value));
}

void to_json(nlohmann::json& j, const Codec& codec) {
  auto feats = nlohmann::json::array();
  for (const auto& f : codec.features) {
    nlohmann::json jf{{"name", f.name},
                      {"source_column", f.source_column},
                      {"kind", std::string(to_string(f.kind))},
                      {"min", f.min},
                      {"max", f.max}};
    if (f.part) jf["part"] = std::string(part_name(*f.part));
    if (f.is_categorical()) jf["vocabulary"] = f.vocabulary;
    feats.push_back(std::move(jf));
  }
  j = nlohmann::json{{"schema", codec.schema}, {"features", std::move(feats)}, {"missing_sentinel", codec.missing_sentinel}};
}

void from_json(const nlohmann::json& j, Codec& codec) {
  codec.schema = j.at("schema").get<Schema>();
  codec.missing_sentinel = j.at("missing_sentinel").get<double>();
  codec.features.clear();
  for (const auto& jf : j.at("features")) {
    FeatureSpec f;
    f.name = jf.at("name").get<std::string>();
    f.source_column = jf.at("source_column").get<std::size_t>();
    f.kind = column_kind_from_string(jf.at("kind").get<std::string>());
    f.min = jf.at("min").get<double>();
    f.max = jf.at("max").get<double>();
    if (jf.contains("part")) f.part = part_from_name(jf["part"].get<std::string>());
    if (jf.contains("vocabulary")) f.vocabulary = jf["vocabulary"].get<std::vector<std::string>>();
    if (f.source_column >= codec.schema.size()) throw CorruptBundle("feature refers to a missing column");
    if (f.is_categorical() && f.vocabulary.empty()) throw CorruptBundle("categorical feature without vocabulary");
    codec.features.push_back(std::move(f));
  }
}

}  // namespace dquag
