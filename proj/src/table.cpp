#include "dquag/table.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dquag/error.hpp"

namespace dquag {

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::timestamp: return "timestamp";
  }
  return "numeric";
}

ColumnKind column_kind_from_string(std::string_view text) {
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "categorical") return ColumnKind::categorical;
  if (text == "timestamp") return ColumnKind::timestamp;
  throw SchemaMismatch("unknown column kind '" + std::string(text) + "'");
}

Schema::Schema(std::vector<Column> columns) : columns_(std::move(columns)) {
  std::set<std::string> seen;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw SchemaMismatch("column names must be non-empty");
    if (!seen.insert(c.name).second) throw SchemaMismatch("duplicate column name '" + c.name + "'");
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  return std::nullopt;
}

std::vector<std::string> Schema::names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

bool Schema::same_layout(const Schema& other) const {
  if (columns_.size() != other.columns_.size()) return false;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name != other.columns_[i].name) return false;
    if (columns_[i].kind != other.columns_[i].kind) return false;
  }
  return true;
}

RawTable RawTable::select(const std::vector<std::size_t>& indices) const {
  RawTable out{schema, {}};
  out.rows.reserve(indices.size());
  for (auto i : indices) out.rows.push_back(rows.at(i));
  return out;
}

bool is_missing_text(std::string_view text) { return text.empty() || text == "NA"; }

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

std::string join_csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    const auto& f = fields[i];
    if (f.find_first_of(",\"") == std::string::npos) {
      out += f;
      continue;
    }
    out.push_back('"');
    for (char ch : f) {
      if (ch == '"') out.push_back('"');
      out.push_back(ch);
    }
    out.push_back('"');
  }
  return out;
}

RawTable parse_csv_text(std::string_view text, const Schema& schema) {
  RawTable table{schema, {}};
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line == "\r") {
      if (pos > text.size()) break;
      continue;
    }
    auto fields = split_csv_line(line);
    if (!header_seen) {
      if (fields != schema.names()) {
        throw SchemaMismatch("CSV header does not match schema column names and order");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != schema.size()) {
      throw RowArity("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                     " cells, expected " + std::to_string(schema.size()));
    }
    Row row;
    row.reserve(fields.size());
    for (auto& f : fields) {
      if (is_missing_text(f)) row.emplace_back(std::nullopt);
      else row.emplace_back(std::move(f));
    }
    table.rows.push_back(std::move(row));
  }
  if (!header_seen) throw SchemaMismatch("CSV has no header row");
  return table;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

RawTable parse_csv(const std::string& path, const Schema& schema) {
  return parse_csv_text(read_text_file(path), schema);
}

std::string to_csv_text(const RawTable& table) {
  std::string out = join_csv_line(table.schema.names());
  out.push_back('\n');
  std::vector<std::string> fields;
  for (const auto& row : table.rows) {
    fields.clear();
    for (const auto& cell : row) fields.push_back(cell.value_or(""));
    out += join_csv_line(fields);
    out.push_back('\n');
  }
  return out;
}

void write_csv(const RawTable& table, const std::string& path) { write_text_file(path, to_csv_text(table)); }

void to_json(nlohmann::json& j, const Schema& schema) {
  auto cols = nlohmann::json::array();
  for (const auto& c : schema.columns()) {
    nlohmann::json col{{"name", c.name}, {"kind", std::string(to_string(c.kind))}};
    if (!c.description.empty()) col["description"] = c.description;
    cols.push_back(std::move(col));
  }
  j = nlohmann::json{{"columns", std::move(cols)}};
}

void from_json(const nlohmann::json& j, Schema& schema) {
  if (!j.is_object() || !j.contains("columns") || !j["columns"].is_array())
    throw SchemaMismatch("schema must be an object with a \"columns\" array");
  std::vector<Column> cols;
  for (const auto& c : j["columns"]) {
    if (!c.is_object() || !c.contains("name") || !c.contains("kind"))
      throw SchemaMismatch("schema column needs \"name\" and \"kind\"");
    Column col;
    col.name = c["name"].get<std::string>();
    col.kind = column_kind_from_string(c["kind"].get<std::string>());
    if (c.contains("description")) col.description = c["description"].get<std::string>();
    cols.push_back(std::move(col));
  }
  schema = Schema(std::move(cols));
}

Schema load_schema(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch("schema file '" + path + "' is not valid JSON: " + e.what());
  }
  return j.get<Schema>();
}

void save_schema(const Schema& schema, const std::string& path) {
  write_text_file(path, nlohmann::json(schema).dump(2) + "\n");
}

std::optional<double> parse_number(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, ptr);
}

}  // namespace dquag
