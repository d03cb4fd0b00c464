#include "dquag/feature_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

#include "dquag/error.hpp"

namespace dquag {

FeatureGraph::FeatureGraph(std::vector<std::string> nodes) : nodes_(std::move(nodes)) {
  std::set<std::string> seen;
  for (const auto& n : nodes_)
    if (!seen.insert(n).second) throw InvalidArgument("duplicate graph node '" + n + "'");
}

std::optional<std::size_t> FeatureGraph::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i] == name) return i;
  return std::nullopt;
}

bool FeatureGraph::add_edge(std::size_t a, std::size_t b) {
  if (a >= nodes_.size() || b >= nodes_.size()) throw InvalidArgument("edge endpoint out of range");
  if (a == b) return false;
  return edges_.insert({std::min(a, b), std::max(a, b)}).second;
}

bool FeatureGraph::add_edge(std::string_view a, std::string_view b) {
  auto ia = index_of(a), ib = index_of(b);
  if (!ia || !ib) throw InvalidArgument("edge names an unknown feature");
  return add_edge(*ia, *ib);
}

bool FeatureGraph::has_edge(std::size_t a, std::size_t b) const {
  return edges_.count({std::min(a, b), std::max(a, b)}) > 0;
}

std::vector<std::size_t> FeatureGraph::neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  for (const auto& [a, b] : edges_) {
    if (a == node) out.push_back(b);
    else if (b == node) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t FeatureGraph::degree(std::size_t node) const { return neighbors(node).size(); }

std::vector<std::pair<std::string, std::string>> FeatureGraph::edge_names() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [a, b] : edges_) out.emplace_back(nodes_[a], nodes_[b]);
  return out;
}

void to_json(nlohmann::json& j, const FeatureGraph& graph) {
  auto edges = nlohmann::json::array();
  for (const auto& [a, b] : graph.edge_names()) edges.push_back({a, b});
  j = nlohmann::json{{"nodes", graph.nodes()}, {"edges", std::move(edges)}};
}

void from_json(const nlohmann::json& j, FeatureGraph& graph) {
  if (!j.is_object() || !j.contains("nodes") || !j.contains("edges"))
    throw InvalidArgument("graph JSON needs \"nodes\" and \"edges\"");
  FeatureGraph g(j["nodes"].get<std::vector<std::string>>());
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2) throw InvalidArgument("graph edge must be a 2-element array");
    g.add_edge(e[0].get<std::string>(), e[1].get<std::string>());
  }
  graph = std::move(g);
}

FeatureGraph load_graph(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text_file(path)).get<FeatureGraph>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("graph file '" + path + "' is not valid: " + e.what());
  }
}

void save_graph(const FeatureGraph& graph, const std::string& path) {
  write_text_file(path, nlohmann::json(graph).dump(2) + "\n");
}

void check_graph_nodes(const FeatureGraph& graph, const std::vector<std::string>& features) {
  if (graph.nodes() != features)
    throw SchemaMismatch("graph nodes do not match the encoded feature names");
}

PromptInputs make_prompt_inputs(const RawTable& table, std::uint64_t seed, std::size_t sample_count) {
  PromptInputs in;
  for (const auto& c : table.schema.columns()) {
    in.feature_names.push_back(c.name);
    in.descriptions.push_back(c.description);
  }
  in.sample_header = table.schema.names();
  const std::size_t k = std::min(sample_count, table.rows.size());
  std::vector<std::size_t> idx(table.rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  for (auto i : idx) in.samples.push_back(table.rows[i]);
  return in;
}

std::string build_prompt(const PromptInputs& inputs) {
  std::ostringstream p;
  p << "Given the following information, please infer the relationships between features. "
       "Provide your output in JSON format, capturing the type of relationships.\n";
  p << "Feature Names: ";
  for (std::size_t i = 0; i < inputs.feature_names.size(); ++i) p << (i ? ", " : "") << inputs.feature_names[i];
  p << "\nFeature Descriptions:\n";
  for (std::size_t i = 0; i < inputs.feature_names.size(); ++i) {
    const std::string& d = i < inputs.descriptions.size() ? inputs.descriptions[i] : std::string();
    p << "- " << inputs.feature_names[i] << ": " << d << "\n";
  }
  p << "Sample Data Points (" << inputs.samples.size() << " rows):\n";
  p << join_csv_line(inputs.sample_header) << "\n";
  std::vector<std::string> fields;
  for (const auto& row : inputs.samples) {
    fields.clear();
    for (const auto& cell : row) fields.push_back(cell.value_or("NA"));
    p << join_csv_line(fields) << "\n";
  }
  p << "Output: Please return a JSON object in the format:\n";
  p << "{\"relationships\": [[\"feature1\", \"feature2\"], [\"feature3\", \"feature4\"], ...]}\n";
  return p.str();
}

namespace {

// End (exclusive) of the balanced {...} starting at `start`, honouring strings.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char ch = text[i];
    if (in_string) {
      if (ch == '\\') ++i;
      else if (ch == '"') in_string = false;
      continue;
    }
    if (ch == '"') in_string = true;
    else if (ch == '{' || ch == '[') ++depth;
    else if (ch == '}' || ch == ']') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

std::string normalize_set_literals(const std::string& text) {
  static const std::regex kSetLiteral(R"re(\{\s*("(?:[^"\\]|\\.)*")\s*,\s*("(?:[^"\\]|\\.)*")\s*\})re");
  return std::regex_replace(text, kSetLiteral, "[$1, $2]");
}

std::optional<std::pair<std::string, std::string>> entry_pair(const nlohmann::json& e) {
  if (e.is_array() && e.size() == 2 && e[0].is_string() && e[1].is_string())
    return std::pair{e[0].get<std::string>(), e[1].get<std::string>()};
  if (!e.is_object()) return std::nullopt;
  if (e.contains("feature1") && e.contains("feature2") && e["feature1"].is_string() && e["feature2"].is_string())
    return std::pair{e["feature1"].get<std::string>(), e["feature2"].get<std::string>()};
  static const std::set<std::string> kIgnored{"type", "relationship", "relation", "description", "reason"};
  std::vector<std::string> names;
  for (const auto& [key, value] : e.items())
    if (!kIgnored.count(key) && value.is_string()) names.push_back(value.get<std::string>());
  if (names.size() == 2) return std::pair{names[0], names[1]};
  return std::nullopt;
}

}  // namespace

RelationshipParse parse_relationships(std::string_view payload, const std::vector<std::string>& known) {
  std::optional<nlohmann::json> found;
  for (std::size_t pos = payload.find('{'); pos != std::string_view::npos && !found;
       pos = payload.find('{', pos + 1)) {
    auto end = balanced_end(payload, pos);
    if (!end) continue;
    auto candidate = normalize_set_literals(std::string(payload.substr(pos, *end - pos)));
    auto parsed = nlohmann::json::parse(candidate, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("relationships")) found = std::move(parsed);
  }
  if (!found || !(*found)["relationships"].is_array())
    throw MalformedPayload("reply holds no parsable {\"relationships\": [...]} object");

  RelationshipParse out{FeatureGraph(known), 0};
  for (const auto& entry : (*found)["relationships"]) {
    auto pair = entry_pair(entry);
    if (!pair) {
      ++out.warnings;
      continue;
    }
    auto a = out.graph.index_of(pair->first), b = out.graph.index_of(pair->second);
    if (!a || !b) {
      ++out.warnings;
      continue;
    }
    out.graph.add_edge(*a, *b);
  }
  return out;
}

std::string relationships_payload(const FeatureGraph& graph) {
  auto rel = nlohmann::json::array();
  for (const auto& [a, b] : graph.edge_names()) rel.push_back({a, b});
  return nlohmann::json{{"relationships", std::move(rel)}}.dump();
}

void add_timestamp_edges(FeatureGraph& graph, const Codec& codec) {
  for (std::size_t c = 0; c < codec.schema.size(); ++c) {
    if (codec.schema[c].kind != ColumnKind::timestamp) continue;
    auto parts = codec.features_of_column(c);
    for (std::size_t i = 0; i < parts.size(); ++i)
      for (std::size_t j = i + 1; j < parts.size(); ++j) graph.add_edge(parts[i], parts[j]);
  }
}

FeatureGraph expand_graph(const FeatureGraph& column_graph, const Codec& codec) {
  FeatureGraph out(codec.feature_names());
  for (const auto& [a, b] : column_graph.edge_names()) {
    auto ca = codec.schema.index_of(a), cb = codec.schema.index_of(b);
    if (!ca || !cb) throw SchemaMismatch("relationship names a column outside the schema");
    for (auto fa : codec.features_of_column(*ca))
      for (auto fb : codec.features_of_column(*cb)) out.add_edge(fa, fb);
  }
  add_timestamp_edges(out, codec);
  return out;
}

double pearson(const Matrix& data, std::size_t a, std::size_t b, const std::vector<Eigen::Index>& rows) {
  const auto ca = static_cast<Eigen::Index>(a), cb = static_cast<Eigen::Index>(b);
  double ma = 0.0, mb = 0.0;
  for (auto r : rows) {
    ma += data(r, ca);
    mb += data(r, cb);
  }
  ma /= static_cast<double>(rows.size());
  mb /= static_cast<double>(rows.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (auto r : rows) {
    const double da = data(r, ca) - ma, db = data(r, cb) - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double denom = std::sqrt(saa * sbb);
  return denom > 0.0 ? sab / denom : 0.0;
}

FeatureGraph infer_graph_statistical(const EncodedMatrix& data, double threshold, double missing_sentinel,
                                     std::size_t min_rows) {
  const std::size_t n = data.cols();
  if (n < 2) throw InvalidArgument("statistical graph needs at least two features");
  std::vector<Eigen::Index> complete;
  for (Eigen::Index r = 0; r < data.values.rows(); ++r)
    if (!(data.values.row(r).array() == missing_sentinel).any()) complete.push_back(r);
  if (complete.size() < min_rows)
    throw TooFewRows("statistical graph needs " + std::to_string(min_rows) + " complete rows, got " +
                     std::to_string(complete.size()));

  Matrix corr = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double c = std::abs(pearson(data.values, i, j, complete));
      corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      corr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
    }

  FeatureGraph graph(data.feature_names);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >= threshold) graph.add_edge(i, j);

  std::vector<std::size_t> isolated;
  for (std::size_t i = 0; i < n; ++i)
    if (graph.degree(i) == 0) isolated.push_back(i);
  for (auto i : isolated) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double cj = corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double cb = corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best));
      if (cj > cb || (cj == cb && data.feature_names[j] < data.feature_names[best])) best = j;
    }
    graph.add_edge(i, best);
  }
  return graph;
}

FeatureGraph build_statistical_graph(const Codec& codec, const EncodedMatrix& data, double threshold) {
  auto graph = infer_graph_statistical(data, threshold, codec.missing_sentinel);
  add_timestamp_edges(graph, codec);
  return graph;
}

GraphBuild fetch_graph_llm(const PromptInputs& inputs, const LlmConfig& config, const Codec& codec,
                           const EncodedMatrix& data, double threshold) {
  GraphBuild out;
  const std::string prompt = build_prompt(inputs);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    try {
      auto reply = complete_prompt(config, prompt);
      auto parsed = parse_relationships(reply, inputs.feature_names);
      FeatureGraph column_graph = std::move(parsed.graph);
      out.graph = expand_graph(column_graph, codec);
      out.warnings = parsed.warnings;
      if (parsed.warnings) out.log.push_back("dropped " + std::to_string(parsed.warnings) + " relationship entries");
      return out;
    } catch (const MalformedPayload& e) {
      out.log.push_back("attempt " + std::to_string(attempt) + ": " + e.what());
    } catch (const ServiceUnreachable& e) {
      out.log.push_back("attempt " + std::to_string(attempt) + ": " + e.what());
    }
  }
  out.log.push_back("falling back to the statistical graph builder");
  out.fallback = true;
  out.graph = build_statistical_graph(codec, data, threshold);
  return out;
}

}  // namespace dquag
