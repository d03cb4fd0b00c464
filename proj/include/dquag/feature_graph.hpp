#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dquag/codec.hpp"
#include "dquag/table.hpp"
#include "json.hpp"

namespace dquag {

/// Undirected graph over feature names. Edges are stored once as (i, j) with
/// i < j; self-loops are never stored.
class FeatureGraph {
 public:
  FeatureGraph() = default;
  explicit FeatureGraph(std::vector<std::string> nodes);

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::set<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Returns false for self-loops and already-present edges.
  bool add_edge(std::size_t a, std::size_t b);
  bool add_edge(std::string_view a, std::string_view b);
  bool has_edge(std::size_t a, std::size_t b) const;
  std::vector<std::size_t> neighbors(std::size_t node) const;
  std::size_t degree(std::size_t node) const;
  /// Node-name pairs, each pair ordered by node index.
  std::vector<std::pair<std::string, std::string>> edge_names() const;

  bool operator==(const FeatureGraph&) const = default;

 private:
  std::vector<std::string> nodes_;
  std::set<std::pair<std::size_t, std::size_t>> edges_;
};

void to_json(nlohmann::json& j, const FeatureGraph& graph);
void from_json(const nlohmann::json& j, FeatureGraph& graph);
FeatureGraph load_graph(const std::string& path);
void save_graph(const FeatureGraph& graph, const std::string& path);
/// Throws SchemaMismatch unless the graph's nodes are exactly `features` in order.
void check_graph_nodes(const FeatureGraph& graph, const std::vector<std::string>& features);

struct PromptInputs {
  std::vector<std::string> feature_names;
  std::vector<std::string> descriptions;
  std::vector<std::string> sample_header;
  std::vector<Row> samples;
};

/// Feature names and descriptions from the schema plus min(100, rows) rows
/// drawn uniformly without replacement (kept in table order).
PromptInputs make_prompt_inputs(const RawTable& table, std::uint64_t seed, std::size_t sample_count = 100);

std::string build_prompt(const PromptInputs& inputs);

struct RelationshipParse {
  FeatureGraph graph;
  /// Entries dropped because they named an unknown feature or were malformed.
  std::size_t warnings = 0;
};

/// Extracts the first JSON object holding a "relationships" key from a
/// free-form reply. Entries may be 2-element arrays, objects with two
/// feature-name values, or set literals {"a", "b"}.
RelationshipParse parse_relationships(std::string_view payload, const std::vector<std::string>& known);

/// Serialized form understood by parse_relationships.
std::string relationships_payload(const FeatureGraph& graph);

/// Maps a graph over raw column names onto the codec's expanded features and
/// connects the year/month/day parts of every timestamp pairwise.
FeatureGraph expand_graph(const FeatureGraph& column_graph, const Codec& codec);
void add_timestamp_edges(FeatureGraph& graph, const Codec& codec);

/// Pearson correlation of columns a and b over the given rows.
double pearson(const Matrix& data, std::size_t a, std::size_t b, const std::vector<Eigen::Index>& rows);

/// Edge (i, j) iff |corr| >= threshold over rows free of the sentinel, then
/// every isolated node is joined to its highest-|corr| partner (ties broken
/// by lexicographically smaller feature name).
FeatureGraph infer_graph_statistical(const EncodedMatrix& data, double threshold = 0.3,
                                     double missing_sentinel = -1.0, std::size_t min_rows = 30);

struct LlmConfig {
  std::string endpoint;
  std::string api_key;
  std::string model = "gpt-4";
  double timeout_seconds = 60.0;

  /// Reads DQUAG_LLM_ENDPOINT / DQUAG_LLM_KEY; nullopt when either is unset.
  static std::optional<LlmConfig> from_env();
};

/// Sends one chat-style request and returns the reply text. Throws
/// ServiceUnreachable on transport failure or a non-2xx status.
std::string complete_prompt(const LlmConfig& config, const std::string& prompt);

struct GraphBuild {
  FeatureGraph graph;
  bool fallback = false;
  std::size_t warnings = 0;
  std::vector<std::string> log;
};

/// Queries the text-completion service (one retry on a bad or failed reply);
/// falls back to the statistical builder over `data` when both attempts fail.
GraphBuild fetch_graph_llm(const PromptInputs& inputs, const LlmConfig& config, const Codec& codec,
                           const EncodedMatrix& data, double threshold = 0.3);

/// Statistical graph plus timestamp-part edges, as used by the pipeline.
FeatureGraph build_statistical_graph(const Codec& codec, const EncodedMatrix& data, double threshold = 0.3);

}  // namespace dquag
