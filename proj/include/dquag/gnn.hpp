#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "dquag/autodiff.hpp"
#include "dquag/feature_graph.hpp"

namespace dquag {

enum class LayerKind { gat, gin, gcn };

/// Encoder layer orders. gat_gin is the production encoder; the others exist
/// for the ablation harness and keep the same depth and width.
enum class EncoderVariant { gat_gin, gcn, gcn_gat, gcn_gin };

std::string_view to_string(EncoderVariant variant);
EncoderVariant encoder_variant_from_string(std::string_view text);
std::vector<LayerKind> layer_plan(EncoderVariant variant);

inline constexpr double kAttentionSlope = 0.2;

struct GatLayerParams {
  ad::Parameter weight;     // in x out
  ad::Parameter attention;  // 1 x 2*out: [source half | neighbour half]
};

struct GinLayerParams {
  ad::Parameter epsilon;  // 1 x 1
  ad::Parameter w1, b1, w2, b2;
};

struct GcnLayerParams {
  ad::Parameter weight;
};

using GraphLayerParams = std::variant<GatLayerParams, GinLayerParams, GcnLayerParams>;

struct EncoderParams {
  ad::Parameter projection_weight;  // 1 x hidden
  ad::Parameter projection_bias;    // 1 x hidden
  std::vector<GraphLayerParams> layers;
};

struct DecoderParams {
  ad::Parameter w1, b1;  // (n*hidden) x decoder_hidden
  ad::Parameter w2, b2;  // decoder_hidden x n
};

struct ModelParams {
  EncoderParams encoder;
  DecoderParams validation;
  DecoderParams repair;

  /// Fixed traversal order, shared by init, Adam and serialization.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  void zero_grad() const;
};

/// Seeded uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialisation; GIN
/// epsilon starts at 0.
ModelParams init_model(std::size_t features, int hidden, int decoder_hidden, EncoderVariant variant,
                       std::uint64_t seed);

/// Dense per-graph operators, computed once and tiled over a batch.
struct GraphOperators {
  Eigen::Index nodes = 0;
  Mask attention_mask;     // adjacency plus self-loops
  Matrix adjacency;        // 0/1, no self-loops
  Matrix gcn_propagation;  // D^-1/2 (A + I) D^-1/2

  static GraphOperators from_graph(const FeatureGraph& graph);
};

// All graph layers take node states stacked per instance: (batch*n) x width.

/// Single-head GAT: out_i = sum_j alpha_ij W h_j over j in N(i) + {i}, with
/// alpha = softmax_j LeakyReLU(a_src . W h_i + a_dst . W h_j).
/// When `attention` is non-null it receives alpha as (batch*n) x n.
ad::Var gat_forward(ad::Var h, const GraphOperators& ops, const GatLayerParams& p, Matrix* attention = nullptr);

/// out_i = MLP((1 + eps) h_i + sum_{j in N(i)} h_j).
ad::Var gin_forward(ad::Var h, const GraphOperators& ops, const GinLayerParams& p);

/// relu(D^-1/2 (A + I) D^-1/2 H W).
ad::Var gcn_forward(ad::Var h, const GraphOperators& ops, const GcnLayerParams& p);

/// x is batch x n; returns node embeddings (batch*n) x hidden.
ad::Var encode(ad::Var x, const GraphOperators& ops, const EncoderParams& p);

/// Flattens each instance's embedding row-major and maps it back to n values.
ad::Var decode(ad::Var z, const DecoderParams& p, Eigen::Index batch);

struct Reconstruction {
  ad::Var embedding;
  ad::Var validation;
  ad::Var repair;
};

Reconstruction forward(ad::Tape& tape, const Matrix& x, const GraphOperators& ops, const ModelParams& params);

}  // namespace dquag
