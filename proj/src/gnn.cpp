#include "dquag/gnn.hpp"

#include <cmath>
#include <random>

#include "dquag/error.hpp"

namespace dquag {

std::string_view to_string(EncoderVariant variant) {
  switch (variant) {
    case EncoderVariant::gat_gin: return "GAT+GIN";
    case EncoderVariant::gcn: return "GCN";
    case EncoderVariant::gcn_gat: return "GCN+GAT";
    case EncoderVariant::gcn_gin: return "GCN+GIN";
  }
  return "GAT+GIN";
}

EncoderVariant encoder_variant_from_string(std::string_view text) {
  for (auto v : {EncoderVariant::gat_gin, EncoderVariant::gcn, EncoderVariant::gcn_gat, EncoderVariant::gcn_gin})
    if (text == to_string(v)) return v;
  throw InvalidArgument("unknown encoder variant '" + std::string(text) + "'");
}

std::vector<LayerKind> layer_plan(EncoderVariant variant) {
  using K = LayerKind;
  switch (variant) {
    case EncoderVariant::gat_gin: return {K::gat, K::gin, K::gat, K::gin};
    case EncoderVariant::gcn: return {K::gcn, K::gcn, K::gcn, K::gcn};
    case EncoderVariant::gcn_gat: return {K::gcn, K::gat, K::gcn, K::gat};
    case EncoderVariant::gcn_gin: return {K::gcn, K::gin, K::gcn, K::gin};
  }
  return {};
}

namespace {

struct Initializer {
  std::mt19937_64 rng;

  ad::Parameter uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return ad::Parameter(std::move(m));
  }
};

DecoderParams init_decoder(Initializer& init, Eigen::Index n, Eigen::Index hidden, Eigen::Index dec) {
  DecoderParams d;
  d.w1 = init.uniform(n * hidden, dec, n * hidden);
  d.b1 = init.uniform(1, dec, n * hidden);
  d.w2 = init.uniform(dec, n, dec);
  d.b2 = init.uniform(1, n, dec);
  return d;
}

template <class F>
void for_each_param(const ModelParams& m, F&& f) {
  f(m.encoder.projection_weight);
  f(m.encoder.projection_bias);
  for (const auto& layer : m.encoder.layers) {
    if (const auto* g = std::get_if<GatLayerParams>(&layer)) {
      f(g->weight);
      f(g->attention);
    } else if (const auto* g = std::get_if<GinLayerParams>(&layer)) {
      f(g->epsilon);
      f(g->w1);
      f(g->b1);
      f(g->w2);
      f(g->b2);
    } else {
      f(std::get<GcnLayerParams>(layer).weight);
    }
  }
  for (const DecoderParams* d : {&m.validation, &m.repair}) {
    f(d->w1);
    f(d->b1);
    f(d->w2);
    f(d->b2);
  }
}

}  // namespace

std::vector<const ad::Parameter*> ModelParams::parameters() const {
  std::vector<const ad::Parameter*> out;
  for_each_param(*this, [&](const ad::Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<ad::Parameter*> ModelParams::parameters() {
  std::vector<ad::Parameter*> out;
  for_each_param(*this, [&](const ad::Parameter& p) { out.push_back(const_cast<ad::Parameter*>(&p)); });
  return out;
}

void ModelParams::zero_grad() const {
  for_each_param(*this, [](const ad::Parameter& p) { p.zero_grad(); });
}

ModelParams init_model(std::size_t features, int hidden, int decoder_hidden, EncoderVariant variant,
                       std::uint64_t seed) {
  if (features == 0 || hidden <= 0 || decoder_hidden <= 0) throw InvalidArgument("model dimensions must be positive");
  const auto n = static_cast<Eigen::Index>(features);
  const Eigen::Index h = hidden;
  Initializer init{std::mt19937_64(seed)};
  ModelParams m;
  m.encoder.projection_weight = init.uniform(1, h, 1);
  m.encoder.projection_bias = init.uniform(1, h, 1);
  for (auto kind : layer_plan(variant)) {
    switch (kind) {
      case LayerKind::gat: {
        GatLayerParams g;
        g.weight = init.uniform(h, h, h);
        g.attention = init.uniform(1, 2 * h, 2 * h);
        m.encoder.layers.emplace_back(std::move(g));
        break;
      }
      case LayerKind::gin: {
        GinLayerParams g;
        g.epsilon = ad::Parameter(Matrix::Zero(1, 1));
        g.w1 = init.uniform(h, h, h);
        g.b1 = init.uniform(1, h, h);
        g.w2 = init.uniform(h, h, h);
        g.b2 = init.uniform(1, h, h);
        m.encoder.layers.emplace_back(std::move(g));
        break;
      }
      case LayerKind::gcn: {
        GcnLayerParams g;
        g.weight = init.uniform(h, h, h);
        m.encoder.layers.emplace_back(std::move(g));
        break;
      }
    }
  }
  m.validation = init_decoder(init, n, h, decoder_hidden);
  m.repair = init_decoder(init, n, h, decoder_hidden);
  return m;
}

GraphOperators GraphOperators::from_graph(const FeatureGraph& graph) {
  GraphOperators ops;
  const auto n = static_cast<Eigen::Index>(graph.node_count());
  ops.nodes = n;
  ops.adjacency = Matrix::Zero(n, n);
  for (const auto& [a, b] : graph.edges()) {
    ops.adjacency(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = 1.0;
    ops.adjacency(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = 1.0;
  }
  Matrix with_self = ops.adjacency + Matrix::Identity(n, n);
  ops.attention_mask = with_self.array() > 0.0;
  Vector inv_sqrt_degree = with_self.rowwise().sum().array().rsqrt();
  ops.gcn_propagation = inv_sqrt_degree.asDiagonal() * with_self * inv_sqrt_degree.asDiagonal();
  return ops;
}

namespace {

Eigen::Index batch_of(ad::Var h, const GraphOperators& ops, const char* layer) {
  if (ops.nodes == 0 || h.rows() % ops.nodes != 0)
    throw ShapeMismatch(std::string(layer) + ": " + std::to_string(h.rows()) + " node rows for a " +
                        std::to_string(ops.nodes) + "-node graph");
  return h.rows() / ops.nodes;
}

}  // namespace

ad::Var gat_forward(ad::Var h, const GraphOperators& ops, const GatLayerParams& p, Matrix* attention) {
  const Eigen::Index batch = batch_of(h, ops, "gat_forward");
  ad::Tape& t = h.tape();
  auto weight = t.parameter(p.weight);
  const Eigen::Index width = p.weight.value.cols();
  if (p.attention.value.rows() != 1 || p.attention.value.cols() != 2 * width)
    throw ShapeMismatch("gat_forward: attention vector must be 1 x " + std::to_string(2 * width));
  auto a = t.parameter(p.attention);
  auto wh = ad::matmul(h, weight);
  auto a_src = ad::reshape(ad::slice_cols(a, 0, width), width, 1);
  auto a_dst = ad::reshape(ad::slice_cols(a, width, width), width, 1);
  auto logits = ad::pairwise_block_add(ad::matmul(wh, a_src), ad::matmul(wh, a_dst), ops.nodes);
  auto scores = ad::leaky_relu(logits, kAttentionSlope);
  auto alpha = ad::masked_row_softmax(scores, ops.attention_mask.replicate(batch, 1));
  if (attention) *attention = alpha.value();
  return ad::block_matmul(alpha, wh, ops.nodes);
}

ad::Var gin_forward(ad::Var h, const GraphOperators& ops, const GinLayerParams& p) {
  const Eigen::Index batch = batch_of(h, ops, "gin_forward");
  ad::Tape& t = h.tape();
  auto neighbours = ad::block_matmul(t.constant(ops.adjacency.replicate(batch, 1)), h, ops.nodes);
  auto self = ad::add(h, ad::scale_by(h, t.parameter(p.epsilon)));
  auto pre = ad::add(self, neighbours);
  auto hidden = ad::relu(ad::add_row(ad::matmul(pre, t.parameter(p.w1)), t.parameter(p.b1)));
  return ad::add_row(ad::matmul(hidden, t.parameter(p.w2)), t.parameter(p.b2));
}

ad::Var gcn_forward(ad::Var h, const GraphOperators& ops, const GcnLayerParams& p) {
  const Eigen::Index batch = batch_of(h, ops, "gcn_forward");
  ad::Tape& t = h.tape();
  auto hw = ad::matmul(h, t.parameter(p.weight));
  return ad::relu(ad::block_matmul(t.constant(ops.gcn_propagation.replicate(batch, 1)), hw, ops.nodes));
}

ad::Var encode(ad::Var x, const GraphOperators& ops, const EncoderParams& p) {
  if (x.cols() != ops.nodes)
    throw ShapeMismatch("encode: instance width " + std::to_string(x.cols()) + " vs " + std::to_string(ops.nodes) +
                        " graph nodes");
  ad::Tape& t = x.tape();
  auto nodes = ad::reshape(x, x.rows() * x.cols(), 1);
  auto h = ad::add_row(ad::matmul(nodes, t.parameter(p.projection_weight)), t.parameter(p.projection_bias));
  for (const auto& layer : p.layers) {
    if (const auto* g = std::get_if<GatLayerParams>(&layer)) h = gat_forward(h, ops, *g);
    else if (const auto* g = std::get_if<GinLayerParams>(&layer)) h = gin_forward(h, ops, *g);
    else h = gcn_forward(h, ops, std::get<GcnLayerParams>(layer));
  }
  return h;
}

ad::Var decode(ad::Var z, const DecoderParams& p, Eigen::Index batch) {
  if (batch <= 0 || z.value().size() != batch * p.w1.value.rows())
    throw ShapeMismatch("decode: embedding of " + std::to_string(z.value().size()) + " values does not flatten to " +
                        std::to_string(batch) + " x " + std::to_string(p.w1.value.rows()));
  ad::Tape& t = z.tape();
  auto flat = ad::reshape(z, batch, p.w1.value.rows());
  auto hidden = ad::relu(ad::add_row(ad::matmul(flat, t.parameter(p.w1)), t.parameter(p.b1)));
  return ad::add_row(ad::matmul(hidden, t.parameter(p.w2)), t.parameter(p.b2));
}

Reconstruction forward(ad::Tape& tape, const Matrix& x, const GraphOperators& ops, const ModelParams& params) {
  auto input = tape.constant(x);
  auto z = encode(input, ops, params.encoder);
  return {z, decode(z, params.validation, x.rows()), decode(z, params.repair, x.rows())};
}

}  // namespace dquag
