#include "dquag/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include <openssl/evp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "dquag/adam.hpp"
#include "dquag/error.hpp"

namespace dquag {

void Hyperparams::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidArgument("alpha and beta must be >= 0");
  if (!(percentile > 0.0 && percentile < 1.0)) throw InvalidArgument("percentile must lie in (0, 1)");
  if (!(rate_multiplier > 0.0)) throw InvalidArgument("rate multiplier must be > 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (batch_size <= 0 || epochs < 0) throw InvalidArgument("batch size must be > 0 and epochs >= 0");
  if (!(weight_floor > 0.0)) throw InvalidArgument("weight floor must be > 0");
  if (hidden_dim <= 0 || decoder_hidden <= 0) throw InvalidArgument("layer widths must be > 0");
}

void to_json(nlohmann::json& j, const Hyperparams& hp) {
  j = nlohmann::json{{"alpha", hp.alpha},
                     {"beta", hp.beta},
                     {"learning_rate", hp.learning_rate},
                     {"batch_size", hp.batch_size},
                     {"epochs", hp.epochs},
                     {"percentile", hp.percentile},
                     {"rate_multiplier", hp.rate_multiplier},
                     {"seed", hp.seed},
                     {"weight_floor", hp.weight_floor},
                     {"hidden_dim", hp.hidden_dim},
                     {"decoder_hidden", hp.decoder_hidden},
                     {"encoder", std::string(to_string(hp.variant))}};
}

void from_json(const nlohmann::json& j, Hyperparams& hp) {
  hp.alpha = j.at("alpha").get<double>();
  hp.beta = j.at("beta").get<double>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.batch_size = j.at("batch_size").get<int>();
  hp.epochs = j.at("epochs").get<int>();
  hp.percentile = j.at("percentile").get<double>();
  hp.rate_multiplier = j.at("rate_multiplier").get<double>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  hp.weight_floor = j.at("weight_floor").get<double>();
  hp.hidden_dim = j.at("hidden_dim").get<int>();
  hp.decoder_hidden = j.at("decoder_hidden").get<int>();
  hp.variant = encoder_variant_from_string(j.at("encoder").get<std::string>());
}

InstanceError instance_error(std::span<const double> x, std::span<const double> xhat) {
  if (x.size() != xhat.size()) throw ShapeMismatch("instance_error: lengths differ");
  if (x.empty()) throw ShapeMismatch("instance_error: empty instance");
  InstanceError e;
  e.per_feature.resize(x.size());
  double total = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - xhat[j];
    e.per_feature[j] = d * d;
    total += e.per_feature[j];
  }
  e.mean = total / static_cast<double>(x.size());
  return e;
}

std::vector<double> sample_weights(std::span<const double> errors, double floor) {
  if (errors.empty()) throw EmptyInput("sample_weights needs a non-empty batch");
  std::vector<double> w(errors.size());
  double total = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    w[i] = 1.0 / (floor + errors[i]);
    total += w[i];
  }
  const double mean = total / static_cast<double>(w.size());
  for (auto& v : w) v /= mean;
  return w;
}

ad::Var validation_loss(ad::Var x, ad::Var reconstruction, const std::vector<double>& weights) {
  if (static_cast<Eigen::Index>(weights.size()) != x.rows())
    throw ShapeMismatch("validation_loss: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(x.rows()) + " instances");
  auto diff = ad::sub(x, reconstruction);
  auto per_instance = ad::row_sum(ad::mul(diff, diff));
  auto w = x.tape().constant(Eigen::Map<const Matrix>(weights.data(), x.rows(), 1));
  return ad::mean(ad::mul(per_instance, w));
}

ad::Var repair_loss(ad::Var x, ad::Var repaired) {
  auto diff = ad::sub(x, repaired);
  return ad::mean(ad::row_sum(ad::mul(diff, diff)));
}

ad::Var total_loss(ad::Var validation, ad::Var repair, const Hyperparams& hp) {
  return ad::add(ad::scale(validation, hp.alpha), ad::scale(repair, hp.beta));
}

double total_loss(double validation, double repair, const Hyperparams& hp) {
  return hp.alpha * validation + hp.beta * repair;
}

double calibrate_threshold(std::span<const double> errors, double percentile) {
  if (errors.empty()) throw EmptyInput("cannot calibrate a threshold on an empty error list");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw InvalidArgument("percentile must lie in (0, 1]");
  std::vector<double> sorted(errors.begin(), errors.end());
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile * n));
  // ceil(0.95 * 100) evaluates to 96 in binary floating point; undo that drift.
  if (rank > 1 && static_cast<double>(rank - 1) >= percentile * n - 1e-9 * n) --rank;
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

int default_threads() {
  if (const char* env = std::getenv("DQUAG_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

ModelOutputs run_model(const ModelParams& params, const GraphOperators& ops, const Matrix& x, int threads) {
  constexpr Eigen::Index kChunk = 1024;
  ModelOutputs out{Matrix(x.rows(), x.cols()), Matrix(x.rows(), x.cols())};
  if (x.rows() == 0) return out;
  const Eigen::Index chunks = (x.rows() + kChunk - 1) / kChunk;
  auto work = [&](Eigen::Index first, Eigen::Index stride) {
    for (Eigen::Index c = first; c < chunks; c += stride) {
      const Eigen::Index start = c * kChunk;
      const Eigen::Index count = std::min(kChunk, x.rows() - start);
      ad::Tape tape(false);
      auto rec = forward(tape, x.middleRows(start, count), ops, params);
      out.validation.middleRows(start, count) = rec.validation.value();
      out.repair.middleRows(start, count) = rec.repair.value();
    }
  };
  if (threads <= 0) threads = default_threads();
  threads = static_cast<int>(std::min<Eigen::Index>(threads, chunks));
  if (threads <= 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work(t, threads);
      } catch (...) {
        failures[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  return out;
}

std::vector<double> reservoir_sample(const std::vector<double>& values, std::size_t cap, std::uint64_t seed) {
  if (values.size() <= cap) return values;
  std::vector<double> kept(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(cap));
  std::mt19937_64 rng(seed);
  for (std::size_t i = cap; i < values.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    const std::size_t j = pick(rng);
    if (j < cap) kept[j] = values[i];
  }
  return kept;
}

CleanErrorProfile calibrate_profile(const ModelBundle& bundle, const EncodedMatrix& clean) {
  auto ops = GraphOperators::from_graph(bundle.graph);
  auto outputs = run_model(bundle.params, ops, clean.values);
  std::vector<double> errors(clean.rows());
  for (Eigen::Index i = 0; i < clean.values.rows(); ++i)
    errors[static_cast<std::size_t>(i)] = (clean.values.row(i) - outputs.validation.row(i)).squaredNorm() /
                                          static_cast<double>(clean.values.cols());
  CleanErrorProfile profile;
  profile.total_count = errors.size();
  profile.threshold = calibrate_threshold(errors, bundle.hyperparams.percentile);
  profile.errors = reservoir_sample(errors, kProfileCap, bundle.hyperparams.seed ^ 0x9e3779b97f4a7c15ULL);
  return profile;
}

ModelBundle train(const Codec& codec, const EncodedMatrix& clean, const FeatureGraph& graph, const Hyperparams& hp,
                  TrainLog* log) {
  hp.validate();
  if (clean.rows() == 0) throw EmptyInput("training needs a non-empty clean matrix");
  if (clean.cols() != codec.feature_count()) throw ShapeMismatch("clean matrix width differs from the codec");
  check_graph_nodes(graph, codec.feature_names());

  const auto started = std::chrono::steady_clock::now();
  ModelBundle bundle;
  bundle.codec = codec;
  bundle.graph = graph;
  bundle.hyperparams = hp;
  bundle.params = init_model(codec.feature_count(), hp.hidden_dim, hp.decoder_hidden, hp.variant, hp.seed);

  const auto ops = GraphOperators::from_graph(graph);
  auto params = bundle.params.parameters();
  ad::AdamState adam;
  adam.learning_rate = hp.learning_rate;

  const std::size_t rows = clean.rows();
  const auto n = static_cast<Eigen::Index>(clean.cols());
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(hp.seed + 1);

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    for (std::size_t i = rows; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }
    double sum_v = 0.0, sum_r = 0.0;
    for (std::size_t start = 0; start < rows; start += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(hp.batch_size), rows - start);
      Matrix xb(static_cast<Eigen::Index>(count), n);
      for (std::size_t k = 0; k < count; ++k)
        xb.row(static_cast<Eigen::Index>(k)) = clean.values.row(static_cast<Eigen::Index>(order[start + k]));
      try {
        ad::Tape tape;
        auto rec = forward(tape, xb, ops, bundle.params);
        Matrix diff = xb - rec.validation.value();
        Vector errors = diff.rowwise().squaredNorm() / static_cast<double>(n);
        auto weights = sample_weights(std::span<const double>(errors.data(), count), hp.weight_floor);
        auto x = tape.constant(xb);
        auto lv = validation_loss(x, rec.validation, weights);
        auto lr = repair_loss(x, rec.repair);
        auto loss = total_loss(lv, lr, hp);
        if (!std::isfinite(loss.scalar())) throw NonFinite("loss");
        tape.backward(loss);
        ad::adam_step(params, adam);
        bundle.params.zero_grad();
        sum_v += lv.scalar() * static_cast<double>(count);
        sum_r += lr.scalar() * static_cast<double>(count);
      } catch (const NonFinite& e) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch at row " + std::to_string(start) + ": " +
                            e.what());
      }
    }
    if (log) {
      EpochStats s;
      s.epoch = epoch;
      s.validation_loss = sum_v / static_cast<double>(rows);
      s.repair_loss = sum_r / static_cast<double>(rows);
      s.total_loss = total_loss(s.validation_loss, s.repair_loss, hp);
      log->epochs.push_back(s);
    }
  }

  bundle.profile = calibrate_profile(bundle, clean);
  if (log) log->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return bundle;
}

namespace {

nlohmann::json params_to_json(const ModelBundle& b) {
  auto arrays = nlohmann::json::array();
  for (const auto* p : b.params.parameters()) {
    std::vector<double> values(p->value.data(), p->value.data() + p->value.size());
    arrays.push_back({{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"values", std::move(values)}});
  }
  return {{"encoder", std::string(to_string(b.hyperparams.variant))},
          {"features", b.feature_count()},
          {"hidden_dim", b.hyperparams.hidden_dim},
          {"decoder_hidden", b.hyperparams.decoder_hidden},
          {"arrays", std::move(arrays)}};
}

}  // namespace

nlohmann::json bundle_to_json(const ModelBundle& b) {
  return {{"version", b.version},
          {"schema", b.codec.schema},
          {"codec", b.codec},
          {"graph", b.graph},
          {"params", params_to_json(b)},
          {"hyperparams", b.hyperparams},
          {"profile", {{"errors", b.profile.errors}, {"threshold", b.profile.threshold}, {"count", b.profile.total_count}}}};
}

ModelBundle bundle_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version")) throw CorruptBundle("bundle has no version field");
  if (!j["version"].is_number_integer()) throw CorruptBundle("bundle version is not an integer");
  const int version = j["version"].get<int>();
  if (version != kBundleVersion)
    throw VersionMismatch("bundle version " + std::to_string(version) + ", expected " + std::to_string(kBundleVersion));
  try {
    ModelBundle b;
    b.version = version;
    b.codec = j.at("codec").get<Codec>();
    if (!(j.at("schema").get<Schema>() == b.codec.schema)) throw CorruptBundle("schema and codec disagree");
    b.graph = j.at("graph").get<FeatureGraph>();
    check_graph_nodes(b.graph, b.codec.feature_names());
    b.hyperparams = j.at("hyperparams").get<Hyperparams>();
    const auto& jp = j.at("params");
    if (jp.at("features").get<std::size_t>() != b.codec.feature_count())
      throw CorruptBundle("parameter feature count differs from the codec");
    b.params = init_model(b.codec.feature_count(), b.hyperparams.hidden_dim, b.hyperparams.decoder_hidden,
                          b.hyperparams.variant, 0);
    auto params = b.params.parameters();
    const auto& arrays = jp.at("arrays");
    if (arrays.size() != params.size()) throw CorruptBundle("parameter array count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& a = arrays[i];
      auto rows = a.at("rows").get<Eigen::Index>(), cols = a.at("cols").get<Eigen::Index>();
      auto values = a.at("values").get<std::vector<double>>();
      if (rows != params[i]->value.rows() || cols != params[i]->value.cols() ||
          static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw CorruptBundle("parameter array " + std::to_string(i) + " has the wrong shape");
      params[i]->value = Eigen::Map<const Matrix>(values.data(), rows, cols);
      params[i]->zero_grad();
    }
    const auto& jprof = j.at("profile");
    b.profile.errors = jprof.at("errors").get<std::vector<double>>();
    b.profile.threshold = jprof.at("threshold").get<double>();
    b.profile.total_count = jprof.at("count").get<std::size_t>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptBundle(e.what());
  } catch (const SchemaMismatch& e) {
    throw CorruptBundle(e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptBundle(e.what());
  }
}

std::string serialize_bundle(const ModelBundle& bundle) { return bundle_to_json(bundle).dump() + "\n"; }

ModelBundle deserialize_bundle(const std::string& text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw CorruptBundle("bundle is not valid JSON");
  return bundle_from_json(j);
}

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  write_text_file(path, serialize_bundle(bundle));
}

ModelBundle load_bundle(const std::string& path) { return deserialize_bundle(read_text_file(path)); }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw InvalidArgument("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace dquag
