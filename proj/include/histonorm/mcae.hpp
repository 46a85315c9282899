#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "histonorm/adam.hpp"
#include "histonorm/autoencoder.hpp"
#include "histonorm/dataset.hpp"
#include "histonorm/error.hpp"
#include "histonorm/extractor.hpp"
#include "histonorm/json_io.hpp"
#include "histonorm/kmeans.hpp"
#include "histonorm/patches.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

// N per-domain auto-encoders sharing a feature space, plus the K-Means state
// that supplies pseudo-labels for the cluster loss.
struct McaeModel {
  std::vector<std::string> domain_ids;
  std::vector<AutoEncoder> channels;
  KMeansState kmeans;

  std::size_t domain_count() const { return domain_ids.size(); }
  std::size_t feature_dim() const { return channels.front().feature_dim(); }

  std::size_t domain_index(const std::string& id) const {
    const auto it = std::find(domain_ids.begin(), domain_ids.end(), id);
    if (it == domain_ids.end()) throw LookupError("mcae: unknown domain '" + id + "'");
    return static_cast<std::size_t>(it - domain_ids.begin());
  }
  const AutoEncoder& channel(std::size_t d) const {
    if (d >= channels.size()) throw LookupError("mcae: domain index out of range");
    return channels[d];
  }

  std::vector<double> encode(const std::string& domain, std::span<const double> patch) const {
    const AutoEncoder& ae = channel(domain_index(domain));
    const Tensor z = encode_rows(ae, Tensor({1, patch.size()}, {patch.begin(), patch.end()}));
    return {z.values().begin(), z.values().end()};
  }
  std::vector<double> decode(const std::string& domain, std::span<const double> feature) const {
    const AutoEncoder& ae = channel(domain_index(domain));
    const Tensor y = decode_rows(ae, Tensor({1, feature.size()}, {feature.begin(), feature.end()}));
    return {y.values().begin(), y.values().end()};
  }

  Tensor feature_map(std::size_t domain, const Image& img, std::size_t stride) const {
    const PatchGrid grid = patch_grid(img.width, img.height, kPatchSize, stride);
    const Tensor z = encode_rows(channel(domain), patch_bytes_to_pm1(extract_patch_bytes(img, kPatchSize, stride), kPatchDim));
    return z.reshaped({grid.rows, grid.cols, z.extent(1)});
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& c : channels)
      for (Tensor* p : c.parameters()) out.push_back(p);
    return out;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& c : channels)
      for (const Tensor* p : c.parameters()) out.push_back(p);
    return out;
  }
};

inline McaeModel make_mcae(std::vector<std::string> domain_ids, const AutoEncoderDims& dims, std::uint64_t seed) {
  if (domain_ids.empty()) throw EmptyInputError("make_mcae: no domains");
  McaeModel m;
  m.domain_ids = std::move(domain_ids);
  for (std::size_t d = 0; d < m.domain_ids.size(); ++d) {
    Rng rng = Rng::stream(seed, "mcae.init." + m.domain_ids[d]);
    m.channels.push_back(make_autoencoder(dims, rng));
  }
  return m;
}

inline McaeModel zero_mcae(std::vector<std::string> domain_ids, const AutoEncoderDims& dims) {
  McaeModel m;
  m.domain_ids = std::move(domain_ids);
  m.channels.assign(m.domain_ids.size(), zero_autoencoder(dims));
  return m;
}

// ---------------------------------------------------------------------------
// Loss terms. Feature tensors are (domains x patches x features).

inline double reconstruction_loss(const Tensor& original, const Tensor& reconstructed) {
  if (original.shape() != reconstructed.shape())
    throw DimensionError("reconstruction_loss: " + to_string(original.shape()) + " vs " +
                         to_string(reconstructed.shape()));
  if (original.empty()) throw EmptyInputError("reconstruction_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = reconstructed[i] - original[i];
    s += d * d;
  }
  return s / static_cast<double>(original.size());
}

namespace detail {
inline void check_features(const Tensor& z, std::size_t min_domains, const char* what) {
  if (z.rank() != 3) throw DimensionError(std::string(what) + ": expected (domains x patches x features)");
  if (z.extent(0) < min_domains)
    throw DimensionError(std::string(what) + ": need at least " + std::to_string(min_domains) + " domains");
  if (z.extent(1) == 0) throw EmptyInputError(std::string(what) + ": no patches");
}
}  // namespace detail

// Squared differences of every domain to domain 0, normalised by
// (N - 1) * features * patches.
inline double feature_loss(const Tensor& z) {
  detail::check_features(z, 2, "feature_loss");
  const std::size_t n = z.extent(0), j = z.extent(1), f = z.extent(2);
  double s = 0.0;
  for (std::size_t d = 1; d < n; ++d)
    for (std::size_t p = 0; p < j; ++p)
      for (std::size_t k = 0; k < f; ++k) {
        const double diff = z(0, p, k) - z(d, p, k);
        s += diff * diff;
      }
  return s / static_cast<double>((n - 1) * f * j);
}

inline Tensor feature_loss_grad(const Tensor& z) {
  detail::check_features(z, 2, "feature_loss");
  const std::size_t n = z.extent(0), j = z.extent(1), f = z.extent(2);
  const double norm = static_cast<double>((n - 1) * f * j);
  Tensor g(z.shape());
  for (std::size_t d = 1; d < n; ++d)
    for (std::size_t p = 0; p < j; ++p)
      for (std::size_t k = 0; k < f; ++k) {
        const double diff = 2.0 * (z(0, p, k) - z(d, p, k)) / norm;
        g(0, p, k) += diff;
        g(d, p, k) -= diff;
      }
  return g;
}

namespace detail {
inline void check_labels(const Tensor& z, const KMeansState& state, const std::vector<std::size_t>& labels) {
  check_features(z, 1, "cluster_loss");
  if (!state.fitted()) throw StateError("cluster_loss: K-Means state is not fitted");
  if (state.dim() != z.extent(2)) throw DimensionError("cluster_loss: centroid dim differs from feature dim");
  if (labels.size() != z.extent(1)) throw DimensionError("cluster_loss: one label per patch required");
  for (std::size_t l : labels)
    if (l >= state.k()) throw LookupError("cluster_loss: label " + std::to_string(l) + " out of range");
}
}  // namespace detail

// Squared distance of every domain's feature to the centroid of the anchor
// domain's pseudo-label, averaged per element.
inline double cluster_loss(const Tensor& z, const KMeansState& state, const std::vector<std::size_t>& labels) {
  detail::check_labels(z, state, labels);
  const std::size_t n = z.extent(0), j = z.extent(1), f = z.extent(2);
  double s = 0.0;
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t p = 0; p < j; ++p)
      for (std::size_t k = 0; k < f; ++k) {
        const double diff = z(d, p, k) - state.centroids(labels[p], k);
        s += diff * diff;
      }
  return s / static_cast<double>(n * f * j);
}

inline Tensor cluster_loss_grad(const Tensor& z, const KMeansState& state, const std::vector<std::size_t>& labels) {
  detail::check_labels(z, state, labels);
  const std::size_t n = z.extent(0), j = z.extent(1), f = z.extent(2);
  const double norm = static_cast<double>(n * f * j);
  Tensor g(z.shape());
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t p = 0; p < j; ++p)
      for (std::size_t k = 0; k < f; ++k) g(d, p, k) = 2.0 * (z(d, p, k) - state.centroids(labels[p], k)) / norm;
  return g;
}

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double feature = 0.0;
  double cluster = 0.0;
};

struct McaeBatchResult {
  LossBreakdown loss;
  std::vector<Tensor> grads;  // McaeModel::parameters() order; empty unless requested
};

// Stacks per-domain (patches x features) rows into (domains x patches x features).
inline Tensor stack_features(const std::vector<AutoEncoderTrace>& traces) {
  const std::size_t n = traces.size(), j = traces.front().feature.extent(0), f = traces.front().feature.extent(1);
  Tensor z({n, j, f});
  for (std::size_t d = 0; d < n; ++d)
    std::copy(traces[d].feature.values().begin(), traces[d].feature.values().end(), z.values().begin() + static_cast<std::ptrdiff_t>(d * j * f));
  return z;
}

// L = L_reconstruction + L_feature + L_cluster over one aligned batch.
// `patches[d]` holds domain d's sub-patches (rows, in [-1, 1]); decoder
// targets are the same patches rescaled to [0, 1].
inline McaeBatchResult mcae_batch(const McaeModel& model, const std::vector<Tensor>& patches, bool want_grads) {
  const std::size_t n = model.domain_count();
  if (patches.size() != n) throw DimensionError("combined_loss: one patch matrix per domain required");
  if (!model.kmeans.fitted()) throw StateError("combined_loss: K-Means state is not fitted");
  for (const Tensor& p : patches)
    if (p.shape() != patches.front().shape()) throw DimensionError("combined_loss: domains must be aligned");
  if (patches.front().extent(0) == 0) throw EmptyInputError("combined_loss: no patches");

  std::vector<AutoEncoderTrace> traces;
  traces.reserve(n);
  for (std::size_t d = 0; d < n; ++d) traces.push_back(autoencoder_forward(model.channels[d], patches[d]));
  const Tensor z = stack_features(traces);
  const std::size_t j = z.extent(1), f = z.extent(2);
  const auto labels = kmeans_assign_rows(model.kmeans, traces.front().feature);

  McaeBatchResult r;
  const double rec_norm = static_cast<double>(n * patches.front().size());
  std::vector<Tensor> out_grads;
  for (std::size_t d = 0; d < n; ++d) {
    const Tensor& y = traces[d].output;
    Tensor g(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double diff = y[i] - 0.5 * (patches[d][i] + 1.0);
      r.loss.reconstruction += diff * diff;
      g[i] = 2.0 * diff / rec_norm;
    }
    out_grads.push_back(std::move(g));
  }
  r.loss.reconstruction /= rec_norm;
  r.loss.feature = n >= 2 ? feature_loss(z) : 0.0;
  r.loss.cluster = cluster_loss(z, model.kmeans, labels);
  r.loss.total = r.loss.reconstruction + r.loss.feature + r.loss.cluster;
  if (!want_grads) return r;

  Tensor zg = cluster_loss_grad(z, model.kmeans, labels);
  if (n >= 2) add_into(zg, feature_loss_grad(z));
  for (std::size_t d = 0; d < n; ++d) {
    Tensor fg({j, f});
    std::copy(zg.values().begin() + static_cast<std::ptrdiff_t>(d * j * f),
              zg.values().begin() + static_cast<std::ptrdiff_t>((d + 1) * j * f), fg.values().begin());
    for (Tensor& g : autoencoder_backward(model.channels[d], traces[d], out_grads[d], fg)) r.grads.push_back(std::move(g));
  }
  return r;
}

inline LossBreakdown combined_loss(const McaeModel& model, const std::vector<Tensor>& patches) {
  return mcae_batch(model, patches, false).loss;
}

inline std::pair<LossBreakdown, std::vector<Tensor>> combined_loss_and_grad(const McaeModel& model,
                                                                             const std::vector<Tensor>& patches) {
  auto r = mcae_batch(model, patches, true);
  return {r.loss, std::move(r.grads)};
}

// ---------------------------------------------------------------------------
// Training

struct McaeTrainConfig {
  std::size_t epochs = 300;
  AdamConfig adam{};  // lr 2e-4
  std::size_t batch = 64;  // triplets
  std::size_t stride = 4;
  std::size_t k = 10;
  std::size_t kmeans_sample = 10000;
  std::size_t kmeans_iters = 100;
  std::uint64_t seed = 0;
};

struct McaeEpochLog {
  std::size_t epoch = 0;
  LossBreakdown loss;  // mean over the epoch's batches
};

struct McaeTrainResult {
  std::vector<McaeEpochLog> log;
  std::size_t kmeans_fits = 0;
};

namespace detail {

// Per-domain concatenated sub-patch bytes, triplet-major.
struct PatchCache {
  std::size_t per_image = 0;
  std::vector<std::vector<std::uint8_t>> bytes;
};

inline PatchCache build_patch_cache(const TripletDataset& ds, std::size_t stride) {
  PatchCache cache;
  cache.bytes.resize(ds.domain_count());
  for (const Triplet& t : ds.triplets)
    for (std::size_t d = 0; d < ds.domain_count(); ++d) {
      auto b = extract_patch_bytes(t.images[d], kPatchSize, stride);
      const std::size_t count = b.size() / kPatchDim;
      if (cache.per_image == 0) cache.per_image = count;
      if (count != cache.per_image) throw DimensionError("mcae training needs equally sized images");
      cache.bytes[d].insert(cache.bytes[d].end(), b.begin(), b.end());
    }
  return cache;
}

inline Tensor gather_rows_pm1(const std::vector<std::uint8_t>& bytes, const std::vector<std::size_t>& rows) {
  Tensor t({rows.size(), kPatchDim});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < kPatchDim; ++i) t(r, i) = scale_to_pm1(static_cast<double>(bytes[rows[r] * kPatchDim + i]));
  return t;
}

inline std::vector<std::size_t> sample_rows(std::size_t total, std::size_t want, Rng& rng) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  if (want >= total) return idx;
  for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + rng.index(total - i)]);
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

// Refits the model's K-Means state on freshly sampled anchor-domain features.
inline void refit_kmeans(McaeModel& model, const std::vector<std::uint8_t>& anchor_bytes, const McaeTrainConfig& cfg,
                         std::uint64_t seed) {
  Rng rng(seed);
  const auto rows = detail::sample_rows(anchor_bytes.size() / kPatchDim, cfg.kmeans_sample, rng);
  const Tensor z = encode_rows(model.channels.front(), detail::gather_rows_pm1(anchor_bytes, rows));
  model.kmeans = kmeans_fit(z, std::min(cfg.k, z.extent(0)), cfg.kmeans_iters, rng.next_u64());
}

inline McaeTrainResult train_mcae(McaeModel& model, const TripletDataset& train, const McaeTrainConfig& cfg) {
  if (train.empty()) throw EmptyInputError("train_mcae: empty training set");
  if (train.domain_count() != model.domain_count()) throw DimensionError("train_mcae: domain count mismatch");
  if (cfg.batch == 0 || cfg.k == 0) throw DomainError("train_mcae: batch and k must be positive");
  validate(train);
  const auto cache = detail::build_patch_cache(train, cfg.stride);
  const std::size_t j = cache.per_image;
  Rng order_rng = Rng::stream(cfg.seed, "mcae.order");
  McaeTrainResult result;

  refit_kmeans(model, cache.bytes.front(), cfg, Rng::stream(cfg.seed, "mcae.kmeans").next_u64());
  ++result.kmeans_fits;

  Adam adam(cfg.adam);
  auto params = model.parameters();
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<std::size_t> rows;
      rows.reserve((end - start) * j);
      for (std::size_t b = start; b < end; ++b)
        for (std::size_t p = 0; p < j; ++p) rows.push_back(order[b] * j + p);
      std::vector<Tensor> patches;
      for (std::size_t d = 0; d < model.domain_count(); ++d) patches.push_back(detail::gather_rows_pm1(cache.bytes[d], rows));
      auto [loss, grads] = combined_loss_and_grad(model, patches);
      adam.step(params, grads);
      sum.total += loss.total;
      sum.reconstruction += loss.reconstruction;
      sum.feature += loss.feature;
      sum.cluster += loss.cluster;
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    result.log.push_back({epoch, {sum.total / nb, sum.reconstruction / nb, sum.feature / nb, sum.cluster / nb}});
    refit_kmeans(model, cache.bytes.front(), cfg, Rng::stream(Rng::stream(cfg.seed, "mcae.kmeans").next_u64(), epoch).next_u64());
    ++result.kmeans_fits;
  }
  return result;
}

inline std::string mcae_log_csv(const std::vector<McaeEpochLog>& log) {
  CsvWriter csv({"epoch", "total", "reconstruction", "feature", "cluster"});
  for (const auto& e : log) csv.row(e.epoch, e.loss.total, e.loss.reconstruction, e.loss.feature, e.loss.cluster);
  return csv.str();
}

// ---------------------------------------------------------------------------
// Persistence: {"format": "mcae-v1", "domains", "layers", "kmeans"}

inline Json mcae_to_json(const McaeModel& m) {
  static const char* names[] = {"enc_hidden", "enc_out", "dec_hidden", "dec_out"};
  Json layers = Json::array();
  for (std::size_t d = 0; d < m.domain_count(); ++d) {
    const auto ls = m.channels[d].layers();
    for (std::size_t i = 0; i < ls.size(); ++i) {
      Json l{{"domain", m.domain_ids[d]}, {"name", names[i]}};
      l.update(layer_json(*ls[i]));
      layers.push_back(std::move(l));
    }
  }
  Json km{{"k", m.kmeans.k()}, {"dim", m.kmeans.dim()}, {"centroids", tensor_values_json(m.kmeans.centroids)}};
  return Json{{"format", "mcae-v1"}, {"domains", m.domain_ids}, {"layers", layers}, {"kmeans", km}};
}

inline McaeModel mcae_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "mcae-v1") throw ParseError("not an mcae-v1 document");
    McaeModel m;
    m.domain_ids = j.at("domains").get<std::vector<std::string>>();
    const auto& layers = j.at("layers");
    if (layers.size() != 4 * m.domain_ids.size()) throw ParseError("mcae: expected four layers per domain");
    for (std::size_t d = 0; d < m.domain_ids.size(); ++d)
      m.channels.push_back({dense_from_json(layers[4 * d]), dense_from_json(layers[4 * d + 1]),
                            dense_from_json(layers[4 * d + 2]), dense_from_json(layers[4 * d + 3])});
    const auto& km = j.at("kmeans");
    const std::size_t k = km.at("k").get<std::size_t>();
    if (k > 0) m.kmeans.centroids = tensor_from_json(km.at("centroids"), {k, km.at("dim").get<std::size_t>()});
    return m;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("mcae model: ") + e.what());
  }
}

inline void save_mcae(const std::filesystem::path& path, const McaeModel& m) { write_text(path, dump_json(mcae_to_json(m))); }
inline McaeModel load_mcae(const std::filesystem::path& path) { return mcae_from_json(load_json(path)); }

}  // namespace histonorm
