#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "histonorm/adam.hpp"
#include "histonorm/autoencoder.hpp"
#include "histonorm/error.hpp"
#include "histonorm/extractor.hpp"
#include "histonorm/image.hpp"
#include "histonorm/json_io.hpp"
#include "histonorm/patches.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/zca.hpp"

namespace histonorm {

// Single-domain baseline: GCN + ZCA preprocessing ahead of one auto-encoder
// with the same layer shapes as an MCAE channel.
struct StanosaModel {
  std::string domain = "A";
  ZcaTransform zca;
  AutoEncoder ae;

  Tensor feature_map(std::size_t /*domain*/, const Image& img, std::size_t stride) const;

  std::vector<Tensor*> parameters() { return ae.parameters(); }
  std::vector<const Tensor*> parameters() const { return ae.parameters(); }
};

inline StanosaModel make_stanosa(const AutoEncoderDims& dims, std::uint64_t seed, std::string domain = "A") {
  Rng rng = Rng::stream(seed, "stanosa.init");
  return StanosaModel{std::move(domain), {}, make_autoencoder(dims, rng)};
}

inline std::vector<double> stanosa_preprocess(std::span<const std::uint8_t> patch, const ZcaTransform& zca) {
  if (!zca.fitted()) throw StateError("stanosa_preprocess: ZCA transform has not been fitted");
  std::vector<double> v(patch.begin(), patch.end());
  gcn_inplace(v);
  return zca_apply(zca, v);
}

// GCN rows of concatenated patch bytes (no whitening).
inline Tensor gcn_rows(std::span<const std::uint8_t> bytes, std::size_t dim) {
  Tensor t({bytes.size() / dim, dim});
  for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = static_cast<double>(bytes[i]);
  for (std::size_t r = 0; r < t.extent(0); ++r) gcn_inplace(t.row(r));
  return t;
}

inline Tensor stanosa_preprocess_rows(std::span<const std::uint8_t> bytes, const ZcaTransform& zca) {
  if (!zca.fitted()) throw StateError("stanosa_preprocess: ZCA transform has not been fitted");
  return zca_apply_rows(zca, gcn_rows(bytes, zca.dim()));
}

inline Tensor StanosaModel::feature_map(std::size_t, const Image& img, std::size_t stride) const {
  const PatchGrid grid = patch_grid(img.width, img.height, kPatchSize, stride);
  const Tensor z = encode_rows(ae, stanosa_preprocess_rows(extract_patch_bytes(img, kPatchSize, stride), zca));
  return z.reshaped({grid.rows, grid.cols, z.extent(1)});
}

struct StanosaTrainConfig {
  std::size_t epochs = 300;
  AdamConfig adam{};
  std::size_t batch = 64;  // images
  std::size_t stride = 4;
  std::size_t zca_sample = 100000;
  double zca_epsilon = kZcaEpsilon;
  std::uint64_t seed = 0;
};

struct StanosaEpochLog {
  std::size_t epoch = 0;
  double reconstruction = 0.0;
};

struct StanosaTrainResult {
  std::vector<StanosaEpochLog> log;
};

// Fits the ZCA block on GCN-normalised patches sampled from `images`.
inline void fit_stanosa_zca(StanosaModel& model, const std::vector<std::uint8_t>& patch_bytes,
                            const StanosaTrainConfig& cfg) {
  const std::size_t total = patch_bytes.size() / kPatchDim;
  if (total == 0) throw EmptyInputError("fit_stanosa_zca: no patches");
  Rng rng = Rng::stream(cfg.seed, "stanosa.zca");
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  const std::size_t want = std::min(total, cfg.zca_sample);
  for (std::size_t i = 0; i < want && want < total; ++i) std::swap(idx[i], idx[i + rng.index(total - i)]);
  idx.resize(want);
  std::vector<std::uint8_t> sample;
  sample.reserve(want * kPatchDim);
  for (std::size_t i : idx)
    sample.insert(sample.end(), patch_bytes.begin() + static_cast<std::ptrdiff_t>(i * kPatchDim),
                  patch_bytes.begin() + static_cast<std::ptrdiff_t>((i + 1) * kPatchDim));
  model.zca = zca_fit(gcn_rows(sample, kPatchDim), cfg.zca_epsilon);
}

// Reconstruction-only training; the decoder reproduces the raw patch
// scaled to [0, 1] from its whitened input.
inline StanosaTrainResult train_stanosa(StanosaModel& model, const std::vector<Image>& images,
                                        const StanosaTrainConfig& cfg) {
  if (images.empty()) throw EmptyInputError("train_stanosa: empty training set");
  if (cfg.batch == 0) throw DomainError("train_stanosa: batch must be positive");
  std::vector<std::uint8_t> bytes;
  std::size_t per_image = 0;
  for (const Image& img : images) {
    auto b = extract_patch_bytes(img, kPatchSize, cfg.stride);
    if (per_image == 0) per_image = b.size() / kPatchDim;
    if (b.size() / kPatchDim != per_image) throw DimensionError("train_stanosa needs equally sized images");
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  if (!model.zca.fitted()) fit_stanosa_zca(model, bytes, cfg);

  Rng order_rng = Rng::stream(cfg.seed, "stanosa.order");
  Adam adam(cfg.adam);
  auto params = model.parameters();
  StanosaTrainResult result;
  std::vector<std::size_t> order(images.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<std::uint8_t> batch_bytes;
      batch_bytes.reserve((end - start) * per_image * kPatchDim);
      for (std::size_t b = start; b < end; ++b) {
        const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(order[b] * per_image * kPatchDim);
        batch_bytes.insert(batch_bytes.end(), first, first + static_cast<std::ptrdiff_t>(per_image * kPatchDim));
      }
      const AutoEncoderTrace trace = autoencoder_forward(model.ae, stanosa_preprocess_rows(batch_bytes, model.zca));
      Tensor g(trace.output.shape());
      double loss = 0.0;
      const double norm = static_cast<double>(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double diff = trace.output[i] - static_cast<double>(batch_bytes[i]) / 255.0;
        loss += diff * diff;
        g[i] = 2.0 * diff / norm;
      }
      adam.step(params, autoencoder_backward(model.ae, trace, g, Tensor()));
      sum += loss / norm;
      ++batches;
    }
    result.log.push_back({epoch, sum / static_cast<double>(batches)});
  }
  return result;
}

inline std::string stanosa_log_csv(const std::vector<StanosaEpochLog>& log) {
  CsvWriter csv({"epoch", "reconstruction"});
  for (const auto& e : log) csv.row(e.epoch, e.reconstruction);
  return csv.str();
}

// ---------------------------------------------------------------------------
// Persistence: {"format": "stanosa-v1", ...} with an embedded ZCA block.

inline Json stanosa_to_json(const StanosaModel& m) {
  static const char* names[] = {"enc_hidden", "enc_out", "dec_hidden", "dec_out"};
  Json layers = Json::array();
  const auto ls = m.ae.layers();
  for (std::size_t i = 0; i < ls.size(); ++i) {
    Json l{{"domain", m.domain}, {"name", names[i]}};
    l.update(layer_json(*ls[i]));
    layers.push_back(std::move(l));
  }
  Json zca{{"epsilon", m.zca.epsilon}, {"dim", m.zca.dim()}, {"mean", tensor_values_json(m.zca.mean)},
           {"matrix", tensor_values_json(m.zca.matrix)}};
  return Json{{"format", "stanosa-v1"}, {"domains", Json::array({m.domain})}, {"layers", layers}, {"zca", zca}};
}

inline StanosaModel stanosa_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "stanosa-v1") throw ParseError("not a stanosa-v1 document");
    StanosaModel m;
    m.domain = j.at("domains").at(0).get<std::string>();
    const auto& layers = j.at("layers");
    if (layers.size() != 4) throw ParseError("stanosa: expected four layers");
    m.ae = {dense_from_json(layers[0]), dense_from_json(layers[1]), dense_from_json(layers[2]), dense_from_json(layers[3])};
    const auto& zca = j.at("zca");
    const std::size_t dim = zca.at("dim").get<std::size_t>();
    if (dim > 0) {
      m.zca.epsilon = zca.at("epsilon").get<double>();
      m.zca.mean = tensor_from_json(zca.at("mean"), {dim});
      m.zca.matrix = tensor_from_json(zca.at("matrix"), {dim, dim});
    }
    return m;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("stanosa model: ") + e.what());
  }
}

inline void save_stanosa(const std::filesystem::path& path, const StanosaModel& m) {
  write_text(path, dump_json(stanosa_to_json(m)));
}
inline StanosaModel load_stanosa(const std::filesystem::path& path) { return stanosa_from_json(load_json(path)); }

}  // namespace histonorm
