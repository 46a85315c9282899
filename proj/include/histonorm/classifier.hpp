#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "histonorm/adam.hpp"
#include "histonorm/error.hpp"
#include "histonorm/extractor.hpp"
#include "histonorm/image.hpp"
#include "histonorm/json_io.hpp"
#include "histonorm/layers.hpp"
#include "histonorm/metrics.hpp"
#include "histonorm/patches.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/texture.hpp"

namespace histonorm {

enum class Pooling { average, max };

inline std::string_view to_string(Pooling p) { return p == Pooling::average ? "average" : "max"; }
inline Pooling parse_pooling(std::string_view s) {
  if (s == "average") return Pooling::average;
  if (s == "max") return Pooling::max;
  throw ParseError("unknown pooling '" + std::string(s) + "'");
}

struct ClassifierHead {
  Conv2dLayer conv1;  // features -> hidden, 3x3 same padding, leaky
  Conv2dLayer conv2;  // hidden -> classes, 3x3 same padding, leaky
  Pooling pooling = Pooling::average;

  std::size_t feature_channels() const { return conv1.in_channels(); }
  std::size_t class_count() const { return conv2.out_channels(); }

  std::vector<Tensor*> parameters() { return {&conv1.kernels, &conv1.bias, &conv2.kernels, &conv2.bias}; }
  std::vector<const Tensor*> parameters() const { return {&conv1.kernels, &conv1.bias, &conv2.kernels, &conv2.bias}; }
};

inline ClassifierHead make_head(std::size_t features, std::size_t hidden, std::size_t classes, std::uint64_t seed,
                                Pooling pooling = Pooling::average) {
  Rng rng = Rng::stream(seed, "classifier.init");
  ClassifierHead h;
  h.conv1 = make_conv2d(features, hidden, 3, 1, Activation::leaky_relu, rng);
  h.conv2 = make_conv2d(hidden, classes, 3, 1, Activation::leaky_relu, rng);
  h.pooling = pooling;
  return h;
}

inline ClassifierHead zero_head(std::size_t features, std::size_t hidden, std::size_t classes) {
  return {zero_conv2d(features, hidden, 3, 1, Activation::leaky_relu),
          zero_conv2d(hidden, classes, 3, 1, Activation::leaky_relu), Pooling::average};
}

// Non-overlapping 8x8 patch grid encoded by the extractor's channel for `domain`.
template <FeatureExtractor E>
Tensor featurize(const E& encoder, std::size_t domain, const Image& img) {
  if (img.width == 0 || img.height == 0 || img.width % kPatchSize || img.height % kPatchSize)
    throw DimensionError("featurize: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " is not a multiple of " + std::to_string(kPatchSize));
  return encoder.feature_map(domain, img, kPatchSize);
}

// h x w x c -> 1 x c x h x w
inline Tensor to_nchw(const Tensor& hwc) {
  if (hwc.rank() != 3) throw DimensionError("expected an h x w x c feature map, got " + to_string(hwc.shape()));
  const std::size_t h = hwc.extent(0), w = hwc.extent(1), c = hwc.extent(2);
  Tensor out({1, c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out(0, k, y, x) = hwc(y, x, k);
  return out;
}

struct HeadTrace {
  Tensor input;   // 1 x c x h x w
  Tensor hidden;  // after conv1
  Tensor maps;    // after conv2
  std::vector<double> logits;
  std::vector<std::size_t> argmax;  // max pooling only
};

inline HeadTrace head_forward(const ClassifierHead& head, const Tensor& features_hwc) {
  if (features_hwc.rank() != 3 || features_hwc.extent(2) != head.feature_channels())
    throw DimensionError("classify: features " + to_string(features_hwc.shape()) + " vs " +
                         std::to_string(head.feature_channels()) + " channels");
  HeadTrace t;
  t.input = to_nchw(features_hwc);
  t.hidden = conv2d_forward(head.conv1, t.input);
  t.maps = conv2d_forward(head.conv2, t.hidden);
  const std::size_t k = head.class_count(), cells = t.maps.extent(2) * t.maps.extent(3);
  t.logits.assign(k, 0.0);
  if (head.pooling == Pooling::max) t.argmax.assign(k, 0);
  for (std::size_t c = 0; c < k; ++c) {
    const double* m = t.maps.data() + c * cells;
    if (head.pooling == Pooling::average) {
      double s = 0.0;
      for (std::size_t i = 0; i < cells; ++i) s += m[i];
      t.logits[c] = s / static_cast<double>(cells);
    } else {
      const auto it = std::max_element(m, m + cells);
      t.argmax[c] = static_cast<std::size_t>(it - m);
      t.logits[c] = *it;
    }
  }
  return t;
}

inline std::vector<double> classify(const ClassifierHead& head, const Tensor& features_hwc) {
  return head_forward(head, features_hwc).logits;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= s;
  return p;
}

inline double cross_entropy(const std::vector<double>& logits, std::size_t label) {
  if (label >= logits.size()) throw DomainError("cross_entropy: label outside the class set");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return std::log(s) - (logits[label] - m);
}

inline std::vector<double> cross_entropy_grad(const std::vector<double>& logits, std::size_t label) {
  if (label >= logits.size()) throw DomainError("cross_entropy: label outside the class set");
  std::vector<double> g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

// Parameter gradients for loss = sum_c logit_grad[c] * logits[c].
inline std::vector<Tensor> head_backward(const ClassifierHead& head, const HeadTrace& t, const std::vector<double>& logit_grad) {
  Tensor dmaps(t.maps.shape());
  const std::size_t k = head.class_count(), cells = t.maps.extent(2) * t.maps.extent(3);
  for (std::size_t c = 0; c < k; ++c) {
    double* d = dmaps.data() + c * cells;
    if (head.pooling == Pooling::average) {
      for (std::size_t i = 0; i < cells; ++i) d[i] = logit_grad[c] / static_cast<double>(cells);
    } else {
      d[t.argmax[c]] = logit_grad[c];
    }
  }
  Conv2dGrads g2 = conv2d_backward(head.conv2, t.hidden, t.maps, dmaps);
  Conv2dGrads g1 = conv2d_backward(head.conv1, t.input, t.hidden, g2.input);
  return {std::move(g1.kernels), std::move(g1.bias), std::move(g2.kernels), std::move(g2.bias)};
}

// ---------------------------------------------------------------------------
// Labeled image sets

struct LabeledImageSet {
  std::vector<std::string> class_names;
  std::vector<Image> images;
  std::vector<std::size_t> labels;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

inline void validate(const LabeledImageSet& s) {
  if (s.images.size() != s.labels.size()) throw DimensionError("labeled set: one label per image required");
  for (std::size_t l : s.labels)
    if (l >= s.class_names.size()) throw DomainError("labeled set: label " + std::to_string(l) + " outside the class set");
}

inline LabeledImageSet subset(const LabeledImageSet& s, const std::vector<std::size_t>& idx) {
  LabeledImageSet out{s.class_names, {}, {}};
  for (std::size_t i : idx) {
    out.images.push_back(s.images.at(i));
    out.labels.push_back(s.labels.at(i));
  }
  return out;
}

// Balanced synthetic set: the three tissue archetypes with jittered stain
// levels and texture parameters.
inline LabeledImageSet synth_labeled(std::size_t per_class, std::size_t w, std::size_t h, std::uint64_t seed) {
  LabeledImageSet s;
  s.class_names = tissue_class_names();
  for (std::size_t cls = 0; cls < s.class_names.size(); ++cls) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng = Rng::stream(Rng::stream(seed, "labeled").next_u64(), cls * per_class + i);
      TissueStyle style = tissue_archetype(cls);
      style.eosin_level *= rng.uniform(0.85, 1.15);
      style.lumen_fraction *= rng.uniform(0.7, 1.3);
      style.nuclei_per_kpx *= rng.uniform(0.75, 1.25);
      style.hematoxylin_level *= rng.uniform(0.9, 1.1);
      s.images.push_back(render_tissue(w, h, style, rng));
      s.labels.push_back(cls);
    }
  }
  return s;
}

struct ThreeWaySplit {
  std::vector<std::size_t> train, validation, test;
};

// Shuffled split; train and validation take floor(fraction * n), test takes the rest.
inline ThreeWaySplit split_three_way(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed) {
  if (n == 0) throw EmptyInputError("split: empty set");
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0))
    throw DomainError("split: fractions must be non-negative and sum to at most 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::stream(seed, "split");
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  ThreeWaySplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

inline std::string labeled_image_path(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06zu.ppm", i);
  return buf;
}

inline std::vector<std::filesystem::path> save_labeled(const LabeledImageSet& s, const std::filesystem::path& dir) {
  validate(s);
  std::vector<std::filesystem::path> written;
  Json items = Json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::string rel = labeled_image_path(i);
    save_image(dir / rel, s.images[i]);
    written.push_back(dir / rel);
    items.push_back(Json{{"path", rel}, {"label", s.labels[i]}});
  }
  write_text(dir / "manifest.json", dump_json(Json{{"classes", s.class_names}, {"items", items}}));
  written.push_back(dir / "manifest.json");
  return written;
}

inline LabeledImageSet load_labeled(const std::filesystem::path& dir) {
  const Json m = load_json(dir / "manifest.json");
  LabeledImageSet s;
  try {
    s.class_names = m.at("classes").get<std::vector<std::string>>();
    for (const auto& item : m.at("items")) {
      s.images.push_back(load_image(dir / item.at("path").get<std::string>()));
      s.labels.push_back(item.at("label").get<std::size_t>());
    }
  } catch (const Json::exception& e) {
    throw ParseError("labeled manifest: " + std::string(e.what()));
  }
  validate(s);
  return s;
}

// ---------------------------------------------------------------------------
// Training

struct ClassifierTrainConfig {
  std::size_t epochs = 30;
  AdamConfig adam{};
  std::size_t batch = 16;
  std::size_t hidden = 32;
  Pooling pooling = Pooling::average;
  std::size_t domain = 0;  // extractor channel used for featurisation
  std::uint64_t seed = 0;
};

struct ClassifierEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct ClassifierTrainResult {
  std::vector<ClassifierEpochLog> log;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;
};

template <FeatureExtractor E>
std::vector<Tensor> featurize_all(const E& encoder, std::size_t domain, const LabeledImageSet& s) {
  std::vector<Tensor> out;
  out.reserve(s.size());
  for (const Image& img : s.images) out.push_back(featurize(encoder, domain, img));
  return out;
}

inline double accuracy(const ClassifierHead& head, const std::vector<Tensor>& feats, const std::vector<std::size_t>& labels) {
  if (feats.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) ok += argmax(classify(head, feats[i])) == labels[i];
  return static_cast<double>(ok) / static_cast<double>(feats.size());
}

// Only the head is optimised; the encoder is read through a const reference
// and its parameter checksum is compared before and after.
template <class E>
  requires FeatureExtractor<E>
ClassifierTrainResult train_classifier(const E& encoder, ClassifierHead& head, const LabeledImageSet& train,
                                       const LabeledImageSet& val, const ClassifierTrainConfig& cfg) {
  if (train.empty()) throw EmptyInputError("train_classifier: empty training set");
  if (cfg.batch == 0) throw DomainError("train_classifier: batch must be positive");
  validate(train);
  validate(val);
  if (train.class_names.size() != head.class_count()) throw DimensionError("train_classifier: class count mismatch");
  ClassifierTrainResult r;
  r.encoder_checksum_before = parameter_checksum(encoder.parameters());
  const auto train_feats = featurize_all(encoder, cfg.domain, train);
  const auto val_feats = featurize_all(encoder, cfg.domain, val);

  Adam adam(cfg.adam);
  auto params = head.parameters();
  Rng rng = Rng::stream(cfg.seed, "classifier.order");
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::vector<Tensor> grads;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const HeadTrace t = head_forward(head, train_feats[idx]);
        loss_sum += cross_entropy(t.logits, train.labels[idx]);
        correct += argmax(t.logits) == train.labels[idx];
        std::vector<double> lg = cross_entropy_grad(t.logits, train.labels[idx]);
        for (double& v : lg) v *= inv;
        auto g = head_backward(head, t, lg);
        if (grads.empty()) {
          grads = std::move(g);
        } else {
          for (std::size_t i = 0; i < grads.size(); ++i) add_into(grads[i], g[i]);
        }
      }
      adam.step(params, grads);
    }
    const double n = static_cast<double>(train.size());
    r.log.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n, accuracy(head, val_feats, val.labels)});
  }
  r.encoder_checksum_after = parameter_checksum(encoder.parameters());
  if (r.encoder_checksum_after != r.encoder_checksum_before)
    throw StateError("train_classifier: encoder parameters changed during head training");
  return r;
}

template <FeatureExtractor E>
ClassReport evaluate_classifier(const E& encoder, std::size_t domain, const ClassifierHead& head, const LabeledImageSet& s) {
  validate(s);
  std::vector<std::size_t> predicted;
  predicted.reserve(s.size());
  for (const Image& img : s.images) predicted.push_back(argmax(classify(head, featurize(encoder, domain, img))));
  return classification_report(s.labels, predicted, s.class_names);
}

inline std::string classifier_log_csv(const std::vector<ClassifierEpochLog>& log) {
  CsvWriter csv({"epoch", "train_loss", "train_accuracy", "val_accuracy"});
  for (const auto& e : log) csv.row(e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy);
  return csv.str();
}

// ---------------------------------------------------------------------------
// Persistence: {"format": "classifier-head-v1", ...}

inline Json head_to_json(const ClassifierHead& h, const std::vector<std::string>& classes) {
  return Json{{"format", "classifier-head-v1"},
              {"classes", classes},
              {"pooling", std::string(to_string(h.pooling))},
              {"layers", Json::array({layer_json(h.conv1), layer_json(h.conv2)})}};
}

inline std::pair<ClassifierHead, std::vector<std::string>> head_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "classifier-head-v1") throw ParseError("not a classifier-head-v1 document");
    ClassifierHead h{conv_from_json(j.at("layers").at(0)), conv_from_json(j.at("layers").at(1)),
                     parse_pooling(j.at("pooling").get<std::string>())};
    auto classes = j.at("classes").get<std::vector<std::string>>();
    if (classes.size() != h.class_count()) throw ParseError("classifier head: class list does not match conv2");
    if (h.conv2.in_channels() != h.conv1.out_channels()) throw ParseError("classifier head: layer widths disagree");
    return {std::move(h), std::move(classes)};
  } catch (const Json::exception& e) {
    throw ParseError(std::string("classifier head: ") + e.what());
  }
}

}  // namespace histonorm
