#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "histonorm/colour.hpp"
#include "histonorm/dataset.hpp"
#include "histonorm/error.hpp"
#include "histonorm/extractor.hpp"
#include "histonorm/image.hpp"
#include "histonorm/json_io.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/ssim.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

inline constexpr double kNormalizeEpsilon = 1e-8;

struct NormalizedFeatureMap {
  Tensor values;  // h x w x n
  std::vector<double> mean;
  std::vector<double> stddev;
  double epsilon = kNormalizeEpsilon;
};

// Per-channel standardisation over the spatial grid, population std.
inline NormalizedFeatureMap normalize_feature_map(const Tensor& z, double epsilon = kNormalizeEpsilon) {
  if (z.rank() != 3) throw DimensionError("normalize_feature_map: expected h x w x n, got " + to_string(z.shape()));
  const std::size_t n = z.extent(2), cells = z.extent(0) * z.extent(1);
  if (cells == 0) throw EmptyInputError("normalize_feature_map: empty map");
  NormalizedFeatureMap out{Tensor(z.shape()), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), epsilon};
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t c = 0; c < n; ++c) out.mean[c] += z[i * n + c];
  for (double& m : out.mean) m /= static_cast<double>(cells);
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t c = 0; c < n; ++c) {
      const double d = z[i * n + c] - out.mean[c];
      out.stddev[c] += d * d;
    }
  for (double& s : out.stddev) s = std::sqrt(s / static_cast<double>(cells));
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t c = 0; c < n; ++c) out.values[i * n + c] = (z[i * n + c] - out.mean[c]) / (out.stddev[c] + epsilon);
  return out;
}

inline double nfmse(const NormalizedFeatureMap& a, const NormalizedFeatureMap& b) {
  if (a.values.shape() != b.values.shape())
    throw DimensionError("nfmse: shape " + to_string(a.values.shape()) + " vs " + to_string(b.values.shape()));
  if (a.values.empty()) throw EmptyInputError("nfmse: empty maps");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s / static_cast<double>(a.values.size());
}

struct DistributionSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  double hist_lo = 0.0;
  double hist_hi = 0.0;
  std::vector<std::size_t> histogram;
};

inline DistributionSummary summarize(const std::vector<double>& v, std::size_t bins, double lo, double hi) {
  DistributionSummary s;
  s.hist_lo = lo;
  s.hist_hi = hi;
  s.histogram.assign(bins, 0);
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.stddev += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(v.size()));
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  if (bins == 0 || !(hi > lo)) return s;
  for (double x : v) {
    // Values at or beyond the edges fall into the outermost bins.
    const double t = (x - lo) / (hi - lo) * static_cast<double>(bins);
    const auto b = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(bins - 1)));
    ++s.histogram[b];
  }
  return s;
}

inline Json summary_json(const DistributionSummary& s) {
  Json hist = Json::array();
  for (auto c : s.histogram) hist.push_back(c);
  return Json{{"mean", s.mean}, {"std", s.stddev}, {"min", s.min},           {"max", s.max},
              {"hist_lo", s.hist_lo}, {"hist_hi", s.hist_hi}, {"histogram", hist}};
}

struct NfmseRow {
  std::size_t triplet_id = 0;
  std::string pair;  // e.g. "A-B"
  double value = 0.0;
};

struct NfmseTable {
  std::vector<NfmseRow> rows;
  std::vector<std::string> pairs;
  std::vector<DistributionSummary> summaries;  // one per pair

  double pair_mean(const std::string& pair) const {
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (pairs[i] == pair) return summaries[i].mean;
    throw LookupError("nfmse table has no pair '" + pair + "'");
  }
};

struct NfmseConfig {
  std::size_t stride = 4;
  double epsilon = kNormalizeEpsilon;
  std::size_t histogram_bins = 20;
  double histogram_hi = 2.0;
};

// Encodes every image of every triplet with the extractor for its domain and
// scores every unordered domain pair.
template <FeatureExtractor E>
NfmseTable nfmse_per_triplet(const E& model, const TripletDataset& test, const NfmseConfig& cfg = {}) {
  if (test.empty()) throw EmptyInputError("nfmse_per_triplet: empty dataset");
  validate(test);
  const std::size_t n = test.domain_count();
  NfmseTable table;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      pairs.emplace_back(i, j);
      table.pairs.push_back(test.domain_ids[i] + "-" + test.domain_ids[j]);
    }
  std::vector<std::vector<double>> per_pair(pairs.size());
  for (const Triplet& t : test.triplets) {
    std::vector<NormalizedFeatureMap> maps;
    maps.reserve(n);
    for (std::size_t d = 0; d < n; ++d) maps.push_back(normalize_feature_map(model.feature_map(d, t.images[d], cfg.stride), cfg.epsilon));
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const double v = nfmse(maps[pairs[p].first], maps[pairs[p].second]);
      table.rows.push_back({t.id, table.pairs[p], v});
      per_pair[p].push_back(v);
    }
  }
  for (const auto& v : per_pair) table.summaries.push_back(summarize(v, cfg.histogram_bins, 0.0, cfg.histogram_hi));
  return table;
}

inline std::string nfmse_csv(const NfmseTable& t) {
  CsvWriter csv({"triplet_id", "pair", "value"});
  for (const auto& r : t.rows) csv.row(r.triplet_id, r.pair, r.value);
  return csv.str();
}

inline Json nfmse_summary_json(const NfmseTable& t) {
  Json j = Json::object();
  for (std::size_t i = 0; i < t.pairs.size(); ++i) j[t.pairs[i]] = summary_json(t.summaries[i]);
  return j;
}

// ---------------------------------------------------------------------------
// Chromatic scatter sampling

struct CxCySample {
  double cx = 0.0;
  double cy = 0.0;
  std::string domain;
};

struct CxCySampleResult {
  std::vector<CxCySample> rows;
  std::size_t requested = 0;
  std::size_t excluded = 0;  // background draws
  std::vector<std::string> warnings;
};

// `n_pixels` uniform draws with replacement over all pixels of all images;
// background draws are dropped and counted.
inline CxCySampleResult cxcy_sample(const std::vector<Image>& images, const std::vector<std::string>& tags,
                                    std::size_t n_pixels, std::uint64_t seed) {
  if (n_pixels == 0) throw DomainError("cxcy_sample: n_pixels must be at least 1");
  if (images.size() != tags.size()) throw DimensionError("cxcy_sample: one domain tag per image required");
  if (images.empty()) throw EmptyInputError("cxcy_sample: no images");
  std::vector<std::size_t> offsets{0};
  for (const Image& img : images) offsets.push_back(offsets.back() + img.pixel_count());
  if (offsets.back() == 0) throw EmptyInputError("cxcy_sample: images have no pixels");
  CxCySampleResult r;
  r.requested = n_pixels;
  Rng rng = Rng::stream(seed, "cxcy");
  for (std::size_t s = 0; s < n_pixels; ++s) {
    const std::size_t flat = rng.index(offsets.back());
    const std::size_t img = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    const std::size_t px = flat - offsets[img];
    const HsdPixel h = hsd_forward(rgb_to_od(images[img].at(px % images[img].width, px / images[img].width)));
    if (h.background) {
      ++r.excluded;
      continue;
    }
    r.rows.push_back({h.cx, h.cy, tags[img]});
  }
  if (r.rows.empty()) r.warnings.push_back("cxcy_sample: every sampled pixel was background; output is empty");
  return r;
}

inline std::string cxcy_csv(const CxCySampleResult& r) {
  CsvWriter csv({"c_x", "c_y", "domain"});
  for (const auto& s : r.rows) csv.row(s.cx, s.cy, s.domain);
  return csv.str();
}

// ---------------------------------------------------------------------------
// Density similarity

struct SsimPairRow {
  std::string pair;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> values;  // per triplet
};

inline std::vector<SsimPairRow> density_ssim_table(const TripletDataset& ds, const SsimConfig& cfg = {}) {
  if (ds.empty()) throw EmptyInputError("density_ssim_table: empty dataset");
  validate(ds);
  const std::size_t n = ds.domain_count();
  std::vector<SsimPairRow> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.push_back({ds.domain_ids[i] + "-" + ds.domain_ids[j], 0.0, 0.0, {}});
  for (const Triplet& t : ds.triplets) {
    std::vector<Plane> planes;
    for (const Image& img : t.images) planes.push_back(density_plane(img));
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) out[p++].values.push_back(ssim(planes[i], planes[j], cfg));
  }
  for (auto& row : out) {
    const DistributionSummary s = summarize(row.values, 0, 0.0, 1.0);
    row.mean = s.mean;
    row.stddev = s.stddev;
  }
  return out;
}

inline std::string ssim_csv(const std::vector<SsimPairRow>& rows) {
  CsvWriter csv({"pair", "mean", "std"});
  for (const auto& r : rows) csv.row(r.pair, r.mean, r.stddev);
  return csv.str();
}

// ---------------------------------------------------------------------------
// Classification report

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassReport {
  std::vector<ClassMetrics> classes;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::size_t total = 0;
};

// Support-weighted mean of one per-class metric.
inline double weighted_average(const std::vector<ClassMetrics>& classes, double ClassMetrics::*field) {
  double num = 0.0, den = 0.0;
  for (const auto& m : classes) {
    num += static_cast<double>(m.support) * (m.*field);
    den += static_cast<double>(m.support);
  }
  return den > 0.0 ? num / den : 0.0;
}

inline ClassReport classification_report(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                                         const std::vector<std::string>& class_names) {
  if (truth.size() != predicted.size())
    throw DimensionError("classification_report: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  const std::size_t k = class_names.size();
  ClassReport r;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) throw DomainError("classification_report: label outside the class set");
    ++r.confusion[truth[i]][predicted[i]];
  }
  r.total = truth.size();
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = r.confusion[c][c], row = 0, col = 0;
    for (std::size_t o = 0; o < k; ++o) {
      row += r.confusion[c][o];
      col += r.confusion[o][c];
    }
    correct += tp;
    ClassMetrics m{class_names[c], 0.0, 0.0, 0.0, row};
    if (col) m.precision = static_cast<double>(tp) / static_cast<double>(col);
    if (row) m.recall = static_cast<double>(tp) / static_cast<double>(row);
    if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    r.classes.push_back(m);
  }
  if (r.total) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
    r.weighted_precision = weighted_average(r.classes, &ClassMetrics::precision);
    r.weighted_recall = weighted_average(r.classes, &ClassMetrics::recall);
    r.weighted_f1 = weighted_average(r.classes, &ClassMetrics::f1);
  }
  return r;
}

inline std::string classification_csv(const ClassReport& r) {
  CsvWriter csv({"class", "precision", "recall", "f1", "support"});
  for (const auto& m : r.classes) csv.row(m.name, m.precision, m.recall, m.f1, m.support);
  csv.row(std::string("accuracy"), r.accuracy, r.accuracy, r.accuracy, r.total);
  csv.row(std::string("weighted avg"), r.weighted_precision, r.weighted_recall, r.weighted_f1, r.total);
  return csv.str();
}

}  // namespace histonorm
