#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "histonorm/colour.hpp"
#include "histonorm/error.hpp"
#include "histonorm/image.hpp"
#include "histonorm/json_io.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/texture.hpp"

namespace histonorm {

// Parametric chromatic transform in the (c_x, c_y) plane:
//   (c_x, c_y) -> R(rotation) * diag(scale) * (c_x, c_y) + offset
// with the density multiplied by density_gain.
struct StainPerturbation {
  double rotation = 0.0;
  double scale_x = 1.0;
  double scale_y = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  double density_gain = 1.0;

  bool is_identity() const {
    return rotation == 0.0 && scale_x == 1.0 && scale_y == 1.0 && offset_x == 0.0 && offset_y == 0.0 &&
           density_gain == 1.0;
  }
};

inline void validate(const StainPerturbation& p) {
  if (!(p.scale_x > 0.0 && p.scale_y > 0.0)) throw DomainError("perturbation scales must be positive");
  if (!(p.density_gain > 0.0)) throw DomainError("perturbation density_gain must be positive");
}

inline HsdPixel perturb(const HsdPixel& in, const StainPerturbation& p) {
  const double sx = in.cx * p.scale_x, sy = in.cy * p.scale_y;
  const double c = std::cos(p.rotation), s = std::sin(p.rotation);
  return {c * sx - s * sy + p.offset_x, s * sx + c * sy + p.offset_y, in.density * p.density_gain, in.background};
}

struct ApplyStats {
  std::size_t clamped_pixels = 0;
};

// Per-pixel RGB -> OD -> HSD -> perturb -> OD -> RGB. Background pixels are
// only density-scaled; out-of-gamut channel ODs are clamped at zero and counted.
inline Image apply_perturbation(const Image& img, const StainPerturbation& p, ApplyStats* stats = nullptr) {
  if (p.is_identity()) return img;
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const Rgb px{img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]};
    OdPixel od = rgb_to_od(px);
    const HsdPixel hsd = hsd_forward(od);
    if (hsd.background) {
      od = {od.r * p.density_gain, od.g * p.density_gain, od.b * p.density_gain};
    } else {
      od = hsd_inverse_unchecked(perturb(hsd, p));
      if (clamp_to_gamut(od) && stats) ++stats->clamped_pixels;
    }
    const Rgb q = od_to_rgb(od);
    out.pixels[3 * i] = q.r;
    out.pixels[3 * i + 1] = q.g;
    out.pixels[3 * i + 2] = q.b;
  }
  return out;
}

struct Triplet {
  std::size_t id = 0;
  std::vector<Image> images;  // one per domain, aligned
};

struct TripletDataset {
  std::vector<std::string> domain_ids;
  std::vector<Triplet> triplets;
  Json generator = Json::object();

  std::size_t size() const { return triplets.size(); }
  bool empty() const { return triplets.empty(); }
  std::size_t domain_count() const { return domain_ids.size(); }

  std::size_t domain_index(const std::string& id) const {
    const auto it = std::find(domain_ids.begin(), domain_ids.end(), id);
    if (it == domain_ids.end()) throw LookupError("unknown domain '" + id + "'");
    return static_cast<std::size_t>(it - domain_ids.begin());
  }
};

inline void validate(const TripletDataset& ds) {
  for (const Triplet& t : ds.triplets) {
    if (t.images.size() != ds.domain_count())
      throw DimensionError("triplet " + std::to_string(t.id) + " has " + std::to_string(t.images.size()) +
                           " images for " + std::to_string(ds.domain_count()) + " domains");
    for (const Image& img : t.images)
      if (img.width != t.images.front().width || img.height != t.images.front().height)
        throw DimensionError("triplet " + std::to_string(t.id) + " mixes image sizes");
  }
}

inline Json perturbation_json(const StainPerturbation& p) {
  return Json{{"rotation", p.rotation}, {"scale", {p.scale_x, p.scale_y}},
              {"offset", {p.offset_x, p.offset_y}}, {"density_gain", p.density_gain}};
}

inline StainPerturbation perturbation_from_json(const Json& j) {
  StainPerturbation p;
  p.rotation = j.value("rotation", 0.0);
  if (j.contains("scale")) {
    p.scale_x = j.at("scale").at(0).get<double>();
    p.scale_y = j.at("scale").at(1).get<double>();
  }
  if (j.contains("offset")) {
    p.offset_x = j.at("offset").at(0).get<double>();
    p.offset_y = j.at("offset").at(1).get<double>();
  }
  p.density_gain = j.value("density_gain", 1.0);
  validate(p);
  return p;
}

// Default chromatic-only perturbations for domains B and C. Near-white pixels
// carry noisy chroma, so a few percent of them end up clamped.
inline std::vector<StainPerturbation> default_perturbations() {
  return {StainPerturbation{0.5, 0.6, 0.6, 0.0, 0.0, 1.0},
          StainPerturbation{-0.5, 0.8, 0.5, 0.15, 0.0, 1.0}};
}

struct SynthConfig {
  std::size_t triplets = 100;
  std::size_t width = 32;
  std::size_t height = 32;
  std::vector<StainPerturbation> perturbations = default_perturbations();
  std::vector<std::string> domain_ids = {"A", "B", "C"};
  std::uint64_t seed = 0;
};

// Domain 0 holds the base image; every other domain is its perturbed copy.
inline TripletDataset synth_triplets(const std::vector<Image>& base_images,
                                     const std::vector<StainPerturbation>& perturbations,
                                     const std::vector<std::string>& domain_ids, std::uint64_t seed) {
  if (domain_ids.size() != perturbations.size() + 1)
    throw DimensionError("need one perturbation per non-reference domain");
  for (const auto& p : perturbations) validate(p);
  TripletDataset ds;
  ds.domain_ids = domain_ids;
  std::size_t clamps = 0;
  for (std::size_t i = 0; i < base_images.size(); ++i) {
    Triplet t{i, {base_images[i]}};
    for (const auto& p : perturbations) {
      ApplyStats stats;
      t.images.push_back(apply_perturbation(base_images[i], p, &stats));
      clamps += stats.clamped_pixels;
    }
    ds.triplets.push_back(std::move(t));
  }
  Json perts = Json::array();
  for (const auto& p : perturbations) perts.push_back(perturbation_json(p));
  ds.generator = Json{{"perturbations", perts}, {"seed", seed}, {"clamp_count", clamps}};
  return ds;
}

inline std::vector<Image> render_base_images(std::size_t count, std::size_t w, std::size_t h, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::stream(seed, i);
    const TissueStyle style = random_tissue_style(rng);
    out.push_back(render_tissue(w, h, style, rng));
  }
  return out;
}

inline TripletDataset synth_triplets(const SynthConfig& cfg) {
  auto ds = synth_triplets(render_base_images(cfg.triplets, cfg.width, cfg.height, cfg.seed), cfg.perturbations,
                           cfg.domain_ids, cfg.seed);
  ds.generator["base"] = Json{{"kind", "procedural"}, {"width", cfg.width}, {"height", cfg.height}};
  return ds;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Deterministic shuffled split; round(fraction * n) items go to train.
inline Split split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (n == 0) throw EmptyInputError("split: empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split: fraction must lie in (0,1)");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

inline TripletDataset subset(const TripletDataset& ds, const std::vector<std::size_t>& idx) {
  TripletDataset out;
  out.domain_ids = ds.domain_ids;
  out.generator = ds.generator;
  for (std::size_t i : idx) out.triplets.push_back(ds.triplets.at(i));
  return out;
}

inline std::pair<TripletDataset, TripletDataset> split(const TripletDataset& ds, double fraction, std::uint64_t seed) {
  const Split s = split_indices(ds.size(), fraction, seed);
  return {subset(ds, s.train), subset(ds, s.test)};
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/manifest.json plus <dir>/<domain>/<id>.ppm

inline std::string triplet_image_path(const std::string& domain, std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", id);
  return domain + "/" + buf + ".ppm";
}

inline Json manifest_json(const TripletDataset& ds) {
  Json triplets = Json::array();
  for (const Triplet& t : ds.triplets) {
    Json paths = Json::object();
    for (const auto& d : ds.domain_ids) paths[d] = triplet_image_path(d, t.id);
    triplets.push_back(Json{{"id", t.id}, {"paths", paths}});
  }
  return Json{{"domains", ds.domain_ids}, {"triplets", triplets}, {"generator", ds.generator}};
}

inline std::vector<std::filesystem::path> save_dataset(const TripletDataset& ds, const std::filesystem::path& dir) {
  validate(ds);
  std::vector<std::filesystem::path> written;
  for (const Triplet& t : ds.triplets)
    for (std::size_t d = 0; d < ds.domain_count(); ++d) {
      const auto path = dir / triplet_image_path(ds.domain_ids[d], t.id);
      save_image(path, t.images[d]);
      written.push_back(path);
    }
  write_text(dir / "manifest.json", dump_json(manifest_json(ds)));
  written.push_back(dir / "manifest.json");
  return written;
}

inline TripletDataset load_dataset(const std::filesystem::path& dir) {
  const Json m = load_json(dir / "manifest.json");
  TripletDataset ds;
  try {
    ds.domain_ids = m.at("domains").get<std::vector<std::string>>();
    ds.generator = m.value("generator", Json::object());
    for (const auto& t : m.at("triplets")) {
      Triplet trip{t.at("id").get<std::size_t>(), {}};
      for (const auto& d : ds.domain_ids) trip.images.push_back(load_image(dir / t.at("paths").at(d).get<std::string>()));
      ds.triplets.push_back(std::move(trip));
    }
  } catch (const Json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  validate(ds);
  return ds;
}

}  // namespace histonorm
