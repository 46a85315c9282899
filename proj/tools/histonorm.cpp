#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "histonorm.hpp"

namespace fs = std::filesystem;
using namespace histonorm;

namespace {

constexpr const char* kVersion = "0.1.0";

// Collects output paths for the run manifest.
struct Outputs {
  fs::path dir;
  std::vector<std::string> paths;

  fs::path text(const std::string& name, const std::string& content) {
    const fs::path p = dir / name;
    write_text(p, content);
    paths.push_back(p.string());
    return p;
  }
  void add(const std::vector<fs::path>& ps) {
    for (const auto& p : ps) paths.push_back(p.string());
  }
};

struct Command {
  std::string name;
  std::string help;
  Json defaults;  // every accepted config key with its default
  std::function<void(const Json&, Outputs&)> run;
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& c : f)
    if (c == '_') c = '-';
  return "--" + f;
}

std::string type_name(const Json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned()) return "non-negative integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  return v.type_name();
}

// Values must keep the kind of their default; integers may not be fractional.
Json coerce(const std::string& key, const Json& v, const Json& def) {
  const auto bad = [&] { return UsageError("config key '" + key + "' expects a " + type_name(def)); };
  if (def.is_boolean()) {
    if (!v.is_boolean()) throw bad();
  } else if (def.is_number_unsigned()) {
    if (!v.is_number_unsigned()) {
      if (v.is_number_integer() || !v.is_number()) throw bad();
      const double d = v.get<double>();
      if (d < 0.0 || d != std::floor(d)) throw bad();
      return Json(static_cast<std::uint64_t>(d));
    }
  } else if (def.is_number()) {
    if (!v.is_number()) throw bad();
    return Json(v.get<double>());
  } else if (def.is_string()) {
    if (!v.is_string()) throw bad();
  } else if (def.type() != v.type()) {
    throw bad();
  }
  return v;
}

Json parse_flag_value(const std::string& key, const std::string& text, const Json& def) {
  if (def.is_string()) return Json(text);
  if (def.is_boolean()) {
    if (text == "true" || text == "1") return Json(true);
    if (text == "false" || text == "0") return Json(false);
    throw UsageError("flag " + flag_name(key) + " expects true or false");
  }
  Json v;
  try {
    v = Json::parse(text);
  } catch (const Json::exception&) {
    throw UsageError("flag " + flag_name(key) + " has malformed value '" + text + "'");
  }
  return coerce(key, v, def);
}

Json load_config_file(const std::string& path, const Json& defaults) {
  if (!fs::exists(path)) throw UsageError("config file '" + path + "' does not exist");
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file '" + path + "' must hold a JSON object");
  Json cfg = defaults;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw UsageError("unknown config key '" + it.key() + "'");
    cfg[it.key()] = coerce(it.key(), it.value(), defaults.at(it.key()));
  }
  return cfg;
}

fs::path required_input(const Json& cfg, const std::string& key) {
  const std::string p = cfg.at(key).get<std::string>();
  if (p.empty()) throw UsageError("missing required input " + flag_name(key));
  if (!fs::exists(p)) throw UsageError("input " + flag_name(key) + " '" + p + "' does not exist");
  return p;
}

std::uint64_t u64(const Json& cfg, const char* key) { return cfg.at(key).get<std::uint64_t>(); }
std::size_t size(const Json& cfg, const char* key) { return static_cast<std::size_t>(u64(cfg, key)); }
double num(const Json& cfg, const char* key) { return cfg.at(key).get<double>(); }
std::string str(const Json& cfg, const char* key) { return cfg.at(key).get<std::string>(); }

AdamConfig adam_from(const Json& cfg) {
  AdamConfig a;
  a.learning_rate = num(cfg, "lr");
  return a;
}

// Triplet subsets shared by training and evaluation commands.
TripletDataset select_triplets(const TripletDataset& ds, const Json& cfg, bool training) {
  const std::string which = training ? "train" : str(cfg, "subset");
  const double f = num(cfg, "train_fraction");
  if (which == "all" || f >= 1.0) return ds;
  if (which != "train" && which != "test") throw UsageError("subset must be train, test or all");
  auto [train, test] = split(ds, f, u64(cfg, "split_seed"));
  return which == "train" ? train : test;
}

LabeledImageSet select_labeled(const LabeledImageSet& s, const Json& cfg, const std::string& which) {
  if (which == "all") return s;
  const ThreeWaySplit sp = split_three_way(s.size(), num(cfg, "train_fraction"), num(cfg, "val_fraction"), u64(cfg, "split_seed"));
  if (which == "train") return subset(s, sp.train);
  if (which == "validation") return subset(s, sp.validation);
  if (which == "test") return subset(s, sp.test);
  throw UsageError("subset must be train, validation, test or all");
}

// A feature model on disk: either format, detected from the document.
struct LoadedModel {
  std::string format;
  McaeModel mcae;
  StanosaModel stanosa;

  std::size_t domain_channel(const std::string& id) const {
    return format == "mcae-v1" ? mcae.domain_index(id) : 0;
  }
};

LoadedModel load_model(const fs::path& path) {
  const Json j = load_json(path);
  LoadedModel m;
  m.format = j.value("format", "");
  if (m.format == "mcae-v1") {
    m.mcae = mcae_from_json(j);
  } else if (m.format == "stanosa-v1") {
    m.stanosa = stanosa_from_json(j);
  } else {
    throw ParseError(path.string() + ": unknown model format '" + m.format + "'");
  }
  return m;
}

template <class F>
auto with_model(const LoadedModel& m, F&& f) {
  return m.format == "mcae-v1" ? f(m.mcae) : f(m.stanosa);
}

// ---------------------------------------------------------------------------

void run_synth(const Json& cfg, Outputs& out) {
  const std::string kind = str(cfg, "kind");
  const std::uint64_t seed = u64(cfg, "seed");
  if (kind == "triplets") {
    SynthConfig sc;
    sc.triplets = size(cfg, "triplets");
    sc.width = size(cfg, "width");
    sc.height = size(cfg, "height");
    sc.seed = Rng::stream(seed, "synth").next_u64();
    sc.domain_ids = cfg.at("domains").get<std::vector<std::string>>();
    sc.perturbations.clear();
    try {
      for (const auto& p : cfg.at("perturbations")) sc.perturbations.push_back(perturbation_from_json(p));
    } catch (const Error& e) {
      throw UsageError(std::string("perturbations: ") + e.what());
    }
    if (sc.domain_ids.size() != sc.perturbations.size() + 1)
      throw UsageError("need one perturbation per domain after the first");
    out.add(save_dataset(synth_triplets(sc), out.dir));
  } else if (kind == "labeled") {
    out.add(save_labeled(synth_labeled(size(cfg, "per_class"), size(cfg, "width"), size(cfg, "height"),
                                       Rng::stream(seed, "synth.labeled").next_u64()),
                         out.dir));
  } else {
    throw UsageError("synth --kind must be triplets or labeled");
  }
}

void run_train_mcae(const Json& cfg, Outputs& out) {
  const TripletDataset ds = select_triplets(load_dataset(required_input(cfg, "data")), cfg, true);
  const std::uint64_t seed = u64(cfg, "seed");
  McaeModel model = make_mcae(ds.domain_ids, {}, Rng::stream(seed, "mcae").next_u64());
  McaeTrainConfig tc;
  tc.epochs = size(cfg, "epochs");
  tc.batch = size(cfg, "batch");
  tc.stride = size(cfg, "stride");
  tc.k = size(cfg, "k");
  tc.kmeans_sample = size(cfg, "kmeans_sample");
  tc.kmeans_iters = size(cfg, "kmeans_iters");
  tc.adam = adam_from(cfg);
  tc.seed = Rng::stream(seed, "mcae.train").next_u64();
  const McaeTrainResult r = train_mcae(model, ds, tc);
  out.text("mcae.json", dump_json(mcae_to_json(model)));
  out.text("mcae_log.csv", mcae_log_csv(r.log));
}

void run_train_stanosa(const Json& cfg, Outputs& out) {
  const TripletDataset ds = select_triplets(load_dataset(required_input(cfg, "data")), cfg, true);
  const std::string domain = str(cfg, "domain");
  const std::size_t d = ds.domain_index(domain);
  std::vector<Image> images;
  for (const Triplet& t : ds.triplets) images.push_back(t.images[d]);
  const std::uint64_t seed = u64(cfg, "seed");
  StanosaModel model = make_stanosa({}, Rng::stream(seed, "stanosa").next_u64(), domain);
  StanosaTrainConfig tc;
  tc.epochs = size(cfg, "epochs");
  tc.batch = size(cfg, "batch");
  tc.stride = size(cfg, "stride");
  tc.zca_sample = size(cfg, "zca_sample");
  tc.zca_epsilon = num(cfg, "zca_epsilon");
  tc.adam = adam_from(cfg);
  tc.seed = Rng::stream(seed, "stanosa.train").next_u64();
  const StanosaTrainResult r = train_stanosa(model, images, tc);
  out.text("stanosa.json", dump_json(stanosa_to_json(model)));
  out.text("stanosa_log.csv", stanosa_log_csv(r.log));
}

void run_eval_nfmse(const Json& cfg, Outputs& out) {
  const TripletDataset test = select_triplets(load_dataset(required_input(cfg, "data")), cfg, false);
  NfmseConfig nc;
  nc.stride = size(cfg, "stride");
  nc.histogram_bins = size(cfg, "bins");
  nc.histogram_hi = num(cfg, "hist_max");
  std::vector<std::string> keys;
  for (const char* k : {"mcae", "stanosa"})
    if (!str(cfg, k).empty()) keys.push_back(k);
  if (keys.empty()) throw UsageError("eval-nfmse needs --mcae and/or --stanosa");
  Json summary = Json::object();
  for (const auto& key : keys) {
    const LoadedModel m = load_model(required_input(cfg, key.c_str()));
    const NfmseTable t = with_model(m, [&](const auto& model) { return nfmse_per_triplet(model, test, nc); });
    out.text("nfmse_" + key + ".csv", nfmse_csv(t));
    summary[key] = nfmse_summary_json(t);
  }
  summary["triplets"] = test.size();
  out.text("nfmse_summary.json", dump_json(summary));
}

void run_eval_hsd(const Json& cfg, Outputs& out) {
  const TripletDataset ds = load_dataset(required_input(cfg, "data"));
  std::vector<Image> images;
  std::vector<std::string> tags;
  for (const Triplet& t : ds.triplets)
    for (std::size_t d = 0; d < ds.domain_count(); ++d) {
      images.push_back(t.images[d]);
      tags.push_back(ds.domain_ids[d]);
    }
  const CxCySampleResult s = cxcy_sample(images, tags, size(cfg, "n_pixels"), Rng::stream(u64(cfg, "seed"), "eval-hsd").next_u64());
  for (const auto& w : s.warnings) std::cerr << w << '\n';
  out.text("cxcy.csv", cxcy_csv(s));
  SsimConfig sc;
  sc.window = size(cfg, "ssim_window");
  const auto table = density_ssim_table(ds, sc);
  out.text("ssim.csv", ssim_csv(table));
  out.text("hsd_summary.json", dump_json(Json{{"requested", s.requested}, {"sampled", s.rows.size()}, {"excluded", s.excluded}}));
}

void run_train_clf(const Json& cfg, Outputs& out) {
  const LabeledImageSet all = load_labeled(required_input(cfg, "data"));
  const LoadedModel m = load_model(required_input(cfg, "model"));
  ClassifierTrainConfig tc;
  tc.epochs = size(cfg, "epochs");
  tc.batch = size(cfg, "batch");
  tc.hidden = size(cfg, "hidden");
  try {
    tc.pooling = parse_pooling(str(cfg, "pooling"));
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  tc.adam = adam_from(cfg);
  tc.domain = m.domain_channel(str(cfg, "domain"));
  const std::uint64_t seed = u64(cfg, "seed");
  tc.seed = Rng::stream(seed, "classifier.train").next_u64();
  ClassifierHead head = make_head(10, tc.hidden, all.class_names.size(), Rng::stream(seed, "classifier").next_u64(), tc.pooling);
  const ClassifierTrainResult r = with_model(m, [&](const auto& model) {
    return train_classifier(model, head, select_labeled(all, cfg, "train"), select_labeled(all, cfg, "validation"), tc);
  });
  out.text("head.json", dump_json(head_to_json(head, all.class_names)));
  out.text("clf_log.csv", classifier_log_csv(r.log));
  char checksum[32];
  std::snprintf(checksum, sizeof checksum, "%016llx", static_cast<unsigned long long>(r.encoder_checksum_after));
  out.text("clf_summary.json", dump_json(Json{{"encoder_checksum", checksum},
                                              {"final_val_accuracy", r.log.empty() ? 0.0 : r.log.back().val_accuracy}}));
}

void run_eval_clf(const Json& cfg, Outputs& out) {
  const LabeledImageSet all = load_labeled(required_input(cfg, "data"));
  const LoadedModel m = load_model(required_input(cfg, "model"));
  const auto [head, classes] = head_from_json(load_json(required_input(cfg, "head")));
  if (classes != all.class_names) throw DimensionError("eval-clf: head classes differ from the dataset's");
  const LabeledImageSet s = select_labeled(all, cfg, str(cfg, "subset"));
  const std::size_t domain = m.domain_channel(str(cfg, "domain"));
  const ClassReport rep = with_model(m, [&](const auto& model) { return evaluate_classifier(model, domain, head, s); });
  out.text("classification_report.csv", classification_csv(rep));
  Json confusion = Json::array();
  for (const auto& row : rep.confusion) confusion.push_back(row);
  out.text("classification_summary.json",
           dump_json(Json{{"accuracy", rep.accuracy}, {"weighted_f1", rep.weighted_f1}, {"confusion", confusion}}));
}

void run_train_cyclegan(const Json& cfg, Outputs& out) {
  CycleGanConfig cc;
  cc.lambda1 = num(cfg, "lambda1");
  cc.lambda2 = num(cfg, "lambda2");
  cc.generator_adam = cc.discriminator_adam = adam_from(cfg);
  cc.epochs = size(cfg, "epochs");
  cc.batch = size(cfg, "batch");
  cc.saturating = cfg.at("saturating").get<bool>();
  const std::uint64_t seed = u64(cfg, "seed");
  cc.seed = Rng::stream(seed, "cyclegan").next_u64();
  const std::size_t n = size(cfg, "samples");
  const Tensor a = toy_colour_domain(n, {0.8, 0.3, 0.3}, Rng::stream(seed, "toy.A").next_u64());
  const Tensor b = toy_colour_domain(n, {0.3, 0.3, 0.8}, Rng::stream(seed, "toy.B").next_u64());
  const CycleGanResult r = train_cyclegan(a, b, cc);
  out.text("cyclegan_history.csv", cyclegan_history_csv(r.history));
  const auto nets = Json{{"format", "cyclegan-toy-v1"},
                         {"F", Json::array({layer_json(r.model.f.net.layers[0]), layer_json(r.model.f.net.layers[1])})},
                         {"G", Json::array({layer_json(r.model.g.net.layers[0]), layer_json(r.model.g.net.layers[1])})},
                         {"D_A", Json::array({layer_json(r.model.da.net.layers[0]), layer_json(r.model.da.net.layers[1])})},
                         {"D_B", Json::array({layer_json(r.model.db.net.layers[0]), layer_json(r.model.db.net.layers[1])})}};
  out.text("cyclegan.json", dump_json(nets));
  const auto colour = [](const std::array<double, 3>& c) { return Json::array({c[0], c[1], c[2]}); };
  out.text("cyclegan_summary.json",
           dump_json(Json{{"mean_A", colour(mean_colour(a))},
                          {"mean_B", colour(mean_colour(b))},
                          {"mean_F_of_A", colour(mean_colour(generate(r.model.f, a)))},
                          {"mean_G_of_B", colour(mean_colour(generate(r.model.g, b)))},
                          {"cycle_epoch_first", r.epoch_mean(1, &CycleGanHistoryRow::cycle)},
                          {"cycle_epoch_last", r.epoch_mean(cc.epochs, &CycleGanHistoryRow::cycle)}}));
}

bool run_grad_check(const Json& cfg, Outputs& out) {
  const auto entries = run_gradient_suite(u64(cfg, "seed"));
  CsvWriter csv({"check", "max_relative_error", "max_absolute_error", "checked", "passed"});
  bool ok = true;
  for (const auto& e : entries) {
    csv.row(e.name, e.result.max_relative_error, e.result.max_absolute_error, e.result.checked,
            std::string(e.result.passed ? "true" : "false"));
    std::cout << e.name << " max_rel=" << format_double(e.result.max_relative_error)
              << (e.result.passed ? " ok" : " FAIL") << '\n';
    ok = ok && e.result.passed;
  }
  out.text("gradcheck.csv", csv.str());
  return ok;
}

std::vector<Command> commands() {
  const Json split_keys{{"train_fraction", 0.8}, {"split_seed", 0u}};
  auto with = [](Json base, const Json& extra) {
    base.update(extra);
    return base;
  };
  Json perts = Json::array();
  for (const auto& p : default_perturbations()) perts.push_back(perturbation_json(p));
  const Json clf_split{{"train_fraction", 0.75}, {"val_fraction", 0.05}, {"split_seed", 0u}};
  return {
      {"synth", "Synthesise a triplet dataset or a labeled tissue set",
       Json{{"out", ""}, {"kind", "triplets"}, {"triplets", 100u}, {"per_class", 100u}, {"width", 32u}, {"height", 32u},
            {"domains", Json::array({"A", "B", "C"})}, {"perturbations", perts}, {"seed", 0u}},
       run_synth},
      {"train-mcae", "Train the multi-channel auto-encoder",
       with(Json{{"out", ""}, {"data", ""}, {"epochs", 300u}, {"batch", 64u}, {"stride", 4u}, {"k", 10u},
                 {"kmeans_sample", 10000u}, {"kmeans_iters", 100u}, {"lr", 2e-4}, {"seed", 0u}},
            split_keys),
       run_train_mcae},
      {"train-stanosa", "Train the single-domain GCN+ZCA auto-encoder baseline",
       with(Json{{"out", ""}, {"data", ""}, {"domain", "A"}, {"epochs", 300u}, {"batch", 64u}, {"stride", 4u},
                 {"zca_sample", 100000u}, {"zca_epsilon", kZcaEpsilon}, {"lr", 2e-4}, {"seed", 0u}},
            split_keys),
       run_train_stanosa},
      {"eval-nfmse", "Per-triplet normalised feature MSE for every domain pair",
       with(Json{{"out", ""}, {"data", ""}, {"mcae", ""}, {"stanosa", ""}, {"subset", "test"}, {"stride", 4u},
                 {"bins", 20u}, {"hist_max", 2.0}, {"seed", 0u}},
            split_keys),
       run_eval_nfmse},
      {"eval-hsd", "Chromatic scatter samples and density SSIM table",
       Json{{"out", ""}, {"data", ""}, {"n_pixels", 10000u}, {"ssim_window", 8u}, {"seed", 0u}}, run_eval_hsd},
      {"train-clf", "Train a classification head on frozen encoder features",
       with(Json{{"out", ""}, {"data", ""}, {"model", ""}, {"domain", "A"}, {"epochs", 30u}, {"batch", 16u},
                 {"hidden", 32u}, {"pooling", "average"}, {"lr", 2e-4}, {"seed", 0u}},
            clf_split),
       run_train_clf},
      {"eval-clf", "Classification report of a trained head",
       with(Json{{"out", ""}, {"data", ""}, {"model", ""}, {"head", ""}, {"domain", "A"}, {"subset", "test"},
                 {"seed", 0u}},
            clf_split),
       run_eval_clf},
      {"train-cyclegan-toy", "Train the toy CycleGAN on reddish vs bluish patches",
       Json{{"out", ""}, {"epochs", 200u}, {"batch", 16u}, {"samples", 256u}, {"lambda1", 5.0}, {"lambda2", 10.0},
            {"lr", 2e-4}, {"saturating", false}, {"seed", 0u}},
       run_train_cyclegan},
      {"grad-check", "Finite-difference check of every analytic gradient",
       Json{{"out", ""}, {"seed", 0u}}, nullptr},
  };
}

void print_error(const std::string& command, const std::string& kind, const std::string& message, int code) {
  std::cerr << Json{{"error", {{"command", command}, {"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump()
            << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stain-invariant feature learning toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  const std::vector<Command> cmds = commands();
  struct Bound {
    CLI::App* sub;
    std::string config_path;
    std::map<std::string, std::string> flags;
  };
  std::vector<Bound> bound(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    const Command& c = cmds[i];
    Bound& b = bound[i];
    b.sub = app.add_subcommand(c.name, c.help);
    b.sub->add_option("--config", b.config_path, "JSON config file; flags override its keys");
    for (auto it = c.defaults.begin(); it != c.defaults.end(); ++it) {
      if (it.value().is_array()) continue;  // config-file only
      const std::string key = it.key();
      b.sub->add_option_function<std::string>(
          flag_name(key), [&b, key](const std::string& v) { b.flags[key] = v; },
          "default: " + (it.value().is_string() ? it.value().get<std::string>() : it.value().dump()));
    }
  }

  std::string command;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(command, "usage", e.what(), 2);
    return 2;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!bound[i].sub->parsed()) continue;
    const Command& c = cmds[i];
    command = c.name;
    const auto start = std::chrono::steady_clock::now();
    try {
      Json cfg = bound[i].config_path.empty() ? c.defaults : load_config_file(bound[i].config_path, c.defaults);
      for (const auto& [key, value] : bound[i].flags) cfg[key] = parse_flag_value(key, value, c.defaults.at(key));
      const std::string out_dir = cfg.at("out").get<std::string>();
      if (out_dir.empty()) throw UsageError("missing required --out directory");
      Outputs out{out_dir, {}};
      fs::create_directories(out.dir);
      bool ok = true;
      if (c.run) {
        c.run(cfg, out);
      } else {
        ok = run_grad_check(cfg, out);
      }
      const double duration = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      Json manifest{{"command", c.name},        {"config", cfg},      {"seed", cfg.at("seed")}, {"outputs", out.paths},
                    {"duration_s", duration}, {"version", kVersion}};
      write_text(out.dir / "run_manifest.json", dump_json(manifest));
      if (!ok) {
        print_error(command, "gradient_mismatch", "finite-difference check failed; see gradcheck.csv", 1);
        return 1;
      }
      return 0;
    } catch (const UsageError& e) {
      print_error(command, e.kind(), e.what(), 2);
      return 2;
    } catch (const Error& e) {
      print_error(command, e.kind(), e.what(), 1);
      return 1;
    } catch (const std::exception& e) {
      print_error(command, "runtime", e.what(), 1);
      return 1;
    }
  }
  return 2;
}
