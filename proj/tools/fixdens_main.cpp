#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fixdens/crossval.hpp"
#include "fixdens/dataset.hpp"
#include "fixdens/density_export.hpp"
#include "fixdens/grid.hpp"
#include "fixdens/image_io.hpp"
#include "fixdens/metrics.hpp"
#include "fixdens/mixture.hpp"
#include "fixdens/optimize.hpp"
#include "fixdens/render.hpp"
#include "fixdens/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fixdens;

namespace {

/// Bad input (files, flags, formats): exit code 1. Anything else thrown
/// during a run is a computation failure: exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
auto validated(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw ValidationError(e.what());
  }
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const int count = static_cast<int>(std::min<size_t>(jobs, n));
  threads.reserve(count);
  for (int t = 0; t < count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

void atomic_write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, path);
}

void atomic_write_grid(const DensityGrid& grid, const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  write_grid(grid, tmp.string());
  fs::rename(tmp, path);
}

void atomic_write_png(const RgbImage& image, const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto bytes = encode_png(image);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, path);
}

std::array<bool, kNumComponents> parse_components(const std::string& spec) {
  std::array<bool, kNumComponents> active{false, false, false, false};
  std::stringstream ss(spec);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    auto c = component_from_name(name);
    if (!c) throw ValidationError("unknown component '" + name + "'");
    active[*c] = true;
  }
  bool any = false;
  for (bool a : active) any |= a;
  if (!any) throw ValidationError("at least one component must be active");
  return active;
}

FoldScheme parse_scheme(const std::string& name) {
  if (name == "loso") return FoldScheme::Loso;
  if (name == "lofo") return FoldScheme::Lofo;
  if (name == "pooled") return FoldScheme::Pooled;
  throw ValidationError("unknown plan '" + name + "' (expected loso, lofo or pooled)");
}

/// Fold-independent models owned by a run; ModelComponents point into these.
struct ComponentStore {
  std::map<std::string, CenterBiasModel> center_bias;
  std::map<std::string, SaliencyComponent> saliency;

  ModelComponents view(const std::string& image_id) {
    ModelComponents mc;
    auto cb = center_bias.find(image_id);
    if (cb != center_bias.end()) mc.center_bias = &cb->second;
    auto sal = saliency.find(image_id);
    if (sal != saliency.end()) mc.saliency = &sal->second;
    return mc;
  }
};

/// Fits/loads the per-image regularizer components required by the active
/// component mask. Center bias is refit per image on all other images.
void build_components(const DatasetBundle& dataset, const std::vector<std::string>& image_ids,
                      const std::array<bool, kNumComponents>& active, int jobs,
                      ComponentStore& store) {
  if (active[kSaliency]) {
    for (const auto& id : image_ids) {
      const ImageRecord* rec = dataset.find_image(id);
      if (!rec->saliency_grid_path)
        throw ValidationError("image " + id +
                              " has no saliency_grid_path but the saliency component is active");
      auto grid = validated([&] { return read_grid(*rec->saliency_grid_path); });
      if (grid.space == GridSpace::Log) grid = grid.to_probability();
      if (grid.width != rec->width || grid.height != rec->height)
        throw ValidationError("saliency grid for " + id + " does not match the image size");
      store.saliency.emplace(id, SaliencyComponent(std::move(grid)));
    }
  }
  if (active[kCenterBias]) {
    std::mutex mutex;
    parallel_for(image_ids.size(), jobs, [&](size_t i) {
      auto model = fit_center_bias(dataset, image_ids[i]);
      std::lock_guard<std::mutex> lock(mutex);
      store.center_bias.emplace(image_ids[i], std::move(model));
    });
  }
}

json kernel_to_json(const KernelParams& kernel) {
  json j;
  if (const auto* fp = std::get_if<FixedKernelParams>(&kernel)) {
    j["type"] = "fixed";
    j["h"] = fp->h;
  } else {
    const auto& ap = std::get<AdaptiveKernelParams>(kernel);
    j["type"] = "adaptive";
    j["h0"] = ap.h0;
    j["alpha"] = ap.alpha;
  }
  return j;
}

KernelParams kernel_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "fixed") return FixedKernelParams{j.at("h").get<double>()};
  if (type == "adaptive")
    return AdaptiveKernelParams{j.at("h0").get<double>(), j.at("alpha").get<double>()};
  throw std::runtime_error("unknown kernel type '" + type + "'");
}

json logits_to_json(const MixtureParams& mixture) {
  json j = json::object();
  for (int k = 0; k < kNumComponents; ++k)
    if (mixture.active[k]) j[component_name(static_cast<Component>(k))] = mixture.logits[k];
  return j;
}

MixtureParams mixture_from_json(const json& logits) {
  MixtureParams mp;
  mp.active = {false, false, false, false};
  for (auto it = logits.begin(); it != logits.end(); ++it) {
    auto c = component_from_name(it.key());
    if (!c) throw std::runtime_error("unknown component '" + it.key() + "' in params");
    mp.active[*c] = true;
    mp.logits[*c] = it.value().get<double>();
  }
  return mp;
}

json params_to_json(const std::string& image_id, const KernelParams& kernel,
                    const MixtureParams& mixture, double objective_nats) {
  json j;
  j["image_id"] = image_id;
  j["kernel"] = kernel_to_json(kernel);
  j["logits"] = logits_to_json(mixture);
  j["objective_nats"] = objective_nats;
  return j;
}

struct LoadedParams {
  std::map<std::string, ImageModel> models;
  std::string label;
};

LoadedParams load_params_dir(const std::string& dir) {
  LoadedParams out;
  out.label = fs::path(dir).filename().string();
  if (out.label.empty()) out.label = dir;
  const fs::path params_dir = fs::exists(fs::path(dir) / "params") ? fs::path(dir) / "params"
                                                                   : fs::path(dir);
  if (!fs::is_directory(params_dir))
    throw ValidationError("params directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(params_dir)) {
    if (entry.path().extension() != ".json") continue;
    const auto stem = entry.path().filename().string();
    if (stem == "manifest.json" || stem == "summary.json") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream is(file);
    json j;
    try {
      is >> j;
      ImageModel model;
      model.kernel = kernel_from_json(j.at("kernel"));
      model.mixture = mixture_from_json(j.at("logits"));
      out.models[j.at("image_id").get<std::string>()] = model;
    } catch (const std::exception& e) {
      throw ValidationError("bad params file " + file.string() + ": " + e.what());
    }
  }
  if (out.models.empty()) throw ValidationError("no parameter files in " + dir);
  return out;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string fixations, images, exclude, out;
  std::string kernel = "adaptive";
  std::string components = "kde,cb,uniform";
  std::string plan = "loso";
  bool global = false;
  bool no_optimize = false;
  double h_deg = 0.0;
  double h_px = 0.0;
  int restarts = 50;
  uint64_t seed = 0;
  double h_min = 0.5;
  int jobs = 1;
};

void cmd_fit(const FitArgs& args) {
  if (args.kernel != "fixed" && args.kernel != "adaptive")
    throw ValidationError("--kernel must be 'fixed' or 'adaptive'");
  const auto active = parse_components(args.components);
  const auto scheme = parse_scheme(args.plan);
  if (args.no_optimize) {
    if (args.kernel != "fixed")
      throw ValidationError("--no-optimize requires --kernel fixed");
    if ((args.h_deg > 0.0) == (args.h_px > 0.0))
      throw ValidationError("--no-optimize requires exactly one of --h-deg or --h-px");
  } else if (args.h_deg > 0.0 || args.h_px > 0.0) {
    throw ValidationError("--h-deg/--h-px only apply with --no-optimize");
  }

  auto dataset = validated([&] {
    std::set<std::string> excl;
    if (!args.exclude.empty()) excl = load_exclusion_list(args.exclude);
    return load_dataset(args.fixations, args.images, excl);
  });
  const auto image_ids = dataset.crossvalidatable_image_ids();
  if (image_ids.empty()) throw ValidationError("no crossvalidatable images in the dataset");
  if (args.no_optimize && args.h_deg > 0.0) {
    for (const auto& id : image_ids)
      if (!dataset.find_image(id)->pixels_per_degree)
        throw ValidationError("--h-deg needs pixels_per_degree for image " + id);
  }

  ComponentStore store;
  build_components(dataset, image_ids, active, args.jobs, store);

  ParamLayout layout;
  layout.adaptive = args.kernel == "adaptive";
  layout.active = active;
  OptimConfig config;
  config.restarts = args.restarts;
  config.seed = args.seed;
  config.h_min = args.h_min;

  std::vector<ImageContext> contexts(image_ids.size());
  for (size_t i = 0; i < image_ids.size(); ++i) {
    const auto& id = image_ids[i];
    contexts[i].image_id = id;
    contexts[i].geometry = dataset.find_image(id)->geometry();
    contexts[i].table = &dataset.fixations.at(id);
    contexts[i].plan = make_fold_plan(*contexts[i].table, scheme);
    contexts[i].components = store.view(id);
  }

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir / "params");
  json manifest;
  manifest["mode"] = args.global ? "global" : "per-image";
  manifest["kernel"] = args.kernel;
  manifest["components"] = json::array();
  for (int k = 0; k < kNumComponents; ++k)
    if (active[k]) manifest["components"].push_back(component_name(static_cast<Component>(k)));
  manifest["plan"] = args.plan;
  manifest["seed"] = args.seed;
  manifest["restarts"] = args.restarts;
  manifest["h_min"] = args.h_min;
  manifest["optimized"] = !args.no_optimize;
  manifest["images"] = json::array();

  auto write_one = [&](const ImageContext& ctx, const KernelParams& kernel,
                       const MixtureParams& mixture, double objective) {
    const fs::path path = out_dir / "params" / (ctx.image_id + ".json");
    atomic_write_text(path, params_to_json(ctx.image_id, kernel, mixture, objective).dump(2) + "\n");
  };

  if (args.no_optimize) {
    MixtureParams mixture;
    mixture.active = active;
    parallel_for(contexts.size(), args.jobs, [&](size_t i) {
      const auto& ctx = contexts[i];
      const double h = args.h_px > 0.0
                           ? args.h_px
                           : args.h_deg * *dataset.find_image(ctx.image_id)->pixels_per_degree;
      const KernelParams kernel = FixedKernelParams{h};
      auto eval = evaluate_image(ctx.geometry, *ctx.table, kernel, mixture, ctx.components,
                                 ctx.plan);
      write_one(ctx, kernel, mixture, eval.mean_ll_nats);
    });
  } else if (args.global) {
    auto result = optimize_global(contexts, config, layout);
    for (const auto& ctx : contexts)
      write_one(ctx, result.kernel, result.mixture, result.objective_nats);
  } else {
    parallel_for(contexts.size(), args.jobs, [&](size_t i) {
      auto result = optimize_image(contexts[i], config, layout);
      write_one(contexts[i], result.kernel, result.mixture, result.objective_nats);
    });
  }

  for (const auto& id : image_ids) manifest["images"].push_back(id);
  atomic_write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string fixations, images, exclude, out;
  std::vector<std::string> params_dirs;
  std::string plan = "loso";
  int jobs = 1;
  int bootstrap_iterations = 10000;
  double bootstrap_level = 0.95;
  uint64_t seed = 0;
  bool no_auc = false;
};

void cmd_evaluate(const EvaluateArgs& args) {
  const auto scheme = parse_scheme(args.plan);
  auto dataset = validated([&] {
    std::set<std::string> excl;
    if (!args.exclude.empty()) excl = load_exclusion_list(args.exclude);
    return load_dataset(args.fixations, args.images, excl);
  });
  const auto image_ids = dataset.crossvalidatable_image_ids();
  if (image_ids.empty()) throw ValidationError("no crossvalidatable images in the dataset");
  if (args.params_dirs.empty()) throw ValidationError("at least one --params directory required");

  std::vector<LoadedParams> models;
  for (const auto& dir : args.params_dirs) models.push_back(load_params_dir(dir));
  std::array<bool, kNumComponents> needed{false, false, false, false};
  for (const auto& model : models) {
    for (const auto& id : image_ids)
      if (!model.models.count(id))
        throw ValidationError("params set '" + model.label + "' is missing image " + id);
    for (const auto& [id, m] : model.models)
      for (int k = 0; k < kNumComponents; ++k) needed[k] = needed[k] || m.mixture.active[k];
  }
  ComponentStore store;
  build_components(dataset, image_ids, needed, args.jobs, store);

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  const bool pooled = scheme == FoldScheme::Pooled;
  if (pooled)
    std::cerr << "warning: pooled evaluation is not crossvalidated; "
                 "likelihoods include each fixation's own kernel\n";

  json summary;
  summary["scheme"] = args.plan;
  summary["crossvalidated"] = !pooled;
  if (pooled) summary["warning"] = "non-crossvalidated: pooled likelihoods overfit";
  summary["models"] = json::array();

  std::vector<std::vector<double>> ig_by_model;
  for (size_t m = 0; m < models.size(); ++m) {
    const auto& model = models[m];
    std::vector<json> lines(image_ids.size());
    std::vector<double> igs(image_ids.size());
    double sum_ll = 0.0, sum_ig = 0.0;
    std::mutex mutex;
    parallel_for(image_ids.size(), args.jobs, [&](size_t i) {
      const auto& id = image_ids[i];
      const auto& im = model.models.at(id);
      const auto geom = dataset.find_image(id)->geometry();
      const auto& table = dataset.fixations.at(id);
      auto plan = make_fold_plan(table, scheme);
      auto components = store.view(id);
      auto eval = evaluate_image(geom, table, im.kernel, im.mixture, components, plan);
      const double ig = information_gain_bits(eval.per_fixation_lognats, geom);

      json line;
      line["image_id"] = id;
      line["scheme"] = args.plan;
      line["mean_ll_nats"] = eval.mean_ll_nats;
      line["ig_bits"] = ig;
      line["n_fixations"] = eval.n_fixations;
      line["params"] = params_to_json(id, im.kernel, im.mixture, eval.mean_ll_nats);
      if (!args.no_auc) {
        auto grid = pooled
                        ? pooled_density(geom, table, im.kernel, im.mixture, components)
                        : loso_density(geom, table, im.kernel, im.mixture, components, {});
        line["auc"] = auc_uniform(grid, table.points());
      }
      std::lock_guard<std::mutex> lock(mutex);
      lines[i] = std::move(line);
      igs[i] = ig;
      sum_ll += eval.mean_ll_nats;
      sum_ig += ig;
    });

    std::ostringstream results;
    for (const auto& line : lines) results << line.dump() << "\n";
    const std::string name = models.size() == 1 ? "results.jsonl"
                                                : "results_" + std::to_string(m) + ".jsonl";
    atomic_write_text(out_dir / name, results.str());

    json model_summary;
    model_summary["params"] = args.params_dirs[m];
    model_summary["results"] = name;
    model_summary["n_images"] = image_ids.size();
    model_summary["mean_ll_nats"] = sum_ll / static_cast<double>(image_ids.size());
    model_summary["mean_ig_bits"] = sum_ig / static_cast<double>(image_ids.size());
    summary["models"].push_back(model_summary);
    ig_by_model.push_back(std::move(igs));
  }

  if (models.size() >= 2 && image_ids.size() >= 2) {
    auto cis = bootstrap_ci(ig_by_model, args.bootstrap_iterations, args.bootstrap_level,
                            args.seed);
    for (size_t m = 0; m < cis.size(); ++m) {
      summary["models"][m]["ig_ci"] = {{"mean", cis[m].mean},
                                       {"lo", cis[m].lo},
                                       {"hi", cis[m].hi},
                                       {"level", args.bootstrap_level}};
    }
  }
  atomic_write_text(out_dir / "summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// density

struct DensityArgs {
  std::string fixations, images, exclude, params, out;
  std::string kind = "loso";
  double radius = 0.0;
  int jobs = 1;
};

void cmd_density(const DensityArgs& args) {
  if (args.kind != "loso" && args.kind != "pooled")
    throw ValidationError("--kind must be 'loso' or 'pooled'");
  auto dataset = validated([&] {
    std::set<std::string> excl;
    if (!args.exclude.empty()) excl = load_exclusion_list(args.exclude);
    return load_dataset(args.fixations, args.images, excl);
  });
  const auto image_ids = dataset.crossvalidatable_image_ids();
  if (image_ids.empty()) throw ValidationError("no crossvalidatable images in the dataset");
  auto params = load_params_dir(args.params);
  std::array<bool, kNumComponents> needed{false, false, false, false};
  for (const auto& id : image_ids) {
    if (!params.models.count(id))
      throw ValidationError("params set is missing image " + id);
    for (int k = 0; k < kNumComponents; ++k)
      needed[k] = needed[k] || params.models.at(id).mixture.active[k];
  }
  ComponentStore store;
  build_components(dataset, image_ids, needed, args.jobs, store);

  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  parallel_for(image_ids.size(), args.jobs, [&](size_t i) {
    const auto& id = image_ids[i];
    const auto& im = params.models.at(id);
    const auto geom = dataset.find_image(id)->geometry();
    const auto& table = dataset.fixations.at(id);
    auto components = store.view(id);
    LosoDensityConfig cfg;
    cfg.rbf_radius = args.radius;
    const double r = args.radius > 0.0 ? args.radius : default_rbf_radius(table);
    DensityGrid grid = args.kind == "loso"
                           ? loso_density(geom, table, im.kernel, im.mixture, components, cfg)
                           : pooled_density(geom, table, im.kernel, im.mixture, components);
    atomic_write_grid(grid, out_dir / (id + ".fdg"));
    json sidecar;
    sidecar["image_id"] = id;
    sidecar["kind"] = args.kind;
    sidecar["r"] = args.kind == "loso" ? json(r) : json();
    sidecar["params_ref"] = args.params;
    atomic_write_text(out_dir / (id + ".json"), sidecar.dump(2) + "\n");
  });
}

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
  std::string grid, stimulus, out;
  double saturation = 20.0;
  double base = 4.0;
  double opacity = 0.65;
};

void cmd_render(const RenderArgs& args) {
  auto grid = validated([&] { return read_grid(args.grid); });
  if (grid.space == GridSpace::Log) grid = grid.to_probability();
  VizConfig config;
  config.saturation = args.saturation;
  config.contour_base = args.base;
  config.overlay_opacity = args.opacity;
  if (!(config.saturation > 0.0)) throw ValidationError("--saturation must be positive");
  if (!(config.contour_base > 1.0)) throw ValidationError("--base must exceed 1");

  RenderedFigure figure;
  if (!args.stimulus.empty()) {
    auto stim = validated([&] { return read_ppm(args.stimulus); });
    if (stim.width != grid.width || stim.height != grid.height)
      throw ValidationError("stimulus dimensions do not match the density grid");
    figure = render_overlay(stim, grid, config);
  } else {
    figure = render_overlay(grid, config);
  }
  atomic_write_png(figure.raster, args.out);
  atomic_write_text(args.out + ".json", figure.metadata_json + "\n");
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  int n_images = 1;
  int width = 500, height = 500;
  int subjects = 16, fixations = 10;
  std::vector<std::string> blobs;
  double floor = 0.0;
  uint64_t seed = 0;
};

void cmd_synth(const SynthArgs& args) {
  SyntheticSpec spec;
  spec.width = args.width;
  spec.height = args.height;
  spec.subjects = args.subjects;
  spec.fixations_per_subject = args.fixations;
  spec.uniform_floor = args.floor;
  spec.seed = args.seed;
  for (const auto& blob : args.blobs) {
    GaussianBlob b;
    char comma;
    std::istringstream is(blob);
    if (!(is >> b.center.x >> comma >> b.center.y >> comma >> b.sigma >> comma >> b.weight))
      throw ValidationError("bad --blob '" + blob + "' (expected x,y,sigma,weight)");
    spec.blobs.push_back(b);
  }
  if (spec.blobs.empty() && spec.uniform_floor < 1.0) {
    GaussianBlob b;
    b.center = {args.width / 2.0, args.height / 2.0};
    b.sigma = 20.0;
    b.weight = 1.0 - spec.uniform_floor;
    spec.blobs.push_back(b);
  }
  validated([&] { spec.validate(); return 0; });
  if (args.n_images < 1) throw ValidationError("--n-images must be >= 1");

  auto dataset = synth_dataset(spec, args.n_images);
  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  save_dataset(dataset, (out_dir / "fixations.csv").string(),
               (out_dir / "images.json").string());
  atomic_write_grid(ground_truth_grid(spec), out_dir / "ground_truth.fdg");
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string results_a, results_b, out, params;
  std::string quantiles = "0.05,0.25,0.5,0.75,0.95";
  int extremes = 3;
};

std::vector<MetricRecord> read_results_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path);
  std::vector<MetricRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      MetricRecord r;
      r.image_id = j.at("image_id").get<std::string>();
      r.ig_bits = j.at("ig_bits").get<double>();
      r.auc = j.value("auc", 0.0);
      r.n_fixations = j.at("n_fixations").get<size_t>();
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ValidationError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records.empty()) throw ValidationError("no result lines in " + path);
  return records;
}

void cmd_report(const ReportArgs& args) {
  std::vector<double> qs;
  {
    std::stringstream ss(args.quantiles);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      const double q = std::stod(tok);
      if (q < 0.0 || q > 1.0) throw ValidationError("quantile out of [0,1]: " + tok);
      qs.push_back(q);
    }
    if (qs.empty()) throw ValidationError("no quantiles given");
  }
  auto a = read_results_jsonl(args.results_a);
  auto b = read_results_jsonl(args.results_b);
  ImprovementTable table;
  try {
    table = improvement_quantiles(a, b, qs);
  } catch (const std::exception& e) {
    throw ValidationError(e.what());
  }

  const fs::path out_dir(args.out);
  std::ostringstream csv;
  csv << "quantile,delta_ll,delta_ll_rel,delta_auc\n";
  csv.precision(12);
  for (const auto& row : table.rows) {
    csv << row.quantile << "," << row.delta_ll << ",";
    if (std::isnan(row.delta_ll_rel))
      csv << "nan";
    else
      csv << row.delta_ll_rel;
    csv << "," << row.delta_auc << "\n";
  }
  csv << "# n_images=" << table.n_images << " rel_excluded=" << table.n_rel_excluded << "\n";
  atomic_write_text(out_dir / "quantiles.csv", csv.str());

  if (!args.params.empty()) {
    auto params = load_params_dir(args.params);
    // parameter name -> (image_id, value)
    std::map<std::string, std::vector<std::pair<std::string, double>>> values;
    for (const auto& [id, model] : params.models) {
      if (const auto* fp = std::get_if<FixedKernelParams>(&model.kernel)) {
        values["h"].emplace_back(id, fp->h);
      } else {
        const auto& ap = std::get<AdaptiveKernelParams>(model.kernel);
        values["h0"].emplace_back(id, ap.h0);
        values["alpha"].emplace_back(id, ap.alpha);
      }
      auto w = model.mixture.weights();
      for (int k = 0; k < kNumComponents; ++k)
        if (model.mixture.active[k])
          values[std::string("w_") + component_name(static_cast<Component>(k))].emplace_back(
              id, w[k]);
    }
    std::ostringstream ext;
    ext << "parameter,extreme,rank,image_id,value\n";
    ext.precision(12);
    for (auto& [name, list] : values) {
      std::sort(list.begin(), list.end(), [](const auto& x, const auto& y) {
        return x.second != y.second ? x.second < y.second : x.first < y.first;
      });
      const size_t k = std::min<size_t>(args.extremes, list.size());
      for (size_t i = 0; i < k; ++i)
        ext << name << ",low," << (i + 1) << "," << list[i].first << "," << list[i].second
            << "\n";
      for (size_t i = 0; i < k; ++i) {
        const auto& item = list[list.size() - 1 - i];
        ext << name << ",high," << (i + 1) << "," << item.first << "," << item.second << "\n";
      }
    }
    atomic_write_text(out_dir / "extremes.csv", ext.str());
  }
}

// ---------------------------------------------------------------------------
// centerbias

struct CenterBiasArgs {
  std::string fixations, images, exclude, holdout, out;
  int width = 0, height = 0;
};

void cmd_centerbias(const CenterBiasArgs& args) {
  auto dataset = validated([&] {
    std::set<std::string> excl;
    if (!args.exclude.empty()) excl = load_exclusion_list(args.exclude);
    return load_dataset(args.fixations, args.images, excl);
  });
  if (!args.holdout.empty() && !dataset.find_image(args.holdout))
    throw ValidationError("holdout image '" + args.holdout + "' not in the dataset");
  auto model = fit_center_bias(dataset, args.holdout);
  ImageGeometry geom{args.width, args.height};
  if (geom.width <= 0 || geom.height <= 0) {
    const ImageRecord* rec = args.holdout.empty() ? &dataset.images.front()
                                                  : dataset.find_image(args.holdout);
    geom = rec->geometry();
  }
  atomic_write_grid(model.rasterize(geom), args.out);
  json meta;
  meta["bandwidth"] = model.bandwidth();
  meta["holdout"] = args.holdout;
  meta["width"] = geom.width;
  meta["height"] = geom.height;
  atomic_write_text(args.out + ".json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// convert-grid

struct ConvertArgs {
  std::string in, out;
  bool to_text = false;
  bool log_space = false;
};

void cmd_convert_grid(const ConvertArgs& args) {
  if (args.to_text) {
    auto grid = validated([&] { return read_grid(args.in); });
    if (grid.space == GridSpace::Log) grid = grid.to_probability();
    std::ostringstream os;
    os.precision(17);
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        if (x) os << ' ';
        os << grid.at(x, y);
      }
      os << '\n';
    }
    atomic_write_text(args.out, os.str());
  } else {
    auto grid = validated([&] { return read_text_grid(args.in); });
    if (args.log_space) grid = grid.to_log();
    atomic_write_grid(grid, args.out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical fixation density estimation and evaluation"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Optimize kernel and mixture parameters");
  fit_cmd->add_option("--fixations", fit.fixations, "Fixation CSV")->required();
  fit_cmd->add_option("--images", fit.images, "Image metadata JSON")->required();
  fit_cmd->add_option("--exclude", fit.exclude, "Exclusion list file");
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();
  fit_cmd->add_option("--kernel", fit.kernel, "fixed | adaptive");
  fit_cmd->add_option("--components", fit.components, "Comma list: kde,cb,uniform,saliency");
  fit_cmd->add_option("--plan", fit.plan, "Objective fold scheme: loso | lofo | pooled");
  auto* global_flag = fit_cmd->add_flag("--global", fit.global, "One shared parameter set");
  fit_cmd->add_flag("--per-image", "Per-image parameters (default)")->excludes(global_flag);
  fit_cmd->add_flag("--no-optimize", fit.no_optimize, "Skip optimization; use --h-deg/--h-px");
  fit_cmd->add_option("--h-deg", fit.h_deg, "Fixed bandwidth in degrees (with --no-optimize)");
  fit_cmd->add_option("--h-px", fit.h_px, "Fixed bandwidth in pixels (with --no-optimize)");
  fit_cmd->add_option("--restarts", fit.restarts, "Optimizer restarts");
  fit_cmd->add_option("--seed", fit.seed, "RNG seed");
  fit_cmd->add_option("--h-min", fit.h_min, "Minimum effective bandwidth, px");
  fit_cmd->add_option("--jobs", fit.jobs, "Parallel image workers");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Cross-validated likelihood evaluation");
  ev_cmd->add_option("--fixations", ev.fixations, "Fixation CSV")->required();
  ev_cmd->add_option("--images", ev.images, "Image metadata JSON")->required();
  ev_cmd->add_option("--exclude", ev.exclude, "Exclusion list file");
  ev_cmd->add_option("--params", ev.params_dirs, "Params directory (repeat for several models)")
      ->required();
  ev_cmd->add_option("--plan", ev.plan, "loso | lofo | pooled");
  ev_cmd->add_option("--out", ev.out, "Output directory")->required();
  ev_cmd->add_option("--jobs", ev.jobs, "Parallel image workers");
  ev_cmd->add_option("--bootstrap-iterations", ev.bootstrap_iterations, "Bootstrap resamples");
  ev_cmd->add_option("--bootstrap-level", ev.bootstrap_level, "CI level");
  ev_cmd->add_option("--seed", ev.seed, "RNG seed");
  ev_cmd->add_flag("--no-auc", ev.no_auc, "Skip AUC (no density rasters)");

  DensityArgs dens;
  auto* dens_cmd = app.add_subcommand("density", "Export locally crossvalidated / pooled grids");
  dens_cmd->add_option("--fixations", dens.fixations, "Fixation CSV")->required();
  dens_cmd->add_option("--images", dens.images, "Image metadata JSON")->required();
  dens_cmd->add_option("--exclude", dens.exclude, "Exclusion list file");
  dens_cmd->add_option("--params", dens.params, "Params directory")->required();
  dens_cmd->add_option("--kind", dens.kind, "loso | pooled");
  dens_cmd->add_option("--radius", dens.radius, "RBF radius in px (0 = derive)");
  dens_cmd->add_option("--out", dens.out, "Output directory")->required();
  dens_cmd->add_option("--jobs", dens.jobs, "Parallel image workers");

  RenderArgs ren;
  auto* ren_cmd = app.add_subcommand("render", "Heatmap + contour overlay PNG");
  ren_cmd->add_option("--grid", ren.grid, "FDG1 density grid")->required();
  ren_cmd->add_option("--stimulus", ren.stimulus, "Stimulus PPM (P6)");
  ren_cmd->add_option("--out", ren.out, "Output PNG path")->required();
  ren_cmd->add_option("--saturation", ren.saturation, "Saturation level L");
  ren_cmd->add_option("--base", ren.base, "Contour base gamma");
  ren_cmd->add_option("--opacity", ren.opacity, "Overlay opacity");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--n-images", synth.n_images, "Number of images");
  synth_cmd->add_option("--width", synth.width, "Image width");
  synth_cmd->add_option("--height", synth.height, "Image height");
  synth_cmd->add_option("--subjects", synth.subjects, "Subjects per image");
  synth_cmd->add_option("--fixations", synth.fixations, "Fixations per subject");
  synth_cmd->add_option("--blob", synth.blobs, "Gaussian blob: x,y,sigma,weight (repeatable)");
  synth_cmd->add_option("--floor", synth.floor, "Uniform floor weight");
  synth_cmd->add_option("--seed", synth.seed, "RNG seed");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Improvement quantiles and parameter extremes");
  rep_cmd->add_option("--results-a", rep.results_a, "Baseline results JSONL")->required();
  rep_cmd->add_option("--results-b", rep.results_b, "Comparison results JSONL")->required();
  rep_cmd->add_option("--quantiles", rep.quantiles, "Comma list of quantiles");
  rep_cmd->add_option("--params", rep.params, "Params directory for extremes listing");
  rep_cmd->add_option("--extremes", rep.extremes, "Images listed per extreme");
  rep_cmd->add_option("--out", rep.out, "Output directory")->required();

  CenterBiasArgs cb;
  auto* cb_cmd = app.add_subcommand("centerbias", "Fit and rasterize the center bias");
  cb_cmd->add_option("--fixations", cb.fixations, "Fixation CSV")->required();
  cb_cmd->add_option("--images", cb.images, "Image metadata JSON")->required();
  cb_cmd->add_option("--exclude", cb.exclude, "Exclusion list file");
  cb_cmd->add_option("--holdout", cb.holdout, "Image to hold out");
  cb_cmd->add_option("--width", cb.width, "Raster width (default: holdout image)");
  cb_cmd->add_option("--height", cb.height, "Raster height");
  cb_cmd->add_option("--out", cb.out, "Output FDG1 path")->required();

  ConvertArgs conv;
  auto* conv_cmd = app.add_subcommand("convert-grid", "Convert text grids to FDG1 and back");
  conv_cmd->add_option("--in", conv.in, "Input path")->required();
  conv_cmd->add_option("--out", conv.out, "Output path")->required();
  conv_cmd->add_flag("--to-text", conv.to_text, "FDG1 -> text instead of text -> FDG1");
  conv_cmd->add_flag("--log", conv.log_space, "Store the output grid in log space");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (fit_cmd->parsed()) cmd_fit(fit);
    else if (ev_cmd->parsed()) cmd_evaluate(ev);
    else if (dens_cmd->parsed()) cmd_density(dens);
    else if (ren_cmd->parsed()) cmd_render(ren);
    else if (synth_cmd->parsed()) cmd_synth(synth);
    else if (rep_cmd->parsed()) cmd_report(rep);
    else if (cb_cmd->parsed()) cmd_centerbias(cb);
    else if (conv_cmd->parsed()) cmd_convert_grid(conv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
