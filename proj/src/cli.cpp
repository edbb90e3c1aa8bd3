#include "rga/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "rga/errors.hpp"
#include "rga/fixtures.hpp"
#include "rga/io.hpp"
#include "rga/oracle.hpp"
#include "rga/regions.hpp"
#include "rga/rng.hpp"

namespace rga::cli {

std::string to_string(Method m) {
  switch (m) {
    case Method::RGA: return "rga";
    case Method::MIM: return "mim";
    case Method::DIM: return "dim";
    case Method::Noise: return "noise";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "rga") return Method::RGA;
  if (s == "mim") return Method::MIM;
  if (s == "dim") return Method::DIM;
  if (s == "noise") return Method::Noise;
  throw ConfigError("unknown method '" + s + "' (expected rga|mim|dim|noise)");
}

namespace {

std::string norm_mode_name(ad::NormMode m) {
  return m == ad::NormMode::NormProduct ? "norm_product" : "squared_norm_product";
}

ad::NormMode norm_mode_from(const std::string& s) {
  if (s == "norm_product") return ad::NormMode::NormProduct;
  if (s == "squared_norm_product") return ad::NormMode::SquaredNormProduct;
  throw ConfigError("unknown norm_mode '" + s + "' (expected norm_product|squared_norm_product)");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

/// Runs fn(i) for i in [0, n) on up to thread_count(n) workers. Exceptions
/// are caught per item and returned as messages.
template <typename Fn>
std::vector<std::string> parallel_for(std::size_t n, Fn fn) {
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned t = thread_count(n);
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < t; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return errors;
}

json vec_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<Image> load_pool(const std::vector<fs::path>& paths) {
  std::vector<Image> out;
  for (const auto& p : expand_inputs(paths)) out.push_back(io::read_png(p));
  return out;
}

int report_errors(const std::vector<fs::path>& files, const std::vector<std::string>& errors, std::ostream& log,
                  json* sink = nullptr) {
  int count = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    ++count;
    log << "error: " << files[i].string() << ": " << errors[i] << '\n';
    if (sink) sink->push_back({{"file", files[i].filename().string()}, {"error", errors[i]}});
  }
  return count;
}

}  // namespace

void RunConfig::validate() const {
  attack.validate();
  if (victim.kind != "toy" && victim.kind != "oracle")
    throw ConfigError("victim.kind must be toy or oracle, got '" + victim.kind + "'");
  if (victim.kind == "oracle" && victim.command.empty()) throw ConfigError("victim.command is required for oracle");
  if (victim.min_area < 1) throw ConfigError("victim.min_area must be >= 1");
  if (victim.timeout_ms < 1) throw ConfigError("victim.timeout_ms must be >= 1");
  for (const auto& p : inputs)
    if (!fs::exists(p)) throw ConfigError("input does not exist: " + p.string());
  if (attack.target == TargetKind::SampleImage && sample_pool.empty())
    throw ConfigError("target sample_image needs a nonempty sample_pool");
  if (sweep) {
    static const std::set<std::string> names{"epsilon", "T", "gamma", "n_dilate"};
    if (!names.count(sweep->parameter))
      throw ConfigError("sweep.parameter must be one of epsilon|T|gamma|n_dilate, got '" + sweep->parameter + "'");
    if (sweep->values.empty()) throw ConfigError("sweep.values must be nonempty");
    for (double v : sweep->values) {
      const bool integral = std::floor(v) == v;
      if (sweep->parameter == "epsilon" && !(v >= 0.0 && v <= 1.0))
        throw ConfigError("sweep: epsilon values must lie in [0, 1]");
      if (sweep->parameter == "T" && !(integral && v >= 1.0)) throw ConfigError("sweep: T values must be integers >= 1");
      if (sweep->parameter == "gamma" && !(v > 0.0 && v <= 1.0)) throw ConfigError("sweep: gamma values must lie in (0, 1]");
      if (sweep->parameter == "n_dilate" && !(integral && v >= 0.0))
        throw ConfigError("sweep: n_dilate values must be integers >= 0");
    }
  }
}

RunConfig config_from_json(const json& j, const fs::path& base) {
  reject_unknown(j,
                 {"schema_version", "inputs", "output_dir", "adversarial_dir", "method", "use_rgm", "quantize", "attack",
                  "sad", "transform", "victim", "sample_pool", "sweep"},
                 "config");
  if (j.contains("schema_version") && j["schema_version"] != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + j["schema_version"].dump());
  RunConfig c;
  std::vector<std::string> paths;
  read(j, "inputs", paths, "config");
  for (const auto& p : paths) c.inputs.push_back(resolve(base, p));
  if (j.contains("output_dir")) c.output_dir = resolve(base, j["output_dir"].get<std::string>());
  if (j.contains("adversarial_dir")) c.adversarial_dir = resolve(base, j["adversarial_dir"].get<std::string>());
  if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
  read(j, "use_rgm", c.use_rgm, "config");
  read(j, "quantize", c.quantize, "config");
  paths.clear();
  read(j, "sample_pool", paths, "config");
  for (const auto& p : paths) c.sample_pool.push_back(resolve(base, p));

  if (j.contains("attack")) {
    const json& a = j["attack"];
    reject_unknown(a,
                   {"epsilon", "alpha", "iterations", "mu", "lambda", "seed", "target", "norm_mode",
                    "grad_normalization"},
                   "attack");
    auto& k = c.attack;
    read(a, "epsilon", k.epsilon, "attack");
    read(a, "alpha", k.alpha, "attack");
    read(a, "iterations", k.iterations, "attack");
    read(a, "mu", k.mu, "attack");
    read(a, "lambda", k.lambda, "attack");
    read(a, "seed", k.seed, "attack");
    if (a.contains("target")) k.target = target_kind_from_string(a["target"].get<std::string>());
    if (a.contains("norm_mode")) k.norm_mode = norm_mode_from(a["norm_mode"].get<std::string>());
    if (a.contains("grad_normalization")) {
      const auto s = a["grad_normalization"].get<std::string>();
      if (s == "none") k.grad_normalization = GradNormalization::None;
      else if (s == "l1") k.grad_normalization = GradNormalization::L1;
      else throw ConfigError("attack.grad_normalization must be none or l1");
    }
  }
  if (j.contains("sad")) {
    const json& s = j["sad"];
    reject_unknown(s, {"gamma", "n_dilate", "seed", "order"}, "sad");
    read(s, "gamma", c.attack.sad.gamma, "sad");
    read(s, "n_dilate", c.attack.sad.n_dilate, "sad");
    read(s, "seed", c.attack.sad.seed, "sad");
    if (s.contains("order")) {
      const auto o = s["order"].get<std::string>();
      if (o == "given") c.attack.sad.order = MaskOrder::Given;
      else if (o == "area_desc") c.attack.sad.order = MaskOrder::AreaDescending;
      else throw ConfigError("sad.order must be given or area_desc");
    }
  }
  if (j.contains("transform")) {
    const json& t = j["transform"];
    reject_unknown(t, {"max_translate_frac", "max_rotate_rad", "scale_range", "si_scales", "dim_prob", "dim_pad_max_frac"},
                   "transform");
    auto& k = c.attack.transform;
    read(t, "max_translate_frac", k.max_translate_frac, "transform");
    read(t, "max_rotate_rad", k.max_rotate_rad, "transform");
    if (t.contains("scale_range")) {
      std::vector<double> r;
      read(t, "scale_range", r, "transform");
      if (r.size() != 2) throw ConfigError("transform.scale_range must be [lo, hi]");
      k.scale_lo = r[0];
      k.scale_hi = r[1];
    }
    read(t, "si_scales", k.si_scales, "transform");
    read(t, "dim_prob", k.dim_prob, "transform");
    read(t, "dim_pad_max_frac", k.dim_pad_max_frac, "transform");
  }
  if (j.contains("victim")) {
    const json& v = j["victim"];
    reject_unknown(v, {"kind", "seed", "min_area", "command", "timeout_ms", "segmenter_seed"}, "victim");
    read(v, "kind", c.victim.kind, "victim");
    read(v, "seed", c.victim.seed, "victim");
    read(v, "min_area", c.victim.min_area, "victim");
    read(v, "command", c.victim.command, "victim");
    read(v, "timeout_ms", c.victim.timeout_ms, "victim");
    if (v.contains("segmenter_seed")) c.victim.segmenter_seed = v["segmenter_seed"].get<std::uint64_t>();
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    reject_unknown(s, {"parameter", "values"}, "sweep");
    SweepSpec spec;
    read(s, "parameter", spec.parameter, "sweep");
    read(s, "values", spec.values, "sweep");
    c.sweep = spec;
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& a = c.attack;
  json j{{"schema_version", kSchemaVersion},
         {"method", to_string(c.method)},
         {"use_rgm", c.use_rgm},
         {"quantize", c.quantize},
         {"attack",
          {{"epsilon", a.epsilon},
           {"alpha", a.alpha},
           {"iterations", a.iterations},
           {"mu", a.mu},
           {"lambda", a.lambda},
           {"seed", a.seed},
           {"target", rga::to_string(a.target)},
           {"norm_mode", norm_mode_name(a.norm_mode)},
           {"grad_normalization", a.grad_normalization == GradNormalization::L1 ? "l1" : "none"}}},
         {"sad",
          {{"gamma", a.sad.gamma},
           {"n_dilate", a.sad.n_dilate},
           {"seed", a.sad.seed},
           {"order", a.sad.order == MaskOrder::Given ? "given" : "area_desc"}}},
         {"transform",
          {{"max_translate_frac", a.transform.max_translate_frac},
           {"max_rotate_rad", a.transform.max_rotate_rad},
           {"scale_range", {a.transform.scale_lo, a.transform.scale_hi}},
           {"si_scales", a.transform.si_scales},
           {"dim_prob", a.transform.dim_prob},
           {"dim_pad_max_frac", a.transform.dim_pad_max_frac}}}};
  json v{{"kind", c.victim.kind}, {"min_area", c.victim.min_area}};
  if (c.victim.kind == "toy") {
    v["seed"] = c.victim.seed;
  } else {
    v["command"] = c.victim.command;
    v["timeout_ms"] = c.victim.timeout_ms;
    if (c.victim.segmenter_seed) v["segmenter_seed"] = *c.victim.segmenter_seed;
  }
  j["victim"] = v;
  if (c.sweep) j["sweep"] = {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  return j;
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::set<fs::path> files;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".png") files.insert(e.path());
    } else {
      files.insert(p);
    }
  }
  return {files.begin(), files.end()};
}

std::shared_ptr<const VictimModel> make_victim(const VictimSpec& spec) {
  if (spec.kind == "toy") return std::make_shared<ToyVictim>(spec.seed, spec.min_area);
  if (spec.kind == "oracle") {
    std::shared_ptr<const VictimModel> seg;
    if (spec.segmenter_seed) seg = std::make_shared<ToyVictim>(*spec.segmenter_seed, spec.min_area);
    return std::make_shared<oracle::OracleClient>(
        std::make_unique<oracle::SidecarProcess>(spec.command, std::chrono::milliseconds(spec.timeout_ms)), seg);
  }
  throw ConfigError("unknown victim kind '" + spec.kind + "'");
}

AttackConfig per_image_config(const AttackConfig& base, std::size_t index) {
  AttackConfig c = base;
  c.seed = derive_seed(base.seed, index);
  c.sad.seed = derive_seed(base.sad.seed, index);
  return c;
}

AttackResult run_method(const VictimModel& victim, const Image& x, const AttackConfig& cfg, Method method,
                        bool use_rgm, const std::vector<Image>* sample_pool) {
  switch (method) {
    case Method::RGA: return rga_attack(victim, x, cfg, sample_pool);
    case Method::MIM: return mim_attack(victim, x, cfg, use_rgm, sample_pool);
    case Method::DIM: return dim_attack(victim, x, cfg, use_rgm, sample_pool);
    case Method::Noise: {
      Rng rng(derive_seed(cfg.seed, 4));
      return noise_baseline(x, cfg.epsilon, rng);
    }
  }
  throw ConfigError("unknown method");
}

AttackResult attack_image(const VictimModel& victim, const Image& x, const AttackConfig& cfg, Method method,
                          bool use_rgm, bool quantize, const std::vector<Image>* sample_pool) {
  const io::Padded padded = io::reflect_pad(x);
  AttackResult r = run_method(victim, padded.image, cfg, method, use_rgm, sample_pool);
  Image adv = io::crop(r.adversarial, padded.height, padded.width);
  if (quantize) adv = quantize_8bit(adv);
  r.delta = Tensor(x.shape(), adv.array() - x.array());
  r.adversarial = std::move(adv);
  if (r.rgm_used) r.rgm_used->pixels = io::crop(r.rgm_used->pixels, padded.height, padded.width);
  return r;
}

EvalRecord evaluate_image(const VictimModel& victim, const Image& clean, const Image& adversarial) {
  if (!(clean.shape() == adversarial.shape()))
    throw DimensionError("evaluate: clean " + clean.shape().str() + " vs adversarial " + adversarial.shape().str());
  return evaluate_attack(victim, io::reflect_pad(clean).image, io::reflect_pad(adversarial).image);
}

json to_json(const EvalRecord& r) {
  return {{"miou", r.miou},
          {"miou_std", r.miou_std},
          {"std_kind", "population"},
          {"asr50", r.asr50},
          {"asr10", r.asr10},
          {"n_masks", r.n_masks},
          {"per_mask_iou", r.per_mask_iou}};
}

unsigned thread_count(std::size_t jobs) {
  unsigned t = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RGA_FORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) t = std::min<unsigned>(t, static_cast<unsigned>(v));
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(t, jobs)));
}

int cmd_rgm(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto files = expand_inputs(cfg.inputs);
  const auto victim = make_victim(cfg.victim);
  const auto errors = parallel_for(files.size(), [&](std::size_t i) {
    const Image x = io::read_png(files[i]);
    const io::Padded padded = io::reflect_pad(x);
    const MaskSet masks = victim->segment_everything(padded.image);
    if (masks.empty()) throw ContractError("victim returned no masks; no region-guided map can be built");
    SadConfig sad = cfg.attack.sad;
    sad.seed = derive_seed(cfg.attack.sad.seed, i);
    const RegionGuidedMap rgm = build_rgm(masks, sad);
    const std::string stem = stem_of(files[i]);
    io::write_png(cfg.output_dir / (stem + ".rgm.png"), io::crop(rgm.pixels, padded.height, padded.width));
    json index = json::array();
    for (std::size_t k = 0; k < masks.size(); ++k) {
      const BinaryMask m = io::crop(masks.masks[k], padded.height, padded.width);
      const std::string name = stem + ".mask" + std::to_string(k) + ".png";
      io::write_mask_png(cfg.output_dir / name, m);
      index.push_back({{"index", k}, {"file", name}, {"area", m.area()}});
    }
    json doc{{"schema_version", kSchemaVersion},
             {"image", files[i].filename().string()},
             {"height", x.dim(0)},
             {"width", x.dim(1)},
             {"sad_seed", sad.seed},
             {"gamma", sad.gamma},
             {"n_dilate", sad.n_dilate},
             {"grid_size", compute_grid_size(padded.image.dim(1), padded.image.dim(0), sad.gamma)},
             {"masks", index}};
    io::write_file_atomic(cfg.output_dir / (stem + ".masks.json"), doc.dump(2) + "\n");
  });
  return report_errors(files, errors, log);
}

int cmd_attack(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto files = expand_inputs(cfg.inputs);
  const auto victim = make_victim(cfg.victim);
  const auto pool = load_pool(cfg.sample_pool);
  const auto errors = parallel_for(files.size(), [&](std::size_t i) {
    const Image x = io::read_png(files[i]);
    const AttackConfig acfg = per_image_config(cfg.attack, i);
    const AttackResult r = attack_image(*victim, x, acfg, cfg.method, cfg.use_rgm, cfg.quantize, &pool);
    const std::string stem = stem_of(files[i]);
    io::write_png(cfg.output_dir / (stem + ".adv.png"), r.adversarial);
    io::write_png(cfg.output_dir / (stem + ".delta.png"), io::perturbation_visual(r.delta, acfg.epsilon));
    if (r.rgm_used) io::write_png(cfg.output_dir / (stem + ".rgm.png"), r.rgm_used->pixels);
    json trace{{"schema_version", kSchemaVersion},
               {"loss", vec_json(r.loss_trace)},
               {"grad_norm", vec_json(r.grad_norm_trace)},
               {"initial_loss", number_or_null(r.initial_loss)},
               {"final_loss", number_or_null(r.final_loss)}};
    io::write_file_atomic(cfg.output_dir / (stem + ".trace.json"), trace.dump(2) + "\n");
    json meta{{"schema_version", kSchemaVersion},
              {"image", files[i].filename().string()},
              {"image_index", i},
              {"height", x.dim(0)},
              {"width", x.dim(1)},
              {"attack_seed", acfg.seed},
              {"sad_seed", acfg.sad.seed},
              {"linf", r.delta.array().abs().maxCoeff()},
              {"n_source_masks", r.n_source_masks},
              {"rgm_used", r.rgm_used.has_value()},
              {"fallback_to_noise", r.fallback_to_noise},
              {"guidance_degenerate", r.guidance_degenerate},
              {"config", config_to_json(cfg)}};
    io::write_file_atomic(cfg.output_dir / (stem + ".meta.json"), meta.dump(2) + "\n");
  });
  return report_errors(files, errors, log);
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto files = expand_inputs(cfg.inputs);
  const auto victim = make_victim(cfg.victim);
  const fs::path adv_dir = cfg.adversarial_dir.empty() ? cfg.output_dir : cfg.adversarial_dir;
  std::vector<std::optional<EvalRecord>> records(files.size());
  std::vector<char> missing(files.size(), 0);
  const auto errors = parallel_for(files.size(), [&](std::size_t i) {
    const fs::path adv_path = adv_dir / (stem_of(files[i]) + ".adv.png");
    if (!fs::exists(adv_path)) {
      missing[i] = 1;
      return;
    }
    records[i] = evaluate_image(*victim, io::read_png(files[i]), io::read_png(adv_path));
  });
  json per_image = json::array(), missing_list = json::array(), error_list = json::array();
  std::vector<EvalRecord> pooled;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (missing[i]) {
      missing_list.push_back(stem_of(files[i]) + ".adv.png");
      log << "missing: " << (adv_dir / (stem_of(files[i]) + ".adv.png")).string() << '\n';
    }
    if (!records[i]) continue;
    pooled.push_back(*records[i]);
    json entry = to_json(*records[i]);
    entry["image"] = files[i].filename().string();
    per_image.push_back(entry);
  }
  const int n_errors = report_errors(files, errors, log, &error_list);
  json report{{"schema_version", kSchemaVersion},
              {"pooled", to_json(pool_records(pooled))},
              {"images", per_image},
              {"missing", missing_list},
              {"errors", error_list}};
  io::write_file_atomic(cfg.output_dir / "evaluation.json", report.dump(2) + "\n");
  const EvalRecord p = pool_records(pooled);
  log << "pooled mIoU " << p.miou << " ± " << p.miou_std << "  ASR@50 " << p.asr50 << "  ASR@10 " << p.asr10
      << "  masks " << p.n_masks << '\n';
  return n_errors;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (!cfg.sweep) throw ConfigError("sweep command needs a sweep section");
  const auto files = expand_inputs(cfg.inputs);
  const auto victim = make_victim(cfg.victim);
  const auto pool = load_pool(cfg.sample_pool);
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(io::read_png(f));

  json rows = json::array();
  std::ostringstream csv;
  csv << "param_value,miou,asr50,asr10\n" << std::setprecision(17);
  int n_errors = 0;
  for (double v : cfg.sweep->values) {
    AttackConfig base = cfg.attack;
    const std::string& p = cfg.sweep->parameter;
    if (p == "epsilon") {
      base.epsilon = v;
      if (v > 0.0) base.alpha = std::min(base.alpha, v);
    } else if (p == "T") {
      base.iterations = static_cast<int>(v);
    } else if (p == "gamma") {
      base.sad.gamma = v;
    } else {
      base.sad.n_dilate = static_cast<int>(v);
    }
    std::vector<std::optional<EvalRecord>> recs(images.size());
    const auto errors = parallel_for(images.size(), [&](std::size_t i) {
      const AttackResult r =
          attack_image(*victim, images[i], per_image_config(base, i), cfg.method, cfg.use_rgm, cfg.quantize, &pool);
      recs[i] = evaluate_image(*victim, images[i], r.adversarial);
    });
    n_errors += report_errors(files, errors, log);
    std::vector<EvalRecord> ok;
    for (auto& r : recs)
      if (r) ok.push_back(*r);
    const EvalRecord pooled = pool_records(ok);
    json row = to_json(pooled);
    row.erase("per_mask_iou");
    row["param_value"] = v;
    rows.push_back(row);
    csv << v << ',' << pooled.miou << ',' << pooled.asr50 << ',' << pooled.asr10 << '\n';
    log << p << "=" << v << "  mIoU " << pooled.miou << "  ASR@50 " << pooled.asr50 << '\n';
  }
  json report{{"schema_version", kSchemaVersion},
              {"parameter", cfg.sweep->parameter},
              {"method", to_string(cfg.method)},
              {"rows", rows},
              {"config", config_to_json(cfg)}};
  io::write_file_atomic(cfg.output_dir / "sweep.json", report.dump(2) + "\n");
  io::write_file_atomic(cfg.output_dir / "sweep.csv", csv.str());
  return n_errors;
}

int cmd_fixtures(const fs::path& out_dir, std::ostream& log) {
  for (const auto& f : fixture_suite()) {
    io::write_png(out_dir / (f.name + ".png"), f.image);
    log << f.name << " " << f.image.dim(0) << "x" << f.image.dim(1) << '\n';
  }
  return 0;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Region-guided adversarial attacks on promptable segmenters"};
  app.require_subcommand(1);
  std::string config_path, target, victim, out, method;
  double epsilon = 0.0;
  int iters = 0;
  std::uint64_t seed = 0;

  struct Overrides {
    CLI::Option *epsilon, *iters, *seed, *target, *victim, *out, *method;
  };
  std::vector<std::pair<CLI::App*, Overrides>> subs;
  for (const char* name : {"rgm", "attack", "evaluate", "sweep"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    Overrides o{sub->add_option("--epsilon", epsilon, "perturbation bound in [0,1]"),
                sub->add_option("--iters", iters, "iterations T"),
                sub->add_option("--seed", seed, "attack seed"),
                sub->add_option("--target", target, "rgm|black|white|random_noise|sample_image"),
                sub->add_option("--victim", victim, "toy[:SEED] or oracle:COMMAND"),
                sub->add_option("--out", out, "output directory"),
                sub->add_option("--method", method, "rga|mim|dim|noise")};
    subs.emplace_back(sub, o);
  }
  std::string fixtures_out = "fixtures";
  CLI::App* fx = app.add_subcommand("fixtures", "write the built-in fixture images");
  fx->add_option("--out", fixtures_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (fx->parsed()) return cmd_fixtures(fixtures_out, std::cout) == 0 ? 0 : 1;
    for (auto& [sub, o] : subs) {
      if (!sub->parsed()) continue;
      RunConfig cfg = load_config(config_path);
      if (o.epsilon->count()) cfg.attack.epsilon = epsilon;
      if (o.iters->count()) cfg.attack.iterations = iters;
      if (o.seed->count()) cfg.attack.seed = seed;
      if (o.target->count()) cfg.attack.target = target_kind_from_string(target);
      if (o.out->count()) cfg.output_dir = out;
      if (o.method->count()) cfg.method = method_from_string(method);
      if (o.victim->count()) {
        if (victim == "toy" || victim.rfind("toy:", 0) == 0) {
          cfg.victim.kind = "toy";
          if (victim.size() > 4) cfg.victim.seed = std::stoull(victim.substr(4));
        } else if (victim.rfind("oracle:", 0) == 0) {
          cfg.victim.kind = "oracle";
          cfg.victim.command = victim.substr(7);
        } else {
          throw ConfigError("--victim must be toy[:SEED] or oracle:COMMAND");
        }
      }
      const std::string name = sub->get_name();
      int errors = 0;
      if (name == "rgm") errors = cmd_rgm(cfg, std::cerr);
      else if (name == "attack") errors = cmd_attack(cfg, std::cerr);
      else if (name == "evaluate") errors = cmd_evaluate(cfg, std::cerr);
      else errors = cmd_sweep(cfg, std::cerr);
      return errors == 0 ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace rga::cli
