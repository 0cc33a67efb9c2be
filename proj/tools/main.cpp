// Command-line front end for the two-stage depth pose pipeline. Every
// artifact-producing command writes the settings it actually ran with next to
// its output, and training / inference commands stream JSONL event logs so
// runs can be compared after the fact.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vpx/cropset.hpp"
#include "vpx/heatmap.hpp"
#include "vpx/metrics.hpp"
#include "vpx/network.hpp"
#include "vpx/pipeline.hpp"
#include "vpx/profile.hpp"
#include "vpx/synth.hpp"
#include "vpx/tdf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vpx;

namespace {

// Bad settings and inconsistent inputs exit with 2; runtime failures with 1.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Settings: profile + training knobs, overridable from a JSON file and
// repeated --set key=value flags. Unknown keys are rejected.
// ---------------------------------------------------------------------------

struct Settings {
  Profile profile;
  TrainConfig train;
};

double as_number(const std::string& key, const json& v) {
  if (!v.is_number()) throw config_error("setting '" + key + "' expects a number");
  return v.get<double>();
}

int as_int(const std::string& key, const json& v) {
  double d = as_number(key, v);
  if (d != static_cast<double>(static_cast<long long>(d)))
    throw config_error("setting '" + key + "' expects an integer");
  return static_cast<int>(d);
}

void apply_profile_key(Profile& p, const std::string& key, const json& v) {
  if (key == "pnet_input") p.pnet_input = as_int(key, v);
  else if (key == "pnet_margin") p.pnet_margin = as_int(key, v);
  else if (key == "heatmap_stride") p.heatmap_stride = as_int(key, v);
  else if (key == "stem_channels") p.stem_channels = as_int(key, v);
  else if (key == "hourglass_width") p.hourglass_width = as_int(key, v);
  else if (key == "hourglass_depth") p.hourglass_depth = as_int(key, v);
  else if (key == "sigma2d") p.sigma2d = as_number(key, v);
  else if (key == "grid_xy") p.grid_xy = as_int(key, v);
  else if (key == "grid_bins") p.grid_bins = as_int(key, v);
  else if (key == "grid_crop_bins") p.grid_crop_bins = as_int(key, v);
  else if (key == "bin_size_mm") p.bin_size_mm = as_number(key, v);
  else if (key == "sigma3d") p.sigma3d = as_number(key, v);
  else if (key == "vnet_div") p.vnet_div = as_int(key, v);
  else if (key == "holistic_xy") p.holistic_xy = as_int(key, v);
  else if (key == "synth_dims") p.synth_dims = as_int(key, v);
  else if (key == "synth_focal") p.synth_focal = as_number(key, v);
  else if (key == "bone_scale") p.bone_scale = as_number(key, v);
  else if (key == "depth_min_mm") p.depth_min_mm = as_number(key, v);
  else if (key == "depth_max_mm") p.depth_max_mm = as_number(key, v);
  else if (key == "noise_sigma_mm") p.noise_sigma_mm = as_number(key, v);
  else throw config_error("unknown setting 'profile." + key + "'");
}

void apply_train_key(TrainConfig& c, const std::string& key, const json& v) {
  if (key == "batch_size") c.batch_size = as_int(key, v);
  else if (key == "learning_rate") c.learning_rate = as_number(key, v);
  else if (key == "weight_decay") c.weight_decay = as_number(key, v);
  else if (key == "momentum") c.momentum = as_number(key, v);
  else if (key == "iterations") c.iterations = as_int(key, v);
  else if (key == "lr_step") c.lr_step = as_int(key, v);
  else if (key == "lr_decay") c.lr_decay = as_number(key, v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_number(key, v));
  else if (key == "validation_fraction") c.validation_fraction = as_number(key, v);
  else if (key == "log_every") c.log_every = as_int(key, v);
  else if (key == "eval_every") c.eval_every = as_int(key, v);
  else throw config_error("unknown setting '" + key + "'");
}

void apply_key(Settings& s, const std::string& key, const json& v) {
  const std::string prefix = "profile.";
  if (key.rfind(prefix, 0) == 0) apply_profile_key(s.profile, key.substr(prefix.size()), v);
  else apply_train_key(s.train, key, v);
}

struct Overrides {
  std::string profile_name = "tiny";
  std::string config_path;
  std::vector<std::string> sets;
};

// Resolution order: profile defaults, then the config file, then --set flags.
Settings resolve_settings(const Overrides& o) {
  Settings s;
  s.profile = Profile::by_name(o.profile_name);
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw config_error("cannot open config file " + o.config_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw config_error("config file " + o.config_path + ": " + e.what());
    }
    if (!doc.is_object()) throw config_error("config file must hold a JSON object");
    for (const auto& [key, value] : doc.items()) apply_key(s, key, value);
  }
  for (const std::string& kv : o.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw config_error("--set expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    json value = json::parse(kv.substr(eq + 1), nullptr, false);
    if (value.is_discarded()) throw config_error("setting '" + key + "' has unparseable value");
    apply_key(s, key, value);
  }
  return s;
}

void add_common_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--profile", o.profile_name, "resolution tier: paper or tiny")
      ->check(CLI::IsMember({"paper", "tiny"}))
      ->capture_default_str();
  cmd->add_option("--config", o.config_path, "JSON file of settings overrides");
  cmd->add_option("--set", o.sets,
                  "override one setting, key=value; profile knobs as profile.<name>");
}

// ---------------------------------------------------------------------------
// Run snapshots and event logs
// ---------------------------------------------------------------------------

json profile_json(const Profile& p) {
  return json{{"name", p.name},
              {"pnet_input", p.pnet_input},
              {"pnet_margin", p.pnet_margin},
              {"heatmap_stride", p.heatmap_stride},
              {"stem_channels", p.stem_channels},
              {"hourglass_width", p.hourglass_width},
              {"hourglass_depth", p.hourglass_depth},
              {"sigma2d", p.sigma2d},
              {"grid_xy", p.grid_xy},
              {"grid_bins", p.grid_bins},
              {"grid_crop_bins", p.grid_crop_bins},
              {"bin_size_mm", p.bin_size_mm},
              {"sigma3d", p.sigma3d},
              {"vnet_div", p.vnet_div},
              {"holistic_xy", p.holistic_xy},
              {"synth_dims", p.synth_dims},
              {"synth_focal", p.synth_focal},
              {"bone_scale", p.bone_scale},
              {"depth_min_mm", p.depth_min_mm},
              {"depth_max_mm", p.depth_max_mm},
              {"noise_sigma_mm", p.noise_sigma_mm}};
}

json train_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"momentum", c.momentum},
              {"iterations", c.iterations},
              {"lr_step", c.lr_step},
              {"lr_decay", c.lr_decay},
              {"seed", c.seed},
              {"validation_fraction", c.validation_fraction},
              {"log_every", c.log_every},
              {"eval_every", c.eval_every}};
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
  if (!out) throw std::runtime_error("failed writing " + path);
}

// Snapshot of the effective run next to its outputs.
void write_run_snapshot(const std::string& path, const std::string& command, const Settings& s,
                        json extra) {
  json doc{{"command", command}, {"profile", profile_json(s.profile)}, {"train", train_json(s.train)}};
  for (auto& [k, v] : extra.items()) doc[k] = v;
  write_text_file(path, doc.dump(2) + "\n");
}

struct JsonlLog {
  std::ofstream out;

  explicit JsonlLog(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw std::runtime_error("cannot write " + path);
  }
  void event(const json& j) {
    out << j.dump() << "\n";
    out.flush();
  }
};

TrainLog log_to(JsonlLog& log) {
  return [&log](const TrainEvent& e) {
    log.event(json{{"event", e.kind},
                   {"iteration", e.iteration},
                   {"loss", e.loss},
                   {"learning_rate", e.learning_rate},
                   {"wall_seconds", e.wall_seconds}});
  };
}

// ---------------------------------------------------------------------------
// Checked loaders
// ---------------------------------------------------------------------------

Dataset load_dataset_checked(const std::string& dir, const Profile& p) {
  Dataset ds = load_dataset(dir);
  if (ds.meta.profile != p.name)
    throw config_error("dataset " + dir + " uses profile '" + ds.meta.profile +
                       "'; rerun with --profile " + ds.meta.profile);
  return ds;
}

CropSet load_cropset_checked(const std::string& dir, const Profile& p) {
  CropSet set = load_cropset(dir);
  if (set.profile != p.name)
    throw config_error("crop set " + dir + " uses profile '" + set.profile +
                       "'; rerun with --profile " + set.profile);
  if (set.grid_xy != p.grid_xy || set.grid_bins != p.grid_bins)
    throw config_error("crop set " + dir + " grid does not match the active profile");
  return set;
}

Model load_model_checked(const std::string& path, const std::string& arch, const Profile& p) {
  CheckpointMeta meta = read_checkpoint_meta(path);
  if (meta.arch != arch)
    throw config_error(path + " holds a '" + meta.arch + "' model, expected '" + arch + "'");
  if (meta.profile != p.name)
    throw config_error(path + " was trained under profile '" + meta.profile +
                       "'; rerun with --profile " + meta.profile);
  return load_checkpoint(path, p);
}

void save_train_outputs(const std::string& out_dir, const std::string& stem,
                        const TrainResult& result) {
  save_checkpoint(out_dir + "/" + stem + "_final.tdf", result.model);
  Model best{result.model.spec, result.best_params};
  save_checkpoint(out_dir + "/" + stem + "_best.tdf", best);
}

json train_summary_json(const TrainResult& result) {
  double final_loss = result.curve.empty() ? 0.0 : result.curve.back().loss;
  return json{{"final_loss", final_loss},
              {"best_iteration", result.best_iteration},
              {"best_validation_loss", result.best_validation_loss},
              {"wall_seconds", result.wall_seconds}};
}

void print_train_summary(const std::string& what, const TrainResult& result) {
  std::ostringstream os;
  os << what << ": final loss ";
  double final_loss = result.curve.empty() ? 0.0 : result.curve.back().loss;
  os << final_loss;
  if (result.best_validation_loss >= 0.0)
    os << ", best validation loss " << result.best_validation_loss << " at iteration "
       << result.best_iteration;
  os << ", " << result.wall_seconds << "s";
  std::cout << os.str() << "\n";
}

// Shared --skip/--limit frame slicing for inference commands.
std::vector<const FrameData*> frame_slice(const Dataset& ds, int skip, int limit) {
  std::vector<const FrameData*> out;
  for (std::size_t i = static_cast<std::size_t>(skip); i < ds.frames.size(); ++i) {
    if (limit >= 0 && static_cast<int>(out.size()) >= limit) break;
    out.push_back(&ds.frames[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthArgs {
  Overrides common;
  std::string out;
  int frames = 100;
  std::uint64_t seed = 0;
  std::string skeleton = "humanoid15";
  double angle_scale = 1.0;
};

void cmd_synth(const SynthArgs& a) {
  Settings s = resolve_settings(a.common);
  Dataset ds = generate_dataset(s.profile, a.skeleton, a.frames, a.seed, a.angle_scale);
  fs::create_directories(a.out);
  save_dataset(a.out, ds);
  write_run_snapshot(a.out + "/run.json", "synth", s,
                     json{{"frames", a.frames},
                          {"seed", a.seed},
                          {"skeleton", a.skeleton},
                          {"angle_scale", a.angle_scale},
                          {"out", a.out}});
  std::cout << "wrote " << ds.frames.size() << " frames (" << ds.meta.width << "x"
            << ds.meta.height << ", " << ds.meta.joint_names.size() << " joints) to " << a.out
            << "\n";
}

struct TrainArgs {
  Overrides common;
  std::string data;  // dataset dir (pnet, holistic) or crop dir (vnet, 2d ablations)
  std::string out;
};

void cmd_train_pnet(const TrainArgs& a) {
  Settings s = resolve_settings(a.common);
  Dataset ds = load_dataset_checked(a.data, s.profile);
  fs::create_directories(a.out);
  JsonlLog log(a.out + "/log.jsonl");
  TrainResult result = train_pnet(ds, s.profile, s.train, log_to(log));
  save_train_outputs(a.out, "pnet", result);
  write_run_snapshot(a.out + "/run.json", "train-pnet", s,
                     json{{"data", a.data}, {"out", a.out}, {"result", train_summary_json(result)}});
  print_train_summary("pnet", result);
}

struct GenCropsArgs {
  Overrides common;
  std::string data;
  std::string out;
  std::string locate = "pnet";
  std::string pnet_path;
  int jitter_px = 3;
  std::uint64_t jitter_seed = 7;
};

Locator make_locator(const std::string& mode, const std::string& pnet_path, const Model** model_out,
                     const Profile& p, const DatasetMeta& meta, int jitter_px,
                     std::uint64_t jitter_seed, std::vector<Model>& keep_alive) {
  if (mode == "gt") return gt_locator();
  if (mode == "jitter") return jitter_locator(jitter_px, jitter_seed);
  if (mode == "pnet") {
    if (pnet_path.empty()) throw config_error("--locate pnet needs --pnet CHECKPOINT");
    keep_alive.push_back(load_model_checked(pnet_path, "pnet", p));
    if (model_out) *model_out = &keep_alive.back();
    return pnet_locator(keep_alive.back(), p, meta);
  }
  throw config_error("unknown locator '" + mode + "'");
}

void cmd_gen_crops(const GenCropsArgs& a) {
  Settings s = resolve_settings(a.common);
  Dataset ds = load_dataset_checked(a.data, s.profile);
  std::vector<Model> keep_alive;
  Locator locate = make_locator(a.locate, a.pnet_path, nullptr, s.profile, ds.meta, a.jitter_px,
                                a.jitter_seed, keep_alive);
  CropGenStats stats;
  CropSet set = generate_crops(ds, s.profile, locate, &stats);
  fs::create_directories(a.out);
  save_cropset(a.out, set);

  json fallback = json::object();
  for (std::size_t j = 0; j < stats.fallback_per_joint.size(); ++j)
    fallback[set.joint_names[j]] = stats.fallback_per_joint[j];
  write_run_snapshot(a.out + "/run.json", "gen-crops", s,
                     json{{"data", a.data},
                          {"out", a.out},
                          {"locate", a.locate},
                          {"records", stats.records},
                          {"fallback_per_joint", fallback}});
  std::int64_t fallbacks = 0;
  for (auto n : stats.fallback_per_joint) fallbacks += n;
  std::cout << "wrote " << set.records.size() << " crops to " << a.out << " (" << fallbacks
            << " with borrowed depth anchors)\n";
}

void cmd_train_vnet(const TrainArgs& a) {
  Settings s = resolve_settings(a.common);
  CropSet crops = load_cropset_checked(a.data, s.profile);
  fs::create_directories(a.out);
  JsonlLog log(a.out + "/log.jsonl");
  TrainResult result = train_vnet(crops, s.profile, s.train, log_to(log));
  save_train_outputs(a.out, "vnet", result);
  write_run_snapshot(a.out + "/run.json", "train-vnet", s,
                     json{{"crops", a.data}, {"out", a.out}, {"result", train_summary_json(result)}});
  print_train_summary("vnet", result);
}

struct InferArgs {
  Overrides common;
  std::string data;
  std::string pnet_path;
  std::string vnet_path;
  std::string out;
  int skip = 0;
  int limit = -1;
};

void write_predictions_with_log(const std::string& out_path, const std::vector<FramePred>& preds,
                                const std::vector<double>& frame_seconds) {
  write_predictions(out_path, preds);
  JsonlLog log(out_path + ".log.jsonl");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    log.event(json{{"event", "frame"},
                   {"frame_id", preds[i].frame_id},
                   {"wall_seconds", frame_seconds[i]}});
    total += frame_seconds[i];
  }
  double mean = preds.empty() ? 0.0 : total / static_cast<double>(preds.size());
  log.event(json{{"event", "summary"},
                 {"frames", preds.size()},
                 {"wall_seconds", total},
                 {"mean_frame_seconds", mean}});
  std::cout << "wrote " << preds.size() << " frame predictions to " << out_path << " ("
            << mean << "s/frame)\n";
}

// Runs per-frame inference over the slice, timing each frame.
std::vector<FramePred> run_inference(const std::vector<const FrameData*>& frames,
                                     const std::function<FramePred(const FrameData&)>& infer,
                                     std::vector<double>* frame_seconds) {
  std::vector<FramePred> preds;
  preds.reserve(frames.size());
  for (const FrameData* f : frames) {
    auto t0 = std::chrono::steady_clock::now();
    preds.push_back(infer(*f));
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    frame_seconds->push_back(dt.count());
  }
  return preds;
}

void cmd_infer(const InferArgs& a) {
  Settings s = resolve_settings(a.common);
  Dataset ds = load_dataset_checked(a.data, s.profile);
  Model pnet = load_model_checked(a.pnet_path, "pnet", s.profile);
  Model vnet = load_model_checked(a.vnet_path, "vnet", s.profile);
  int joints = static_cast<int>(ds.meta.joint_names.size());
  if (pnet.spec.num_joints != joints || vnet.spec.num_joints != joints)
    throw config_error("checkpoint joint count does not match the dataset");

  PnetFn pnet_fn = pnet_from_model(pnet);
  VnetFn vnet_fn = vnet_from_model(vnet);
  auto frames = frame_slice(ds, a.skip, a.limit);
  std::vector<double> frame_seconds;
  auto preds = run_inference(
      frames,
      [&](const FrameData& f) { return infer_frame(f, ds.meta, s.profile, pnet_fn, vnet_fn); },
      &frame_seconds);
  fs::create_directories(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string());
  write_predictions_with_log(a.out, preds, frame_seconds);
  write_run_snapshot(a.out + ".run.json", "infer", s,
                     json{{"data", a.data},
                          {"pnet", a.pnet_path},
                          {"vnet", a.vnet_path},
                          {"out", a.out},
                          {"skip", a.skip},
                          {"limit", a.limit},
                          {"frames", preds.size()}});
}

struct EvalArgs {
  Overrides common;
  std::string data;
  std::string preds;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  Settings s = resolve_settings(a.common);
  Dataset ds = load_dataset_checked(a.data, s.profile);
  std::vector<FramePred> preds = read_predictions(a.preds);
  EvalReport report = evaluate_predictions(preds, ds);
  std::cout << eval_report_text(report);
  if (!a.out.empty()) {
    write_text_file(a.out, eval_report_json(report) + "\n");
    write_run_snapshot(a.out + ".run.json", "eval", s,
                       json{{"data", a.data}, {"preds", a.preds}, {"out", a.out}});
    std::cout << "wrote report to " << a.out << "\n";
  }
}

struct AblateArgs {
  Overrides common;
  std::string kind;  // 2d-co | 2d-vl | holistic
  std::string crops;
  std::string data;
  std::string out;
  std::string locate = "gt";
  std::string pnet_path;
  std::string eval_data;
  int skip = 0;
  int limit = -1;
};

// Trains one reduced variant and optionally runs it end to end on a dataset.
// The 2D variants train on the same crop sets as the volumetric model; the
// holistic variant voxelizes whole frames around 2D estimates.
void cmd_ablate(const AblateArgs& a) {
  Settings s = resolve_settings(a.common);
  fs::create_directories(a.out);
  JsonlLog log(a.out + "/log.jsonl");

  std::string stem;
  TrainResult result;
  std::vector<Model> keep_alive;
  if (a.kind == "2d-co" || a.kind == "2d-vl") {
    if (a.crops.empty()) throw config_error("ablate " + a.kind + " needs --crops DIR");
    CropSet crops = load_cropset_checked(a.crops, s.profile);
    stem = a.kind == "2d-co" ? "co2d" : "vl2d";
    result = a.kind == "2d-co" ? train_co2d(crops, s.profile, s.train, log_to(log))
                               : train_vl2d(crops, s.profile, s.train, log_to(log));
  } else if (a.kind == "holistic") {
    if (a.data.empty()) throw config_error("ablate holistic needs --data DIR");
    Dataset ds = load_dataset_checked(a.data, s.profile);
    Locator locate =
        make_locator(a.locate, a.pnet_path, nullptr, s.profile, ds.meta, 0, 0, keep_alive);
    auto samples = build_holistic_samples(ds, s.profile, locate);
    stem = "holistic";
    result = train_holistic(samples, s.profile, s.train, log_to(log));
  } else {
    throw config_error("unknown ablation '" + a.kind + "'");
  }
  save_train_outputs(a.out, stem, result);
  print_train_summary(stem, result);

  json extra{{"kind", a.kind},      {"crops", a.crops}, {"data", a.data},
             {"out", a.out},        {"locate", a.locate}, {"result", train_summary_json(result)}};

  if (!a.eval_data.empty()) {
    Dataset eval_ds = load_dataset_checked(a.eval_data, s.profile);
    Model best{result.model.spec, result.best_params};
    std::function<FramePred(const FrameData&)> infer;
    if (a.kind == "holistic") {
      Locator locate =
          make_locator(a.locate, a.pnet_path, nullptr, s.profile, eval_ds.meta, 0, 0, keep_alive);
      infer = [&, locate](const FrameData& f) {
        return infer_frame_holistic(f, eval_ds.meta, s.profile, locate, best);
      };
    } else {
      if (a.pnet_path.empty())
        throw config_error("ablate " + a.kind + " --eval-data needs --pnet CHECKPOINT");
      keep_alive.push_back(load_model_checked(a.pnet_path, "pnet", s.profile));
      const Model& pnet = keep_alive.back();
      PnetFn pnet_fn = pnet_from_model(pnet);
      if (a.kind == "2d-vl") {
        infer = [&, pnet_fn](const FrameData& f) {
          return infer_frame_vl2d(f, eval_ds.meta, s.profile, pnet_fn, best);
        };
      } else {
        infer = [&, pnet_fn](const FrameData& f) {
          return infer_frame_co2d(f, eval_ds.meta, s.profile, pnet_fn, best);
        };
      }
    }
    auto frames = frame_slice(eval_ds, a.skip, a.limit);
    std::vector<double> frame_seconds;
    auto preds = run_inference(frames, infer, &frame_seconds);
    std::string preds_path = a.out + "/preds.jsonl";
    write_predictions_with_log(preds_path, preds, frame_seconds);
    EvalReport report = evaluate_predictions(preds, eval_ds);
    write_text_file(a.out + "/report.json", eval_report_json(report) + "\n");
    std::cout << eval_report_text(report);
    extra["eval_data"] = a.eval_data;
    extra["report"] = "report.json";
  }
  write_run_snapshot(a.out + "/run.json", "ablate", s, extra);
}

struct ExportHeatmapsArgs {
  Overrides common;
  std::string data;
  int frame = 0;
  std::string pnet_path;
  std::string out;
};

// Dumps per-joint heatmap channels as PGM images: the training target by
// default, the model's prediction when a checkpoint is given.
void cmd_export_heatmaps(const ExportHeatmapsArgs& a) {
  Settings s = resolve_settings(a.common);
  Dataset ds = load_dataset_checked(a.data, s.profile);
  if (a.frame < 0 || a.frame >= static_cast<int>(ds.frames.size()))
    throw config_error("--frame out of range; dataset has " + std::to_string(ds.frames.size()) +
                       " frames");
  const FrameData& frame = ds.frames[static_cast<std::size_t>(a.frame)];
  int origin = s.profile.pnet_margin / 2;

  Tensor maps;
  if (a.pnet_path.empty()) {
    maps = pnet_target(frame.joints, s.profile, origin, origin);
  } else {
    Model pnet = load_model_checked(a.pnet_path, "pnet", s.profile);
    Tensor input = normalized_depth_crop(frame.depth, ds.meta.z_min_mm, ds.meta.z_max_mm, origin,
                                         origin, s.profile.pnet_input);
    PnetFn fn = pnet_from_model(pnet);
    maps = fn(input, origin, origin);
  }

  fs::create_directories(a.out);
  for (std::size_t j = 0; j < ds.meta.joint_names.size(); ++j) {
    std::ostringstream name;
    name << a.out << "/frame" << frame.id << "_" << ds.meta.joint_names[j] << ".pgm";
    write_pgm(name.str(), take_slice(maps, static_cast<int>(j)));
  }
  write_run_snapshot(a.out + "/run.json", "export-heatmaps", s,
                     json{{"data", a.data},
                          {"frame", a.frame},
                          {"pnet", a.pnet_path},
                          {"out", a.out},
                          {"source", a.pnet_path.empty() ? "target" : "model"}});
  std::cout << "wrote " << ds.meta.joint_names.size() << " heatmaps to " << a.out << "\n";
}

struct VoxelizeArgs {
  Overrides common;
  std::string data;
  int frame = 0;
  int joint = -1;
  std::string locate = "gt";
  std::string pnet_path;
  std::string out;
};

// Dumps the local occupancy grids built around one frame's 2D estimates, one
// TDF tensor plus a JSON sidecar per joint.
void cmd_voxelize(const VoxelizeArgs& a) {
  Settings s = resolve_settings(a.common);
  Dataset ds = load_dataset_checked(a.data, s.profile);
  if (a.frame < 0 || a.frame >= static_cast<int>(ds.frames.size()))
    throw config_error("--frame out of range; dataset has " + std::to_string(ds.frames.size()) +
                       " frames");
  std::vector<Model> keep_alive;
  Locator locate = make_locator(a.locate, a.pnet_path, nullptr, s.profile, ds.meta, 0, 0, keep_alive);

  Dataset one;
  one.meta = ds.meta;
  one.frames.push_back(ds.frames[static_cast<std::size_t>(a.frame)]);
  CropSet set = generate_crops(one, s.profile, locate, nullptr);

  fs::create_directories(a.out);
  int written = 0;
  for (const CropRecord& rec : set.records) {
    if (a.joint >= 0 && rec.joint_id != a.joint) continue;
    CropFrame cf = crop_frame(set, rec);
    OccupancyGrid grid = grid_from_column_bins(rec.column_bins, cf);
    std::ostringstream stem;
    stem << a.out << "/frame" << rec.frame_id << "_" << set.joint_names[rec.joint_id];
    save_tdf(stem.str() + ".tdf", grid.values);
    json side{{"frame_id", rec.frame_id},
              {"joint_id", rec.joint_id},
              {"joint", set.joint_names[rec.joint_id]},
              {"center_u", rec.center_u},
              {"center_v", rec.center_v},
              {"reference_z_mm", rec.reference_z},
              {"bin_size_mm", set.bin_size_mm},
              {"dims", {set.grid_xy, set.grid_xy, set.grid_bins}},
              {"borrowed_anchor", rec.anchor_fallback}};
    write_text_file(stem.str() + ".json", side.dump(2) + "\n");
    ++written;
  }
  if (written == 0) throw config_error("no grids written; joint filter matched nothing");
  write_run_snapshot(a.out + "/run.json", "voxelize", s,
                     json{{"data", a.data},
                          {"frame", a.frame},
                          {"joint", a.joint},
                          {"locate", a.locate},
                          {"out", a.out},
                          {"grids", written}});
  std::cout << "wrote " << written << " occupancy grids to " << a.out << "\n";
}

struct ExportPlotsArgs {
  std::vector<std::string> reports;
  std::vector<std::string> labels;
  std::string out;
};

// Merges evaluation reports into one long-format CSV for plotting.
void cmd_export_plots(const ExportPlotsArgs& a) {
  if (a.reports.empty()) throw config_error("export-plots needs at least one --report");
  if (!a.labels.empty() && a.labels.size() != a.reports.size())
    throw config_error("--label count must match --report count");

  std::ostringstream csv;
  csv << "label,metric,row,value\n";
  auto escape = [](const std::string& ss) {
    std::string r = ss;
    for (char& c : r)
      if (c == ',') c = ';';
    return r;
  };
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    std::ifstream in(a.reports[i]);
    if (!in) throw config_error("cannot open report " + a.reports[i]);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw config_error("report " + a.reports[i] + ": " + e.what());
    }
    std::string label =
        i < a.labels.size() ? a.labels[i] : fs::path(a.reports[i]).stem().string();
    for (const char* metric : {"map_10cm", "pckh_05"}) {
      if (!doc.contains(metric)) continue;
      const json& section = doc[metric];
      for (const auto& [row, value] : section["per_joint"].items())
        csv << escape(label) << "," << metric << "," << escape(row) << ","
            << value.get<double>() << "\n";
      for (const auto& [row, value] : section["groups"].items())
        csv << escape(label) << "," << metric << "," << escape(row) << ","
            << value.get<double>() << "\n";
    }
  }
  write_text_file(a.out, csv.str());
  std::cout << "wrote " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage 3D pose from depth: synthetic data, training, inference, evaluation"};
  app.require_subcommand(1);

  std::function<void()> run;

  auto synth_args = std::make_shared<SynthArgs>();
  {
    CLI::App* c = app.add_subcommand("synth", "render a synthetic depth dataset");
    add_common_options(c, synth_args->common);
    c->add_option("--out", synth_args->out, "output directory")->required();
    c->add_option("--frames", synth_args->frames, "number of frames")->capture_default_str();
    c->add_option("--seed", synth_args->seed, "pose and noise seed")->capture_default_str();
    c->add_option("--skeleton", synth_args->skeleton, "skeleton model name")
        ->capture_default_str();
    c->add_option("--angle-scale", synth_args->angle_scale,
                  "pose variability multiplier; smaller is easier")
        ->capture_default_str();
    c->callback([&run, synth_args] { run = [synth_args] { cmd_synth(*synth_args); }; });
  }

  auto train_pnet_args = std::make_shared<TrainArgs>();
  {
    CLI::App* c = app.add_subcommand("train-pnet", "train the 2D heatmap stage");
    add_common_options(c, train_pnet_args->common);
    c->add_option("--data", train_pnet_args->data, "dataset directory")->required();
    c->add_option("--out", train_pnet_args->out, "output directory")->required();
    c->callback(
        [&run, train_pnet_args] { run = [train_pnet_args] { cmd_train_pnet(*train_pnet_args); }; });
  }

  auto gen_crops_args = std::make_shared<GenCropsArgs>();
  {
    CLI::App* c = app.add_subcommand("gen-crops", "build local occupancy crops around 2D estimates");
    add_common_options(c, gen_crops_args->common);
    c->add_option("--data", gen_crops_args->data, "dataset directory")->required();
    c->add_option("--out", gen_crops_args->out, "output directory")->required();
    c->add_option("--locate", gen_crops_args->locate, "2D source: gt, jitter or pnet")
        ->check(CLI::IsMember({"gt", "jitter", "pnet"}))
        ->capture_default_str();
    c->add_option("--pnet", gen_crops_args->pnet_path, "2D stage checkpoint for --locate pnet");
    c->add_option("--jitter-px", gen_crops_args->jitter_px,
                  "max per-axis offset for --locate jitter")
        ->capture_default_str();
    c->add_option("--jitter-seed", gen_crops_args->jitter_seed, "seed for --locate jitter")
        ->capture_default_str();
    c->callback(
        [&run, gen_crops_args] { run = [gen_crops_args] { cmd_gen_crops(*gen_crops_args); }; });
  }

  auto train_vnet_args = std::make_shared<TrainArgs>();
  {
    CLI::App* c = app.add_subcommand("train-vnet", "train the per-voxel 3D stage on crops");
    add_common_options(c, train_vnet_args->common);
    c->add_option("--crops", train_vnet_args->data, "crop set directory")->required();
    c->add_option("--out", train_vnet_args->out, "output directory")->required();
    c->callback(
        [&run, train_vnet_args] { run = [train_vnet_args] { cmd_train_vnet(*train_vnet_args); }; });
  }

  auto infer_args = std::make_shared<InferArgs>();
  {
    CLI::App* c = app.add_subcommand("infer", "run the full two-stage pipeline over a dataset");
    add_common_options(c, infer_args->common);
    c->add_option("--data", infer_args->data, "dataset directory")->required();
    c->add_option("--pnet", infer_args->pnet_path, "2D stage checkpoint")->required();
    c->add_option("--vnet", infer_args->vnet_path, "3D stage checkpoint")->required();
    c->add_option("--out", infer_args->out, "predictions JSONL path")->required();
    c->add_option("--skip", infer_args->skip, "skip this many frames")->capture_default_str();
    c->add_option("--limit", infer_args->limit, "stop after this many frames; -1 for all")
        ->capture_default_str();
    c->callback([&run, infer_args] { run = [infer_args] { cmd_infer(*infer_args); }; });
  }

  auto eval_args = std::make_shared<EvalArgs>();
  {
    CLI::App* c = app.add_subcommand("eval", "score predictions against dataset ground truth");
    add_common_options(c, eval_args->common);
    c->add_option("--data", eval_args->data, "dataset directory")->required();
    c->add_option("--preds", eval_args->preds, "predictions JSONL path")->required();
    c->add_option("--out", eval_args->out, "report JSON path; omit to only print");
    c->callback([&run, eval_args] { run = [eval_args] { cmd_eval(*eval_args); }; });
  }

  auto ablate_args = std::make_shared<AblateArgs>();
  {
    CLI::App* c = app.add_subcommand("ablate", "train a reduced variant and optionally score it");
    add_common_options(c, ablate_args->common);
    c->add_option("kind", ablate_args->kind, "2d-co, 2d-vl or holistic")
        ->required()
        ->check(CLI::IsMember({"2d-co", "2d-vl", "holistic"}));
    c->add_option("--crops", ablate_args->crops, "crop set directory (2d variants)");
    c->add_option("--data", ablate_args->data, "dataset directory (holistic)");
    c->add_option("--out", ablate_args->out, "output directory")->required();
    c->add_option("--locate", ablate_args->locate, "2D source for holistic: gt or pnet")
        ->check(CLI::IsMember({"gt", "pnet"}))
        ->capture_default_str();
    c->add_option("--pnet", ablate_args->pnet_path, "2D stage checkpoint");
    c->add_option("--eval-data", ablate_args->eval_data, "dataset to run end to end after training");
    c->add_option("--skip", ablate_args->skip, "evaluation frames to skip")->capture_default_str();
    c->add_option("--limit", ablate_args->limit, "evaluation frame cap; -1 for all")
        ->capture_default_str();
    c->callback([&run, ablate_args] { run = [ablate_args] { cmd_ablate(*ablate_args); }; });
  }

  auto heatmap_args = std::make_shared<ExportHeatmapsArgs>();
  {
    CLI::App* c = app.add_subcommand("export-heatmaps", "dump per-joint heatmaps as PGM images");
    add_common_options(c, heatmap_args->common);
    c->add_option("--data", heatmap_args->data, "dataset directory")->required();
    c->add_option("--frame", heatmap_args->frame, "frame index")->capture_default_str();
    c->add_option("--pnet", heatmap_args->pnet_path,
                  "checkpoint; omit to dump the training target");
    c->add_option("--out", heatmap_args->out, "output directory")->required();
    c->callback([&run, heatmap_args] { run = [heatmap_args] { cmd_export_heatmaps(*heatmap_args); }; });
  }

  auto voxelize_args = std::make_shared<VoxelizeArgs>();
  {
    CLI::App* c = app.add_subcommand("voxelize", "dump local occupancy grids for one frame");
    add_common_options(c, voxelize_args->common);
    c->add_option("--data", voxelize_args->data, "dataset directory")->required();
    c->add_option("--frame", voxelize_args->frame, "frame index")->capture_default_str();
    c->add_option("--joint", voxelize_args->joint, "joint id; -1 for all")->capture_default_str();
    c->add_option("--locate", voxelize_args->locate, "2D source: gt or pnet")
        ->check(CLI::IsMember({"gt", "pnet"}))
        ->capture_default_str();
    c->add_option("--pnet", voxelize_args->pnet_path, "2D stage checkpoint for --locate pnet");
    c->add_option("--out", voxelize_args->out, "output directory")->required();
    c->callback([&run, voxelize_args] { run = [voxelize_args] { cmd_voxelize(*voxelize_args); }; });
  }

  auto plots_args = std::make_shared<ExportPlotsArgs>();
  {
    CLI::App* c = app.add_subcommand("export-plots", "merge evaluation reports into a CSV");
    c->add_option("--report", plots_args->reports, "report JSON path (repeatable)")->required();
    c->add_option("--label", plots_args->labels, "row label per report (repeatable)");
    c->add_option("--out", plots_args->out, "CSV path")->required();
    c->callback([&run, plots_args] { run = [plots_args] { cmd_export_plots(*plots_args); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    run();
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
