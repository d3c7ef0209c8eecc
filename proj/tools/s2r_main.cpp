// Copyright 2026 The s2r Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// s2r: dataset generation, training, evaluation and noise sweeps.
//
// Exit codes: 0 success, 1 runtime/config error, 2 usage error. Failures
// print a single line "error: <kind>: <message>" on stderr.
//
// Config file (--config, or $S2R_CONFIG): key = value lines with prefixes
// scene. profile. render. grid. attention. model. train. eval.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "s2r/config.hpp"
#include "s2r/dataset.hpp"
#include "s2r/error.hpp"
#include "s2r/evalkit.hpp"
#include "s2r/model.hpp"
#include "s2r/trainer.hpp"

namespace {

using namespace s2r;

/// Malformed flag values; reported with exit code 2.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

struct AppConfig {
  KeyValues kv;

  static AppConfig load(const std::string& path) {
    AppConfig c;
    std::string p = path;
    if (p.empty()) {
      if (const char* env = std::getenv("S2R_CONFIG"); env && *env) p = env;
    }
    if (!p.empty()) c.kv = KeyValues::load(p);
    for (const auto& [k, v] : c.kv.entries()) {
      static const char* kPrefixes[] = {"scene.", "profile.", "render.", "grid.",
                                        "attention.", "model.", "train.", "eval."};
      bool ok = false;
      for (const char* pre : kPrefixes) ok = ok || k.rfind(pre, 0) == 0;
      if (!ok) throw ConfigError("unknown config key: " + k);
    }
    return c;
  }

  scene::SceneConfig scene() const { return data::scene_from_kv(kv.with_prefix("scene.")); }
  scene::RenderOptions render() const { return data::render_from_kv(kv.with_prefix("render.")); }
  scene::DomainProfile profile(const std::string& name) const {
    return data::profile_from_kv(kv.with_prefix("profile."), scene::DomainProfile::named(name));
  }
  model::ModelConfig model() const {
    KeyValues sub;
    for (const char* pre : {"grid.", "attention.", "model."}) sub.merge(kv.with_prefix(pre), pre);
    return model::ModelConfig::from_kv(sub);
  }
  train::TrainConfig train() const { return train::TrainConfig::from_kv(kv.with_prefix("train.")); }
  train::EvalOptions eval() const {
    const KeyValues e = kv.with_prefix("eval.");
    e.require_known({"seed", "score_thresh", "nms_iou", "max_detections"});
    train::EvalOptions o;
    o.seed = e.get_u64("seed", o.seed);
    o.score_thresh = e.get_double("score_thresh", o.score_thresh);
    o.nms_iou = e.get_double("nms_iou", o.nms_iou);
    o.max_detections = static_cast<std::size_t>(e.get_int("max_detections", 100));
    return o;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path);
  out << text;
  if (!out) throw Error("io", "short write to " + path);
}

/// Keeps detections and ground truth whose centers satisfy |x| < rx, |y| < ry.
void clamp_range(train::EvalOutput& out, double rx, double ry) {
  auto inside = [&](const Box3D& b) { return std::abs(b.x) < rx && std::abs(b.y) < ry; };
  for (std::size_t f = 0; f < out.detections.size(); ++f) {
    std::erase_if(out.detections[f], [&](const Detection& d) { return !inside(d.box); });
    std::erase_if(out.ground_truth[f], [&](const Box3D& b) { return !inside(b); });
  }
  out.ap = eval::ap_at_standard_thresholds(out.detections, out.ground_truth);
}

std::pair<double, double> parse_range(const std::string& text) {
  try {
    const auto v = eval::parse_noise_triple(text + ",0");
    if (!(v.sigma_pos > 0) || !(v.sigma_head_deg > 0)) throw InvalidInput("range must be positive");
    return {v.sigma_pos, v.sigma_head_deg};
  } catch (const InvalidInput&) {
    throw UsageError("--range expects 'X,Y' half extents in meters, got '" + text + "'");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Sim-to-real cooperative perception toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value config file (default: $S2R_CONFIG)");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_out, gen_profile = "sim", gen_split;
  std::uint64_t gen_seed = 0;
  int gen_frames = 10, gen_threads = 1;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--profile", gen_profile, "Domain profile")->check(CLI::IsMember({"sim", "real"}));
  gen->add_option("--frames", gen_frames, "Frame count")->check(CLI::NonNegativeNumber);
  gen->add_option("--split", gen_split, "Split label (default by profile)")
      ->check(CLI::IsMember({data::kSplitSource, data::kSplitTarget, data::kSplitEval}));
  gen->add_option("--threads", gen_threads, "Render threads")->check(CLI::PositiveNumber);

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  std::string tr_source, tr_target, tr_out, tr_log;
  bool tr_no_afa = false;
  std::optional<int> tr_epochs;
  std::optional<std::uint64_t> tr_seed;
  tr->add_option("--source", tr_source, "Labeled source dataset")->required();
  tr->add_option("--target", tr_target, "Unlabeled target dataset");
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--log", tr_log, "Training log TSV (default: <out>.log.tsv)");
  tr->add_flag("--no-afa", tr_no_afa, "Source-only training (w2 = 0)");
  tr->add_option("--epochs", tr_epochs, "Override train.epochs")->check(CLI::NonNegativeNumber);
  tr->add_option("--seed", tr_seed, "Override train.seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_noise, ev_range, ev_out;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--data", ev_data, "Labeled dataset")->required();
  ev->add_option("--noise", ev_noise, "sigma_pos,sigma_head_deg,latency");
  ev->add_option("--range", ev_range, "Evaluation half extents X,Y in meters");
  ev->add_option("--out", ev_out, "Results TSV (default: <ckpt>.eval.tsv)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Evaluate over a grid of deployment-gap settings");
  std::string sw_ckpt, sw_data, sw_grid, sw_out;
  sw->add_option("--ckpt", sw_ckpt, "Checkpoint")->required();
  sw->add_option("--data", sw_data, "Labeled dataset")->required();
  sw->add_option("--grid", sw_grid, "e.g. pos=0,0.2;head=0,0.2;lat=0,0.1")->required();
  sw->add_option("--out", sw_out, "Output TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: usage: " << msg << "\n";
    return 2;
  }

  const AppConfig cfg = AppConfig::load(config_path);

  if (*gen) {
    data::GenerateOptions o;
    o.scene = cfg.scene();
    o.render = cfg.render();
    o.profile = cfg.profile(gen_profile);
    o.seed = gen_seed;
    o.frames = gen_frames;
    o.threads = gen_threads;
    o.split = !gen_split.empty() ? gen_split : (gen_profile == "real" ? data::kSplitTarget : data::kSplitSource);
    const auto ds = data::generate_dataset(o);
    data::write_dataset(ds, gen_out);
    std::cout << "wrote " << ds.frames.size() << " frames to " << gen_out << "\n";
    return 0;
  }

  if (*tr) {
    train::TrainConfig tc = cfg.train();
    if (tr_no_afa) {
      tc.w1 = 1.0;
      tc.w2 = 0.0;
    }
    if (tr_epochs) tc.epochs = *tr_epochs;
    if (tr_seed) tc.seed = *tr_seed;
    tc.validate();
    if (tc.afa_enabled() && tr_target.empty()) {
      throw ConfigError("adaptation is enabled (w2 > 0) but no --target dataset was given; pass --no-afa to disable");
    }
    const auto source = data::load_dataset(tr_source);
    std::optional<data::Dataset> target;
    if (tc.afa_enabled()) target = data::load_dataset(tr_target);
    train::FitOptions fo;
    fo.checkpoint = tr_out;
    fo.log = tr_log.empty() ? tr_out + ".log.tsv" : tr_log;
    fo.verbose = true;
    const auto res = train::fit(cfg.model(), tc, source, target ? &*target : nullptr, fo);
    std::cout << "trained " << res.log.size() << " steps, checkpoint " << tr_out << "\n";
    return 0;
  }

  if (*ev) {
    train::EvalOptions eo = cfg.eval();
    if (!ev_noise.empty()) {
      try {
        eo.noise = eval::parse_noise_triple(ev_noise);
      } catch (const InvalidInput& e) {
        throw UsageError(std::string("--noise: ") + e.what());
      }
    }
    std::optional<std::pair<double, double>> range;
    if (!ev_range.empty()) range = parse_range(ev_range);
    const auto model = model::load_checkpoint(ev_ckpt);
    const auto data = data::load_dataset(ev_data);
    auto out = train::evaluate(*model, data, eo);
    if (range) clamp_range(out, range->first, range->second);
    std::cout << "AP@0.5\t" << format_double(out.ap.ap50) << "\nAP@0.7\t" << format_double(out.ap.ap70) << "\n";
    write_text(ev_out.empty() ? ev_ckpt + ".eval.tsv" : ev_out, eval::sweep_tsv({{eo.noise, out.ap}}));
    return 0;
  }

  if (*sw) {
    eval::NoiseGrid grid;
    try {
      grid = eval::NoiseGrid::parse(sw_grid);
    } catch (const InvalidInput& e) {
      throw UsageError(std::string("--grid: ") + e.what());
    }
    train::EvalOptions eo = cfg.eval();
    const auto model = model::load_checkpoint(sw_ckpt);
    const auto data = data::load_dataset(sw_data);
    const auto rows = eval::sweep(grid, [&](const geom::NoiseSpec& n) {
      train::EvalOptions o = eo;
      o.noise = n;
      return train::evaluate(*model, data, o).ap;
    });
    write_text(sw_out, eval::sweep_tsv(rows));
    std::cout << "wrote " << rows.size() << " rows to " << sw_out << "\n";
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const s2r::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
