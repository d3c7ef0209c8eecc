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

// Acceptance suite. Prints one "PASS <n> ..." or "FAIL <n> ..." line per
// criterion, indented detail lines beneath it, and exits non-zero if any
// criterion fails.
//
//   1 gradient suite      every trainable op vs central differences
//   2 structure           attention rows, windows, residual identity, gate
//   3 oracles             IoU, AP and NMS against independent references
//   4 deployment gap      noisy vs perfect AP@0.7, with and without UAM
//   5 sim-to-real         adaptation vs source-only on the real profile
//   6 determinism         loss traces, datasets and checkpoints
//   7 constants           schedule, attention defaults, loss weights
//
// Usage: s2r_acceptance [--only 1,3,...] [--seeds N] [--work DIR]

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "s2r/error.hpp"
#include "s2r/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace {

using namespace s2r;
namespace fs = std::filesystem;
using VarD = ag::Var<double>;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Collects detail lines and the verdict of one criterion.
class Criterion {
 public:
  Criterion(int id, std::string title) : id_(id), title_(std::move(title)), t0_(Clock::now()) {}

  void check(bool ok, const std::string& what) {
    ok_ = ok_ && ok;
    details_.push_back(std::string(ok ? "ok   " : "MISS ") + what);
  }
  void note(const std::string& what) { details_.push_back("     " + what); }

  bool report() const {
    std::ostringstream os;
    os << (ok_ ? "PASS " : "FAIL ") << id_ << " " << title_ << " (" << static_cast<int>(seconds_since(t0_))
       << " s)\n";
    for (const auto& d : details_) os << "    " << d << "\n";
    std::cout << os.str() << std::flush;
    return ok_;
  }

 private:
  int id_;
  std::string title_;
  Clock::time_point t0_;
  bool ok_ = true;
  std::vector<std::string> details_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. Gradient suite: H = W = 8, C = 8, k = 2, double precision.

constexpr std::int64_t kC = 8;
constexpr int kAgents = 2;

VarD random_leaf(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return ag::leaf(testing::random_tensor(std::move(shape), rng, scale));
}

/// Replaces all-zero parameter tensors (zero-initialized output layers) by
/// small random values so every path carries gradient.
void randomize_zero_parameters(const nn::ParameterStore<double>& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& [name, p] : store.entries()) {
    const auto& v = p.value().values();
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0; })) {
      p.node()->value = testing::random_tensor(p.shape(), rng, 0.3);
    }
  }
}

bool criterion_gradients() {
  Criterion c(1, "gradient suite: every trainable op vs central differences, rel err < 1e-3, < 5 min");
  double worst = 0;
  auto run = [&](const std::string& op, nn::ParameterStore<double>& store, const std::function<VarD()>& loss,
                 std::vector<std::pair<std::string, VarD>> extra) {
    randomize_zero_parameters(store, 99);
    auto wrt = testing::all_parameters(store);
    for (auto& e : extra) wrt.push_back(std::move(e));
    const auto r = testing::gradcheck(loss, wrt);
    worst = std::max(worst, r.max_rel_error);
    c.check(r.max_rel_error < 1e-3, op + ": max rel err " + fmt(r.max_rel_error, 3) + " over " +
                                        std::to_string(r.probes) + " probes" +
                                        (r.max_rel_error > 0 ? " (worst " + r.worst + ")" : ""));
  };
  const auto t0 = Clock::now();
  nn::Rng rng(2026);

  {  // Pillar encoder on an 8 x 8 output grid.
    pillars::BEVGridSpec g;
    g.range = {-4, 4, -4, 4};
    g.channels = kC;
    g.downsample = 2;
    nn::ParameterStore<double> store;
    pillars::PillarEncoder<double> enc(store, "encode", g, rng);
    std::mt19937_64 prng(1);
    std::uniform_real_distribution<double> u(-4.5, 4.5), z(0, 2), in(0, 1);
    geom::PointCloud pts;
    for (int i = 0; i < 300; ++i) pts.push_back({u(prng), u(prng), z(prng), in(prng)});
    const auto st = pillars::pillarize(pts, g);
    run("encode", store, [&] { return testing::random_readout(enc(st), 2); }, {});
  }
  {
    nn::ParameterStore<double> store;
    uvit::LgMsa<double> msa(store, "lg_msa", uvit::AttentionSpec{}, kAgents * kC, rng);
    const VarD x = random_leaf({8, 8, kAgents * kC}, 3);
    run("lg_msa", store, [&] { return testing::random_readout(msa(x), 4); }, {{"x", x}});
  }
  {
    nn::ParameterStore<double> store;
    uvit::Upn<double> upn(store, "upn", (kAgents - 1) * kC, kC, rng);
    const VarD x = random_leaf({8, 8, kC}, 5);
    run("upn", store, [&] { return testing::random_readout(upn(x), 6); }, {{"x", x}});
  }
  {
    nn::ParameterStore<double> store;
    uvit::Uam<double> uam(store, "uam", kC, kAgents, rng);
    const VarD x = random_leaf({8, 8, kAgents * kC}, 7);
    run("uam", store, [&] { return testing::random_readout(uam(x, kAgents).features, 8); }, {{"x", x}});
  }
  {
    nn::ParameterStore<double> store;
    uvit::S2RBlock<double> block(store, "s2r_block", uvit::AttentionSpec{}, kC, kAgents, true, rng);
    const VarD x = random_leaf({8, 8, kAgents * kC}, 9);
    run("s2r_block", store, [&] { return testing::random_readout(block(x, kAgents), 10); }, {{"x", x}});
  }
  {
    nn::ParameterStore<double> store;
    uvit::Fuse<double> fuse(store, "fuse", kC, kAgents, false, rng);
    const VarD x = random_leaf({8, 8, kAgents * kC}, 11);
    run("fuse", store, [&] { return testing::random_readout(fuse(x), 12); }, {{"x", x}});
  }
  for (const char* which : {"inter", "ego"}) {
    nn::ParameterStore<double> store;
    afa::Discriminator<double> disc(store, std::string("disc_") + which, kC, rng);
    const VarD x = random_leaf({8, 8, kC}, 13);
    const afa::Domain d = which[0] == 'i' ? afa::Domain::kSource : afa::Domain::kTarget;
    run(std::string("discriminator ") + which, store,
        [&] { return afa::afa_loss<double>({disc(afa::grl(x, 1.0))}, {d}, {}, {}); }, {});
  }
  {
    pillars::BEVGridSpec g;
    g.range = {-8, 8, -8, 8};
    g.channels = kC;
    g.downsample = 4;
    nn::ParameterStore<double> store;
    det::DetectionHead<double> head(store, "head", kC, 0.1, rng);
    const VarD x = random_leaf({8, 8, kC}, 14);
    const auto targets =
        det::assign_targets({{3, -3, 0.8, 4.5, 1.9, 1.6, 0.3}, {-5, 4, 0.7, 3.9, 1.7, 1.5, -2}}, g);
    run("head", store, [&] { return det::detection_loss(head(x), targets).total; }, {{"x", x}});
  }
  const double secs = seconds_since(t0);
  c.check(secs < 300, "runtime " + fmt(secs, 3) + " s");
  return c.report();
}

// ---------------------------------------------------------------------------
// 2. Structural invariants.

bool criterion_structure() {
  Criterion c(2, "structural invariants");
  nn::Rng rng(7);
  {
    nn::ParameterStore<double> store;
    uvit::LgMsa<double> msa(store, "msa", uvit::AttentionSpec{}, kAgents * kC, rng);
    double worst = 0;
    std::size_t rows = 0;
    for (const Shape& s : {Shape{8, 8, kAgents * kC}, Shape{8, 6, kAgents * kC}, Shape{11, 5, kAgents * kC}}) {
      ag::AttentionTrace<double> trace;
      msa(random_leaf(s, 1, 3.0), &trace);
      for (const auto& w : trace.weights) {
        for (std::int64_t r = 0; r < w.dim(0); ++r) {
          double sum = 0;
          for (std::int64_t k = 0; k < w.dim(1); ++k) sum += w.at(r, k);
          worst = std::max(worst, std::abs(sum - 1));
          ++rows;
        }
      }
    }
    c.check(worst < 1e-6, "attention rows sum to 1: worst |sum - 1| = " + fmt(worst, 3) + " over " +
                              std::to_string(rows) + " rows (local, global, final)");
  }
  {
    bool exact = true;
    std::mt19937_64 r(2);
    for (int ws : {4, 8}) {
      for (const Shape& s : {Shape{8, 8, 3}, Shape{9, 5, 2}, Shape{16, 24, 1}, Shape{3, 3, 4}}) {
        const auto g = testing::random_tensor(s, r);
        exact = exact && uvit::window_merge(uvit::window_partition(g, ws), s[0], s[1], ws).storage() == g.storage();
      }
    }
    c.check(exact, "window partition then merge is bit-exact (windows 4 and 8, padded and unpadded)");
  }
  {
    bool exact = true;
    for (bool uam : {true, false}) {
      nn::ParameterStore<double> store;
      uvit::S2RBlock<double> block(store, "blk", uvit::AttentionSpec{}, kC, 3, uam, rng);
      block.zero_residual_branches();
      for (int k = 1; k <= 3; ++k) {
        const VarD x = random_leaf({8, 6, k * kC}, 10 + static_cast<std::uint64_t>(k));
        exact = exact && block(x, k).value().storage() == x.value().storage();
      }
    }
    c.check(exact, "zeroed residual branches make s2r_block an exact identity (k = 1..3, with/without UAM)");
  }
  {
    nn::ParameterStore<double> store;
    uvit::Uam<double> uam(store, "uam", kC, 3, rng);
    bool half = true, ones_identity = true;
    for (int k = 2; k <= 3; ++k) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto gate = uam(random_leaf({8, 8, k * kC}, 20 + seed), k).gate.value();
        const auto ones = std::count(gate.values().begin(), gate.values().end(), 1.0);
        half = half && 2 * ones >= gate.numel();
      }
      const VarD x = random_leaf({8, 8, k * kC}, 30);
      const auto all_ones = ag::constant(Tensor<double>(Shape{8, 8, (k - 1) * kC}, 1.0));
      ones_identity =
          ones_identity && uvit::Uam<double>::apply_gate(x, all_ones, k).value().storage() == x.value().storage();
    }
    c.check(half, "M_t has at least half of its entries exactly 1 (k = 2, 3; 5 inputs each)");
    c.check(ones_identity, "an all-ones M_t makes the UAM gating an exact identity (k = 2, 3)");
  }
  return c.report();
}

// ---------------------------------------------------------------------------
// 3. Oracle equivalence.

bool criterion_oracles() {
  Criterion c(3, "oracle equivalence: rotated IoU, average precision, NMS");
  std::mt19937_64 rng(3);
  double worst_iou = 0;
  for (int i = 0; i < 100; ++i) {
    const auto [a, b] = testing::random_overlapping_pair(rng);
    worst_iou = std::max(worst_iou, std::abs(eval::rotated_iou(a, b) - testing::monte_carlo_iou(a, b, 100000, rng)));
  }
  c.check(worst_iou < 0.01, "rotated_iou vs 1e5-sample Monte Carlo, 100 pairs: worst |diff| " + fmt(worst_iou, 3));

  double worst_ap = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = testing::random_ap_instance(rng, 20);
    for (double t : {0.5, 0.7}) {
      worst_ap = std::max(worst_ap, std::abs(eval::average_precision(inst.detections, inst.ground_truth, t) -
                                             testing::brute_force_ap(inst.detections, inst.ground_truth, t)));
    }
  }
  c.check(worst_ap < 1e-9, "average_precision vs brute-force PR enumeration, 200 instances x 2 thresholds: worst "
                           "|diff| " + fmt(worst_ap, 3));

  int mismatches = 0, ambiguous = 0;
  std::uniform_real_distribution<double> pos(-3, 3), len(3, 5.5), wid(1.5, 2.2), yaw(-kPi, kPi), u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0, n = 2 + trial % 11; i < n; ++i) {
      dets.push_back({{pos(rng), pos(rng), 0.8, len(rng), wid(rng), 1.6, yaw(rng)}, std::round(u(rng) * 8) / 8});
    }
    const double thresh = trial % 3 == 0 ? 0.1 : (trial % 3 == 1 ? 0.3 : 0.6);
    int solutions = 0;
    const auto expect = testing::exhaustive_nms(dets, thresh, &solutions);
    ambiguous += solutions != 1;
    const auto got = det::nms(dets, thresh);
    bool same = got.size() == expect.size();
    for (std::size_t k = 0; same && k < got.size(); ++k) {
      same = got[k].box == dets[expect[k]].box && got[k].score == dets[expect[k]].score;
    }
    mismatches += !same;
  }
  c.check(mismatches == 0 && ambiguous == 0,
          "nms vs exhaustive subset enumeration, 300 cases of 2-12 boxes with score ties: " +
              std::to_string(mismatches) + " mismatches");
  return c.report();
}

// ---------------------------------------------------------------------------
// 4 and 5. Training runs on the desk-scale benchmark.

struct Bench {
  data::Dataset source;       // sim, labeled, 300 frames
  data::Dataset target;       // real, unlabeled, 300 frames
  data::Dataset eval_sim;     // sim, labeled, 100 frames
  data::Dataset eval_real;    // real, labeled, 100 frames
};

data::Dataset make_dataset(const scene::DomainProfile& profile, std::uint64_t seed, int frames,
                           const std::string& split) {
  data::GenerateOptions o;
  o.profile = profile;
  o.seed = seed;
  o.frames = frames;
  o.split = split;
  return data::generate_dataset(o);
}

model::ModelConfig bench_model(std::uint64_t seed, bool use_uam) {
  model::ModelConfig m;
  m.grid.range = {-32, 32, -16, 16};
  m.grid.channels = 16;
  m.max_agents = 2;
  m.use_uam = use_uam;
  m.init_seed = seed;
  return m;
}

train::TrainConfig bench_train(std::uint64_t seed, bool adapt) {
  train::TrainConfig t;
  t.epochs = 5;
  t.batch_size = 2;
  t.seed = seed;
  t.w1 = adapt ? 0.9 : 1.0;
  t.w2 = adapt ? 0.1 : 0.0;
  return t;
}

struct SeedRuns {
  std::unique_ptr<model::CooperativeDetector<float>> full, no_uam, adapted;
};

bool criterion_deployment_gap(const Bench& b, const std::vector<SeedRuns>& runs, double train_secs) {
  Criterion c(4, "deployment gap: noisy AP@0.7 < perfect; no-UAM relative drop >= full model in >= 2 of 3 seeds");
  train::EvalOptions perfect, noisy;
  noisy.noise = {0.2, 0.2, 0.1};
  int ablation_wins = 0;
  bool all_lower = true;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const auto fp = train::evaluate(*runs[s].full, b.eval_sim, perfect).ap.ap70;
    const auto fn = train::evaluate(*runs[s].full, b.eval_sim, noisy).ap.ap70;
    const auto np = train::evaluate(*runs[s].no_uam, b.eval_sim, perfect).ap.ap70;
    const auto nn_ = train::evaluate(*runs[s].no_uam, b.eval_sim, noisy).ap.ap70;
    const double full_drop = fp > 0 ? (fp - fn) / fp : 0;
    const double abl_drop = np > 0 ? (np - nn_) / np : 0;
    all_lower = all_lower && fn < fp;
    ablation_wins += abl_drop >= full_drop;
    c.note("seed " + std::to_string(s + 1) + ": full " + fmt(fp) + " -> " + fmt(fn) + " (drop " +
           fmt(100 * full_drop, 3) + "%), no-UAM " + fmt(np) + " -> " + fmt(nn_) + " (drop " +
           fmt(100 * abl_drop, 3) + "%)");
  }
  c.check(all_lower, "noisy AP@0.7 strictly below perfect for the full model in every seed");
  c.check(ablation_wins >= 2, "no-UAM drop >= full-model drop in " + std::to_string(ablation_wins) + " of " +
                                  std::to_string(runs.size()) + " seeds");
  c.check(train_secs < 1800, "training budget: 300 frames, 5 epochs, " + fmt(train_secs, 4) + " s for all runs");
  return c.report();
}

bool criterion_sim2real(const Bench& b, const std::vector<SeedRuns>& runs) {
  Criterion c(5, "sim-to-real: adaptation (w2 = 0.1) beats source-only real-profile AP@0.5 in >= 2 of 3 seeds");
  int wins = 0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const auto so = train::evaluate(*runs[s].full, b.eval_real).ap;
    const auto ad = train::evaluate(*runs[s].adapted, b.eval_real).ap;
    wins += ad.ap50 > so.ap50;
    c.note("seed " + std::to_string(s + 1) + ": source-only AP@0.5 " + fmt(so.ap50) + ", adapted " + fmt(ad.ap50) +
           " (AP@0.7 " + fmt(so.ap70) + " vs " + fmt(ad.ap70) + ")");
  }
  c.check(wins >= 2, "adapted strictly higher in " + std::to_string(wins) + " of " + std::to_string(runs.size()) +
                         " seeds");
  return c.report();
}

// ---------------------------------------------------------------------------
// 6. Determinism and round trips.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
    ++n;
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) n -= e.is_regular_file();
  return n == 0;
}

bool criterion_determinism(const fs::path& work) {
  Criterion c(6, "determinism: loss traces, dataset and checkpoint round trips");
  data::GenerateOptions g;
  g.scene.vehicles = 8;
  g.scene.spawn_x = 20;
  g.scene.agent_radius = 15;
  g.frames = 6;
  g.seed = 17;
  const auto ds1 = data::generate_dataset(g);
  g.threads = 3;
  const auto ds3 = data::generate_dataset(g);
  data::write_dataset(ds1, work / "det_a");
  data::write_dataset(ds3, work / "det_b");
  c.check(same_tree(work / "det_a", work / "det_b"), "same seed gives byte-identical datasets (1 vs 3 threads)");
  data::write_dataset(data::load_dataset(work / "det_a"), work / "det_c");
  c.check(same_tree(work / "det_a", work / "det_c"), "dataset write -> load -> write is byte-identical");

  model::ModelConfig m;
  m.grid.range = {-20, 20, -12, 12};
  m.grid.channels = 16;
  m.max_agents = 2;
  train::TrainConfig t;
  t.epochs = 2;
  t.seed = 5;
  g.profile = scene::DomainProfile::real();
  g.split = data::kSplitTarget;
  g.seed = 18;
  const auto target = data::generate_dataset(g);
  const auto a = train::fit(m, t, ds1, &target);
  const auto b = train::fit(m, t, ds1, &target);
  c.check(!a.log.empty() && train::log_tsv(a.log) == train::log_tsv(b.log),
          "two fits with the same seed give bitwise-identical loss traces (" + std::to_string(a.log.size()) +
              " steps with adaptation)");

  model::save_checkpoint(*a.model, work / "det.ckpt");
  const auto loaded = model::load_checkpoint(work / "det.ckpt");
  model::save_checkpoint(*loaded, work / "det2.ckpt");
  c.check(slurp(work / "det.ckpt") == slurp(work / "det2.ckpt"), "checkpoint save -> load -> save is byte-identical");
  train::EvalOptions eo;
  eo.noise = {0.2, 0.2, 0.1};
  eo.score_thresh = 0.01;
  const auto before = train::evaluate(*a.model, ds1, eo);
  const auto after = train::evaluate(*loaded, ds1, eo);
  bool same = before.ap == after.ap && before.detections.size() == after.detections.size();
  for (std::size_t f = 0; same && f < before.detections.size(); ++f) {
    same = before.detections[f].size() == after.detections[f].size();
    for (std::size_t i = 0; same && i < before.detections[f].size(); ++i) {
      same = before.detections[f][i].score == after.detections[f][i].score &&
             before.detections[f][i].box == after.detections[f][i].box;
    }
  }
  c.check(same, "reloaded checkpoint reproduces detections and AP bitwise under noisy evaluation");
  return c.report();
}

// ---------------------------------------------------------------------------
// 7. Published constants.

bool criterion_constants() {
  Criterion c(7, "constants: learning-rate schedule, attention defaults, loss-weight validation");
  const train::TrainConfig t;
  const std::pair<int, double> expected[] = {{5, 1e-3}, {10, 1e-4}, {25, 1e-6}};
  for (const auto& [epoch, lr] : expected) {
    const double got = train::lr_schedule(t, epoch);
    c.check(std::abs(got - lr) <= 1e-12 * lr, "lr_schedule(" + std::to_string(epoch) + ") = " + fmt(got, 6) +
                                                  ", expected " + fmt(lr, 6));
  }
  const uvit::AttentionSpec a;
  c.check(a.heads == 8 && a.groups == 2 && a.win_local == 4 && a.win_global == 8,
          "default attention: h = " + std::to_string(a.heads) + ", n = " + std::to_string(a.groups) + ", windows " +
              std::to_string(a.win_local) + "x" + std::to_string(a.win_local) + " / " + std::to_string(a.win_global) +
              "x" + std::to_string(a.win_global));
  bool rejects = true;
  for (const auto& [w1, w2] : std::vector<std::pair<double, double>>{{0.5, 0.4}, {0.9, 0.2}, {1.1, -0.1}}) {
    train::TrainConfig bad;
    bad.w1 = w1;
    bad.w2 = w2;
    try {
      bad.validate();
      rejects = false;
    } catch (const ConfigError&) {
    }
  }
  bool accepts = true;
  try {
    train::TrainConfig ok;
    ok.validate();
    ok.w1 = 1;
    ok.w2 = 0;
    ok.validate();
  } catch (const ConfigError&) {
    accepts = false;
  }
  c.check(rejects && accepts, "configuration rejects w1 + w2 != 1 and accepts (0.9, 0.1), (1, 0)");
  return c.report();
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  int seeds = 3;
  fs::path work = fs::temp_directory_path() / ("s2r_acceptance_" + std::to_string(::getpid()));
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (arg == "--seeds" && i + 1 < argc) {
      seeds = std::stoi(argv[++i]);
    } else if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: s2r_acceptance [--only 1,3,...] [--seeds N] [--work DIR]\n";
      return 2;
    }
  }
  auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };
  fs::create_directories(work);
  int failures = 0;
  try {
    if (wanted(1)) failures += !criterion_gradients();
    if (wanted(2)) failures += !criterion_structure();
    if (wanted(3)) failures += !criterion_oracles();
    if (wanted(4) || wanted(5)) {
      const auto t0 = Clock::now();
      Bench b{make_dataset(scene::DomainProfile::sim(), 1, 300, data::kSplitSource),
              make_dataset(scene::DomainProfile::real(), 2, 300, data::kSplitTarget),
              make_dataset(scene::DomainProfile::sim(), 3, 100, data::kSplitEval),
              make_dataset(scene::DomainProfile::real(), 4, 100, data::kSplitEval)};
      std::vector<SeedRuns> runs(static_cast<std::size_t>(seeds));
      for (int s = 1; s <= seeds; ++s) {
        auto& r = runs[static_cast<std::size_t>(s - 1)];
        const auto seed = static_cast<std::uint64_t>(s);
        r.full = train::fit(bench_model(seed, true), bench_train(seed, false), b.source, nullptr).model;
        if (wanted(4)) r.no_uam = train::fit(bench_model(seed, false), bench_train(seed, false), b.source, nullptr).model;
        if (wanted(5)) r.adapted = train::fit(bench_model(seed, true), bench_train(seed, true), b.source, &b.target).model;
        std::cout << "    trained seed " << s << " (" << static_cast<int>(seconds_since(t0)) << " s)\n" << std::flush;
      }
      const double train_secs = seconds_since(t0);
      if (wanted(4)) failures += !criterion_deployment_gap(b, runs, train_secs);
      if (wanted(5)) failures += !criterion_sim2real(b, runs);
    }
    if (wanted(6)) failures += !criterion_determinism(work);
    if (wanted(7)) failures += !criterion_constants();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << "\n";
    failures += 1;
  }
  fs::remove_all(work);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
