#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "don/config.hpp"
#include "don/correspond.hpp"
#include "don/descriptor.hpp"
#include "don/error.hpp"
#include "don/fusion.hpp"
#include "don/io.hpp"
#include "don/keypoints.hpp"
#include "don/metrics.hpp"
#include "don/parallel.hpp"
#include "don/policy.hpp"
#include "don/scenegen.hpp"

namespace don::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2 };

/// Options shared by every subcommand.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::vector<std::string> overrides;
  std::string out;
};

namespace detail {

/// Flags beat the file, the file beats built-in defaults. Stage seeds that
/// the file leaves unset derive from run.seed, so --seed controls them all.
inline Config effective_config(const Common& c) {
  Config cfg = c.config.empty() ? Config() : Config::load(c.config);
  for (const auto& o : c.overrides) cfg.set_override(o);
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
  derive_stage_seeds(cfg);
  set_thread_count(c.threads);
  return cfg;
}

inline void write_text(const fs::path& p, const std::string& s) { io::atomic_write(p, s); }

inline void echo_config(const Common& c, const Config& cfg) {
  write_text(fs::path(c.out) / "config.ini", cfg.effective_ini());
}

inline Trajectory load(const std::string& dir) { return io::load_trajectory(dir).trajectory; }

inline EncoderParams load_params(const std::string& path) {
  return io::decode_params(io::read_file(path), path);
}

inline Scene scene_from(const Config& cfg) { return build_scene(scene_spec_from(cfg), cfg.get_u64("scene.seed", 0)); }

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------- stages

inline int cmd_generate(const Common& c, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  Scene scene = detail::scene_from(cfg);
  auto intr = intrinsics_from(cfg);
  auto tspec = trajectory_spec_from(cfg);
  auto rendered = generate_trajectory(scene, tspec, intr);
  Trajectory t = make_background_trajectory(std::move(rendered));
  io::save_trajectory(c.out, t, scene.spec_fingerprint());
  detail::echo_config(c, cfg);
  out << "generated " << t.size() << " frames in " << c.out << "\n";
  return kOk;
}

inline int cmd_fuse(const Common& c, const std::string& traj_dir, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto spec = scene_spec_from(cfg);
  auto fcfg = fusion_config_from(cfg);
  Trajectory t = detail::load(traj_dir);
  auto cloud = fuse_and_cluster(t.frames, spec.workspace, spec.ground_plane_z, fcfg);
  detail::write_text(fs::path(c.out) / "cloud.csv", io::encode_cloud(cloud));
  std::string summary = "points " + std::to_string(cloud.points.size()) + "\nlabels " +
                        std::to_string(cloud.label_count) + "\n";
  std::vector<std::size_t> sizes(static_cast<std::size_t>(cloud.label_count), 0);
  for (const auto& p : cloud.points) ++sizes[static_cast<std::size_t>(p.label - 1)];
  for (std::size_t l = 0; l < sizes.size(); ++l) summary += "label " + std::to_string(l + 1) + " " + std::to_string(sizes[l]) + "\n";
  detail::write_text(fs::path(c.out) / "summary.txt", summary);
  detail::echo_config(c, cfg);
  out << summary;
  return kOk;
}

inline int cmd_masks(const Common& c, const std::string& traj_dir, const std::string& cloud_path, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto fcfg = fusion_config_from(cfg);
  auto loaded = io::load_trajectory(traj_dir);
  auto cloud = io::decode_cloud(io::read_file(cloud_path), cloud_path);
  Trajectory& t = loaded.trajectory;
  t.label_count = cloud.label_count;
  t.masks.clear();
  for (const auto& f : t.frames) t.masks.push_back(reproject_masks(cloud, f, fcfg.occlusion_tol()));
  io::save_trajectory(c.out, t, loaded.manifest.scene_digest);
  detail::echo_config(c, cfg);
  out << "wrote masks for " << t.size() << " frames, " << t.label_count << " labels\n";
  return kOk;
}

inline int cmd_sample(const Common& c, const std::string& traj_dir, int count, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto scfg = sampling_config_from(cfg);
  Trajectory t = detail::load(traj_dir);
  PairSampler sampler(t, scfg);
  std::vector<TrainingSample> samples;
  for (int i = 0; i < count; ++i) samples.push_back(sampler.next());
  detail::write_text(fs::path(c.out) / "matches.csv", io::encode_matches(samples, t, t));
  detail::echo_config(c, cfg);
  out << "sampled " << samples.size() << " pairs\n";
  return kOk;
}

inline int cmd_train(const Common& c, const std::vector<std::string>& trajs, const std::vector<std::string>& background,
                     std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto scfg = sampling_config_from(cfg);
  auto lcfg = loss_config_from(cfg);
  auto tcfg = train_config_from(cfg);
  auto ecfg = encoder_config_from(cfg);
  std::vector<Trajectory> data;
  for (const auto& d : trajs) data.push_back(detail::load(d));
  for (const auto& d : background) {
    Trajectory b = detail::load(d);
    b.label_count = 0;
    for (auto& m : b.masks) m.clear();
    data.push_back(std::move(b));
  }
  auto res = train(data, scfg, lcfg, tcfg, ecfg);
  io::atomic_write(fs::path(c.out) / "params.donparam", io::encode_params(res.params));
  std::string loss = "step,lr,loss\n";
  for (std::size_t s = 0; s < res.loss_curve.size(); ++s) {
    loss += std::to_string(s) + "," + io::format_real(learning_rate(tcfg, static_cast<int>(s))) + "," +
            io::format_real(res.loss_curve[s]) + "\n";
  }
  detail::write_text(fs::path(c.out) / "loss.csv", loss);
  std::string val = "step,validation_loss\n";
  for (const auto& [s, v] : res.validation_curve) val += std::to_string(s) + "," + io::format_real(v) + "\n";
  detail::write_text(fs::path(c.out) / "validation.csv", val);
  detail::echo_config(c, cfg);
  out << "trained " << tcfg.steps << " steps, final loss "
      << (res.loss_curve.empty() ? 0.0 : res.loss_curve.back()) << "\n";
  return kOk;
}

namespace detail {

/// "label u v; label u v; ..." from keypoints.manual.
inline std::vector<ManualPick> parse_manual(const std::string& text) {
  std::vector<ManualPick> picks;
  std::istringstream all(text);
  for (std::string item; std::getline(all, item, ';');) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream in(item);
    ManualPick p;
    std::string extra;
    if (!(in >> p.object_label >> p.pixel.u >> p.pixel.v) || (in >> extra)) {
      throw Error(Errc::InvalidArgument, "keypoints.manual entry '" + item + "' is not 'label u v'");
    }
    picks.push_back(p);
  }
  return picks;
}

}  // namespace detail

inline int cmd_refs(const Common& c, const std::string& traj_dir, const std::string& params_path, int frame_index,
                    std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto params = detail::load_params(params_path);
  Trajectory t = detail::load(traj_dir);
  if (frame_index < 0 || frame_index >= static_cast<int>(t.size())) {
    throw Error(Errc::OutOfBounds, "frame index " + std::to_string(frame_index) + " outside trajectory");
  }
  const auto f = static_cast<std::size_t>(frame_index);
  auto desc = encode(params, t.frames[f]);
  auto manual = cfg.get_string("keypoints.manual", "");
  ReferenceSet refs;
  if (!manual.empty()) {
    refs = select_references(desc, t.masks[f], detail::parse_manual(manual));
  } else {
    int k = static_cast<int>(cfg.get_int("keypoints.k_per_object", 1));
    refs = select_references(desc, t.masks[f], k, cfg.get_u64("refs.seed", 0));
  }
  detail::write_text(fs::path(c.out) / "references.csv", io::encode_references(refs));
  detail::echo_config(c, cfg);
  out << "selected " << refs.size() << " references from frame " << t.frames[f].frame_id << "\n";
  return kOk;
}

inline int cmd_extract(const Common& c, const std::string& traj_dir, const std::string& params_path,
                       const std::string& refs_path, bool dump_descriptors, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto kcfg = keypoint_config_from(cfg);
  auto params = detail::load_params(params_path);
  auto refs = io::decode_references(io::read_file(refs_path), refs_path);
  if (refs.dim() != params.config.descriptor_dim) {
    throw Error(Errc::DimensionMismatch, "references and parameters disagree on descriptor dimension");
  }
  Trajectory t = detail::load(traj_dir);
  std::vector<io::KeypointRow> rows;
  for (const auto& frame : t.frames) {
    auto desc = encode(params, frame);
    if (dump_descriptors) {
      char name[48];
      std::snprintf(name, sizeof name, "desc_%06d.dondesc", frame.frame_id);
      io::atomic_write(fs::path(c.out) / name, io::encode_descriptors(desc));
    }
    auto kps = extract_keypoints(desc, frame, refs, kcfg);
    for (std::size_t i = 0; i < kps.size(); ++i)
      rows.push_back({frame.frame_id, 0, refs.entries[i].object_label, static_cast<int>(i), kps[i]});
  }
  detail::write_text(fs::path(c.out) / "keypoints.csv", io::encode_keypoints(rows));
  detail::echo_config(c, cfg);
  out << "extracted " << rows.size() << " keypoints\n";
  return kOk;
}

inline int cmd_eval(const Common& c, const std::string& traj_dir, const std::string& params_path,
                    const std::string& refs_path, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto params = detail::load_params(params_path);
  Trajectory t = detail::load(traj_dir);
  const double threshold = cfg.get_real("eval.threshold_px", 3.0);
  const double temperature = keypoint_config_from(cfg).temperature;
  const int per_bin = static_cast<int>(cfg.get_int("eval.pairs_per_bin", 100));
  const double tol = cfg.get_real("eval.occlusion_tol", 0.01);
  auto pairs = make_heldout_pairs(t, per_bin, tol, cfg.get_u64("eval.seed", 0));
  auto encode_frame = [&](std::size_t i) { return encode(params, t.frames[i]); };
  EncodingCache cache(encode_frame);
  auto cached = [&](std::size_t i) { return cache(i); };
  auto pck = eval_pck(cached, t, pairs, threshold, temperature);

  std::string csv = "scope,ratio_lo,ratio_hi,evaluated,correct,fraction\n";
  csv += "all,,," + std::to_string(pck.evaluated) + "," + std::to_string(pck.correct) + "," +
         io::format_real(pck.fraction_correct()) + "\n";
  std::string report = "pck@" + detail::fixed(threshold, 1) + "px " + detail::fixed(pck.fraction_correct(), 4) + " (" +
                       std::to_string(pck.correct) + "/" + std::to_string(pck.evaluated) + ")\n";
  for (const auto& b : pck.bins) {
    csv += "bin," + io::format_real(b.lo) + "," + io::format_real(b.hi) + "," + std::to_string(b.evaluated) + "," +
           std::to_string(b.correct) + "," + io::format_real(b.fraction()) + "\n";
    report += "  ratio [" + detail::fixed(b.lo, 2) + ", " + detail::fixed(b.hi, 2) + ") " + detail::fixed(b.fraction(), 4) +
              " (" + std::to_string(b.correct) + "/" + std::to_string(b.evaluated) + ")\n";
  }
  report += "chance " + detail::fixed(chance_rate(threshold, t.frames.front().width(), t.frames.front().height()), 4) + "\n";

  if (!refs_path.empty()) {
    auto refs = io::decode_references(io::read_file(refs_path), refs_path);
    if (t.ids.size() != t.size()) throw Error(Errc::MissingArtifact, traj_dir + " has no oracle id rasters");
    auto disc = eval_discrimination(cached, t, refs, temperature);
    report += "discrimination " + detail::fixed(disc.fraction(), 4) + " (" + std::to_string(disc.correct) + "/" +
              std::to_string(disc.evaluated) + ")\n";
    try {
      auto occ = eval_occlusion(cached, t, refs, tol);
      report += "occlusion visible " + detail::fixed(occ.mean_visible) + " (n=" + std::to_string(occ.n_visible) +
                ", se " + detail::fixed(occ.stderr_visible) + ") occluded " + detail::fixed(occ.mean_occluded) +
                " (n=" + std::to_string(occ.n_occluded) + ")\n";
    } catch (const Error& e) {
      if (e.code() != Errc::InsufficientOcclusion) throw;
      report += "occlusion insufficient: " + std::string(e.what()) + "\n";
    }
  }
  detail::write_text(fs::path(c.out) / "pck.csv", csv);
  detail::write_text(fs::path(c.out) / "report.txt", report);
  detail::echo_config(c, cfg);
  out << report;
  return kOk;
}

/// Scripted reaches toward the first reference keypoint (lifted to world),
/// observed through every reference of one frame plus the hand state.
inline std::vector<Demonstration> script_reach_demos(const Trajectory& t, std::span<const io::KeypointRow> rows,
                                                     int n_demos, int steps, std::uint64_t seed) {
  if (rows.empty()) throw Error(Errc::EmptyDataset, "no keypoints to reach for");
  std::vector<int> frame_ids;
  for (const auto& r : rows)
    if (frame_ids.empty() || frame_ids.back() != r.frame_id) frame_ids.push_back(r.frame_id);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, frame_ids.size() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const PolicyParams sig;  // default sigmas set the noise scale
  const double gain = 0.2;
  const Vec3 hover(0.0, 0.0, 0.05);
  std::vector<Demonstration> demos;
  for (int d = 0; d < n_demos; ++d) {
    int fid = frame_ids[pick(rng)];
    const Frame& frame = t.frames[frame_index_of(t, fid)];
    std::vector<double> obs_kp;
    std::optional<Vec3> target;
    for (const auto& r : rows) {
      if (r.frame_id != fid) continue;
      Vec3 w = frame.pose.apply(r.kp.lift);
      if (!target) target = w + hover;
      for (int k = 0; k < 3; ++k) obs_kp.push_back(w[k]);
    }
    Vec3 ee = *target + Vec3(0.2 * unit(rng), 0.2 * unit(rng), 0.15 + 0.1 * unit(rng));
    double yaw = 0.5 * unit(rng);
    Demonstration demo;
    for (int s = 0; s < steps; ++s) {
      Step st;
      st.obs.keypoints = obs_kp;
      st.obs.proprio = {ee.x(), ee.y(), ee.z(), yaw};
      st.action.dtrans = gain * (*target - ee);
      st.action.drot = Vec3(0.0, 0.0, -gain * yaw);
      for (int k = 0; k < kActionDim; ++k) st.action[k] += sig.sigma(k) * gauss(rng);
      ee += st.action.dtrans;
      yaw += st.action.drot.z();
      demo.push_back(std::move(st));
    }
    demos.push_back(std::move(demo));
  }
  return demos;
}

inline int cmd_bc_data(const Common& c, const std::string& traj_dir, const std::string& keypoints_path,
                       std::ostream& out) {
  Config cfg = detail::effective_config(c);
  Trajectory t = detail::load(traj_dir);
  auto rows = io::decode_keypoints(io::read_file(keypoints_path), keypoints_path);
  if (keypoint_config_from(cfg).lift != LiftMode::CameraFrame) {
    throw Error(Errc::InvalidArgument, "reach scripting needs camera_frame keypoint lifts");
  }
  int n = static_cast<int>(cfg.get_int("bc.demos", 32));
  int steps = static_cast<int>(cfg.get_int("bc.steps", 20));
  if (n < 1 || steps < 1) throw Error(Errc::InvalidArgument, "bc.demos and bc.steps must be >= 1");
  auto demos = script_reach_demos(t, rows, n, steps, cfg.get_u64("bc.seed", 0));
  for (std::size_t d = 0; d < demos.size(); ++d) {
    char name[32];
    std::snprintf(name, sizeof name, "demo_%04zu.csv", d);
    detail::write_text(fs::path(c.out) / name, io::encode_demonstration(demos[d]));
  }
  detail::echo_config(c, cfg);
  out << "wrote " << demos.size() << " demonstrations\n";
  return kOk;
}

namespace detail {
inline std::vector<Demonstration> load_demos(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::MissingArtifact, "no demonstration directory " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv" && e.path().filename().string().rfind("demo_", 0) == 0) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Demonstration> demos;
  for (const auto& f : files) demos.push_back(io::decode_demonstration(io::read_file(f), f.string()));
  if (demos.empty()) throw Error(Errc::EmptyDataset, "no demo_*.csv files in " + dir);
  return demos;
}
}  // namespace detail

inline int cmd_bc_train(const Common& c, const std::string& data_dir, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto pcfg = policy_config_from(cfg);
  auto demos = detail::load_demos(data_dir);
  auto params = train_policy(demos, pcfg);
  io::atomic_write(fs::path(c.out) / "policy.txt", io::encode_policy(params));
  std::string report = "mean_nll " + io::format_real(mean_nll(params, demos)) + "\nentropy_floor " +
                       io::format_real(entropy_floor(params)) + "\n";
  detail::write_text(fs::path(c.out) / "report.txt", report);
  detail::echo_config(c, cfg);
  out << report;
  return kOk;
}

inline int cmd_bc_eval(const Common& c, const std::string& data_dir, const std::string& policy_path, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto params = io::decode_policy(io::read_file(policy_path), policy_path);
  auto demos = detail::load_demos(data_dir);
  double trans_err = 0.0, rot_err = 0.0;
  std::size_t n = 0, within = 0;
  for (const auto& demo : demos)
    for (const auto& st : demo) {
      Action mu = predict(params, st.obs);
      trans_err += (mu.dtrans - st.action.dtrans).norm();
      rot_err += (mu.drot - st.action.drot).norm();
      bool ok = true;
      for (int k = 0; k < kActionDim; ++k) ok = ok && std::abs(mu[k] - st.action[k]) < 2.0 * params.sigma(k);
      within += ok ? 1 : 0;
      ++n;
    }
  std::string report = "steps " + std::to_string(n) + "\nmean_nll " + io::format_real(mean_nll(params, demos)) +
                       "\nentropy_floor " + io::format_real(entropy_floor(params)) + "\nmean_translation_error_m " +
                       io::format_real(trans_err / static_cast<double>(n)) + "\nmean_rotation_error_rad " +
                       io::format_real(rot_err / static_cast<double>(n)) + "\nwithin_2sigma " +
                       io::format_real(static_cast<double>(within) / static_cast<double>(n)) + "\n";
  detail::write_text(fs::path(c.out) / "report.txt", report);
  detail::echo_config(c, cfg);
  out << report;
  return kOk;
}

inline int cmd_viz(const Common& c, const std::string& traj_dir, const std::string& params_path,
                   const std::string& refs_path, int frame_index, std::ostream& out) {
  Config cfg = detail::effective_config(c);
  auto kcfg = keypoint_config_from(cfg);
  auto params = detail::load_params(params_path);
  auto refs = io::decode_references(io::read_file(refs_path), refs_path);
  Trajectory t = detail::load(traj_dir);
  if (frame_index < 0 || frame_index >= static_cast<int>(t.size())) {
    throw Error(Errc::OutOfBounds, "frame index " + std::to_string(frame_index) + " outside trajectory");
  }
  const auto f = static_cast<std::size_t>(frame_index);
  auto desc = encode(params, t.frames[f]);
  for (std::size_t i = 0; i < refs.entries.size(); ++i) {
    auto act = activation_map(desc, refs.entries[i].descriptor, kcfg.temperature);
    io::atomic_write(fs::path(c.out) / ("activation_" + std::to_string(i) + ".pgm"),
                     io::encode_pgm(io::activation_raster(act)));
  }
  for (const auto& m : t.masks[f])
    io::atomic_write(fs::path(c.out) / ("mask_" + std::to_string(m.object_label) + ".pgm"), io::encode_mask(m));
  io::atomic_write(fs::path(c.out) / "rgb.ppm", io::encode_ppm(t.frames[f].rgb));
  detail::echo_config(c, cfg);
  out << "wrote " << refs.size() << " activation maps\n";
  return kOk;
}

// ---------------------------------------------------------------- entry

/// Parses argv and runs one subcommand. Exit codes: 0 ok, 1 usage, 2 data.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dense descriptor pipeline: scene generation, fusion, training, keypoints, evaluation"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&c](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--config", c.config, "INI configuration file");
    sub->add_option("--seed", c.seed, "master seed for every random stage");
    sub->add_option("--threads", c.threads, "worker threads for per-pixel stages (0 = all cores)");
    sub->add_option("--set", c.overrides, "override a config key, section.key=value");
    if (needs_out) sub->add_option("--out", c.out, "output directory")->required();
  };

  std::string traj, cloud, params, refs, data, policy, keypoints;
  std::vector<std::string> trajs, background;
  int count = 1, frame_index = 0;
  bool dump = false;

  auto* gen = app.add_subcommand("generate", "render a scene and camera trajectory");
  add_common(gen);
  auto* fuse = app.add_subcommand("fuse", "TSDF fusion, object cloud and clustering");
  add_common(fuse);
  fuse->add_option("--traj", traj, "trajectory directory")->required();
  auto* masks = app.add_subcommand("masks", "reproject object clusters into per-frame masks");
  add_common(masks);
  masks->add_option("--traj", traj, "trajectory directory")->required();
  masks->add_option("--cloud", cloud, "labeled cloud CSV")->required();
  auto* sample = app.add_subcommand("sample", "draw training pairs to CSV");
  add_common(sample);
  sample->add_option("--traj", traj, "masked trajectory directory")->required();
  sample->add_option("--count", count, "number of pairs")->check(CLI::PositiveNumber);
  auto* tr = app.add_subcommand("train", "train the descriptor encoder");
  add_common(tr);
  tr->add_option("--traj", trajs, "masked trajectory directories")->required();
  tr->add_option("--background", background, "distractor-only trajectory directories");
  auto* rf = app.add_subcommand("refs", "select reference descriptors");
  add_common(rf);
  rf->add_option("--traj", traj, "masked trajectory directory")->required();
  rf->add_option("--params", params, "encoder parameter file")->required();
  rf->add_option("--frame-index", frame_index, "frame to take references from");
  auto* ex = app.add_subcommand("extract", "keypoints for every frame");
  add_common(ex);
  ex->add_option("--traj", traj, "trajectory directory")->required();
  ex->add_option("--params", params, "encoder parameter file")->required();
  ex->add_option("--refs", refs, "reference CSV")->required();
  ex->add_flag("--dump-descriptors", dump, "also write one descriptor map per frame");
  auto* ev = app.add_subcommand("eval", "correspondence, discrimination and occlusion reports");
  add_common(ev);
  ev->add_option("--traj", traj, "held-out masked trajectory directory")->required();
  ev->add_option("--params", params, "encoder parameter file")->required();
  ev->add_option("--refs", refs, "reference CSV for discrimination and occlusion");
  auto* bd = app.add_subcommand("bc-data", "script reaching demonstrations from keypoints");
  add_common(bd);
  bd->add_option("--traj", traj, "trajectory directory")->required();
  bd->add_option("--keypoints", keypoints, "keypoint CSV")->required();
  auto* bt = app.add_subcommand("bc-train", "fit the linear Gaussian policy");
  add_common(bt);
  bt->add_option("--data", data, "directory of demo_*.csv")->required();
  auto* be = app.add_subcommand("bc-eval", "score a policy on demonstrations");
  add_common(be);
  be->add_option("--data", data, "directory of demo_*.csv")->required();
  be->add_option("--policy", policy, "policy file")->required();
  auto* vz = app.add_subcommand("viz", "activation and mask rasters for one frame");
  add_common(vz);
  vz->add_option("--traj", traj, "masked trajectory directory")->required();
  vz->add_option("--params", params, "encoder parameter file")->required();
  vz->add_option("--refs", refs, "reference CSV")->required();
  vz->add_option("--frame-index", frame_index, "frame to render");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  for (const auto& o : c.overrides) {
    try {
      Config().set_override(o);
    } catch (const Error& e) {
      err << "usage error: --set " << o << ": expected section.key=value\n";
      return kUsage;
    }
  }

  try {
    if (gen->parsed()) return cmd_generate(c, out);
    if (fuse->parsed()) return cmd_fuse(c, traj, out);
    if (masks->parsed()) return cmd_masks(c, traj, cloud, out);
    if (sample->parsed()) return cmd_sample(c, traj, count, out);
    if (tr->parsed()) return cmd_train(c, trajs, background, out);
    if (rf->parsed()) return cmd_refs(c, traj, params, frame_index, out);
    if (ex->parsed()) return cmd_extract(c, traj, params, refs, dump, out);
    if (ev->parsed()) return cmd_eval(c, traj, params, refs, out);
    if (bd->parsed()) return cmd_bc_data(c, traj, keypoints, out);
    if (bt->parsed()) return cmd_bc_train(c, data, out);
    if (be->parsed()) return cmd_bc_eval(c, data, policy, out);
    if (vz->parsed()) return cmd_viz(c, traj, params, refs, frame_index, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  err << app.help();
  return kUsage;
}

}  // namespace don::cli
