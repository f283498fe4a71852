#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "restyle/attention.hpp"
#include "restyle/config.hpp"
#include "restyle/diffusion.hpp"
#include "restyle/error.hpp"
#include "restyle/lift.hpp"
#include "restyle/metrics.hpp"
#include "restyle/parallel.hpp"
#include "restyle/raster_io.hpp"
#include "restyle/scene_io.hpp"
#include "restyle/synth.hpp"
#include "restyle/warpgeom.hpp"

namespace restyle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2 };

namespace detail {

/// Non-finite numbers become strings so reports stay valid JSON.
inline json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline fs::path manifest_path(const std::string& p) {
  const fs::path path(p);
  return fs::is_directory(path) ? path / "manifest.json" : path;
}

inline std::string numbered(int i, const char* kind, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "frame_%03d_%s%s", i, kind, ext);
  return buf;
}

inline void check_frame(const SceneManifest& scene, int i, const std::string& flag) {
  if (i < 0 || i >= scene.size())
    fail(ErrorCode::ConfigValidation,
         flag + ": frame " + std::to_string(i) + " outside [0, " + std::to_string(scene.size() - 1) + "]");
}

inline std::vector<ClassOverride> parse_matches(const std::vector<std::string>& specs) {
  std::vector<ClassOverride> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      fail(ErrorCode::ConfigValidation, "--match: expected source=style, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

inline json match_json(const ClassMatch& m) {
  json pairs = json::object();
  for (const auto& [a, b] : m.pairs) pairs[a] = b;
  return pairs;
}

// Shared flags: config file, seed and thread cap.
struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON pipeline config");
    app->add_option("--seed", seed, "RNG seed (overrides config)");
    app->add_option("--threads", threads, "worker thread cap (fallback: RESTYLE_THREADS)");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config ? load_config(*config) : PipelineConfig{};
    if (seed) c.seed = *seed;
    if (threads) {
      if (*threads < 1) fail(ErrorCode::ConfigValidation, "--threads: must be >= 1");
      set_max_threads(*threads);
    }
    return c;
  }
};

inline json report_header(const char* command, const PipelineConfig& c) {
  return {{"command", command}, {"config", config_to_json(c)}};
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string out;
  int frames = 5;
  int width = 64;
  int height = 64;
  std::string trajectory = "pan";
  double noise = 0.0;
};

inline int run_synth(const SynthArgs& a, std::ostream& log) {
  const PipelineConfig cfg = a.common.resolve();
  validate(cfg);
  if (a.frames < 1) fail(ErrorCode::ConfigValidation, "--frames: must be >= 1");
  const TrajectoryKind kind = ::restyle::detail::parse_enum<TrajectoryKind>(
      "--trajectory", a.trajectory,
      {{"pan", TrajectoryKind::Pan}, {"revisit", TrajectoryKind::Revisit}, {"static", TrajectoryKind::Static}});
  const SynthScene s = synth_scene(make_synth_config(a.frames, kind, a.width, a.height, a.noise), cfg.seed);
  const fs::path out(a.out);
  save_scene(s.scene, out);
  const int n = s.truth.frames;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::string tag = std::to_string(i) + "_" + std::to_string(j);
      write_raster(s.truth.flow(i, j), out / "gt" / ("flow_" + tag + ".rsfl"));
      write_raster(s.truth.covisible(i, j), out / "gt" / ("covis_" + tag + ".rsim"));
    }
  write_json_file(poses_to_json(s.scene.poses()), out / "poses.json");
  json report = report_header("synth", cfg);
  report["frames"] = n;
  report["width"] = a.width;
  report["height"] = a.height;
  report["trajectory"] = a.trajectory;
  json labels = json::object();
  for (const auto& [id, name] : s.scene.labels) labels[std::to_string(id)] = name;
  report["labels"] = labels;
  write_json_file(report, out / "report.json");
  log << "wrote " << n << " frames to " << out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct StylizeArgs {
  Common common;
  std::string scene;
  int frame = 0;
  std::string style_scene;
  int style_frame = 0;
  std::vector<std::string> matches;
  std::optional<std::string> unmatched;
  std::optional<int> d;
  std::optional<double> strength;
  bool refine = false;
  std::string out;
};

// Per-pixel log prior that strongly favors the component of the pixel's label.
inline std::vector<double> label_log_prior(const LabelRaster& labels, const GaussianMixtureModel& gmm) {
  std::map<std::uint16_t, std::size_t> component;
  for (auto id : labels.data) component.emplace(id, 0);
  std::size_t k = 0;
  for (auto& [id, idx] : component) idx = k++;
  const std::size_t kcount = gmm.components.size();
  const double own = kcount == 1 ? 0.0 : std::log(0.9);
  const double other = kcount == 1 ? 0.0 : std::log(0.1 / static_cast<double>(kcount - 1));
  std::vector<double> prior(labels.data.size() * kcount, other);
  for (std::size_t p = 0; p < labels.data.size(); ++p) prior[p * kcount + component.at(labels.data[p])] = own;
  return prior;
}

inline int run_stylize(const StylizeArgs& a, std::ostream& log) {
  PipelineConfig cfg = a.common.resolve();
  if (a.unmatched) cfg.attention.unmatched = parse_unmatched(*a.unmatched, "--unmatched");
  if (a.d) cfg.attention.d = *a.d;
  if (a.strength) cfg.diffusion.strength = *a.strength;
  validate(cfg);

  const SceneManifest scene = load_scene(manifest_path(a.scene));
  const SceneManifest style = load_scene(manifest_path(a.style_scene));
  check_frame(scene, a.frame, "--frame");
  check_frame(style, a.style_frame, "--style-frame");
  const auto& src = scene.frames[static_cast<std::size_t>(a.frame)];
  const auto& sty = style.frames[static_cast<std::size_t>(a.style_frame)];
  if (src.image.width % cfg.attention.d != 0 || src.image.height % cfg.attention.d != 0 ||
      src.image.width / cfg.attention.d != src.image.height / cfg.attention.d)
    fail(ErrorCode::ConfigValidation, "attention.d: " + std::to_string(cfg.attention.d) +
                                          " must tile the " + extent_string(src.image.width, src.image.height) +
                                          " image into square patches");

  const SemanticMap src_map = scene.semantic_map(a.frame);
  const SemanticMap sty_map = style.semantic_map(a.style_frame);
  const ClassMatch match = match_classes(src_map, sty_map, parse_matches(a.matches), cfg.attention.unmatched);
  TransferOptions opts;
  opts.patch = src.image.width / cfg.attention.d;
  opts.temperature = cfg.attention.temperature;
  ImageBuffer out = toy_semantic_transfer(src.image, sty.image, src_map, sty_map, match, opts);

  json report = report_header("stylize", cfg);
  if (a.refine && cfg.diffusion.strength > 0.0) {
    const NoiseSchedule schedule = cfg.schedule();
    const GaussianMixtureModel gmm = fit_label_mixture(out, src.segmentation);
    PixelMixtureDenoiser uncond(gmm, schedule);
    PixelMixtureDenoiser semantic(gmm, schedule);
    semantic.set_pixel_log_prior(label_log_prior(src.segmentation, gmm));
    PixelMixtureDenoiser depth(gmm, schedule, {3, 0.05, 0.05});
    GuidedDenoiser guided(uncond, semantic, depth, cfg.guidance());
    WarpResult full;
    full.image = out;
    full.mask = ImageBuffer(out.width, out.height, 1, 1.0f);
    const RefinerCondition cond = compose_condition(full, src.depth);
    Rng rng = Rng(cfg.seed).split(4);
    const State x(out.data.begin(), out.data.end());
    const State refined = sdedit_refine(x, cfg.diffusion.strength, guided, schedule, rng, &cond);
    for (std::size_t i = 0; i < refined.size(); ++i)
      out.data[i] = static_cast<float>(std::clamp(std::isfinite(refined[i]) ? refined[i] : 0.0, 0.0, 1.0));
    report["refined"] = true;
  } else {
    report["refined"] = false;
  }

  const fs::path dir(a.out);
  write_raster(out, dir / "stylized.rsim");
  write_png(out, dir / "stylized.png");
  report["scene"] = a.scene;
  report["frame"] = a.frame;
  report["style_scene"] = a.style_scene;
  report["style_frame"] = a.style_frame;
  report["matches"] = match_json(match);
  report["psnr_vs_source"] = number(psnr(out, src.image));
  write_json_file(report, dir / "report.json");
  log << "stylized frame " << a.frame << " -> " << (dir / "stylized.rsim").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct LiftArgs {
  Common common;
  std::string scene;
  int seed_frame = 0;
  std::string stylized;
  std::optional<std::string> strategy;
  std::optional<double> gamma;
  std::optional<double> beta;
  std::optional<double> eps_cov;
  std::optional<std::string> direction;
  std::string refiner = "fill";
  bool allow_gaps = false;
  bool timings = false;
  std::string out;
};

inline int run_lift(const LiftArgs& a, std::ostream& log) {
  PipelineConfig cfg = a.common.resolve();
  if (a.strategy) cfg.warp.strategy = parse_strategy(*a.strategy, "--strategy");
  if (a.gamma) cfg.warp.gamma = *a.gamma;
  if (a.beta) cfg.warp.beta = *a.beta;
  if (a.eps_cov) cfg.warp.eps_cov = *a.eps_cov;
  if (a.direction) cfg.warp.direction = parse_direction(*a.direction, "--direction");
  validate(cfg);
  if (a.refiner != "fill" && a.refiner != "toy")
    fail(ErrorCode::ConfigValidation, "--refiner: '" + a.refiner + "' is not one of fill|toy");

  const SceneManifest scene = load_scene(manifest_path(a.scene));
  check_frame(scene, a.seed_frame, "--seed-frame");
  const ImageBuffer seed = read_image(a.stylized);

  LiftConfig lc = cfg.lift();
  lc.allow_gaps = a.allow_gaps;
  Rng rng = Rng(cfg.seed).split(3);
  LiftResult result;
  if (a.refiner == "fill") {
    result = lift_sequence(scene, seed, a.seed_frame, HarmonicFillRefiner{}, lc, rng);
  } else {
    const NoiseSchedule schedule = cfg.schedule();
    require(seed.same_extent(scene.frames[static_cast<std::size_t>(a.seed_frame)].segmentation) && seed.channels == 3,
            ErrorCode::DimensionMismatch, "stylized seed does not match the scene");
    const PixelMixtureDenoiser denoiser(
        fit_label_mixture(seed, scene.frames[static_cast<std::size_t>(a.seed_frame)].segmentation), schedule);
    const ToyDiffusionRefiner refiner(denoiser, schedule, cfg.diffusion.strength, cfg.warp.reimpose);
    result = lift_sequence(scene, seed, a.seed_frame, refiner, lc, rng);
  }

  const fs::path dir(a.out);
  json frames = json::array();
  for (const auto& [i, img] : result.stylized) {
    write_raster(img, dir / numbered(i, "stylized", ".rsim"));
    write_png(img, dir / numbered(i, "stylized", ".png"));
    write_raster(result.masks.at(i), dir / numbered(i, "mask", ".rsim"));
  }
  for (const auto& r : result.reports) {
    json entry = {{"frame", r.frame}, {"sources", r.sources}, {"coverage", number(r.coverage)}, {"gap", r.gap}};
    if (a.timings) entry["milliseconds"] = number(r.milliseconds);
    frames.push_back(entry);
  }
  json report = report_header("lift", cfg);
  report["scene"] = a.scene;
  report["seed_frame"] = a.seed_frame;
  report["refiner"] = a.refiner;
  report["frames"] = frames;
  json outputs = json::array();
  for (const auto& [i, img] : result.stylized) outputs.push_back(numbered(i, "stylized", ".rsim"));
  report["outputs"] = outputs;
  write_json_file(report, dir / "report.json");
  log << "lifted " << result.stylized.size() << " frames into " << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct WarpArgs {
  Common common;
  std::string scene;
  int source = 0;
  int target = 1;
  std::optional<std::string> stylized;
  std::optional<double> beta;
  std::optional<double> eps_cov;
  std::string out;
};

inline int run_warp(const WarpArgs& a, std::ostream& log) {
  PipelineConfig cfg = a.common.resolve();
  if (a.beta) cfg.warp.beta = *a.beta;
  if (a.eps_cov) cfg.warp.eps_cov = *a.eps_cov;
  validate(cfg);
  const SceneManifest scene = load_scene(manifest_path(a.scene));
  check_frame(scene, a.source, "--source");
  check_frame(scene, a.target, "--target");
  const auto& src = scene.frames[static_cast<std::size_t>(a.source)];
  const auto& dst = scene.frames[static_cast<std::size_t>(a.target)];
  const ImageBuffer image = a.stylized ? read_image(*a.stylized) : src.image;

  const FlowField flow = flow_from_pointmaps(src.pointmap, dst.pose, dst.intrinsics, {1e-6, cfg.warp.margin});
  const WarpResult warp = softmax_splat(image, flow, importance_from_depth(src.depth), {cfg.warp.beta, cfg.warp.eps_cov});
  const fs::path dir(a.out);
  write_raster(flow, dir / "flow.rsfl");
  write_raster(warp.image, dir / "warped.rsim");
  write_png(warp.image, dir / "warped.png");
  write_raster(warp.mask, dir / "mask.rsim");
  if (warp.image.channels == 3) write_raster(compose_condition(warp, dst.depth), dir / "condition.rscn");
  json report = report_header("warp", cfg);
  report["source"] = a.source;
  report["target"] = a.target;
  report["coverage"] = number(warp.coverage());
  report["dropped_weight"] = number(warp.dropped_weight);
  write_json_file(report, dir / "report.json");
  log << "warped frame " << a.source << " -> " << a.target << " (coverage " << warp.coverage() << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  Common common;
  std::string scene;
  int frame = 0;
  std::string style_scene;
  int style_frame = 0;
  std::vector<std::string> matches;
  std::optional<std::string> unmatched;
  std::optional<int> d;
  std::optional<int> query;
  std::string out;
};

inline ImageBuffer score_map(const Eigen::MatrixXd& scores, int row, int d) {
  ImageBuffer map(d, d, 1);
  for (int j = 0; j < d * d; ++j) map.data[static_cast<std::size_t>(j)] = static_cast<float>(scores(row, j));
  return map;
}

inline int run_inspect(const InspectArgs& a, std::ostream& log) {
  PipelineConfig cfg = a.common.resolve();
  if (a.unmatched) cfg.attention.unmatched = parse_unmatched(*a.unmatched, "--unmatched");
  if (a.d) cfg.attention.d = *a.d;
  validate(cfg);
  const SceneManifest scene = load_scene(manifest_path(a.scene));
  const SceneManifest style = load_scene(manifest_path(a.style_scene));
  check_frame(scene, a.frame, "--frame");
  check_frame(style, a.style_frame, "--style-frame");
  const int d = cfg.attention.d;
  const SemanticMap src_map = downsample_map(scene.semantic_map(a.frame), d);
  const SemanticMap sty_map = downsample_map(style.semantic_map(a.style_frame), d);
  const ClassMatch match = match_classes(scene.semantic_map(a.frame), style.semantic_map(a.style_frame),
                                         parse_matches(a.matches), cfg.attention.unmatched);
  const KeepAwareMask km = build_attention_mask_with_keep(src_map, sty_map, match);
  const AttentionMask raw = ::restyle::detail::raw_attention_mask(src_map, sty_map, match);
  const int query = a.query.value_or((d / 2) * d + d / 2);
  if (query < 0 || query >= d * d)
    fail(ErrorCode::ConfigValidation, "--query: token " + std::to_string(query) + " outside [0, " + std::to_string(d * d - 1) + "]");

  ImageBuffer mask_img(km.mask.cols, km.mask.rows, 1);
  for (int i = 0; i < km.mask.rows; ++i)
    for (int j = 0; j < km.mask.cols; ++j) mask_img.at(j, i) = km.mask.at(i, j) ? 1.0f : 0.0f;

  // Token features: mean colors over each image's own d x d grid cells.
  auto features = [d](const ImageBuffer& img) {
    require(img.width % d == 0 && img.height % d == 0, ErrorCode::ConfigValidation,
            "attention.d: " + std::to_string(d) + " must divide " + extent_string(img.width, img.height));
    TokenTensor t = TokenTensor::Zero(d * d, img.channels);
    const int pw = img.width / d;
    const int ph = img.height / d;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < img.channels; ++c) t((y / ph) * d + x / pw, c) += img.at(x, y, c) / (pw * ph);
    return t;
  };
  const TokenTensor q = features(scene.frames[static_cast<std::size_t>(a.frame)].image) / cfg.attention.temperature;
  const TokenTensor k = features(style.frames[static_cast<std::size_t>(a.style_frame)].image);
  const Eigen::MatrixXd plain = attention_scores(q, k);
  const Eigen::MatrixXd masked = attention_scores(q, k, km.mask);

  const fs::path dir(a.out);
  write_raster(mask_img, dir / "mask.rsim");
  write_raster(score_map(plain, query, d), dir / "scores_raw.rsim");
  write_raster(score_map(masked, query, d), dir / "scores_masked.rsim");
  int empty = 0, keep = 0;
  for (int i = 0; i < raw.rows; ++i) empty += raw.row_empty(i) ? 1 : 0;
  for (auto v : km.keep_rows) keep += v;
  json report = report_header("inspect-mask", cfg);
  report["rows"] = km.mask.rows;
  report["cols"] = km.mask.cols;
  report["query"] = query;
  report["query_class"] = src_map.class_at(static_cast<std::size_t>(query));
  report["unmatched_rows"] = empty;
  report["keep_rows"] = keep;
  report["matches"] = match_json(match);
  write_json_file(report, dir / "report.json");
  log << "mask " << km.mask.rows << "x" << km.mask.cols << ", " << empty << " unmatched rows\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::optional<std::string> pred_depth, ref_depth, pred_poses, ref_poses, mask;
  std::vector<std::string> images;
  bool relative = false;
  std::optional<std::string> out;
};

inline int run_eval(const EvalArgs& a, std::ostream& log) {
  const PipelineConfig cfg = a.common.resolve();
  validate(cfg);
  if (a.pred_depth.has_value() != a.ref_depth.has_value())
    fail(ErrorCode::ConfigValidation, "--pred-depth and --ref-depth must be given together");
  if (a.pred_poses.has_value() != a.ref_poses.has_value())
    fail(ErrorCode::ConfigValidation, "--pred-poses and --ref-poses must be given together");
  if (!a.images.empty() && a.images.size() != 2) fail(ErrorCode::ConfigValidation, "--images: expected two paths");
  if (!a.pred_depth && !a.pred_poses && a.images.empty())
    fail(ErrorCode::ConfigValidation, "eval: nothing to evaluate (give depths, poses or images)");

  std::optional<ImageBuffer> mask;
  if (a.mask) mask = read_image(*a.mask);
  json report = report_header("eval", cfg);
  if (a.pred_depth) {
    const auto r = depth_metrics(read_depth(*a.pred_depth), read_depth(*a.ref_depth), mask ? &*mask : nullptr);
    report["depth"] = {{"AbsRel", number(r.abs_rel)},
                       {"SqRel", number(r.sq_rel)},
                       {"delta1", number(r.delta1)},
                       {"valid_pixels", r.valid_pixels}};
  }
  if (!a.images.empty()) {
    const ImageBuffer x = read_image(a.images[0]);
    const ImageBuffer y = read_image(a.images[1]);
    report["image"] = {{"PSNR", number(psnr(x, y, mask ? &*mask : nullptr))}, {"SSIM", number(ssim(x, y))}};
  }
  if (a.pred_poses) {
    const auto est = poses_from_json(read_json_file(*a.pred_poses), "--pred-poses");
    const auto ref = poses_from_json(read_json_file(*a.ref_poses), "--ref-poses");
    require(est.size() == ref.size(), ErrorCode::LengthMismatch,
            "pred has " + std::to_string(est.size()) + " poses, ref has " + std::to_string(ref.size()));
    const PoseErrorReport r = a.relative ? relative_pose_errors(est, ref) : pose_errors(est, ref);
    json rot_auc = json::object(), trans_auc = json::object(), rot = json::array(), trans = json::array();
    for (double t : {5.0, 10.0, 15.0}) rot_auc[std::to_string(static_cast<int>(t))] = number(pose_auc(r.rotation_deg, t));
    for (double t : {1.0, 2.0, 5.0})
      trans_auc[std::to_string(static_cast<int>(t))] = number(pose_auc(r.translation_cm, t));
    for (double e : r.rotation_deg) rot.push_back(number(e));
    for (double e : r.translation_cm) trans.push_back(number(e));
    report["pose"] = {{"mode", a.relative ? "relative" : "absolute"},
                      {"rotation_auc", rot_auc},
                      {"translation_auc", trans_auc},
                      {"rotation_errors_deg", rot},
                      {"translation_errors_cm", trans},
                      {"alignment_scale", number(r.alignment.scale)}};
  }
  if (a.out) write_json_file(report, *a.out);
  log << report.dump(2) << '\n';
  return kOk;
}

inline int code_for(ErrorCode c) {
  return c == ErrorCode::ConfigValidation || c == ErrorCode::UnknownSubcommand ? kValidation : kRuntime;
}

}  // namespace detail

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"synth", "stylize", "lift", "warp", "inspect-mask", "eval"};
  return names;
}

/// Entry point shared by the binary and the tests. Returns 0 on success,
/// 1 on validation errors, 2 on runtime errors.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"restyle: desk-scale semantic style transfer and multi-view lifting"};
  app.name("restyle");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "render a synthetic scene with ground truth");
  synth.common.attach(s);
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--frames", synth.frames, "number of frames");
  s->add_option("--width", synth.width, "image width");
  s->add_option("--height", synth.height, "image height");
  s->add_option("--trajectory", synth.trajectory, "pan|revisit|static");
  s->add_option("--noise", synth.noise, "additive Gaussian image noise");

  StylizeArgs sty;
  auto* st = app.add_subcommand("stylize", "semantic appearance transfer of one frame");
  sty.common.attach(st);
  st->add_option("--scene", sty.scene, "source scene manifest or directory")->required();
  st->add_option("--frame", sty.frame, "source frame index");
  st->add_option("--style", sty.style_scene, "style scene manifest or directory")->required();
  st->add_option("--style-frame", sty.style_frame, "style frame index");
  st->add_option("--match", sty.matches, "class override source=style (repeatable)");
  st->add_option("--unmatched", sty.unmatched, "global|keep");
  st->add_option("--d", sty.d, "token grid side");
  st->add_option("--strength", sty.strength, "SDEdit strength for --refine");
  st->add_flag("--refine", sty.refine, "guided diffusion refinement after transfer");
  st->add_option("--out", sty.out, "output directory")->required();

  LiftArgs lift;
  auto* l = app.add_subcommand("lift", "propagate a stylized frame through the scene");
  lift.common.attach(l);
  l->add_option("--scene", lift.scene, "scene manifest or directory")->required();
  l->add_option("--seed-frame", lift.seed_frame, "index of the stylized frame");
  l->add_option("--stylized", lift.stylized, "stylized seed raster (.rsim or .png)")->required();
  l->add_option("--strategy", lift.strategy, "last|all|ours");
  l->add_option("--gamma", lift.gamma, "history decay");
  l->add_option("--beta", lift.beta, "splat sharpness");
  l->add_option("--eps-cov", lift.eps_cov, "relative coverage threshold");
  l->add_option("--direction", lift.direction, "forward|both");
  l->add_option("--refiner", lift.refiner, "fill|toy");
  l->add_flag("--allow-gaps", lift.allow_gaps, "continue through frames with no warped pixels");
  l->add_flag("--timings", lift.timings, "record per-frame timings in the report");
  l->add_option("--out", lift.out, "output directory")->required();

  WarpArgs warp;
  auto* w = app.add_subcommand("warp", "forward-warp one frame into another");
  warp.common.attach(w);
  w->add_option("--scene", warp.scene, "scene manifest or directory")->required();
  w->add_option("--source", warp.source, "source frame");
  w->add_option("--target", warp.target, "target frame");
  w->add_option("--stylized", warp.stylized, "image to warp instead of the source render");
  w->add_option("--beta", warp.beta, "splat sharpness");
  w->add_option("--eps-cov", warp.eps_cov, "relative coverage threshold");
  w->add_option("--out", warp.out, "output directory")->required();

  InspectArgs insp;
  auto* im = app.add_subcommand("inspect-mask", "dump the semantic attention mask and score maps");
  insp.common.attach(im);
  im->add_option("--scene", insp.scene, "source scene")->required();
  im->add_option("--frame", insp.frame, "source frame");
  im->add_option("--style", insp.style_scene, "style scene")->required();
  im->add_option("--style-frame", insp.style_frame, "style frame");
  im->add_option("--match", insp.matches, "class override source=style (repeatable)");
  im->add_option("--unmatched", insp.unmatched, "global|keep");
  im->add_option("--d", insp.d, "token grid side");
  im->add_option("--query", insp.query, "query token for the score maps");
  im->add_option("--out", insp.out, "output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "depth, image and pose metrics");
  ev.common.attach(e);
  e->add_option("--pred-depth", ev.pred_depth, "predicted depth (.rsdp or .pfm)");
  e->add_option("--ref-depth", ev.ref_depth, "reference depth");
  e->add_option("--pred-poses", ev.pred_poses, "JSON list of estimated poses");
  e->add_option("--ref-poses", ev.ref_poses, "JSON list of reference poses");
  e->add_option("--images", ev.images, "two images to compare")->expected(2);
  e->add_option("--mask", ev.mask, "1-channel mask for depth and PSNR");
  e->add_flag("--relative", ev.relative, "evaluate relative pair motions");
  e->add_option("--out", ev.out, "report path");

  if (!args.empty() && args[0].rfind('-', 0) != 0) {
    bool known = false;
    for (const auto& n : subcommands()) known = known || n == args[0];
    if (!known) {
      err << "UnknownSubcommand: '" << args[0] << "' (expected synth|stylize|lift|warp|inspect-mask|eval)\n";
      return kValidation;
    }
  }

  std::vector<std::string> storage{"restyle"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& pe) {
    err << "ConfigValidation: " << pe.what() << '\n';
    return kValidation;
  }

  try {
    int rc = kOk;
    if (s->parsed()) rc = run_synth(synth, out);
    else if (st->parsed()) rc = run_stylize(sty, out);
    else if (l->parsed()) rc = run_lift(lift, out);
    else if (w->parsed()) rc = run_warp(warp, out);
    else if (im->parsed()) rc = run_inspect(insp, out);
    else if (e->parsed()) rc = run_eval(ev, out);
    set_max_threads(0);
    return rc;
  } catch (const Error& ex) {
    set_max_threads(0);
    err << ex.what() << '\n';
    return code_for(ex.code());
  } catch (const std::exception& ex) {
    set_max_threads(0);
    err << "error: " << ex.what() << '\n';
    return kRuntime;
  }
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace restyle::cli
