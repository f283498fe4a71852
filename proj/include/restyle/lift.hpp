#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "restyle/diffusion.hpp"
#include "restyle/error.hpp"
#include "restyle/raster.hpp"
#include "restyle/rng.hpp"
#include "restyle/scene_io.hpp"
#include "restyle/warpgeom.hpp"

namespace restyle {

/// Turns a warp condition into a fully covered stylized frame.
class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual ImageBuffer refine(const RefinerCondition& condition, Rng& rng) const = 0;
};

inline ImageBuffer condition_rgb(const RefinerCondition& cond) {
  ImageBuffer out(cond.width, cond.height, 3);
  for (std::size_t p = 0; p < cond.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) out.data[p * 3 + c] = cond.data[p * 5 + c];
  return out;
}

inline bool any_covered(const RefinerCondition& cond) {
  for (std::size_t p = 0; p < cond.pixel_count(); ++p)
    if (cond.data[p * 5 + RefinerCondition::kMaskChannel] > 0.5f) return true;
  return false;
}

/// Holes are solved as a discrete Laplace problem (4-neighbour, Neumann at
/// the image border) with covered pixels as Dirichlet data. SOR sweeps run
/// until the largest update drops below `tolerance`.
class HarmonicFillRefiner : public Refiner {
 public:
  struct Options {
    double tolerance = 1e-6;
    double omega = 1.8;
    int max_sweeps = 200000;
  };

  HarmonicFillRefiner() = default;
  explicit HarmonicFillRefiner(Options options) : options_(options) {}

  ImageBuffer refine(const RefinerCondition& cond, Rng&) const override {
    require(any_covered(cond), ErrorCode::AllMissing, "condition has no covered pixels");
    const int w = cond.width;
    const int h = cond.height;
    std::vector<int> holes;
    double mean[3] = {0, 0, 0};
    std::size_t covered = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!cond.covered(x, y)) {
          holes.push_back(y * w + x);
          continue;
        }
        ++covered;
        for (int c = 0; c < 3; ++c) mean[c] += cond.at(x, y, c);
      }
    ImageBuffer out = condition_rgb(cond);
    if (holes.empty()) return out;

    // Work in double; covered pixels never change.
    std::vector<double> v(out.data.begin(), out.data.end());
    for (int p : holes)
      for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(p) * 3 + c] = mean[c] / static_cast<double>(covered);

    for (int sweep = 0; sweep < options_.max_sweeps; ++sweep) {
      double change = 0.0;
      for (int p : holes) {
        const int x = p % w;
        const int y = p / w;
        int nb[4];
        int count = 0;
        if (x > 0) nb[count++] = p - 1;
        if (x + 1 < w) nb[count++] = p + 1;
        if (y > 0) nb[count++] = p - w;
        if (y + 1 < h) nb[count++] = p + w;
        for (int c = 0; c < 3; ++c) {
          double sum = 0.0;
          for (int n = 0; n < count; ++n) sum += v[static_cast<std::size_t>(nb[n]) * 3 + c];
          double& cur = v[static_cast<std::size_t>(p) * 3 + c];
          const double delta = options_.omega * (sum / count - cur);
          cur += delta;
          change = std::max(change, std::abs(delta));
        }
      }
      if (change <= options_.tolerance) break;
    }
    for (int p : holes)
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = static_cast<std::size_t>(p) * 3 + c;
        out.data[i] = static_cast<float>(v[i]);
      }
    return out;
  }

 private:
  Options options_;
};

/// SDEdit over the warped RGB with the condition attached at every step.
/// With `reimpose`, covered pixels are reset after each reverse step to a
/// fresh forward sample of the warp at the new step, so at t = 0 they equal
/// the warp exactly.
class ToyDiffusionRefiner : public Refiner {
 public:
  ToyDiffusionRefiner(const Denoiser& denoiser, NoiseSchedule schedule, double strength, bool reimpose = true)
      : denoiser_(denoiser), schedule_(std::move(schedule)), strength_(strength), reimpose_(reimpose) {
    sdedit_start_step(strength_, schedule_);
  }

  ImageBuffer refine(const RefinerCondition& cond, Rng& rng) const override {
    const ImageBuffer warped = condition_rgb(cond);
    const State x0(warped.data.begin(), warped.data.end());
    const std::size_t pixels = cond.pixel_count();
    StepHook hook;
    if (reimpose_) {
      hook = [&](int t, State& state) {
        State noise(state.size());
        rng.fill_normal(noise);
        const State anchor = forward_sample(x0, t, schedule_, noise);
        for (std::size_t p = 0; p < pixels; ++p) {
          if (cond.data[p * 5 + RefinerCondition::kMaskChannel] <= 0.5f) continue;
          for (int c = 0; c < 3; ++c) state[p * 3 + c] = anchor[p * 3 + c];
        }
      };
    }
    const State result = sdedit_refine(x0, strength_, denoiser_, schedule_, rng, &cond, hook);
    ImageBuffer out(cond.width, cond.height, 3);
    for (std::size_t i = 0; i < result.size(); ++i) {
      const double v = std::isfinite(result[i]) ? result[i] : 0.0;
      out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
  }

 private:
  const Denoiser& denoiser_;
  NoiseSchedule schedule_;
  double strength_;
  bool reimpose_;
};

/// One isotropic color component per label present in `labels`, fitted from
/// `image`. Weights are pixel fractions; a variance floor keeps flat regions
/// from collapsing.
inline GaussianMixtureModel fit_label_mixture(const ImageBuffer& image, const LabelRaster& labels,
                                              double variance_floor = 1e-4) {
  require(image.channels == 3 && image.same_extent(labels), ErrorCode::DimensionMismatch,
          "mixture fit needs an RGB image and matching labels");
  struct Acc {
    double n = 0, s[3] = {0, 0, 0}, ss = 0;
  };
  std::map<std::uint16_t, Acc> acc;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      Acc& a = acc[labels.at(x, y)];
      a.n += 1;
      for (int c = 0; c < 3; ++c) {
        a.s[c] += image.at(x, y, c);
        a.ss += static_cast<double>(image.at(x, y, c)) * image.at(x, y, c);
      }
    }
  GaussianMixtureModel gmm;
  const double total = static_cast<double>(image.pixel_count());
  for (const auto& [id, a] : acc) {
    GaussianComponent comp;
    comp.weight = a.n / total;
    double sq = 0.0;
    for (int c = 0; c < 3; ++c) {
      comp.mean.push_back(a.s[c] / a.n);
      sq += comp.mean.back() * comp.mean.back();
    }
    comp.variance = std::max(variance_floor, (a.ss / a.n - sq) / 3.0);
    gmm.components.push_back(std::move(comp));
  }
  // Renormalize against rounding so validate() holds.
  double sum = 0.0;
  for (const auto& c : gmm.components) sum += c.weight;
  for (auto& c : gmm.components) c.weight /= sum;
  return gmm;
}

enum class LiftDirection { Forward, Both };

struct LiftConfig {
  FrameStrategy strategy = FrameStrategy::LastPlusTwoRandom;
  double gamma = 1.0;
  double beta = 10.0;
  double eps_cov = 1e-4;
  double margin = 0.0;
  LiftDirection direction = LiftDirection::Forward;
  /// Refine from an all-missing condition instead of aborting on NoOverlap.
  bool allow_gaps = false;
};

struct LiftFrameReport {
  int frame = 0;
  std::vector<int> sources;
  double coverage = 0.0;
  bool gap = false;
  double milliseconds = 0.0;
};

struct LiftResult {
  std::map<int, ImageBuffer> stylized;
  std::map<int, ImageBuffer> masks;
  std::vector<LiftFrameReport> reports;

  /// Stylized frames in index order.
  std::vector<ImageBuffer> frames() const {
    std::vector<ImageBuffer> out;
    for (const auto& [i, img] : stylized) out.push_back(img);
    return out;
  }
};

namespace detail {

inline WarpResult warp_frame(const SceneManifest& scene, const ImageBuffer& stylized, int from, int to,
                             const LiftConfig& config) {
  const auto& src = scene.frames[static_cast<std::size_t>(from)];
  const auto& dst = scene.frames[static_cast<std::size_t>(to)];
  const FlowField flow = flow_from_pointmaps(src.pointmap, dst.pose, dst.intrinsics, {1e-6, config.margin});
  return softmax_splat(stylized, flow, importance_from_depth(src.depth), {config.beta, config.eps_cov});
}

// Lifts along `order` (order[0] already stylized). Positions in the order play
// the role of frame indices for selection and ages.
inline void lift_along(const SceneManifest& scene, const std::vector<int>& order, const Refiner& refiner,
                       const LiftConfig& config, Rng& rng, LiftResult& result) {
  std::vector<int> history{0};
  for (int pos = 1; pos < static_cast<int>(order.size()); ++pos) {
    const auto started = std::chrono::steady_clock::now();
    const int target = order[static_cast<std::size_t>(pos)];
    const FrameSelection sel = select_frames(pos, history, config.strategy, rng);

    std::vector<WarpResult> warps;
    warps.reserve(sel.indices.size());
    LiftFrameReport report;
    report.frame = target;
    for (int src_pos : sel.indices) {
      const int source = order[static_cast<std::size_t>(src_pos)];
      report.sources.push_back(source);
      warps.push_back(warp_frame(scene, result.stylized.at(source), source, target, config));
    }
    std::vector<AgedWarp> aged;
    for (std::size_t k = 0; k < warps.size(); ++k) aged.push_back({&warps[k], pos - sel.indices[k]});
    const WarpResult blended = blend_history(aged, config.gamma);
    report.coverage = blended.coverage();
    if (report.coverage == 0.0) {
      require(config.allow_gaps, ErrorCode::NoOverlap,
              "frame " + std::to_string(target) + " receives no pixels from the selected sources");
      report.gap = true;
    }

    const RefinerCondition cond = compose_condition(blended, scene.frames[static_cast<std::size_t>(target)].depth);
    ImageBuffer out;
    if (report.gap && !any_covered(cond)) {
      try {
        out = refiner.refine(cond, rng);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AllMissing) throw;
        // Nothing to anchor on: carry the previous stylized frame.
        out = result.stylized.at(order[static_cast<std::size_t>(pos - 1)]);
      }
    } else {
      out = refiner.refine(cond, rng);
    }
    require(out.same_extent(cond) && out.channels == 3, ErrorCode::DimensionMismatch,
            "refiner returned " + extent_string(out.width, out.height));
    result.stylized[target] = std::move(out);
    result.masks[target] = blended.mask;
    report.milliseconds =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.reports.push_back(std::move(report));
    history.push_back(pos);
  }
}

}  // namespace detail

/// Autoregressive propagation of a stylized seed frame through the scene.
/// Forward lifts seed+1 .. N-1; Both additionally lifts seed-1 .. 0.
inline LiftResult lift_sequence(const SceneManifest& scene, const ImageBuffer& stylized_seed, int seed_index,
                                const Refiner& refiner, const LiftConfig& config, Rng& rng) {
  require(scene.size() >= 1, ErrorCode::EmptyList, "scene has no frames");
  require(seed_index >= 0 && seed_index < scene.size(), ErrorCode::InvalidParams,
          "seed frame " + std::to_string(seed_index) + " outside [0, " + std::to_string(scene.size() - 1) + "]");
  require(stylized_seed.width == scene.width() && stylized_seed.height == scene.height() && stylized_seed.channels == 3,
          ErrorCode::DimensionMismatch,
          "stylized seed is " + extent_string(stylized_seed.width, stylized_seed.height) + ", scene is " +
              extent_string(scene.width(), scene.height()));
  require(config.gamma >= 0.0 && std::isfinite(config.gamma), ErrorCode::InvalidParams, "gamma must be >= 0");
  require(config.beta >= 0.0 && std::isfinite(config.beta), ErrorCode::InvalidParams, "beta must be >= 0");
  require(config.eps_cov >= 0.0 && config.eps_cov < 1.0, ErrorCode::InvalidParams, "eps_cov must lie in [0,1)");

  LiftResult result;
  result.stylized[seed_index] = stylized_seed;
  result.masks[seed_index] = ImageBuffer(scene.width(), scene.height(), 1, 1.0f);

  std::vector<int> forward;
  for (int i = seed_index; i < scene.size(); ++i) forward.push_back(i);
  detail::lift_along(scene, forward, refiner, config, rng, result);
  if (config.direction == LiftDirection::Both) {
    std::vector<int> backward;
    for (int i = seed_index; i >= 0; --i) backward.push_back(i);
    detail::lift_along(scene, backward, refiner, config, rng, result);
  }
  return result;
}

}  // namespace restyle
