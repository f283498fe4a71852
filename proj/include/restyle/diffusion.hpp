#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "restyle/error.hpp"
#include "restyle/raster.hpp"
#include "restyle/raster_io.hpp"
#include "restyle/rng.hpp"

namespace restyle {

using State = std::vector<double>;

enum class ScheduleKind { LinearBeta, Cosine };

struct ScheduleParams {
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double cosine_offset = 0.008;
  double max_beta = 0.999;
};

/// Cumulative signal coefficients alpha_bar[0..T], alpha_bar[0] = 1.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> alpha_bar;

  /// Per-step a_t = alpha_bar_t / alpha_bar_{t-1}.
  double step_alpha(int t) const { return alpha_bar[static_cast<std::size_t>(t)] / alpha_bar[static_cast<std::size_t>(t - 1)]; }

  /// Ancestral std-dev; zero at t = 1 because alpha_bar_0 = 1.
  double sigma(int t) const {
    const double a = step_alpha(t);
    const double ab = alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = alpha_bar[static_cast<std::size_t>(t - 1)];
    return std::sqrt(std::max(0.0, (1.0 - a) * (1.0 - ab_prev) / (1.0 - ab)));
  }

  /// FNV-1a over T and the raw coefficient bytes.
  std::uint64_t id() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
      }
    };
    mix(&steps, sizeof(steps));
    mix(alpha_bar.data(), alpha_bar.size() * sizeof(double));
    return h;
  }
};

inline NoiseSchedule make_schedule(int steps, ScheduleKind kind, const ScheduleParams& params = {}) {
  require(steps >= 1, ErrorCode::InvalidParams, "schedule needs T >= 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (kind == ScheduleKind::LinearBeta) {
    for (int t = 0; t < steps; ++t) {
      const double f = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
      betas[static_cast<std::size_t>(t)] = params.beta_start + f * (params.beta_end - params.beta_start);
    }
  } else {
    require(params.cosine_offset >= 0.0, ErrorCode::InvalidParams, "cosine offset must be >= 0");
    auto f = [&](double t) {
      const double v = std::cos((t / steps + params.cosine_offset) / (1.0 + params.cosine_offset) * std::numbers::pi / 2);
      return v * v;
    };
    for (int t = 1; t <= steps; ++t)
      betas[static_cast<std::size_t>(t - 1)] = std::min(params.max_beta, 1.0 - f(t) / f(t - 1));
  }
  NoiseSchedule schedule;
  schedule.steps = steps;
  schedule.alpha_bar.assign(1, 1.0);
  for (int t = 0; t < steps; ++t) {
    const double beta = betas[static_cast<std::size_t>(t)];
    require(beta > 0.0 && beta < 1.0, ErrorCode::InvalidParams,
            "beta at step " + std::to_string(t + 1) + " is " + std::to_string(beta) + ", outside (0,1)");
    schedule.alpha_bar.push_back(schedule.alpha_bar.back() * (1.0 - beta));
  }
  return schedule;
}

/// Noise predictor eps(x_t, t, condition). Implementations must be callable
/// concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual State predict(std::span<const double> x, int t, const RefinerCondition* condition) const = 0;
};

namespace detail {

inline void check_shape(std::size_t a, std::size_t b, const char* what) {
  require(a == b, ErrorCode::ShapeMismatch,
          std::string(what) + ": length " + std::to_string(a) + " vs " + std::to_string(b));
}

inline void check_step(const NoiseSchedule& schedule, int t, int lo) {
  require(t >= lo && t <= schedule.steps, ErrorCode::StepOutOfRange,
          "step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(schedule.steps) + "]");
}

}  // namespace detail

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise
inline State forward_sample(std::span<const double> x0, int t, const NoiseSchedule& schedule,
                            std::span<const double> noise) {
  detail::check_shape(x0.size(), noise.size(), "forward_sample");
  detail::check_step(schedule, t, 0);
  const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
  const double signal = std::sqrt(ab);
  const double spread = std::sqrt(1.0 - ab);
  State xt(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = signal * x0[i] + spread * noise[i];
  return xt;
}

/// Squared L2 distance between the prediction at the noised point and the noise.
inline double denoising_loss(const Denoiser& denoiser, std::span<const double> x0, int t,
                             const NoiseSchedule& schedule, std::span<const double> noise,
                             const RefinerCondition* condition = nullptr) {
  const State xt = forward_sample(x0, t, schedule, noise);
  const State eps = denoiser.predict(xt, t, condition);
  detail::check_shape(eps.size(), noise.size(), "denoising_loss");
  double loss = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) loss += (eps[i] - noise[i]) * (eps[i] - noise[i]);
  return loss;
}

/// Ancestral mean of x_{t-1} given x_t and a noise prediction.
inline State posterior_step_mean(std::span<const double> xt, int t, std::span<const double> eps_hat,
                                 const NoiseSchedule& schedule) {
  detail::check_shape(xt.size(), eps_hat.size(), "reverse_step");
  detail::check_step(schedule, t, 1);
  const double a = schedule.step_alpha(t);
  const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
  const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
  const double inv_sqrt_a = 1.0 / std::sqrt(a);
  State mu(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i) mu[i] = (xt[i] - coef * eps_hat[i]) * inv_sqrt_a;
  return mu;
}

/// DDPM ancestral update x_{t-1} = mu + sigma_t z.
inline State reverse_step(std::span<const double> xt, int t, std::span<const double> eps_hat,
                          const NoiseSchedule& schedule, std::span<const double> z) {
  State mu = posterior_step_mean(xt, t, eps_hat, schedule);
  detail::check_shape(z.size(), mu.size(), "reverse_step noise");
  const double sigma = schedule.sigma(t);
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += sigma * z[i];
  return mu;
}

// ---------------------------------------------------------------------------
// Analytic denoiser for isotropic Gaussian mixtures

struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  double variance = 1.0;
};

struct GaussianMixtureModel {
  std::vector<GaussianComponent> components;

  std::size_t dim() const { return components.empty() ? 0 : components.front().mean.size(); }

  void validate() const {
    require(!components.empty(), ErrorCode::InvalidParams, "mixture has no components");
    double total = 0.0;
    for (const auto& c : components) {
      require(c.weight > 0.0 && std::isfinite(c.weight), ErrorCode::InvalidParams, "mixture weights must be positive");
      require(c.variance >= 0.0 && std::isfinite(c.variance), ErrorCode::InvalidParams, "variance must be >= 0");
      require(c.mean.size() == dim(), ErrorCode::ShapeMismatch, "component means differ in length");
      total += c.weight;
    }
    require(std::abs(total - 1.0) <= 1e-9, ErrorCode::InvalidParams, "mixture weights must sum to 1");
  }

  State sample(Rng& rng) const {
    double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < components.size() && u >= components[k].weight) u -= components[k++].weight;
    const auto& c = components[k];
    State x(c.mean.size());
    const double sd = std::sqrt(c.variance);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.mean[i] + sd * rng.normal();
    return x;
  }
};

namespace detail {

// E[x0 | x_t] for an isotropic mixture over `dim` coordinates starting at
// `offset`, with per-component log prior weights and optional mean shift.
// x_t | k ~ N(sqrt(ab) m_k, (ab v_k + 1 - ab) I).
inline void mixture_posterior_mean(std::span<const double> xt, double ab, const GaussianMixtureModel& gmm,
                                   std::span<const double> log_prior, double mean_shift, double* out,
                                   std::vector<double>& scratch) {
  const std::size_t dim = xt.size();
  const std::size_t kcount = gmm.components.size();
  const double sa = std::sqrt(ab);
  scratch.resize(kcount);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kcount; ++k) {
    const auto& c = gmm.components[k];
    const double s = ab * c.variance + 1.0 - ab;
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double r = xt[i] - sa * (c.mean[i] + mean_shift);
      sq += r * r;
    }
    scratch[k] = log_prior[k] - 0.5 * static_cast<double>(dim) * std::log(s) - 0.5 * sq / s;
    peak = std::max(peak, scratch[k]);
  }
  double total = 0.0;
  for (auto& v : scratch) {
    v = std::exp(v - peak);
    total += v;
  }
  std::fill(out, out + dim, 0.0);
  for (std::size_t k = 0; k < kcount; ++k) {
    const auto& c = gmm.components[k];
    const double s = ab * c.variance + 1.0 - ab;
    const double gain = sa * c.variance / s;
    const double w = scratch[k] / total;
    for (std::size_t i = 0; i < dim; ++i) {
      const double m = c.mean[i] + mean_shift;
      out[i] += w * (m + gain * (xt[i] - sa * m));
    }
  }
}

}  // namespace detail

/// Exact noise predictor for data drawn from a Gaussian mixture:
/// eps = (x_t - sqrt(ab) E[x0|x_t]) / sqrt(1 - ab).
class AnalyticDenoiser : public Denoiser {
 public:
  AnalyticDenoiser(GaussianMixtureModel gmm, NoiseSchedule schedule)
      : gmm_(std::move(gmm)), schedule_(std::move(schedule)) {
    gmm_.validate();
    for (const auto& c : gmm_.components) log_prior_.push_back(std::log(c.weight));
  }

  State posterior_mean(std::span<const double> xt, int t) const {
    detail::check_shape(xt.size(), gmm_.dim(), "analytic denoiser");
    detail::check_step(schedule_, t, 0);
    State mean(xt.size());
    std::vector<double> scratch;
    detail::mixture_posterior_mean(xt, schedule_.alpha_bar[static_cast<std::size_t>(t)], gmm_, log_prior_, 0.0,
                                   mean.data(), scratch);
    return mean;
  }

  State predict(std::span<const double> xt, int t, const RefinerCondition*) const override {
    detail::check_step(schedule_, t, 0);
    require(t >= 1, ErrorCode::DegenerateVariance, "noise prediction is undefined at t = 0");
    const double ab = schedule_.alpha_bar[static_cast<std::size_t>(t)];
    const State mean = posterior_mean(xt, t);
    State eps(xt.size());
    const double sa = std::sqrt(ab);
    const double inv = 1.0 / std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < xt.size(); ++i) eps[i] = (xt[i] - sa * mean[i]) * inv;
    return eps;
  }

  const GaussianMixtureModel& mixture() const { return gmm_; }

 private:
  GaussianMixtureModel gmm_;
  NoiseSchedule schedule_;
  std::vector<double> log_prior_;
};

inline AnalyticDenoiser analytic_denoiser(GaussianMixtureModel gmm, NoiseSchedule schedule) {
  return AnalyticDenoiser(std::move(gmm), std::move(schedule));
}

/// Per-pixel color mixture denoiser over an interleaved RGB state. Each pixel
/// is an independent draw from `gmm` (3-d means), with component priors that
/// are either global, given per pixel, or derived from a RefinerCondition:
/// covered pixels inside a (2r+1)^2 window vote for their nearest component.
/// The condition's depth channel shifts every mean by depth_gain * (depth - 0.5).
class PixelMixtureDenoiser : public Denoiser {
 public:
  struct Options {
    int window_radius = 3;
    /// Pseudo-count added to every component's vote.
    double vote_prior = 0.05;
    double depth_gain = 0.0;
  };

  PixelMixtureDenoiser(GaussianMixtureModel gmm, NoiseSchedule schedule, Options options)
      : gmm_(std::move(gmm)), schedule_(std::move(schedule)), options_(options) {
    gmm_.validate();
    require(gmm_.dim() == 3, ErrorCode::ShapeMismatch, "pixel mixture needs 3-d color means");
    for (const auto& c : gmm_.components) global_log_prior_.push_back(std::log(c.weight));
  }
  PixelMixtureDenoiser(GaussianMixtureModel gmm, NoiseSchedule schedule)
      : PixelMixtureDenoiser(std::move(gmm), std::move(schedule), Options{}) {}

  /// Fixed per-pixel log priors, pixel-major (pixels x components).
  void set_pixel_log_prior(std::vector<double> log_prior) { pixel_log_prior_ = std::move(log_prior); }

  /// Nearest-mean component of a color.
  std::size_t classify(const float* rgb) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < gmm_.components.size(); ++k) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double r = rgb[c] - gmm_.components[k].mean[static_cast<std::size_t>(c)];
        d += r * r;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  }

  /// Window votes from covered pixels, as log priors (pixels x components).
  std::vector<double> condition_log_prior(const RefinerCondition& cond) const {
    const std::size_t kcount = gmm_.components.size();
    const int w = cond.width;
    const int h = cond.height;
    // Summed-area table of per-component votes.
    std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1) * kcount, 0.0);
    auto cell = [&](int x, int y, std::size_t k) -> double& {
      return sat[(static_cast<std::size_t>(y) * (w + 1) + x) * kcount + k];
    };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t vote = cond.covered(x, y) ? classify(&cond.at(x, y, 0)) : kcount;
        for (std::size_t k = 0; k < kcount; ++k)
          cell(x + 1, y + 1, k) = cell(x, y + 1, k) + cell(x + 1, y, k) - cell(x, y, k) + (k == vote ? 1.0 : 0.0);
      }
    std::vector<double> log_prior(static_cast<std::size_t>(w) * h * kcount);
    const int r = options_.window_radius;
    std::vector<double> counts(kcount);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - r);
        const int y0 = std::max(0, y - r);
        const int x1 = std::min(w, x + r + 1);
        const int y1 = std::min(h, y + r + 1);
        double total = 0.0;
        for (std::size_t k = 0; k < kcount; ++k) {
          counts[k] = cell(x1, y1, k) - cell(x0, y1, k) - cell(x1, y0, k) + cell(x0, y0, k);
          total += counts[k];
        }
        for (std::size_t k = 0; k < kcount; ++k) {
          const double p = total > 0.0 ? (counts[k] + options_.vote_prior) / (total + options_.vote_prior * kcount)
                                       : gmm_.components[k].weight;
          log_prior[(static_cast<std::size_t>(y) * w + x) * kcount + k] = std::log(p);
        }
      }
    return log_prior;
  }

  State predict(std::span<const double> xt, int t, const RefinerCondition* cond) const override {
    detail::check_step(schedule_, t, 0);
    require(t >= 1, ErrorCode::DegenerateVariance, "noise prediction is undefined at t = 0");
    require(xt.size() % 3 == 0, ErrorCode::ShapeMismatch, "pixel mixture state must be interleaved RGB");
    const std::size_t pixels = xt.size() / 3;
    const std::size_t kcount = gmm_.components.size();
    std::vector<double> from_condition;
    std::span<const double> per_pixel;
    if (!pixel_log_prior_.empty()) {
      detail::check_shape(pixel_log_prior_.size(), pixels * kcount, "pixel prior");
      per_pixel = pixel_log_prior_;
    } else if (cond) {
      detail::check_shape(cond->pixel_count(), pixels, "condition");
      from_condition = condition_log_prior(*cond);
      per_pixel = from_condition;
    }
    if (cond) detail::check_shape(cond->pixel_count(), pixels, "condition");

    const double ab = schedule_.alpha_bar[static_cast<std::size_t>(t)];
    const double sa = std::sqrt(ab);
    const double inv = 1.0 / std::sqrt(1.0 - ab);
    State eps(xt.size());
    std::vector<double> scratch;
    double mean[3];
    for (std::size_t p = 0; p < pixels; ++p) {
      const auto prior = per_pixel.empty() ? std::span<const double>(global_log_prior_)
                                           : per_pixel.subspan(p * kcount, kcount);
      const double shift =
          cond ? options_.depth_gain * (cond->data[p * 5 + RefinerCondition::kDepthChannel] - 0.5) : 0.0;
      detail::mixture_posterior_mean(xt.subspan(p * 3, 3), ab, gmm_, prior, shift, mean, scratch);
      for (std::size_t c = 0; c < 3; ++c) eps[p * 3 + c] = (xt[p * 3 + c] - sa * mean[c]) * inv;
    }
    return eps;
  }

  const GaussianMixtureModel& mixture() const { return gmm_; }

 private:
  GaussianMixtureModel gmm_;
  NoiseSchedule schedule_;
  Options options_;
  std::vector<double> global_log_prior_;
  std::vector<double> pixel_log_prior_;
};

// ---------------------------------------------------------------------------
// Guidance

struct GuidanceParams {
  double alpha = 7.5;
  double lambda_s = 0.5;
  double lambda_d = 0.5;
};

/// eps = (1 - alpha) eps_uncond + alpha (lambda_s eps_sem + lambda_d eps_depth)
inline State cfg_combine(std::span<const double> eps_uncond, std::span<const double> eps_sem,
                         std::span<const double> eps_depth, const GuidanceParams& g) {
  require(std::abs(g.lambda_s + g.lambda_d - 1.0) <= 1e-9, ErrorCode::WeightSumViolation,
          "lambda_s + lambda_d = " + std::to_string(g.lambda_s + g.lambda_d) + ", must be 1");
  detail::check_shape(eps_uncond.size(), eps_sem.size(), "cfg_combine");
  detail::check_shape(eps_uncond.size(), eps_depth.size(), "cfg_combine");
  State out(eps_uncond.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 - g.alpha) * eps_uncond[i] + g.alpha * (g.lambda_s * eps_sem[i] + g.lambda_d * eps_depth[i]);
  return out;
}

/// Combines three noise predictors with cfg_combine at every call.
class GuidedDenoiser : public Denoiser {
 public:
  GuidedDenoiser(const Denoiser& uncond, const Denoiser& semantic, const Denoiser& depth, GuidanceParams params)
      : uncond_(uncond), semantic_(semantic), depth_(depth), params_(params) {
    cfg_combine({}, {}, {}, params_);  // validates the weights up front
  }

  State predict(std::span<const double> xt, int t, const RefinerCondition* cond) const override {
    return cfg_combine(uncond_.predict(xt, t, nullptr), semantic_.predict(xt, t, nullptr),
                       depth_.predict(xt, t, cond), params_);
  }

 private:
  const Denoiser& uncond_;
  const Denoiser& semantic_;
  const Denoiser& depth_;
  GuidanceParams params_;
};

// ---------------------------------------------------------------------------
// Edit-friendly inversion

/// x_T plus per-step noise maps. z[0] belongs to step T, z[T-1] to step 1.
/// The step-1 entry is an additive residual (sigma_1 = 0).
struct InversionRecord {
  State x_T;
  std::vector<State> z;
  std::uint64_t schedule_id = 0;
};

/// Samples every x_t independently from the forward marginal, then solves
/// each ancestral step for the noise that maps x_t onto x_{t-1}.
inline InversionRecord edit_friendly_invert(std::span<const double> x0, const Denoiser& denoiser,
                                            const NoiseSchedule& schedule, Rng& rng,
                                            const RefinerCondition* condition = nullptr) {
  const int T = schedule.steps;
  std::vector<State> xs(static_cast<std::size_t>(T + 1));
  xs[0].assign(x0.begin(), x0.end());
  State noise(x0.size());
  for (int t = 1; t <= T; ++t) {
    rng.fill_normal(noise);
    xs[static_cast<std::size_t>(t)] = forward_sample(x0, t, schedule, noise);
  }
  InversionRecord record;
  record.x_T = xs[static_cast<std::size_t>(T)];
  record.schedule_id = schedule.id();
  for (int t = T; t >= 1; --t) {
    const State& xt = xs[static_cast<std::size_t>(t)];
    const State& prev = xs[static_cast<std::size_t>(t - 1)];
    const State mu = posterior_step_mean(xt, t, denoiser.predict(xt, t, condition), schedule);
    State z(mu.size());
    if (t >= 2) {
      const double sigma = schedule.sigma(t);
      require(sigma > 0.0, ErrorCode::DegenerateVariance, "sigma is zero at step " + std::to_string(t));
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = (prev[i] - mu[i]) / sigma;
    } else {
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = prev[i] - mu[i];
    }
    record.z.push_back(std::move(z));
  }
  return record;
}

/// Replays the reverse process with the recorded noise. With the denoiser
/// used for inversion this reproduces x0; with another denoiser it is the
/// edit along the same noise path.
inline State reconstruct(const InversionRecord& record, const Denoiser& denoiser, const NoiseSchedule& schedule,
                         const RefinerCondition* condition = nullptr) {
  require(record.schedule_id == schedule.id(), ErrorCode::ScheduleMismatch,
          "inversion record was produced under a different schedule");
  require(record.z.size() == static_cast<std::size_t>(schedule.steps), ErrorCode::ShapeMismatch,
          "record holds " + std::to_string(record.z.size()) + " noise maps for T = " + std::to_string(schedule.steps));
  State x = record.x_T;
  for (int t = schedule.steps; t >= 1; --t) {
    const State& z = record.z[static_cast<std::size_t>(schedule.steps - t)];
    if (t >= 2) {
      x = reverse_step(x, t, denoiser.predict(x, t, condition), schedule, z);
    } else {
      State mu = posterior_step_mean(x, t, denoiser.predict(x, t, condition), schedule);
      detail::check_shape(z.size(), mu.size(), "reconstruct");
      for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += z[i];
      x = std::move(mu);
    }
  }
  return x;
}

// RSIR container: magic | uint32 dim | uint32 rows (= T + 1) | uint32 channels (= 1)
// | uint64 schedule id | float64 payload (row 0 = x_T, then z_T .. z_1).

inline void write_inversion_record(const InversionRecord& record, const fs::path& path) {
  auto out = io::open_out(path);
  out.write("RSIR", 4);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(record.x_T.size()));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(record.z.size() + 1));
  io::put<std::uint32_t>(out, 1);
  io::put<std::uint64_t>(out, record.schedule_id);
  io::put_payload(out, record.x_T);
  for (const auto& z : record.z) {
    detail::check_shape(z.size(), record.x_T.size(), "inversion record");
    io::put_payload(out, z);
  }
  require(out.good(), ErrorCode::IoFailure, "write failed: " + path.string());
}

inline InversionRecord read_inversion_record(const fs::path& path) {
  auto in = io::open_in(path);
  const std::string what = path.string();
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  require(in.gcount() == 4, ErrorCode::MalformedHeader, what + ": truncated header");
  require(std::string_view(magic.data(), 4) == "RSIR", ErrorCode::MagicMismatch, what + ": expected magic RSIR");
  const auto dim = io::get<std::uint32_t>(in, what);
  const auto rows = io::get<std::uint32_t>(in, what);
  const auto channels = io::get<std::uint32_t>(in, what);
  require(rows >= 2 && channels == 1 && dim > 0 && dim <= (1u << 26), ErrorCode::MalformedHeader,
          what + ": bad RSIR header");
  InversionRecord record;
  record.schedule_id = io::get<std::uint64_t>(in, what);
  record.x_T.resize(dim);
  io::get_payload(in, record.x_T, what);
  for (std::uint32_t r = 1; r < rows; ++r) {
    State z(dim);
    io::get_payload(in, z, what);
    record.z.push_back(std::move(z));
  }
  return record;
}

// ---------------------------------------------------------------------------
// SDEdit

/// Called after each reverse step with the new step index and state; may
/// modify the state (mask-aware compositing).
using StepHook = std::function<void(int, State&)>;

inline int sdedit_start_step(double strength, const NoiseSchedule& schedule) {
  require(strength >= 0.0 && strength <= 1.0, ErrorCode::InvalidParams, "strength must lie in [0,1]");
  return static_cast<int>(std::lround(strength * schedule.steps));
}

/// Noises x to t* = round(strength T) and runs the ancestral sampler back to 0.
inline State sdedit_refine(std::span<const double> x, double strength, const Denoiser& denoiser,
                           const NoiseSchedule& schedule, Rng& rng, const RefinerCondition* condition = nullptr,
                           const StepHook& hook = {}) {
  const int start = sdedit_start_step(strength, schedule);
  if (start == 0) return State(x.begin(), x.end());
  State noise(x.size());
  rng.fill_normal(noise);
  State state = forward_sample(x, start, schedule, noise);
  for (int t = start; t >= 1; --t) {
    const State eps = denoiser.predict(state, t, condition);
    rng.fill_normal(noise);
    state = reverse_step(state, t, eps, schedule, noise);
    if (hook) hook(t - 1, state);
  }
  return state;
}

}  // namespace restyle
