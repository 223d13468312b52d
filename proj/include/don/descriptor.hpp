#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "don/adam.hpp"
#include "don/correspond.hpp"
#include "don/error.hpp"
#include "don/parallel.hpp"
#include "don/scenegen.hpp"

namespace don {

struct EncoderConfig {
  int patch_radius = 2;
  int descriptor_dim = 3;
  int hidden = 64;
  bool use_pixel_coords = false;

  int patch_side() const noexcept { return 2 * patch_radius + 1; }
  int feature_dim() const noexcept { return 3 * patch_side() * patch_side() + (use_pixel_coords ? 2 : 0); }

  void validate() const {
    if (patch_radius < 0 || descriptor_dim < 1 || hidden < 1) {
      throw Error(Errc::InvalidArgument, "encoder needs patch_radius >= 0, D >= 1, hidden >= 1");
    }
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Two-layer perceptron over a clamped color patch:
/// descriptor = relu(features * w1 + b1) * w2 + b2.
struct EncoderParams {
  EncoderConfig config;
  Eigen::MatrixXd w1;  // feature_dim x hidden
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // hidden x D
  Eigen::VectorXd b2;  // D

  static EncoderParams zeros(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderParams p;
    p.config = cfg;
    p.w1 = Eigen::MatrixXd::Zero(cfg.feature_dim(), cfg.hidden);
    p.b1 = Eigen::VectorXd::Zero(cfg.hidden);
    p.w2 = Eigen::MatrixXd::Zero(cfg.hidden, cfg.descriptor_dim);
    p.b2 = Eigen::VectorXd::Zero(cfg.descriptor_dim);
    return p;
  }

  /// He-scaled Gaussian weights, zero biases.
  static EncoderParams random(const EncoderConfig& cfg, std::uint64_t seed, double scale = 1.0) {
    EncoderParams p = zeros(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g1(0.0, scale * std::sqrt(2.0 / cfg.feature_dim()));
    std::normal_distribution<double> g2(0.0, scale * std::sqrt(1.0 / cfg.hidden));
    for (Eigen::Index c = 0; c < p.w1.cols(); ++c)
      for (Eigen::Index r = 0; r < p.w1.rows(); ++r) p.w1(r, c) = g1(rng);
    for (Eigen::Index c = 0; c < p.w2.cols(); ++c)
      for (Eigen::Index r = 0; r < p.w2.rows(); ++r) p.w2(r, c) = g2(rng);
    return p;
  }

  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(parameter_count());
    v << Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size()), b1,
        Eigen::Map<const Eigen::VectorXd>(w2.data(), w2.size()), b2;
    return v;
  }

  void unflatten(const Eigen::VectorXd& v) {
    if (v.size() != parameter_count()) throw Error(Errc::DimensionMismatch, "flat parameter size mismatch");
    Eigen::Index o = 0;
    w1 = Eigen::Map<const Eigen::MatrixXd>(v.data() + o, w1.rows(), w1.cols());
    o += w1.size();
    b1 = v.segment(o, b1.size());
    o += b1.size();
    w2 = Eigen::Map<const Eigen::MatrixXd>(v.data() + o, w2.rows(), w2.cols());
    o += w2.size();
    b2 = v.segment(o, b2.size());
  }

  bool operator==(const EncoderParams& o) const {
    return config == o.config && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

/// H x W grid of D-dimensional descriptors, D fastest.
class DescriptorMap {
 public:
  DescriptorMap() = default;
  DescriptorMap(int width, int height, int dim, double fill = 0.0)
      : width_(width), height_(height), dim_(dim),
        values_(static_cast<std::size_t>(width) * height * dim, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int dim() const noexcept { return dim_; }

  std::span<double> at(int col, int row) {
    return {values_.data() + (static_cast<std::size_t>(row) * width_ + col) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const double> at(int col, int row) const {
    return {values_.data() + (static_cast<std::size_t>(row) * width_ + col) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const double> at(PixelCoord px) const {
    auto idx = nearest_pixel(px, width_, height_);
    if (!idx) throw Error(Errc::OutOfBounds, "descriptor lookup outside the map");
    return at(idx->col, idx->row);
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const DescriptorMap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int dim_ = 0;
  std::vector<double> values_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Writes the feature vector of pixel (col,row) into `out` (length feature_dim).
/// Colors are centred at 0.5; off-image patch taps clamp to the nearest edge.
inline void pixel_features(const Frame& frame, int col, int row, const EncoderConfig& cfg, double* out) {
  const int r = cfg.patch_radius;
  const int w = frame.width(), h = frame.height();
  int o = 0;
  for (int dr = -r; dr <= r; ++dr) {
    int rr = std::clamp(row + dr, 0, h - 1);
    for (int dc = -r; dc <= r; ++dc) {
      int cc = std::clamp(col + dc, 0, w - 1);
      for (int ch = 0; ch < 3; ++ch) out[o++] = frame.rgb(cc, rr, ch) - 0.5;
    }
  }
  if (cfg.use_pixel_coords) {
    out[o++] = w > 1 ? 2.0 * col / (w - 1) - 1.0 : 0.0;
    out[o++] = h > 1 ? 2.0 * row / (h - 1) - 1.0 : 0.0;
  }
}

inline Eigen::MatrixXd feature_matrix(const Frame& frame, std::span<const PixelIndex> pixels, const EncoderConfig& cfg) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x(
      static_cast<Eigen::Index>(pixels.size()), cfg.feature_dim());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixel_features(frame, pixels[i].col, pixels[i].row, cfg, x.row(static_cast<Eigen::Index>(i)).data());
  }
  return x;
}

inline DescriptorMap encode(const EncoderParams& params, const Frame& frame) {
  const auto& cfg = params.config;
  if (params.w1.rows() != cfg.feature_dim()) throw Error(Errc::DimensionMismatch, "encoder weights do not match config");
  const int w = frame.width(), h = frame.height();
  DescriptorMap out(w, h, cfg.descriptor_dim);
  parallel_rows(h, [&](int row) {
    std::vector<PixelIndex> px(static_cast<std::size_t>(w));
    for (int c = 0; c < w; ++c) px[static_cast<std::size_t>(c)] = {c, row};
    Eigen::MatrixXd x = feature_matrix(frame, px, cfg);
    Eigen::MatrixXd hid = ((x * params.w1).rowwise() + params.b1.transpose()).cwiseMax(0.0);
    Eigen::MatrixXd y = (hid * params.w2).rowwise() + params.b2.transpose();
    for (int c = 0; c < w; ++c) {
      auto dst = out.at(c, row);
      for (int k = 0; k < cfg.descriptor_dim; ++k) dst[static_cast<std::size_t>(k)] = y(c, k);
    }
  });
  return out;
}

struct LossConfig {
  double margin = 0.5;
  bool normalize_by_sqrt_d = true;

  void validate() const {
    if (!(margin > 0.0)) throw Error(Errc::InvalidArgument, "margin must be positive");
  }
};

namespace detail {

inline double distance_scale(int dim, const LossConfig& cfg) {
  return cfg.normalize_by_sqrt_d ? 1.0 / static_cast<double>(dim) : 1.0;
}

}  // namespace detail

/// Pixelwise contrastive loss of one sample:
///   (1/m) sum_i d2(a_i, b_i) + (1/n) sum_i sum_j max(0, M - d2(a_i, nm_ij)),
/// with d2 divided by D when normalizing (distances scale by sqrt(D)).
inline double contrastive_loss(const DescriptorMap& map_a, const DescriptorMap& map_b, const TrainingSample& sample,
                               const LossConfig& cfg) {
  cfg.validate();
  if (map_a.dim() != map_b.dim()) throw Error(Errc::DimensionMismatch, "descriptor dimensions differ");
  const double scale = detail::distance_scale(map_a.dim(), cfg);
  const double m = static_cast<double>(sample.matches.size());
  double match_term = 0.0, hinge_term = 0.0;
  for (std::size_t i = 0; i < sample.matches.size(); ++i) {
    auto a = map_a.at(sample.matches[i].u_a);
    if (!sample.background_only) match_term += scale * squared_distance(a, map_b.at(sample.matches[i].u_b));
    const auto& nms = sample.non_matches[i];
    const double n = static_cast<double>(nms.size());
    for (const auto& nm : nms) {
      hinge_term += std::max(0.0, cfg.margin - scale * squared_distance(a, map_b.at(nm))) / n;
    }
  }
  return match_term / m + hinge_term;
}

struct LossGradient {
  double loss = 0.0;
  EncoderParams grad;
};

namespace detail {

/// Forward pass that keeps the activations needed for backprop.
struct ForwardCache {
  Eigen::MatrixXd x;
  Eigen::MatrixXd pre;  // x * w1 + b1
  Eigen::MatrixXd hid;  // relu(pre)
  Eigen::MatrixXd y;    // descriptors, one row per pixel
};

inline ForwardCache forward(const EncoderParams& p, const Frame& frame, std::span<const PixelIndex> pixels) {
  ForwardCache c;
  c.x = feature_matrix(frame, pixels, p.config);
  c.pre = (c.x * p.w1).rowwise() + p.b1.transpose();
  c.hid = c.pre.cwiseMax(0.0);
  c.y = (c.hid * p.w2).rowwise() + p.b2.transpose();
  return c;
}

inline void backward(const EncoderParams& p, const ForwardCache& c, const Eigen::MatrixXd& dy, EncoderParams& g) {
  g.w2 += c.hid.transpose() * dy;
  g.b2 += dy.colwise().sum().transpose();
  Eigen::MatrixXd dh = (dy * p.w2.transpose()).cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
  g.w1 += c.x.transpose() * dh;
  g.b1 += dh.colwise().sum().transpose();
}

inline PixelIndex index_of(PixelCoord px, const Frame& f) {
  auto idx = nearest_pixel(px, f.intr);
  if (!idx) throw Error(Errc::OutOfBounds, "sample pixel outside frame");
  return *idx;
}

}  // namespace detail

/// Loss and its exact gradient with respect to every encoder parameter,
/// backpropagated through the perceptron at the sampled pixels only.
inline LossGradient loss_gradient(const EncoderParams& params, const Frame& frame_a, const Frame& frame_b,
                                  const TrainingSample& sample, const LossConfig& cfg) {
  cfg.validate();
  const int dim = params.config.descriptor_dim;
  const std::size_t m = sample.matches.size();
  std::vector<PixelIndex> pa, pb;
  pa.reserve(m);
  for (const auto& mt : sample.matches) pa.push_back(detail::index_of(mt.u_a, frame_a));
  // Frame b rows: m correspondences followed by the non-matches, match-major.
  std::vector<std::size_t> nm_offset(m);
  for (const auto& mt : sample.matches) pb.push_back(detail::index_of(mt.u_b, frame_b));
  for (std::size_t i = 0; i < m; ++i) {
    nm_offset[i] = pb.size();
    for (const auto& nm : sample.non_matches[i]) pb.push_back(detail::index_of(nm, frame_b));
  }
  auto fa = detail::forward(params, frame_a, pa);
  auto fb = detail::forward(params, frame_b, pb);

  const double scale = detail::distance_scale(dim, cfg);
  Eigen::MatrixXd dya = Eigen::MatrixXd::Zero(fa.y.rows(), dim);
  Eigen::MatrixXd dyb = Eigen::MatrixXd::Zero(fb.y.rows(), dim);
  double loss = 0.0;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto ii = static_cast<Eigen::Index>(i);
    if (!sample.background_only) {
      Eigen::RowVectorXd diff = fa.y.row(ii) - fb.y.row(ii);
      loss += inv_m * scale * diff.squaredNorm();
      dya.row(ii) += 2.0 * inv_m * scale * diff;
      dyb.row(ii) -= 2.0 * inv_m * scale * diff;
    }
    const auto& nms = sample.non_matches[i];
    const double inv_n = 1.0 / static_cast<double>(nms.size());
    for (std::size_t j = 0; j < nms.size(); ++j) {
      auto row = static_cast<Eigen::Index>(nm_offset[i] + j);
      Eigen::RowVectorXd diff = fa.y.row(ii) - fb.y.row(row);
      double gap = cfg.margin - scale * diff.squaredNorm();
      if (gap <= 0.0) continue;
      loss += inv_n * gap;
      dya.row(ii) -= 2.0 * inv_n * scale * diff;
      dyb.row(row) += 2.0 * inv_n * scale * diff;
    }
  }
  LossGradient out;
  out.loss = loss;
  out.grad = EncoderParams::zeros(params.config);
  detail::backward(params, fa, dya, out.grad);
  detail::backward(params, fb, dyb, out.grad);
  return out;
}

/// Loss of one sample evaluated through the same sparse forward pass as training.
inline double sample_loss(const EncoderParams& params, const Frame& frame_a, const Frame& frame_b,
                          const TrainingSample& sample, const LossConfig& cfg) {
  return loss_gradient(params, frame_a, frame_b, sample, cfg).loss;
}

struct TrainConfig {
  double lr0 = 1e-4;
  double decay_factor = 0.9;
  int decay_every = 25;
  double weight_decay = 1e-4;
  int steps = 500;
  std::uint64_t seed = 0;
  AdamConfig adam{};
  int validation_every = 10;
  int validation_samples = 4;

  void validate() const {
    if (!(lr0 > 0.0)) throw Error(Errc::InvalidArgument, "lr0 must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw Error(Errc::InvalidArgument, "decay_factor must be in (0,1]");
    if (decay_every < 1) throw Error(Errc::InvalidArgument, "decay_every must be >= 1");
    if (steps < 1) throw Error(Errc::InvalidArgument, "steps must be >= 1");
    if (weight_decay < 0.0) throw Error(Errc::InvalidArgument, "weight_decay must be >= 0");
  }
};

/// Step-wise exponential schedule: lr0 * decay_factor^floor(step / decay_every).
inline double learning_rate(const TrainConfig& cfg, int step) {
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(step / cfg.decay_every));
}

struct TrainResult {
  EncoderParams params;
  std::vector<double> loss_curve;                        // contrastive loss per step
  std::vector<std::pair<int, double>> validation_curve;  // (step, mean loss on frozen samples)
};

using TrainCallback = std::function<void(int step, double loss)>;

/// Adam on loss + weight_decay * |params|^2, one sample pair per step,
/// cycling through the trajectories. Trajectories without any object mask
/// contribute background-only samples against object pixels of the others.
inline TrainResult train(std::span<const Trajectory> trajs, const SamplingConfig& scfg, const LossConfig& lcfg,
                         const TrainConfig& tcfg, const EncoderConfig& ecfg, const TrainCallback& on_step = {}) {
  scfg.validate();
  lcfg.validate();
  tcfg.validate();
  ecfg.validate();
  std::vector<std::size_t> object_trajs;
  for (std::size_t t = 0; t < trajs.size(); ++t)
    if (trajs[t].has_any_mask()) object_trajs.push_back(t);
  if (object_trajs.empty()) throw Error(Errc::EmptyMask, "no trajectory has a nonempty object mask");

  std::vector<PairSampler> samplers;
  std::vector<std::size_t> sampler_of(trajs.size(), 0);
  for (std::size_t k = 0; k < object_trajs.size(); ++k) {
    SamplingConfig c = scfg;
    c.rng_seed = detail::mix64(tcfg.seed ^ detail::mix64(scfg.rng_seed + 0x1000 * (object_trajs[k] + 1)));
    samplers.emplace_back(trajs[object_trajs[k]], c);
    sampler_of[object_trajs[k]] = k;
  }

  // Frozen validation set drawn from independent sampler streams.
  std::vector<std::pair<std::size_t, TrainingSample>> validation;
  for (std::size_t k = 0; k < object_trajs.size() && tcfg.validation_every > 0; ++k) {
    SamplingConfig c = scfg;
    c.rng_seed = detail::mix64(tcfg.seed ^ 0x7a11da7eULL ^ (k + 1));
    PairSampler vs(trajs[object_trajs[k]], c);
    for (int i = 0; i < tcfg.validation_samples; ++i) validation.emplace_back(object_trajs[k], vs.next());
  }
  auto validation_loss = [&](const EncoderParams& p) {
    double s = 0.0;
    for (const auto& [t, smp] : validation) {
      const auto& tr = trajs[t];
      s += sample_loss(p, tr.frames[static_cast<std::size_t>(smp.frame_a)],
                       tr.frames[static_cast<std::size_t>(smp.frame_b)], smp, lcfg);
    }
    return s / static_cast<double>(validation.size());
  };

  TrainResult result;
  result.params = EncoderParams::random(ecfg, tcfg.seed);
  Eigen::VectorXd theta = result.params.flatten();
  Adam adam(theta.size(), tcfg.adam);
  std::size_t background_turn = 0;
  for (int step = 0; step < tcfg.steps; ++step) {
    const std::size_t t = static_cast<std::size_t>(step) % trajs.size();
    TrainingSample sample;
    const Trajectory* traj_a;
    const Trajectory* traj_b;
    if (trajs[t].has_any_mask()) {
      sample = samplers[sampler_of[t]].next();
      traj_a = traj_b = &trajs[t];
    } else {
      std::size_t k = background_turn++ % samplers.size();
      sample = samplers[k].next_background(trajs[t]);
      traj_a = &trajs[object_trajs[k]];
      traj_b = &trajs[t];
    }
    auto lg = loss_gradient(result.params, traj_a->frames[static_cast<std::size_t>(sample.frame_a)],
                            traj_b->frames[static_cast<std::size_t>(sample.frame_b)], sample, lcfg);
    Eigen::VectorXd grad = lg.grad.flatten() + 2.0 * tcfg.weight_decay * theta;
    adam.step(theta, grad, learning_rate(tcfg, step));
    result.params.unflatten(theta);
    result.loss_curve.push_back(lg.loss);
    if (!validation.empty() && (step + 1) % tcfg.validation_every == 0) {
      result.validation_curve.emplace_back(step + 1, validation_loss(result.params));
    }
    if (on_step) on_step(step, lg.loss);
  }
  return result;
}

}  // namespace don
