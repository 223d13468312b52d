#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "don/adam.hpp"
#include "don/error.hpp"
#include "don/geometry.hpp"

namespace don {

inline constexpr int kActionDim = 6;

/// End-effector pose change: translation (m) then axis-angle rotation (rad).
struct Action {
  Vec3 dtrans = Vec3::Zero();
  Vec3 drot = Vec3::Zero();

  double operator[](int k) const { return k < 3 ? dtrans[k] : drot[k - 3]; }
  double& operator[](int k) { return k < 3 ? dtrans[k] : drot[k - 3]; }

  Eigen::Matrix<double, 6, 1> vector() const {
    Eigen::Matrix<double, 6, 1> v;
    v << dtrans, drot;
    return v;
  }
  static Action from_vector(const Eigen::Matrix<double, 6, 1>& v) { return {v.head<3>(), v.tail<3>()}; }
};

/// Keypoint features concatenated with proprioception.
struct Observation {
  std::vector<double> keypoints;
  std::vector<double> proprio;

  std::size_t size() const noexcept { return keypoints.size() + proprio.size(); }

  Eigen::VectorXd vector() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    Eigen::Index i = 0;
    for (double x : keypoints) v[i++] = x;
    for (double x : proprio) v[i++] = x;
    return v;
  }
};

struct Step {
  Observation obs;
  Action action;
};

using Demonstration = std::vector<Step>;

/// Linear mean with fixed per-component standard deviations.
struct PolicyParams {
  Eigen::MatrixXd weights;  // observation_dim x 6
  Eigen::Matrix<double, 6, 1> bias = Eigen::Matrix<double, 6, 1>::Zero();
  double sigma_trans = 0.001;
  double sigma_rot = 0.25 * std::numbers::pi / 180.0;

  static PolicyParams zeros(int observation_dim) {
    PolicyParams p;
    p.weights = Eigen::MatrixXd::Zero(observation_dim, kActionDim);
    return p;
  }

  int observation_dim() const { return static_cast<int>(weights.rows()); }
  double sigma(int k) const { return k < 3 ? sigma_trans : sigma_rot; }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(weights.size() + kActionDim);
    v << weights.reshaped(), bias;
    return v;
  }
  void unflatten(const Eigen::VectorXd& v) {
    weights = v.head(weights.size()).reshaped(weights.rows(), weights.cols());
    bias = v.tail<kActionDim>();
  }

  bool operator==(const PolicyParams& o) const {
    return weights == o.weights && bias == o.bias && sigma_trans == o.sigma_trans && sigma_rot == o.sigma_rot;
  }
};

namespace detail {

inline void check_dims(const PolicyParams& p, const Observation& obs) {
  if (static_cast<int>(obs.size()) != p.observation_dim()) {
    throw Error(Errc::DimensionMismatch, "observation has " + std::to_string(obs.size()) + " components, policy expects " +
                                             std::to_string(p.observation_dim()));
  }
  if (!(p.sigma_trans > 0.0 && p.sigma_rot > 0.0)) throw Error(Errc::InvalidArgument, "sigmas must be positive");
}

}  // namespace detail

/// Gaussian mean for the observation; the action used at evaluation.
inline Action predict(const PolicyParams& p, const Observation& obs) {
  detail::check_dims(p, obs);
  Eigen::Matrix<double, 6, 1> mu = p.weights.transpose() * obs.vector() + p.bias;
  return Action::from_vector(mu);
}

/// Sum over components of log sigma + log(2 pi) / 2: the loss when the mean hits the action.
inline double entropy_floor(const PolicyParams& p) {
  double s = 0.0;
  for (int k = 0; k < kActionDim; ++k) s += std::log(p.sigma(k)) + 0.5 * std::log(2.0 * std::numbers::pi);
  return s;
}

/// Negative log-likelihood of the action under N(mean, diag(sigma^2)).
inline double nll_loss(const PolicyParams& p, const Observation& obs, const Action& a) {
  Action mu = predict(p, obs);
  double s = entropy_floor(p);
  for (int k = 0; k < kActionDim; ++k) {
    double r = a[k] - mu[k];
    s += r * r / (2.0 * p.sigma(k) * p.sigma(k));
  }
  return s;
}

/// Mean loss over every step of every demonstration.
inline double mean_nll(const PolicyParams& p, std::span<const Demonstration> data) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& demo : data)
    for (const auto& st : demo) {
      s += nll_loss(p, st.obs, st.action);
      ++n;
    }
  if (n == 0) throw Error(Errc::EmptyDataset, "dataset has no steps");
  return s / static_cast<double>(n);
}

struct PolicyTrainConfig {
  double lr = 3e-4;
  double weight_decay = 3e-6;
  int steps = 3000;
  int batch_trajectories = 8;  // full demonstrations per step; 0 takes all
  std::uint64_t seed = 0;
  AdamConfig adam;
};

/// Adam on the mean loss over a batch of whole demonstrations plus
/// weight_decay * |weights|^2. Sigmas stay fixed.
inline PolicyParams train_policy(std::span<const Demonstration> data, const PolicyTrainConfig& cfg,
                                 double sigma_trans = 0.001, double sigma_rot = 0.25 * std::numbers::pi / 180.0) {
  std::size_t dim = 0;
  bool found = false;
  for (const auto& demo : data)
    for (const auto& st : demo) {
      if (!found) {
        dim = st.obs.size();
        found = true;
      } else if (st.obs.size() != dim) {
        throw Error(Errc::DimensionMismatch, "observations differ in length");
      }
    }
  if (!found) throw Error(Errc::EmptyDataset, "dataset has no steps");
  if (!(cfg.lr > 0.0) || cfg.steps < 0 || cfg.batch_trajectories < 0 || cfg.weight_decay < 0.0) {
    throw Error(Errc::InvalidArgument, "invalid policy training configuration");
  }

  PolicyParams p = PolicyParams::zeros(static_cast<int>(dim));
  p.sigma_trans = sigma_trans;
  p.sigma_rot = sigma_rot;
  Eigen::Matrix<double, 6, 1> inv_var;
  for (int k = 0; k < kActionDim; ++k) inv_var[k] = 1.0 / (p.sigma(k) * p.sigma(k));

  // Design matrices per demonstration, built once.
  std::vector<Eigen::MatrixXd> obs(data.size());
  std::vector<Eigen::MatrixXd> act(data.size());
  std::vector<std::size_t> nonempty;
  for (std::size_t d = 0; d < data.size(); ++d) {
    const auto& demo = data[d];
    obs[d].resize(static_cast<Eigen::Index>(demo.size()), static_cast<Eigen::Index>(dim));
    act[d].resize(static_cast<Eigen::Index>(demo.size()), kActionDim);
    for (std::size_t t = 0; t < demo.size(); ++t) {
      obs[d].row(static_cast<Eigen::Index>(t)) = demo[t].obs.vector().transpose();
      act[d].row(static_cast<Eigen::Index>(t)) = demo[t].action.vector().transpose();
    }
    if (!demo.empty()) nonempty.push_back(d);
  }

  std::mt19937_64 rng(cfg.seed);
  const std::size_t batch = cfg.batch_trajectories == 0
                                ? nonempty.size()
                                : std::min(nonempty.size(), static_cast<std::size_t>(cfg.batch_trajectories));
  Eigen::VectorXd theta = p.flatten();
  Adam adam(theta.size(), cfg.adam);
  std::vector<std::size_t> order = nonempty;
  std::size_t cursor = order.size();
  for (int step = 0; step < cfg.steps; ++step) {
    Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), kActionDim);
    Eigen::Matrix<double, 6, 1> gb = Eigen::Matrix<double, 6, 1>::Zero();
    std::size_t n = 0;
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      std::size_t d = order[cursor++];
      // d(loss)/d(mu) = (mu - a) / sigma^2 per component.
      Eigen::MatrixXd mu = (obs[d] * p.weights).rowwise() + p.bias.transpose();
      Eigen::MatrixXd r = (mu - act[d]) * inv_var.asDiagonal();
      gw += obs[d].transpose() * r;
      gb += r.colwise().sum().transpose();
      n += static_cast<std::size_t>(obs[d].rows());
    }
    gw /= static_cast<double>(n);
    gb /= static_cast<double>(n);
    gw += 2.0 * cfg.weight_decay * p.weights;
    Eigen::VectorXd g(theta.size());
    g << gw.reshaped(), gb;
    adam.step(theta, g, cfg.lr);
    p.unflatten(theta);
  }
  return p;
}

/// Scripted demonstrations from a known linear map: obs uniform in [-1, 1],
/// action = W^T obs + b plus Gaussian noise at the policy's sigma scale.
struct PlantedPolicyData {
  PolicyParams truth;
  std::vector<Demonstration> demos;
};

inline PlantedPolicyData make_planted_policy_data(int keypoint_dim, int proprio_dim, int n_demos, int steps_per_demo,
                                                  std::uint64_t seed, double noise_scale = 1.0) {
  if (keypoint_dim < 0 || proprio_dim < 0 || keypoint_dim + proprio_dim < 1 || n_demos < 1 || steps_per_demo < 1) {
    throw Error(Errc::InvalidArgument, "invalid planted dataset shape");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int dim = keypoint_dim + proprio_dim;
  PlantedPolicyData out;
  out.truth = PolicyParams::zeros(dim);
  // Scaled so that actions stay within 0.05 m and 0.2 rad per step.
  for (int k = 0; k < kActionDim; ++k) {
    double limit = k < 3 ? 0.05 : 0.2;
    double scale = limit / (dim + 1);
    for (int i = 0; i < dim; ++i) out.truth.weights(i, k) = scale * unit(rng);
    out.truth.bias[k] = scale * unit(rng);
  }
  for (int d = 0; d < n_demos; ++d) {
    Demonstration demo;
    for (int t = 0; t < steps_per_demo; ++t) {
      Step st;
      for (int i = 0; i < keypoint_dim; ++i) st.obs.keypoints.push_back(unit(rng));
      for (int i = 0; i < proprio_dim; ++i) st.obs.proprio.push_back(unit(rng));
      st.action = predict(out.truth, st.obs);
      for (int k = 0; k < kActionDim; ++k) st.action[k] += noise_scale * out.truth.sigma(k) * gauss(rng);
      demo.push_back(std::move(st));
    }
    out.demos.push_back(std::move(demo));
  }
  return out;
}

inline double relative_frobenius_error(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  return (estimate - truth).norm() / truth.norm();
}

}  // namespace don
