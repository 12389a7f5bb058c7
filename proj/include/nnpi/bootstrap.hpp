#pragma once

// Bootstrap ensemble of point regressors turned into Gaussian prediction
// intervals from model variance plus estimated noise variance.

#include "nnpi/core.hpp"
#include "nnpi/network.hpp"
#include "nnpi/optimizers.hpp"

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>
#include <vector>

namespace nnpi {

struct BootstrapEnsemble {
  std::vector<MLPParams> members;
  double noise_var = 0.0;

  std::size_t size() const { return members.size(); }
};

/// Standard normal quantile z such that P(|Z| <= z) = confidence.
inline double two_sided_z(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + 0.5 * confidence);
}

struct EnsembleMoments {
  Vector mean;
  Vector variance;  // unbiased across members
};

inline EnsembleMoments ensemble_moments(const BootstrapEnsemble& ens, const Matrix& x) {
  if (ens.size() < 2) throw ConfigError("bootstrap ensemble needs at least 2 members");
  Matrix preds(x.rows(), static_cast<Eigen::Index>(ens.size()));
  for (std::size_t b = 0; b < ens.size(); ++b)
    preds.col(static_cast<Eigen::Index>(b)) = forward_point(ens.members[b], x);
  EnsembleMoments m;
  m.mean = preds.rowwise().mean();
  const Matrix centered = preds.colwise() - m.mean;
  m.variance = centered.rowwise().squaredNorm() / static_cast<double>(ens.size() - 1);
  return m;
}

/// Trains B members, each on an n-sized resample with replacement; the
/// out-of-bag rows serve as that member's validation split. The noise
/// variance is the training mean squared residual of the ensemble mean minus
/// the mean model variance, floored at 0.
inline BootstrapEnsemble bootstrap_train(const Split& data, std::size_t members,
                                         const MLPConfig& net_cfg, const GDConfig& gd_cfg,
                                         std::uint64_t seed) {
  if (members < 2) throw ConfigError("bootstrap requires B >= 2");
  if (data.size() < 2) throw EmptyInputError("bootstrap requires at least 2 observations");
  if (net_cfg.output_dim != 1) throw ConfigError("bootstrap members must be point networks");
  const std::size_t n = data.size();
  const double lo = data.y.minCoeff();
  const double hi = data.y.maxCoeff();

  BootstrapEnsemble ens;
  for (std::size_t b = 0; b < members; ++b) {
    std::mt19937_64 rng(derive_seed(seed, b, 0xb007));
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    Index sample(n);
    std::vector<bool> in_bag(n, false);
    for (auto& i : sample) {
      i = draw(rng);
      in_bag[i] = true;
    }
    Index oob;
    for (std::size_t i = 0; i < n; ++i)
      if (!in_bag[i]) oob.push_back(i);
    const Split train{take_rows(data.x, sample), take(data.y, sample)};
    const Split val{take_rows(data.x, oob), take(data.y, oob)};
    GDConfig member_cfg = gd_cfg;
    member_cfg.seed = derive_seed(seed, b, 0x9d);
    const MLPParams start = init(net_cfg, derive_seed(seed, b, 0x1a), lo, hi);
    ens.members.push_back(gd_train_mse(start, train, val, member_cfg).params);
  }

  const auto m = ensemble_moments(ens, data.x);
  const double resid = (m.mean - data.y).squaredNorm() / static_cast<double>(n);
  ens.noise_var = std::max(0.0, resid - m.variance.mean());
  return ens;
}

/// Symmetric interval mean +/- z * sqrt(model variance + noise variance).
inline IntervalBatch bootstrap_pi(const BootstrapEnsemble& ens, const Matrix& x, double confidence) {
  const double z = two_sided_z(confidence);
  const auto m = ensemble_moments(ens, x);
  const Vector half = z * (m.variance.array() + ens.noise_var).sqrt().matrix();
  return {m.mean - half, m.mean + half};
}

inline nlohmann::json to_json(const BootstrapEnsemble& ens) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : ens.members) members.push_back(to_json(m));
  return {{"format", "nnpi-bootstrap"},
          {"version", kCheckpointVersion},
          {"noise_var", ens.noise_var},
          {"members", members}};
}

inline BootstrapEnsemble bootstrap_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nnpi-bootstrap") throw SchemaError("not a bootstrap checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version");
  BootstrapEnsemble ens;
  ens.noise_var = j.at("noise_var").get<double>();
  if (ens.noise_var < 0.0) throw SchemaError("negative noise variance");
  for (const auto& m : j.at("members")) ens.members.push_back(mlp_params_from_json(m));
  if (ens.size() < 2) throw SchemaError("bootstrap checkpoint has fewer than 2 members");
  return ens;
}

}  // namespace nnpi
