#pragma once

#include "ngmm/marginal.hpp"

#include <string>
#include <vector>

namespace ngmm {

struct Environment {
  int id = 0;
  EnvBlock block;
};

/// Labeled observations grouped by environment.
struct EnvDataset {
  std::vector<Environment> envs;
  std::vector<std::string> feature_names;

  Eigen::Index feature_dim() const { return envs.empty() ? 0 : envs.front().block.features.cols(); }
  Eigen::Index total_size() const;
  std::size_t num_envs() const { return envs.size(); }

  /// Unique ids, consistent feature width, every block non-empty and finite.
  void validate() const;

  /// All rows stacked in environment order.
  Eigen::MatrixXd stacked_features() const;
  Eigen::VectorXd stacked_responses() const;
  std::vector<Eigen::Index> offsets() const;
};

/// CSV with header `env_id,<feature names...>,y`.
void write_dataset_csv(const EnvDataset& data, const std::string& path);
EnvDataset read_dataset_csv(const std::string& path);

}  // namespace ngmm
