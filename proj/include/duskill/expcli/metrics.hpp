#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace duskill::expcli {

struct MetricsRow {
  std::string domain;
  std::string level;  // "source", "level1", ...
  std::string variant;
  double mean = 0.0;  // mean over seeds of the per-seed mean return
  double std = 0.0;   // sample standard deviation over seeds (0 for one seed)
  int n_seeds = 0;
  int n_tasks = 0;

  bool operator==(const MetricsRow&) const = default;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  nlohmann::json to_json() const;
  static MetricsTable from_json(const nlohmann::json& j);
  std::string to_markdown() const;
  /// Row lookup; ParameterError if absent.
  const MetricsRow& find(const std::string& level, const std::string& domain = "all") const;
};

double mean_of(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);

/// Level index -> report name ("source" for 0).
std::string level_name(int level);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// Lloyd's k-means on the columns of `points` with k-means++ seeding and
/// `restarts` seeded restarts; returns the labels of the lowest-inertia run.
std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts = 10,
                        int max_iters = 100);

/// Projection of the columns of `points` onto their top principal
/// directions (centered; each direction's sign fixed so its largest-magnitude
/// entry is positive).
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& points, int dims = 2);

}  // namespace duskill::expcli
