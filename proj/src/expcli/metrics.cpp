#include "duskill/expcli/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>

#include "duskill/error.hpp"
#include "duskill/rng.hpp"

namespace duskill::expcli {

nlohmann::json MetricsTable::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows)
    rs.push_back({{"domain", r.domain},
                  {"level", r.level},
                  {"variant", r.variant},
                  {"mean", r.mean},
                  {"std", r.std},
                  {"n_seeds", r.n_seeds},
                  {"n_tasks", r.n_tasks}});
  return rs;
}

MetricsTable MetricsTable::from_json(const nlohmann::json& j) {
  MetricsTable t;
  try {
    for (const auto& r : j)
      t.rows.push_back({r.at("domain").get<std::string>(), r.at("level").get<std::string>(),
                        r.at("variant").get<std::string>(), r.at("mean").get<double>(), r.at("std").get<double>(),
                        r.at("n_seeds").get<int>(), r.at("n_tasks").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw FileError(std::string("malformed metrics table: ") + e.what());
  }
  return t;
}

std::string MetricsTable::to_markdown() const {
  std::string out = "| variant | domain | level | mean return | std | seeds | tasks |\n|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %.3f | %.3f | %d | %d |\n", r.variant.c_str(), r.domain.c_str(),
                  r.level.c_str(), r.mean, r.std, r.n_seeds, r.n_tasks);
    out += buf;
  }
  return out;
}

const MetricsRow& MetricsTable::find(const std::string& level, const std::string& domain) const {
  for (const auto& r : rows)
    if (r.level == level && r.domain == domain) return r;
  throw ParameterError("no metrics row for level " + level + ", domain " + domain);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string level_name(int level) { return level == 0 ? "source" : "level" + std::to_string(level); }

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ContractError("adjusted_rand_index: label vectors differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 0.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ca[a[i]] += 1;
    cb[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& kv : joint) sum_ij += c2(kv.second);
  for (const auto& kv : ca) sum_a += c2(kv.second);
  for (const auto& kv : cb) sum_b += c2(kv.second);
  const double expected = sum_a * sum_b / c2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 0.0;  // both labelings trivial
  return (sum_ij - expected) / (max_index - expected);
}

std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts, int max_iters) {
  const Eigen::Index n = points.cols();
  if (k < 1 || n < k) throw ParameterError("k-means needs 1 <= k <= number of points");
  Rng rng(derive_seed({seed, 0x6b6dULL}));
  std::vector<int> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    Eigen::MatrixXd centers(points.rows(), k);
    centers.col(0) = points.col(rng.integer(0, n - 1));
    Eigen::VectorXd d2(n);
    for (int c = 1; c < k; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) m = std::min(m, (points.col(i) - centers.col(j)).squaredNorm());
        d2(i) = m;
      }
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0) {
        double u = rng.uniform(0.0, total);
        for (pick = 0; pick < n - 1 && u > d2(pick); ++pick) u -= d2(pick);
      }
      centers.col(c) = points.col(pick);
    }
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int it = 0; it < max_iters; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int arg = 0;
        double m = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
          const double d = (points.col(i) - centers.col(j)).squaredNorm();
          if (d < m) {
            m = d;
            arg = j;
          }
        }
        inertia += m;
        if (labels[static_cast<std::size_t>(i)] != arg) {
          labels[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.col(labels[static_cast<std::size_t>(i)]) += points.col(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int j = 0; j < k; ++j)
        if (counts[static_cast<std::size_t>(j)] > 0) centers.col(j) = sums.col(j) / counts[static_cast<std::size_t>(j)];
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = labels;
    }
  }
  return best;
}

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& points, int dims) {
  const Eigen::Index n = points.cols();
  if (n == 0) return Eigen::MatrixXd(dims, 0);
  const Eigen::VectorXd mu = points.rowwise().mean();
  const Eigen::MatrixXd c = points.colwise() - mu;
  const Eigen::MatrixXd cov = c * c.transpose() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const int d = static_cast<int>(std::min<Eigen::Index>(dims, points.rows()));
  Eigen::MatrixXd basis(points.rows(), dims);
  basis.setZero();
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd v = es.eigenvectors().col(points.rows() - 1 - i);  // eigenvalues ascend
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(i) = v;
  }
  return basis.transpose() * c;
}

}  // namespace duskill::expcli
