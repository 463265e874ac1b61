#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "duskill/envsuite/dataset.hpp"

namespace duskill::datakit {

inline constexpr int kDefaultSkillLength = 10;
inline constexpr int kOmegaDim = 7;  // one-hot family (3) + stage parameters (4)

/// Network encoding of a domain parameterization.
Eigen::VectorXf encode_omega(const envsuite::DomainParam& domain);

/// One length-h window of a trajectory.
struct SkillSegment {
  Eigen::MatrixXf states;   // state_dim x h
  Eigen::MatrixXf actions;  // action_dim x h
  envsuite::DomainParam domain;
  Eigen::VectorXf first_state;
};

/// Column-packed segments. Step t of segment i is column i*h + t of
/// `states`/`actions`; `omega` has one column per segment.
struct SegmentSet {
  int h = kDefaultSkillLength;
  int state_dim = envsuite::kStateDim;
  int action_dim = envsuite::kActionDim;
  int omega_dim = kOmegaDim;
  Eigen::MatrixXf states;
  Eigen::MatrixXf actions;
  Eigen::MatrixXf omega;

  // Provenance, kept in memory only.
  std::vector<envsuite::DomainParam> domains;
  std::vector<int> task_labels;   // goal id active at the segment's first state
  std::vector<int> trajectory;    // index into the source TrajectorySet
  std::vector<int> start;         // first time step within that trajectory

  int count() const { return static_cast<int>(omega.cols()); }
  SkillSegment segment(int i) const;
  /// Subset in the given order.
  SegmentSet select(const std::vector<int>& indices) const;
};

struct SegmentResult {
  SegmentSet segments;
  int skipped = 0;  // trajectories shorter than h
};

/// Sliding windows of length h with the given stride (1 = overlapping).
SegmentResult segment(const envsuite::TrajectorySet& trajs, int h = kDefaultSkillLength, int stride = 1);

/// Binary persistence: u32 {h, state_dim, action_dim, omega_dim, count}
/// then little-endian f32 states, actions, omega (column-major).
void write_segments(const std::filesystem::path& path, const SegmentSet& set);
SegmentSet read_segments(const std::filesystem::path& path);

}  // namespace duskill::datakit
