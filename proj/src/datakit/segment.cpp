#include "duskill/datakit/segment.hpp"

#include "duskill/error.hpp"
#include "duskill/nn/tensor_io.hpp"

namespace duskill::datakit {

Eigen::VectorXf encode_omega(const envsuite::DomainParam& domain) {
  Eigen::VectorXf w = Eigen::VectorXf::Zero(kOmegaDim);
  w[static_cast<int>(domain.family)] = 1.f;
  for (int i = 0; i < envsuite::kNumStages; ++i)
    w[3 + i] = static_cast<float>(domain.stage_params[static_cast<std::size_t>(i)]);
  return w;
}

SkillSegment SegmentSet::segment(int i) const {
  if (i < 0 || i >= count()) throw ParameterError("segment index out of range");
  SkillSegment s;
  s.states = states.middleCols(static_cast<Eigen::Index>(i) * h, h);
  s.actions = actions.middleCols(static_cast<Eigen::Index>(i) * h, h);
  if (static_cast<std::size_t>(i) < domains.size()) s.domain = domains[static_cast<std::size_t>(i)];
  s.first_state = s.states.col(0);
  return s;
}

SegmentSet SegmentSet::select(const std::vector<int>& indices) const {
  SegmentSet out;
  out.h = h;
  out.state_dim = state_dim;
  out.action_dim = action_dim;
  out.omega_dim = omega_dim;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.states.resize(state_dim, n * h);
  out.actions.resize(action_dim, n * h);
  out.omega.resize(omega_dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int i = indices[static_cast<std::size_t>(j)];
    if (i < 0 || i >= count()) throw ParameterError("segment index out of range");
    out.states.middleCols(j * h, h) = states.middleCols(static_cast<Eigen::Index>(i) * h, h);
    out.actions.middleCols(j * h, h) = actions.middleCols(static_cast<Eigen::Index>(i) * h, h);
    out.omega.col(j) = omega.col(i);
    const auto u = static_cast<std::size_t>(i);
    if (u < domains.size()) out.domains.push_back(domains[u]);
    if (u < task_labels.size()) out.task_labels.push_back(task_labels[u]);
    if (u < trajectory.size()) out.trajectory.push_back(trajectory[u]);
    if (u < start.size()) out.start.push_back(start[u]);
  }
  return out;
}

SegmentResult segment(const envsuite::TrajectorySet& trajs, int h, int stride) {
  if (h < 1) throw ParameterError("skill length must be >= 1");
  if (stride < 1) throw ParameterError("stride must be >= 1");
  SegmentResult res;
  auto& set = res.segments;
  set.h = h;
  Eigen::Index total = 0;
  for (const auto& t : trajs) {
    if (t.length() < h) {
      ++res.skipped;
      continue;
    }
    total += (t.length() - h) / stride + 1;
  }
  set.states.resize(set.state_dim, total * h);
  set.actions.resize(set.action_dim, total * h);
  set.omega.resize(set.omega_dim, total);
  Eigen::Index k = 0;
  for (std::size_t ti = 0; ti < trajs.size(); ++ti) {
    const auto& t = trajs[ti];
    if (t.length() < h) continue;
    const Eigen::VectorXf w = encode_omega(t.domain);
    for (int s = 0; s + h <= t.length(); s += stride, ++k) {
      set.states.middleCols(k * h, h) = t.states.middleCols(s, h);
      set.actions.middleCols(k * h, h) = t.actions.middleCols(s, h);
      set.omega.col(k) = w;
      set.domains.push_back(t.domain);
      set.task_labels.push_back(envsuite::active_goal(t, s));
      set.trajectory.push_back(static_cast<int>(ti));
      set.start.push_back(s);
    }
  }
  return res;
}

void write_segments(const std::filesystem::path& path, const SegmentSet& set) {
  std::string out;
  nn::append_u32(out, static_cast<std::uint32_t>(set.h));
  nn::append_u32(out, static_cast<std::uint32_t>(set.state_dim));
  nn::append_u32(out, static_cast<std::uint32_t>(set.action_dim));
  nn::append_u32(out, static_cast<std::uint32_t>(set.omega_dim));
  nn::append_u32(out, static_cast<std::uint32_t>(set.count()));
  for (Eigen::Index i = 0; i < set.states.size(); ++i) nn::append_f32(out, set.states.data()[i]);
  for (Eigen::Index i = 0; i < set.actions.size(); ++i) nn::append_f32(out, set.actions.data()[i]);
  for (Eigen::Index i = 0; i < set.omega.size(); ++i) nn::append_f32(out, set.omega.data()[i]);
  nn::write_file_bytes(path, out);
}

SegmentSet read_segments(const std::filesystem::path& path) {
  const std::string in = nn::read_file_bytes(path);
  std::size_t pos = 0;
  SegmentSet set;
  set.h = static_cast<int>(nn::read_u32(in, pos));
  set.state_dim = static_cast<int>(nn::read_u32(in, pos));
  set.action_dim = static_cast<int>(nn::read_u32(in, pos));
  set.omega_dim = static_cast<int>(nn::read_u32(in, pos));
  const auto count = static_cast<Eigen::Index>(nn::read_u32(in, pos));
  const std::size_t expected = 20 + 4 * static_cast<std::size_t>(count) *
                                        (static_cast<std::size_t>(set.h) * (set.state_dim + set.action_dim) +
                                         static_cast<std::size_t>(set.omega_dim));
  if (in.size() != expected) throw FileError("segment blob " + path.string() + " has unexpected size");
  set.states.resize(set.state_dim, count * set.h);
  set.actions.resize(set.action_dim, count * set.h);
  set.omega.resize(set.omega_dim, count);
  for (Eigen::Index i = 0; i < set.states.size(); ++i) set.states.data()[i] = nn::read_f32(in, pos);
  for (Eigen::Index i = 0; i < set.actions.size(); ++i) set.actions.data()[i] = nn::read_f32(in, pos);
  for (Eigen::Index i = 0; i < set.omega.size(); ++i) set.omega.data()[i] = nn::read_f32(in, pos);
  return set;
}

}  // namespace duskill::datakit
