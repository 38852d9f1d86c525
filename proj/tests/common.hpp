#pragma once

// Shared fixtures: meshes, truth operators, and reduced models are expensive
// to build, so each test binary caches them per level.

#include <gtest/gtest.h>

#include <map>
#include <utility>

#include "fdot/harness.hpp"

namespace fdot_test {

using namespace fdot;

inline const Mesh& mesh_at(int level) {
  static std::map<int, Mesh> cache;
  auto it = cache.find(level);
  if (it == cache.end()) it = cache.emplace(level, mesh_at_level(level)).first;
  return it->second;
}

inline const TruthOperator& op_at(int level, GramVariant gram = GramVariant::L2) {
  static std::map<std::pair<int, int>, TruthOperator> cache;
  const auto key = std::make_pair(level, static_cast<int>(gram));
  auto it = cache.find(key);
  if (it == cache.end()) {
    ProblemParams params;
    params.gram = gram;
    it = cache
             .emplace(key, build_truth_operator(mesh_at(level), params.excitation,
                                                params.emission, gram))
             .first;
  }
  return it->second;
}

inline const ReducedModel& model_at(int level, double delta, double epsilon = 0.0) {
  static std::map<std::tuple<int, double, double>, ReducedModel> cache;
  const auto key = std::make_tuple(level, delta, epsilon);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const TruthOperator& op = op_at(level);
    it = cache.emplace(key, reduce_operator(op, delta, epsilon, mesh_fingerprint(mesh_at(level))))
             .first;
  }
  return it->second;
}

/// Random vector with unit X norm (DD-weighted).
inline Vec random_unit_x(const Vec& DD, std::uint64_t seed) {
  GaussianSampler g(seed);
  Vec c(DD.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = g.next();
  return c / fdot::xnorm(c, DD);
}

}  // namespace fdot_test
