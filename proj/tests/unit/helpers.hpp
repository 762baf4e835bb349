#pragma once

#include <random>

#include "ifcalc/distributions.hpp"
#include "ifcalc/linalg.hpp"

namespace testing_util {

using ifcalc::Index;
using ifcalc::Matrix;
using ifcalc::Vector;

// Random m x n matrix of the given rank.
inline Matrix random_rank(std::mt19937_64& gen, Index m, Index n, Index rank) {
  std::normal_distribution<double> nd;
  Matrix a(m, rank);
  Matrix b(rank, n);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = nd(gen);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = nd(gen);
  return a * b;
}

inline ifcalc::dist::DiscreteDistribution scalar_law(std::initializer_list<double> support,
                                                     std::initializer_list<double> mass) {
  Matrix pts(static_cast<Index>(support.size()), 1);
  Vector m(static_cast<Index>(mass.size()));
  Index i = 0;
  for (double s : support) pts(i++, 0) = s;
  i = 0;
  for (double w : mass) m(i++) = w;
  return ifcalc::dist::DiscreteDistribution(pts, m, ifcalc::dist::VariableBlocks::single(1, "z"));
}

}  // namespace testing_util
