#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ifcalc/linalg.hpp"

namespace ifcalc::dist {

// Ordered decomposition Z = (Z1, ..., Zl) into named coordinate blocks.
class VariableBlocks {
 public:
  VariableBlocks(std::vector<Index> dims, std::vector<std::string> names);
  static VariableBlocks single(Index dim, std::string name = "z");

  [[nodiscard]] Index count() const { return static_cast<Index>(dims_.size()); }
  [[nodiscard]] Index dim(Index block) const { return dims_.at(static_cast<size_t>(block)); }
  [[nodiscard]] const std::string& name(Index block) const {
    return names_.at(static_cast<size_t>(block));
  }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
  // Number of coordinates in blocks [0, block).
  [[nodiscard]] Index offset(Index block) const;
  [[nodiscard]] Index total() const { return offset(count()); }
  [[nodiscard]] Index find(const std::string& name) const;  // -1 when absent
  // One label per coordinate: the block name, suffixed by position when the
  // block has several coordinates.
  [[nodiscard]] std::vector<std::string> coordinate_names() const;

  bool operator==(const VariableBlocks& other) const = default;

 private:
  std::vector<Index> dims_;
  std::vector<std::string> names_;
};

// Rows of `points` carry probability `weights`. Shared read-only view of
// discrete laws and samples.
class WeightedPoints {
 public:
  [[nodiscard]] const Matrix& points() const { return points_; }
  [[nodiscard]] const Vector& weights() const { return weights_; }
  [[nodiscard]] const VariableBlocks& blocks() const { return blocks_; }
  [[nodiscard]] Index size() const { return points_.rows(); }
  [[nodiscard]] Index dim() const { return points_.cols(); }
  [[nodiscard]] Vector point(Index i) const { return points_.row(i).transpose(); }

 protected:
  WeightedPoints(Matrix points, Vector weights, VariableBlocks blocks);

  Matrix points_;
  Vector weights_;
  VariableBlocks blocks_;
};

// Finite-support law with distinct support points.
class DiscreteDistribution : public WeightedPoints {
 public:
  DiscreteDistribution(Matrix support, Vector mass, VariableBlocks blocks);
  static DiscreteDistribution uniform(Matrix support, VariableBlocks blocks);
  static DiscreteDistribution point_mass(const Vector& z, VariableBlocks blocks);

  [[nodiscard]] const Vector& mass() const { return weights_; }
  // Index of an exactly matching support point, or -1.
  [[nodiscard]] Index find(const Vector& z) const;
  // Same support, new masses (validated).
  [[nodiscard]] DiscreteDistribution with_mass(Vector mass) const;
  // Law of blocks [first, last), with ties merged.
  [[nodiscard]] DiscreteDistribution marginal(Index first, Index last) const;
};

// Sample-based law: rows may repeat; default weight 1/n.
class EmpiricalSample : public WeightedPoints {
 public:
  EmpiricalSample(Matrix observations, VariableBlocks blocks,
                  std::optional<Vector> weights = std::nullopt);

  [[nodiscard]] const Matrix& observations() const { return points_; }
  // Merges tied rows into a discrete law with the summed weights.
  [[nodiscard]] DiscreteDistribution aggregate() const;
};

using PointFunction = std::function<Vector(const Vector&)>;

// P[f]: mass-weighted sum (or weighted sample mean). Throws DomainError
// naming the first point where f is not finite.
Vector expect(const WeightedPoints& law, const PointFunction& f);

// Grouping of points by their value on the leading blocks. Level k groups
// on blocks [0, k); level 0 is a single group, level l groups on all of Z.
class BlockFactorization {
 public:
  explicit BlockFactorization(const WeightedPoints& law);

  [[nodiscard]] Index levels() const { return static_cast<Index>(groups_.size()) - 1; }
  [[nodiscard]] const std::vector<Index>& groups(Index level) const;
  [[nodiscard]] const Vector& group_mass(Index level) const;
  // Per point: E[values | blocks < level]. Throws DomainError when a point
  // sits in a zero-mass group.
  [[nodiscard]] Matrix conditional_mean(const Matrix& values, Index level) const;

 private:
  Vector weights_;
  std::vector<std::vector<Index>> groups_;
  std::vector<Vector> group_mass_;
};

using PrefixKey = std::vector<double>;

// Conditional law of blocks [target_first, target_last) given the value of
// blocks [0, given_blocks), keyed by that value.
std::map<PrefixKey, DiscreteDistribution> conditional(const DiscreteDistribution& law,
                                                      Index given_blocks, Index target_first,
                                                      Index target_last);

// Mixture path base + eps (direction - base). With which_block = j only the
// conditional law of block j given blocks [0, j) moves, through the
// change of measure q(prefix) / p_eps(prefix); other factors stay fixed.
struct ContaminationPath {
  DiscreteDistribution base;
  DiscreteDistribution direction;
  std::optional<Index> which_block;
};

// Support of the result lists the base points first, in base order.
DiscreteDistribution contaminate(const ContaminationPath& path, double eps);
EmpiricalSample contaminate(const EmpiricalSample& base, const DiscreteDistribution& direction,
                            double eps);

enum class KernelFamily { gaussian, epanechnikov };

class KernelSpec {
 public:
  KernelSpec(KernelFamily family, double bandwidth, Index dimension);
  [[nodiscard]] KernelFamily family() const { return family_; }
  [[nodiscard]] double bandwidth() const { return bandwidth_; }
  [[nodiscard]] Index dimension() const { return dimension_; }

 private:
  KernelFamily family_;
  double bandwidth_;
  Index dimension_;
};

// K((center - z) / b) / b^d for a radially symmetric unit-mass kernel.
double kernel_weight(const KernelSpec& spec, const Vector& center, const Vector& z);
// Integral of K(u)^2 over R^d for the unscaled kernel.
double kernel_square_integral(const KernelSpec& spec);

// Reproducible generator; one independent stream per (master seed, index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  static Rng stream(std::uint64_t master_seed, std::uint64_t index);

  double uniform();   // [0, 1), 53 random bits
  double normal();    // standard normal, Box-Muller
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

EmpiricalSample sample(const DiscreteDistribution& law, Index n, Rng& rng);

struct CsvTable {
  std::vector<std::string> header;
  Matrix data;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& data);

// Builds a sample from named columns; each block lists its column names.
EmpiricalSample sample_from_columns(
    const CsvTable& table,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& blocks);

// Support columns followed by a mass column.
void write_law_csv(std::ostream& out, const DiscreteDistribution& law);

}  // namespace ifcalc::dist
