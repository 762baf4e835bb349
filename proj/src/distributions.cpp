#include "ifcalc/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "ifcalc/errors.hpp"

namespace ifcalc::dist {

namespace {

constexpr double kMassTol = 1e-12;

PrefixKey key_of(const Matrix& points, Index row, Index first, Index last) {
  PrefixKey key(static_cast<size_t>(last - first));
  for (Index c = first; c < last; ++c) {
    const double v = points(row, c);
    key[static_cast<size_t>(c - first)] = v == 0.0 ? 0.0 : v;  // fold -0 into +0
  }
  return key;
}

void check_mass(const Vector& mass, const char* who) {
  if (!mass.allFinite()) throw InvalidInput(std::string(who) + ": non-finite mass");
  if ((mass.array() < 0.0).any()) throw InvalidInput(std::string(who) + ": negative mass");
  const double total = mass.sum();
  if (std::abs(total - 1.0) > kMassTol) {
    throw InvalidInput(std::string(who) + ": masses sum to " + std::to_string(total));
  }
}

// Groups the rows of `points` by their key on columns [first, last).
std::vector<Index> group_rows(const Matrix& points, Index first, Index last, Index* count) {
  std::map<PrefixKey, Index> ids;
  std::vector<Index> group(static_cast<size_t>(points.rows()));
  for (Index i = 0; i < points.rows(); ++i) {
    auto [it, inserted] = ids.try_emplace(key_of(points, i, first, last),
                                          static_cast<Index>(ids.size()));
    group[static_cast<size_t>(i)] = it->second;
  }
  *count = static_cast<Index>(ids.size());
  return group;
}

}  // namespace

VariableBlocks::VariableBlocks(std::vector<Index> dims, std::vector<std::string> names)
    : dims_(std::move(dims)), names_(std::move(names)) {
  if (dims_.empty()) throw InvalidInput("VariableBlocks: need at least one block");
  if (dims_.size() != names_.size()) throw InvalidInput("VariableBlocks: names/dims mismatch");
  for (Index d : dims_) {
    if (d < 1) throw InvalidInput("VariableBlocks: block dimension must be positive");
  }
}

VariableBlocks VariableBlocks::single(Index dim, std::string name) {
  return VariableBlocks({dim}, {std::move(name)});
}

Index VariableBlocks::offset(Index block) const {
  if (block < 0 || block > count()) throw InvalidInput("VariableBlocks: block out of range");
  Index off = 0;
  for (Index j = 0; j < block; ++j) off += dims_[static_cast<size_t>(j)];
  return off;
}

Index VariableBlocks::find(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<Index>(it - names_.begin());
}

std::vector<std::string> VariableBlocks::coordinate_names() const {
  std::vector<std::string> out;
  for (size_t j = 0; j < dims_.size(); ++j) {
    if (dims_[j] == 1) {
      out.push_back(names_[j]);
    } else {
      for (Index k = 0; k < dims_[j]; ++k) out.push_back(names_[j] + "_" + std::to_string(k));
    }
  }
  return out;
}

WeightedPoints::WeightedPoints(Matrix points, Vector weights, VariableBlocks blocks)
    : points_(std::move(points)), weights_(std::move(weights)), blocks_(std::move(blocks)) {
  if (points_.rows() < 1) throw InvalidInput("law needs at least one point");
  if (points_.cols() != blocks_.total()) {
    throw InvalidInput("law: point dimension " + std::to_string(points_.cols()) +
                       " differs from block total " + std::to_string(blocks_.total()));
  }
  if (weights_.size() != points_.rows()) throw InvalidInput("law: weight count mismatch");
  linalg::require_finite(points_, "law points");
}

DiscreteDistribution::DiscreteDistribution(Matrix support, Vector mass, VariableBlocks blocks)
    : WeightedPoints(std::move(support), std::move(mass), std::move(blocks)) {
  check_mass(weights_, "DiscreteDistribution");
  Index distinct = 0;
  group_rows(points_, 0, points_.cols(), &distinct);
  if (distinct != points_.rows()) throw InvalidInput("DiscreteDistribution: repeated support point");
}

DiscreteDistribution DiscreteDistribution::uniform(Matrix support, VariableBlocks blocks) {
  const Index n = support.rows();
  return DiscreteDistribution(std::move(support), Vector::Constant(n, 1.0 / static_cast<double>(n)),
                              std::move(blocks));
}

DiscreteDistribution DiscreteDistribution::point_mass(const Vector& z, VariableBlocks blocks) {
  return DiscreteDistribution(z.transpose(), Vector::Ones(1), std::move(blocks));
}

Index DiscreteDistribution::find(const Vector& z) const {
  if (z.size() != dim()) return -1;
  for (Index i = 0; i < size(); ++i) {
    if ((points_.row(i).transpose().array() == z.array()).all()) return i;
  }
  return -1;
}

DiscreteDistribution DiscreteDistribution::with_mass(Vector mass) const {
  if (mass.size() != size()) throw InvalidInput("with_mass: length mismatch");
  return DiscreteDistribution(points_, std::move(mass), blocks_);
}

DiscreteDistribution DiscreteDistribution::marginal(Index first, Index last) const {
  if (first < 0 || last > blocks_.count() || first >= last) {
    throw InvalidInput("marginal: bad block range");
  }
  const Index c0 = blocks_.offset(first);
  const Index c1 = blocks_.offset(last);
  Index count = 0;
  const std::vector<Index> group = group_rows(points_, c0, c1, &count);
  Matrix support(count, c1 - c0);
  Vector mass = Vector::Zero(count);
  for (Index i = 0; i < size(); ++i) {
    const Index g = group[static_cast<size_t>(i)];
    support.row(g) = points_.block(i, c0, 1, c1 - c0);
    mass(g) += weights_(i);
  }
  std::vector<Index> dims;
  std::vector<std::string> names;
  for (Index j = first; j < last; ++j) {
    dims.push_back(blocks_.dim(j));
    names.push_back(blocks_.name(j));
  }
  mass /= mass.sum();
  return DiscreteDistribution(std::move(support), std::move(mass),
                              VariableBlocks(std::move(dims), std::move(names)));
}

EmpiricalSample::EmpiricalSample(Matrix observations, VariableBlocks blocks,
                                 std::optional<Vector> weights)
    : WeightedPoints(observations,
                     weights ? *weights
                             : Vector::Constant(observations.rows(),
                                                1.0 / static_cast<double>(observations.rows())),
                     std::move(blocks)) {
  check_mass(weights_, "EmpiricalSample");
}

DiscreteDistribution EmpiricalSample::aggregate() const {
  Index count = 0;
  const std::vector<Index> group = group_rows(points_, 0, points_.cols(), &count);
  Matrix support(count, dim());
  Vector mass = Vector::Zero(count);
  for (Index i = 0; i < size(); ++i) {
    const Index g = group[static_cast<size_t>(i)];
    support.row(g) = points_.row(i);
    mass(g) += weights_(i);
  }
  mass /= mass.sum();
  return DiscreteDistribution(std::move(support), std::move(mass), blocks_);
}

Vector expect(const WeightedPoints& law, const PointFunction& f) {
  Vector total;
  for (Index i = 0; i < law.size(); ++i) {
    const Vector v = f(law.point(i));
    if (!v.allFinite()) {
      throw DomainError("expect: non-finite value at support point " + std::to_string(i));
    }
    if (i == 0) {
      total = Vector::Zero(v.size());
    } else if (v.size() != total.size()) {
      throw InvalidInput("expect: output dimension changes across points");
    }
    total += law.weights()(i) * v;
  }
  return total;
}

BlockFactorization::BlockFactorization(const WeightedPoints& law) : weights_(law.weights()) {
  const Index l = law.blocks().count();
  for (Index level = 0; level <= l; ++level) {
    Index count = 0;
    std::vector<Index> g = group_rows(law.points(), 0, law.blocks().offset(level), &count);
    Vector gm = Vector::Zero(count);
    for (Index i = 0; i < law.size(); ++i) gm(g[static_cast<size_t>(i)]) += weights_(i);
    groups_.push_back(std::move(g));
    group_mass_.push_back(std::move(gm));
  }
}

const std::vector<Index>& BlockFactorization::groups(Index level) const {
  return groups_.at(static_cast<size_t>(level));
}

const Vector& BlockFactorization::group_mass(Index level) const {
  return group_mass_.at(static_cast<size_t>(level));
}

Matrix BlockFactorization::conditional_mean(const Matrix& values, Index level) const {
  const auto& g = groups(level);
  const Vector& gm = group_mass(level);
  if (values.rows() != static_cast<Index>(g.size())) {
    throw InvalidInput("conditional_mean: row count mismatch");
  }
  Matrix sums = Matrix::Zero(gm.size(), values.cols());
  for (Index i = 0; i < values.rows(); ++i) {
    sums.row(g[static_cast<size_t>(i)]) += weights_(i) * values.row(i);
  }
  Matrix out(values.rows(), values.cols());
  for (Index i = 0; i < values.rows(); ++i) {
    const Index k = g[static_cast<size_t>(i)];
    if (!(gm(k) > 0.0)) {
      throw DomainError("conditional_mean: conditioning value of point " + std::to_string(i) +
                        " has zero mass");
    }
    out.row(i) = sums.row(k) / gm(k);
  }
  return out;
}

std::map<PrefixKey, DiscreteDistribution> conditional(const DiscreteDistribution& law,
                                                      Index given_blocks, Index target_first,
                                                      Index target_last) {
  const VariableBlocks& b = law.blocks();
  if (given_blocks < 0 || target_first < given_blocks || target_last > b.count() ||
      target_first >= target_last) {
    throw InvalidInput("conditional: bad block ranges");
  }
  const Index p1 = b.offset(given_blocks);
  const Index t0 = b.offset(target_first);
  const Index t1 = b.offset(target_last);
  struct Accum {
    std::map<PrefixKey, double> target_mass;
    double total = 0.0;
  };
  std::map<PrefixKey, Accum> acc;
  for (Index i = 0; i < law.size(); ++i) {
    Accum& a = acc[key_of(law.points(), i, 0, p1)];
    a.target_mass[key_of(law.points(), i, t0, t1)] += law.mass()(i);
    a.total += law.mass()(i);
  }
  std::vector<Index> dims;
  std::vector<std::string> names;
  for (Index j = target_first; j < target_last; ++j) {
    dims.push_back(b.dim(j));
    names.push_back(b.name(j));
  }
  const VariableBlocks target_blocks(dims, names);
  std::map<PrefixKey, DiscreteDistribution> out;
  for (const auto& [prefix, a] : acc) {
    if (!(a.total > 0.0)) throw DomainError("conditional: conditioning value has zero mass");
    Matrix support(static_cast<Index>(a.target_mass.size()), t1 - t0);
    Vector mass(support.rows());
    Index r = 0;
    for (const auto& [t, m] : a.target_mass) {
      support.row(r) = Eigen::Map<const Vector>(t.data(), static_cast<Index>(t.size())).transpose();
      mass(r) = m / a.total;
      ++r;
    }
    mass /= mass.sum();
    out.emplace(prefix, DiscreteDistribution(std::move(support), std::move(mass), target_blocks));
  }
  return out;
}

DiscreteDistribution contaminate(const ContaminationPath& path, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("contaminate: eps must lie in [0, 1)");
  const DiscreteDistribution& p = path.base;
  const DiscreteDistribution& q = path.direction;
  if (!(p.blocks() == q.blocks())) {
    throw InvalidInput("contaminate: direction blocks differ from base blocks");
  }
  if (eps == 0.0) return p;

  // Union support: base points in order, then new direction points.
  std::vector<Vector> pts;
  std::vector<double> pm;
  std::vector<double> qm;
  for (Index i = 0; i < p.size(); ++i) {
    pts.push_back(p.point(i));
    pm.push_back(p.mass()(i));
    qm.push_back(0.0);
  }
  for (Index i = 0; i < q.size(); ++i) {
    const Index k = p.find(q.point(i));
    if (k >= 0) {
      qm[static_cast<size_t>(k)] += q.mass()(i);
    } else {
      pts.push_back(q.point(i));
      pm.push_back(0.0);
      qm.push_back(q.mass()(i));
    }
  }
  const Index n = static_cast<Index>(pts.size());
  Matrix support(n, p.dim());
  for (Index i = 0; i < n; ++i) support.row(i) = pts[static_cast<size_t>(i)].transpose();
  const Vector pv = Eigen::Map<const Vector>(pm.data(), n);
  const Vector qv = Eigen::Map<const Vector>(qm.data(), n);

  Vector out(n);
  if (!path.which_block) {
    out = (1.0 - eps) * pv + eps * qv;
  } else {
    const Index j = *path.which_block;
    if (j < 0 || j >= p.blocks().count()) throw InvalidInput("contaminate: block out of range");
    const Index c_prefix = p.blocks().offset(j);
    const Index c_upto = p.blocks().offset(j + 1);
    std::map<PrefixKey, double> p_pre, q_pre, p_upto, q_upto;
    for (Index i = 0; i < n; ++i) {
      p_pre[key_of(support, i, 0, c_prefix)] += pv(i);
      q_pre[key_of(support, i, 0, c_prefix)] += qv(i);
      p_upto[key_of(support, i, 0, c_upto)] += pv(i);
      q_upto[key_of(support, i, 0, c_upto)] += qv(i);
    }
    for (Index i = 0; i < n; ++i) {
      const PrefixKey kp = key_of(support, i, 0, c_prefix);
      const PrefixKey ku = key_of(support, i, 0, c_upto);
      const double pp = p_pre[kp];
      if (!(pp > 0.0)) {
        out(i) = 0.0;  // prefix outside the base support keeps zero mass
        continue;
      }
      const double qp = q_pre[kp];
      const double pc = p_upto[ku] / pp;
      const double qc = qp > 0.0 ? q_upto[ku] / qp : 0.0;
      const double p_eps = (1.0 - eps) * pp + eps * qp;
      const double cond = pc + eps * (qc - pc) * (qp / p_eps);
      double suffix = 0.0;
      if (p_upto[ku] > 0.0) {
        suffix = pv(i) / p_upto[ku];
      } else if (q_upto[ku] > 0.0) {
        suffix = qv(i) / q_upto[ku];
      }
      out(i) = pp * cond * suffix;
    }
  }
  out = out.cwiseMax(0.0);
  out /= out.sum();
  // New points that received no mass are dropped; base points always stay.
  Index keep = p.size();
  for (Index i = p.size(); i < n; ++i) keep += out(i) > 0.0 ? 1 : 0;
  if (keep < n) {
    Matrix s2(keep, p.dim());
    Vector m2(keep);
    Index r = 0;
    for (Index i = 0; i < n; ++i) {
      if (i < p.size() || out(i) > 0.0) {
        s2.row(r) = support.row(i);
        m2(r++) = out(i);
      }
    }
    return DiscreteDistribution(std::move(s2), std::move(m2), p.blocks());
  }
  return DiscreteDistribution(std::move(support), std::move(out), p.blocks());
}

EmpiricalSample contaminate(const EmpiricalSample& base, const DiscreteDistribution& direction,
                            double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("contaminate: eps must lie in [0, 1)");
  if (!(base.blocks() == direction.blocks())) {
    throw InvalidInput("contaminate: direction blocks differ from base blocks");
  }
  Matrix obs(base.size() + direction.size(), base.dim());
  obs << base.observations(), direction.points();
  Vector w(obs.rows());
  w << (1.0 - eps) * base.weights(), eps * direction.mass();
  return EmpiricalSample(std::move(obs), base.blocks(), std::move(w));
}

KernelSpec::KernelSpec(KernelFamily family, double bandwidth, Index dimension)
    : family_(family), bandwidth_(bandwidth), dimension_(dimension) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InvalidInput("KernelSpec: bandwidth must be positive");
  }
  if (dimension < 1) throw InvalidInput("KernelSpec: dimension must be positive");
}

namespace {

double unit_ball_volume(Index d) {
  const double half = 0.5 * static_cast<double>(d);
  return std::pow(std::numbers::pi, half) / std::tgamma(half + 1.0);
}

}  // namespace

double kernel_weight(const KernelSpec& spec, const Vector& center, const Vector& z) {
  if (center.size() != spec.dimension() || z.size() != spec.dimension()) {
    throw InvalidInput("kernel_weight: dimension mismatch");
  }
  const double b = spec.bandwidth();
  const double d = static_cast<double>(spec.dimension());
  const double r2 = ((center - z) / b).squaredNorm();
  const double scale = std::pow(b, d);
  switch (spec.family()) {
    case KernelFamily::gaussian:
      return std::exp(-0.5 * r2) / std::pow(2.0 * std::numbers::pi, 0.5 * d) / scale;
    case KernelFamily::epanechnikov: {
      if (r2 >= 1.0) return 0.0;
      const double c = (d + 2.0) / (2.0 * unit_ball_volume(spec.dimension()));
      return c * (1.0 - r2) / scale;
    }
  }
  return 0.0;
}

double kernel_square_integral(const KernelSpec& spec) {
  const double d = static_cast<double>(spec.dimension());
  switch (spec.family()) {
    case KernelFamily::gaussian:
      return std::pow(4.0 * std::numbers::pi, -0.5 * d);
    case KernelFamily::epanechnikov:
      return 2.0 * (d + 2.0) / (unit_ball_volume(spec.dimension()) * (d + 4.0));
  }
  return 0.0;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng Rng::stream(std::uint64_t master_seed, std::uint64_t index) {
  return Rng(splitmix64(master_seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

EmpiricalSample sample(const DiscreteDistribution& law, Index n, Rng& rng) {
  if (n < 1) throw InvalidInput("sample: n must be positive");
  std::vector<double> cdf(static_cast<size_t>(law.size()));
  double acc = 0.0;
  for (Index i = 0; i < law.size(); ++i) {
    acc += law.mass()(i);
    cdf[static_cast<size_t>(i)] = acc;
  }
  Matrix obs(n, law.dim());
  for (Index r = 0; r < n; ++r) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    obs.row(r) = law.points().row(it - cdf.begin());
  }
  return EmpiricalSample(std::move(obs), law.blocks());
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  if (!std::getline(in, line)) throw InvalidInput("read_csv: missing header row");
  table.header = split(line);
  std::vector<std::vector<double>> rows;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw InvalidInput("read_csv: line " + std::to_string(lineno) + " has " +
                         std::to_string(cells.size()) + " fields");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty() || !std::isfinite(v)) {
        throw InvalidInput("read_csv: line " + std::to_string(lineno) + ": non-numeric field '" +
                           c + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  table.data.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.header.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      table.data(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("read_csv: cannot open " + path);
  return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& data) {
  if (static_cast<Index>(header.size()) != data.cols()) {
    throw InvalidInput("write_csv: header/column mismatch");
  }
  for (size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  std::ostringstream cell;
  for (Index r = 0; r < data.rows(); ++r) {
    for (Index c = 0; c < data.cols(); ++c) {
      cell.str("");
      cell << std::setprecision(17) << data(r, c);
      out << (c ? "," : "") << cell.str();
    }
    out << '\n';
  }
}

EmpiricalSample sample_from_columns(
    const CsvTable& table,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& blocks) {
  std::vector<Index> dims;
  std::vector<std::string> names;
  std::vector<Index> cols;
  for (const auto& [name, columns] : blocks) {
    if (columns.empty()) throw InvalidInput("block '" + name + "' lists no columns");
    dims.push_back(static_cast<Index>(columns.size()));
    names.push_back(name);
    for (const auto& col : columns) {
      const auto it = std::find(table.header.begin(), table.header.end(), col);
      if (it == table.header.end()) throw InvalidInput("unknown CSV column '" + col + "'");
      cols.push_back(static_cast<Index>(it - table.header.begin()));
    }
  }
  if (table.data.rows() == 0) throw InvalidInput("CSV has no data rows");
  Matrix obs(table.data.rows(), static_cast<Index>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) obs.col(static_cast<Index>(c)) = table.data.col(cols[c]);
  return EmpiricalSample(std::move(obs), VariableBlocks(std::move(dims), std::move(names)));
}

void write_law_csv(std::ostream& out, const DiscreteDistribution& law) {
  std::vector<std::string> header = law.blocks().coordinate_names();
  header.push_back("mass");
  Matrix data(law.size(), law.dim() + 1);
  data << law.points(), law.mass();
  write_csv(out, header, data);
}

}  // namespace ifcalc::dist
