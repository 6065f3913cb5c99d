#include "goodhart/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "goodhart/errors.hpp"

namespace goodhart {

namespace {

constexpr double kDegenerateNorm = 1e-10;

}  // namespace

PolytopeModel::PolytopeModel(const TabularMdp& mdp) {
  require_valid(mdp);
  constraint_ = goodhart::constraint_matrix(mdp);
  rhs_ = mdp.initial_dist();
  discount_ = mdp.discount();
  dimension_ = mdp.num_states() * (mdp.num_actions() - 1);

  // Thin SVD of A^T: its left singular vectors span the row space of A.
  const Matrix at = constraint_.transpose();
  Eigen::BDCSVD<Matrix> svd(at, Eigen::ComputeThinU);
  if (svd.info() != Eigen::Success) throw NumericError("build_polytope: SVD of the constraint matrix failed");
  const Vector& sv = svd.singularValues();
  const double top = sv.size() > 0 ? sv(0) : 0.0;
  // eigenvalues of A A^T are sv^2; keep those above 1e-10 * ||A A^T||
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) * sv(i) > 1e-10 * top * top) ++rank;
  row_basis_ = svd.matrixU().leftCols(rank);

  const int n = num_pairs();
  if (n <= kDenseLimit) {
    projection_ = Matrix::Identity(n, n) - row_basis_ * row_basis_.transpose();
    projection_ = 0.5 * (projection_ + projection_.transpose()).eval();
    has_dense_ = true;
  }
}

const Matrix& PolytopeModel::projection() const {
  if (!has_dense_) throw InvalidArgument("projection matrix is not materialised for |S||A| > 4096");
  return projection_;
}

Vector PolytopeModel::project(const Vector& v) const {
  if (v.size() != num_pairs()) throw InvalidArgument("project: vector length does not match |S||A|");
  if (has_dense_) return projection_ * v;
  return v - row_basis_ * (row_basis_.transpose() * v);
}

Matrix PolytopeModel::projection_columns(const std::vector<int>& coords) const {
  Matrix out(num_pairs(), static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const int i = coords[k];
    if (has_dense_) {
      out.col(static_cast<Eigen::Index>(k)) = projection_.col(i);
    } else {
      Vector col = -row_basis_ * row_basis_.row(i).transpose();
      col(i) += 1.0;
      out.col(static_cast<Eigen::Index>(k)) = col;
    }
  }
  return out;
}

PolytopeModel build_polytope(const TabularMdp& mdp) { return PolytopeModel(mdp); }

double vector_angle(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > kDegenerateNorm) || !(nb > kDegenerateNorm))
    throw DegenerateRewardError("projected_angle: reward has (near) zero projection onto span(Omega)");
  const Vector ua = a / na;
  const Vector ub = b / nb;
  // Equivalent to acos(clamp(ua . ub)) but keeps full precision near 0 and pi.
  return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm());
}

double projected_angle(const PolytopeModel& poly, const RewardVector& r0, const RewardVector& r1) {
  return vector_angle(poly.project(r0), poly.project(r1));
}

RewardVector normalize_return_range(const TabularMdp& mdp, const RewardVector& r,
                                    const SolverConfig& cfg) {
  require_valid(mdp, r);
  const double j_max = policy_return(mdp, r, optimal_policy(mdp, r, cfg));
  const RewardVector neg(-r.values);
  const double j_min = policy_return(mdp, r, optimal_policy(mdp, neg, cfg));
  const double range = j_max - j_min;
  const double scale = std::max({1.0, std::abs(j_max), std::abs(j_min)});
  if (!(range > 1e-12 * scale))
    throw DegenerateRewardError("normalize_return_range: return is constant over all policies");
  const double a = 1.0 / range;
  // J(a r + c 1) = a J(r) + c / (1 - gamma)
  const double c = -a * j_min * (1.0 - mdp.discount());
  return RewardVector((a * r.values).array() + c);
}

RewardVector starc_normalize(const PolytopeModel& poly, const RewardVector& r, double m) {
  if (!(m > 0.0) || !std::isfinite(m)) throw InvalidArgument("starc_normalize: magnitude must be positive");
  const double norm = poly.project(r).norm();
  if (!(norm > kDegenerateNorm)) throw DegenerateRewardError("starc_normalize: reward has zero projection");
  return RewardVector(r.values * (m / norm));
}

Vector random_orthogonal_direction(const PolytopeModel& poly, const Vector& unit, std::uint64_t seed) {
  if (poly.dimension() < 2)
    throw InvalidArgument("no direction of span(Omega) is orthogonal to the reward (dimension < 2)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vector g(poly.num_pairs());
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
    Vector w = poly.project(g);
    for (int pass = 0; pass < 2; ++pass) {
      w -= w.dot(unit) * unit;
      w = poly.project(w);
    }
    w -= w.dot(unit) * unit;
    const double n = w.norm();
    if (n > 1e-8 * std::sqrt(static_cast<double>(g.size()))) return w / n;
  }
  throw NumericError("random_orthogonal_direction: could not draw an orthogonal direction");
}

RewardVector sample_reward_at_angle(const PolytopeModel& poly, const RewardVector& r, double d,
                                    double m, std::uint64_t seed) {
  if (!(d >= 0.0 && d <= M_PI)) throw InvalidArgument("sample_reward_at_angle: d must lie in [0, pi]");
  if (!(m > 0.0) || !std::isfinite(m)) throw InvalidArgument("sample_reward_at_angle: magnitude must be positive");
  const Vector mr = poly.project(r);
  const double norm = mr.norm();
  if (!(norm > kDegenerateNorm)) throw DegenerateRewardError("sample_reward_at_angle: reward has zero projection");
  const Vector u = mr / norm;
  const Vector w = random_orthogonal_direction(poly, u, seed);
  return RewardVector(m * (std::cos(d) * u + std::sin(d) * w));
}

RewardVector adversarial_reward(const PolytopeModel& poly, const RewardVector& proxy, double theta,
                                const Vector& eta_dir) {
  if (!(theta >= 0.0 && theta <= M_PI)) throw InvalidArgument("adversarial_reward: theta must lie in [0, pi]");
  const Vector mr = poly.project(proxy);
  const double m = mr.norm();
  if (!(m > kDegenerateNorm)) throw DegenerateRewardError("adversarial_reward: proxy has zero projection");
  const Vector u = mr / m;
  const Vector d = poly.project(eta_dir);
  const double dn = d.norm();
  if (!(dn > 0.0)) throw InvalidArgument("adversarial_reward: direction has zero projection");
  Vector perp = d - d.dot(u) * u;
  Vector w;
  if (perp.norm() > 1e-12 * dn) {
    w = perp / perp.norm();
  } else {
    // Direction is parallel to the proxy; every rotation gives the same dot product.
    w = random_orthogonal_direction(poly, u, 0);
  }
  const Vector witness = m * (std::cos(theta) * u - std::sin(theta) * w);
  if (!(witness.dot(d) < 0.0))
    throw NoWitnessError("adversarial_reward: no reward within the angle bound decreases along the step");
  return RewardVector(witness);
}

std::int64_t count_deterministic_policies(const TabularMdp& mdp, std::int64_t cap) {
  std::int64_t count = 1;
  for (int s = 0; s < mdp.num_states(); ++s) {
    if (count > cap / mdp.num_actions()) return -1;
    count *= mdp.num_actions();
  }
  return count <= cap ? count : -1;
}

std::vector<Vertex> enumerate_vertices(const TabularMdp& mdp, const PolytopeModel& /*poly*/,
                                       std::int64_t max_vertices) {
  const std::int64_t count = count_deterministic_policies(mdp, max_vertices);
  if (count < 0)
    throw InvalidArgument("enumerate_vertices: |A|^|S| exceeds the limit of " + std::to_string(max_vertices));
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  std::vector<Vertex> out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<int> actions(static_cast<std::size_t>(S), 0);
  for (std::int64_t k = 0; k < count; ++k) {
    Policy pi = deterministic_policy(mdp, actions);
    OccupancyMeasure eta = occupancy_measure(mdp, pi);
    out.push_back({actions, std::move(pi), std::move(eta)});
    for (int s = S - 1; s >= 0; --s) {
      auto& a = actions[static_cast<std::size_t>(s)];
      if (++a < A) break;
      a = 0;
    }
  }
  return out;
}

}  // namespace goodhart
