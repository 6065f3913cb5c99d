#pragma once

#include <cstdint>
#include <vector>

#include "goodhart/mdp.hpp"
#include "goodhart/solvers.hpp"

namespace goodhart {

/// The occupancy polytope Omega = {eta : A eta = mu, eta >= 0} together with the
/// orthogonal projection M onto the direction space of its affine hull.
///
/// M = I - A^T (A A^T)^+ A is formed from an orthonormal basis U of the row
/// space of A, obtained by SVD with relative cut-off 1e-10 on the eigenvalues
/// of A A^T. The dense matrix is only kept when |S||A| <= kDenseLimit;
/// otherwise project() applies v - U (U^T v).
class PolytopeModel {
 public:
  static constexpr int kDenseLimit = 4096;

  explicit PolytopeModel(const TabularMdp& mdp);

  int num_pairs() const noexcept { return static_cast<int>(constraint_.cols()); }
  int num_states() const noexcept { return static_cast<int>(constraint_.rows()); }
  /// |S|(|A| - 1)
  int dimension() const noexcept { return dimension_; }
  double discount() const noexcept { return discount_; }

  const Matrix& constraint_matrix() const noexcept { return constraint_; }
  const Vector& rhs() const noexcept { return rhs_; }
  const Matrix& row_space_basis() const noexcept { return row_basis_; }
  int constraint_rank() const noexcept { return static_cast<int>(row_basis_.cols()); }

  bool has_dense_projection() const noexcept { return has_dense_; }
  /// Dense M; throws when |S||A| exceeds kDenseLimit.
  const Matrix& projection() const;

  Vector project(const Vector& v) const;
  Vector project(const RewardVector& r) const { return project(r.values); }
  /// Columns M e_i for the given coordinates.
  Matrix projection_columns(const std::vector<int>& coords) const;

 private:
  Matrix constraint_;
  Vector rhs_;
  Matrix row_basis_;
  Matrix projection_;
  bool has_dense_ = false;
  int dimension_ = 0;
  double discount_ = 0.0;
};

PolytopeModel build_polytope(const TabularMdp& mdp);

/// Angle in [0, pi] between M r0 and M r1.
double projected_angle(const PolytopeModel& poly, const RewardVector& r0, const RewardVector& r1);

/// Angle between two vectors that already live in span(Omega).
double vector_angle(const Vector& a, const Vector& b);

/// Positive affine map a r + c 1 with min_pi J = 0 and max_pi J = 1. The extremes
/// are the exact returns of optimal_policy() for r and -r.
RewardVector normalize_return_range(const TabularMdp& mdp, const RewardVector& r,
                                    const SolverConfig& cfg = {});

/// Scales r so that ||M r|| = m.
RewardVector starc_normalize(const PolytopeModel& poly, const RewardVector& r, double m);

/// Reward r' with projected_angle(r, r') = d and ||M r'|| = m, rotated from M r
/// towards a seeded random direction of span(Omega). r' has no null-space part.
RewardVector sample_reward_at_angle(const PolytopeModel& poly, const RewardVector& r, double d,
                                    double m, std::uint64_t seed);

/// Uniformly random unit direction of span(Omega) orthogonal to `unit`.
Vector random_orthogonal_direction(const PolytopeModel& poly, const Vector& unit, std::uint64_t seed);

/// Reward at projected angle exactly theta from `proxy`, in the plane of
/// M eta_dir and M proxy, rotated away from eta_dir, with ||M R|| = ||M proxy||.
/// Throws NoWitnessError when it does not decrease along eta_dir.
RewardVector adversarial_reward(const PolytopeModel& poly, const RewardVector& proxy, double theta,
                                const Vector& eta_dir);

struct Vertex {
  std::vector<int> actions;
  Policy policy;
  OccupancyMeasure eta;
};

/// One vertex per deterministic policy, enumerated in lexicographic action order
/// (state 0 varies slowest). Refuses when |A|^|S| > max_vertices.
std::vector<Vertex> enumerate_vertices(const TabularMdp& mdp, const PolytopeModel& poly,
                                       std::int64_t max_vertices = 1000000);

/// |A|^|S| or -1 when it exceeds `cap`.
std::int64_t count_deterministic_policies(const TabularMdp& mdp, std::int64_t cap);

}  // namespace goodhart
