#pragma once

// Subadditive regularization of entropy sequences and the verifiers for the
// averaging inequalities that feed it.
//
// Given sequences eta, phi, psi on 1..N with
//   phi(kn) <= k psi(n)          (kn <= N)          [multiplicative bound]
//   phi(n) >= eta(k)             (k <= n <= N)      [monotone lower bound]
// the hull builds
//   phi_hat(n)   = min_{n <= m <= N} phi(m)
//   theta_hat(n) = max_{k >= 1, kn <= N} phi_hat(kn) / k
//   theta(n)     = n * max_{n <= m <= N} theta_hat(m) / m
// and theta is nondecreasing, subadditive, and squeezed between eta and
// 2 psi. Every extremum over an unbounded index set is truncated at N; the
// at_horizon flags record where the truncation decided the value.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scalent/cover.hpp"
#include "scalent/dynamics.hpp"
#include "scalent/profile.hpp"

namespace scalent {

// values[i] is the term for n = i + 1.
struct Envelope {
  std::vector<double> values;
  std::vector<bool> at_horizon;
};

Envelope lower_monotone_envelope(const std::vector<double>& phi);
Envelope theta_hat(const std::vector<double>& phi_hat);
Envelope theta(const std::vector<double>& theta_hat);

struct SeqTriple {
  std::vector<double> eta, phi, psi;  // index i is n = i + 1
};

struct TripleViolation {
  std::string condition;  // "multiplicative" (phi(kn) <= k psi(n)) or "lower" (phi(n) >= eta(k))
  std::size_t n;
  std::size_t k;
};

// First violated condition, if any.
std::optional<TripleViolation> check_triple(const SeqTriple& triple);

class HullPreconditionError : public std::invalid_argument {
 public:
  explicit HullPreconditionError(TripleViolation v);
  const TripleViolation& violation() const noexcept { return violation_; }

 private:
  TripleViolation violation_;
};

struct SandwichViolation {
  std::size_t n;
  std::string side;  // "lower" (eta > theta) or "upper" (theta > 2 psi)
  double excess;
  bool horizon_implicated;  // n > N/2 or a truncated extremum fed the value
};

struct HullResult {
  Envelope phi_hat, theta_hat, theta;
  std::vector<SandwichViolation> sandwich_violations;
  std::string horizon_note;
};

// Throws HullPreconditionError when the triple violates its conditions.
HullResult subadditive_hull(const SeqTriple& triple);

bool is_nondecreasing(const std::vector<double>& seq);

// First (a, b) with a + b <= N and seq(a + b) > seq(a) + seq(b), 1-based.
// The tolerance is relative to seq(a) + seq(b) and absorbs rounding.
inline constexpr double kSubadditivityTolerance = 1e-12;

std::optional<std::pair<std::size_t, std::size_t>> find_subadditivity_violation(
    const std::vector<double>& seq, double relative_tolerance = kSubadditivityTolerance);

// Phi(n, eps_i) = max(Theta(n, eps_i), Phi(n, eps_{i-1})) scanning from the
// largest epsilon. The result is nonincreasing in epsilon and dominates
// Theta pointwise.
ProfileGrid monotone_eps_envelope(const ProfileGrid& theta_grid);

struct LmPzReport {
  double epsilon;
  std::size_t count;
  bool part1_skipped = false;   // some H_eps(rho_i) = 0
  double part1_margin = 0.0;    // 2 sum H_eps(rho_i) - H_{2 sqrt eps}(avg)
  double part2_margin = 0.0;    // H_eps(avg) - min_m H_{2 sqrt eps}(rho_m)
  bool holds() const noexcept { return (part1_skipped || part1_margin >= 0.0) && part2_margin >= 0.0; }
};

// Semimetrics given as matrices over one weighted space, each bounded by 1.
LmPzReport verify_lm_pz(const std::vector<DistanceMatrix>& rhos, std::span<const double> weights,
                        double epsilon, std::size_t oracle_limit = kMaxExactPoints);

struct Prop1Report {
  std::size_t k, n;
  double epsilon;
  bool part1_skipped = false;  // eps >= (1/3) * integral of rho
  double part1_margin = 0.0;   // 2k Psi(n, eps^2/4) - Psi(kn, eps)
  bool part2_applicable = false;  // k <= n
  double part2_margin = 0.0;      // Psi(n, eps) - Psi(k, 2 sqrt(2 eps))
  bool holds() const noexcept {
    return (part1_skipped || part1_margin >= 0.0) && (!part2_applicable || part2_margin >= 0.0);
  }
};

// Integral of rho over X^2 with the product of the space weights.
double semimetric_integral(const DistanceMatrix& m, std::span<const double> weights);

// Requires a finite exact system; the space is enumerated.
Prop1Report verify_prop1(const SystemSpec& system, const SemimetricSpec& rho, std::size_t k,
                         std::size_t n, double epsilon,
                         std::size_t oracle_limit = kMaxExactPoints);

}  // namespace scalent
