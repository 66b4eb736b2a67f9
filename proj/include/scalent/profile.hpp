#pragma once

// Scaling-entropy profiles Phi(n, eps) = H_eps(X, mu, T_av^n rho), the
// preorder/equivalence between profiles on finite grids, and grid-level
// checks of the product and factor bounds.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scalent/cover.hpp"
#include "scalent/dynamics.hpp"
#include "scalent/mm_space.hpp"

namespace scalent {

struct ProfileGrid {
  std::vector<std::size_t> n_grid;  // strictly increasing
  std::vector<double> eps_grid;     // strictly decreasing
  std::vector<std::vector<double>> bits;        // bits[n index][eps index]
  std::vector<std::vector<std::size_t>> cells;  // k behind each value
  Estimator estimator = Estimator::exact;
  std::string system;      // provenance: system description
  std::string semimetric;  // provenance: semimetric description
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;

  double at(std::size_t ni, std::size_t ei) const { return bits.at(ni).at(ei); }

  // Throws std::invalid_argument on a malformed grid.
  void validate() const;
};

// Grid from explicit values (tests, files, hand-built comparisons). k is
// reconstructed as round(2^bits).
ProfileGrid make_profile(std::vector<std::size_t> n_grid, std::vector<double> eps_grid,
                         std::vector<std::vector<double>> bits,
                         Estimator estimator = Estimator::exact);

struct ProfileRequest {
  SystemSpec system;
  SemimetricSpec semimetric;
  std::vector<std::size_t> n_grid;
  std::vector<double> eps_grid;
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::greedy;
  bool enumerate = false;
  std::size_t oracle_limit = kDefaultOracleLimit;
  // When set, averaged matrices are read from / written to this directory.
  std::optional<std::filesystem::path> cache_dir;
};

// Cache file name for the averaged matrix at depth n.
std::string matrix_cache_key(const SampledSpace& space, const std::string& semimetric,
                             std::size_t n);

ProfileGrid compute_profile(const ProfileRequest& request);

// Profile over precomputed averaged matrices (one per n_grid entry).
ProfileGrid profile_from_matrices(const std::vector<DistanceMatrix>& matrices,
                                  std::span<const double> weights,
                                  std::vector<std::size_t> n_grid,
                                  std::vector<double> eps_grid, Estimator estimator,
                                  std::size_t oracle_limit = kDefaultOracleLimit);

inline constexpr double kDefaultCmax = 16.0;

struct DeltaChoice {
  double epsilon;
  double delta;
  double constant;  // smallest C with Phi(n, eps) <= C * Psi(n, delta) on the grid
};

// Phi <= Psi on finite grids: for every left epsilon some right delta and
// C <= C_max bound the left row. Pairs with both values 0 pass; a positive
// left value over a zero right value rules that delta out.
struct Comparison {
  bool holds = false;
  std::vector<DeltaChoice> witness;  // one entry per left epsilon when holds
  double max_constant = 0.0;
  std::optional<double> refused_epsilon;
};

Comparison preceq_check(const ProfileGrid& left, const ProfileGrid& right, double c_max);

bool equivalent(const ProfileGrid& left, const ProfileGrid& right, double c_max);

inline constexpr const char* kStabilityCaveat =
    "heuristic proxy: instability is an asymptotic statement over all epsilon; "
    "a finite grid can suggest it but never decide it";

struct BandReport {
  double epsilon;  // larger budget
  double delta;    // smaller budget
  std::vector<double> band_by_n;  // Phi(n, delta) / max(Phi(n, eps), 1)
  double band = 0.0;              // max over n
  bool growing_tail = false;
  bool flagged = false;
};

struct StabilityReport {
  std::vector<BandReport> pairs;
  // Phi(n_last, eps) / max(Phi(n_first, eps), 1) for each eps row.
  std::vector<double> growth_ratio;
  // growth ratio of the smallest eps row over that of the largest.
  double growth_divergence = 0.0;
  double ratio_cap = 0.0;
  bool flagged = false;
  std::string caveat = kStabilityCaveat;
};

// A pair (eps, delta) is flagged when its band exceeds ratio_cap and the
// band strictly increases over the last min(3, |n_grid|) grid points.
StabilityReport stability_diagnostic(const ProfileGrid& grid, double ratio_cap);

// R(eps) = ceil(-log2 eps), at least 1.
std::size_t product_rank(double epsilon);

struct ProductBoundRow {
  std::size_t n;
  double product_bits;
  double bound_bits;  // sum over m <= R(eps) of component bits at eps / (2 R(eps))
  double margin;      // bound - product
};

struct ProductBoundReport {
  double epsilon;
  std::size_t rank;
  double component_epsilon;
  std::vector<ProductBoundRow> rows;
  bool holds = true;
};

// Components must carry eps / (2 R(eps)) in their grids and share the
// product's n_grid; all grids must come from the exact estimator.
ProductBoundReport product_bound_check(const std::vector<ProfileGrid>& components,
                                       const ProfileGrid& product, double epsilon);

struct FactorBoundReport {
  Comparison comparison;
  bool holds = false;
};

FactorBoundReport factor_bound_check(const ProfileGrid& factor, const ProfileGrid& system,
                                     double c_max);

// CSV with header n,epsilon,H_bits,k,estimator,N,seed; one row per cell in
// n-major order.
std::string profile_to_csv(const ProfileGrid& grid);
ProfileGrid profile_from_csv(const std::string& text);

}  // namespace scalent
