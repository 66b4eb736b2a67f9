#pragma once

// System zoo, orbits, and semimetrics transported along a transformation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "scalent/mm_space.hpp"

namespace scalent {

// x -> x + p/q on the atoms {j/q}. gcd(p, q) = 1.
struct CyclicRotation {
  std::uint64_t q = 2;
  std::uint64_t p = 1;
};

// Golden-mean rotation number (sqrt(5) - 1) / 2 rounded to double.
inline constexpr double kGoldenRotation = 0.6180339887498949;

struct TorusRotation {
  double alpha = kGoldenRotation;
};

// Product-measure words of length L over {0, ..., alphabet-1}. With the
// cyclic flag the shift rotates the word, which permutes the a^L atoms and
// preserves their weights; otherwise the shift drops the first symbol and
// orbit depth is limited by L.
struct BernoulliShift {
  unsigned alphabet = 2;
  std::vector<double> probabilities;  // empty = uniform
  std::size_t length = 1;
  bool cyclic = true;
};

// Windows of length L cut from a prefix of the substitution fixed point
// starting at symbol 0. The shift drops the first symbol of the window.
struct SubstitutionShift {
  std::vector<Word> rules;  // rules[s] is the image of symbol s
  std::size_t length = 1;
  std::size_t prefix_length = std::size_t{1} << 16;
};

struct SystemSpec;

struct ProductSystem {
  std::vector<SystemSpec> components;
};

struct SystemSpec {
  std::variant<CyclicRotation, TorusRotation, BernoulliShift, SubstitutionShift,
               ProductSystem>
      kind;
};

SystemSpec thue_morse(std::size_t length);

// Throws std::invalid_argument naming the violated invariant.
void validate(const SystemSpec& spec);

// Canonical one-line description; used as provenance and in cache keys.
std::string describe(const SystemSpec& spec);

// Systems whose transformation is a weight-preserving permutation of a
// finite atom set (cyclic rotations, cyclic Bernoulli shifts, products).
bool is_finite_exact(const SystemSpec& spec);

// Number of atoms of a finite exact system.
std::optional<std::size_t> atom_count(const SystemSpec& spec);

// Largest orbit length available from a single point; nullopt if unlimited.
std::optional<std::size_t> max_orbit_depth(const SystemSpec& spec);

struct Transformation {
  std::function<Point(const Point&)> map;
  bool invertible = false;
  std::string description;

  Point operator()(const Point& x) const { return map(x); }
};

Transformation make_transformation(const SystemSpec& spec);

// Enumerated spaces list every atom with its exact weight; N must not exceed
// the atom count (0 means "all"). Sampled spaces draw N points i.i.d. from
// the invariant measure, deterministically from the seed.
SampledSpace sample_space(const SystemSpec& spec, std::size_t n, std::uint64_t seed,
                          bool enumerate = false);

// rows[i][k] = T^k x_i for k < depth.
class OrbitTable {
 public:
  OrbitTable(const SampledSpace& space, const Transformation& t, std::size_t depth);

  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t depth() const noexcept { return depth_; }
  const Point& at(std::size_t i, std::size_t k) const { return rows_[i][k]; }

 private:
  std::size_t depth_;
  std::vector<std::vector<Point>> rows_;
};

// (x, y) -> (1/n) sum_{k<n} rho(T^k x, T^k y). The sum is accumulated in k
// order and divided once, matching averaged_matrix_stream bit for bit.
Semimetric averaged_semimetric(const Semimetric& rho, const Transformation& t, std::size_t n);

// (x, y) -> rho(T^j x, T^j y).
Semimetric shifted_semimetric(const Semimetric& rho, const Transformation& t, std::size_t j);

// For each n of the strictly increasing grid, calls sink(n, D_n) with
// D_n = eval_matrix(space, averaged_semimetric(rho, t, n)). The running sum
// of rho along orbit columns is kept, so cost is one matrix pass per depth.
// Throws std::invalid_argument if max_depth is set and below max(n_grid).
void averaged_matrix_stream(const SampledSpace& space, const Semimetric& rho,
                            const Transformation& t, const std::vector<std::size_t>& n_grid,
                            const std::function<void(std::size_t, const DistanceMatrix&)>& sink,
                            std::optional<std::size_t> max_depth = std::nullopt);

std::vector<DistanceMatrix> averaged_matrices(const SampledSpace& space, const Semimetric& rho,
                                              const Transformation& t,
                                              const std::vector<std::size_t>& n_grid,
                                              std::optional<std::size_t> max_depth = std::nullopt);

}  // namespace scalent
