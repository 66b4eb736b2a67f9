#pragma once

// epsilon-entropy of a finite weighted semimetric space: the smallest k for
// which the points split into an error cell of weight < epsilon and k cells
// of diameter < epsilon. All comparisons are strict and exact on the stored
// doubles.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scalent/mm_space.hpp"

namespace scalent {

inline constexpr std::size_t kDefaultOracleLimit = 15;

// Hard ceiling of the exact search (one bit per collapsed point).
inline constexpr std::size_t kMaxExactPoints = 64;

enum class Estimator { exact, greedy };

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& name);

// assignment[i] in {0, ..., cells}; 0 is the error cell. Cells may be empty.
struct Cover {
  std::vector<std::size_t> assignment;
  std::size_t cells = 1;
  double epsilon = 0.0;
};

struct EntropyValue {
  std::size_t k = 1;
  double bits = 0.0;  // log2(k)
  Estimator estimator = Estimator::exact;
  Cover certificate;
};

class OracleLimitError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Weight of the error cell, summed in index order.
double error_weight(const Cover& cover, std::span<const double> weights);

bool is_valid_cover(const Cover& cover, const DistanceMatrix& matrix,
                    std::span<const double> weights, double epsilon);

// Points at distance 0 are interchangeable in every cover, so they can be
// merged without changing the entropy. class_of maps original indices to
// collapsed ones; classes are numbered by first occurrence.
struct CollapsedSpace {
  DistanceMatrix matrix;
  std::vector<double> weights;
  std::vector<std::size_t> class_of;
};

CollapsedSpace collapse_zero_distance(const DistanceMatrix& matrix,
                                      std::span<const double> weights);

// Branching on maximal cliques suits sparse compatibility graphs; placing
// points one by one into cells suits dense ones. automatic picks by the
// number of maximal cliques.
enum class ExactSearchKind { automatic, clique_branching, cell_assignment };

// True minimum. The oracle limit applies to the number of distance-zero
// classes. Throws OracleLimitError beyond it, std::invalid_argument for
// epsilon <= 0.
EntropyValue exact_entropy(const DistanceMatrix& matrix, std::span<const double> weights,
                           double epsilon, std::size_t oracle_limit = kDefaultOracleLimit,
                           ExactSearchKind search = ExactSearchKind::automatic);

// Certified upper bound from greedy ball selection.
EntropyValue greedy_entropy(const DistanceMatrix& matrix, std::span<const double> weights,
                            double epsilon);

EntropyValue estimate_entropy(const DistanceMatrix& matrix, std::span<const double> weights,
                              double epsilon, Estimator estimator,
                              std::size_t oracle_limit = kDefaultOracleLimit);

// eps_grid must be strictly decreasing.
std::vector<EntropyValue> entropy_curve(const DistanceMatrix& matrix,
                                        std::span<const double> weights,
                                        std::span<const double> eps_grid, Estimator estimator,
                                        std::size_t oracle_limit = kDefaultOracleLimit);

}  // namespace scalent
