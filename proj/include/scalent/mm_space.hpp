#pragma once

// Finite weighted metric-measure spaces, semimetrics on their points, and
// materialized distance matrices.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace scalent {

using Word = std::vector<std::uint8_t>;

// One coordinate of a point: a torus coordinate in [0, 1) or a word over
// an alphabet of at most 256 symbols.
using Coordinate = std::variant<double, Word>;

// Points of a plain system have one coordinate; points of a product
// system have one coordinate per factor.
using Point = std::vector<Coordinate>;
using PointView = std::span<const Coordinate>;

enum class CoordKind { torus, word };

CoordKind kind_of(const Coordinate& c) noexcept;
std::string to_string(CoordKind kind);

// Raised when a semimetric is applied to points it was not built for.
class RepresentationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SampledSpace {
 public:
  // Weights must be strictly positive; they are normalized to sum to 1.
  SampledSpace(std::vector<Point> points, std::vector<double> weights,
               std::string provenance = "explicit");

  static SampledSpace uniform(std::vector<Point> points,
                              std::string provenance = "explicit");

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Point>& points() const noexcept { return points_; }
  const Point& point(std::size_t i) const { return points_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::string& provenance() const noexcept { return provenance_; }

  // Coordinate kinds shared by every point.
  const std::vector<CoordKind>& signature() const noexcept { return signature_; }

 private:
  std::vector<Point> points_;
  std::vector<double> weights_;
  std::string provenance_;
  std::vector<CoordKind> signature_;
};

enum class SemimetricKind { arc, cut, hamming_word, weighted_sum, averaged, shifted };

std::string to_string(SemimetricKind kind);

class Semimetric {
 public:
  using Evaluator = std::function<double(PointView, PointView)>;

  // An empty signature accepts points of any shape.
  Semimetric(SemimetricKind kind, double bound, std::vector<CoordKind> signature,
             Evaluator evaluator, std::string description);

  double operator()(PointView x, PointView y) const { return (*evaluator_)(x, y); }

  SemimetricKind kind() const noexcept { return kind_; }
  double bound() const noexcept { return bound_; }
  const std::vector<CoordKind>& signature() const noexcept { return signature_; }
  const std::string& description() const noexcept { return description_; }

  // Throws RepresentationError if points of this signature cannot be fed
  // to the evaluator.
  void require_compatible(const std::vector<CoordKind>& point_signature) const;

 private:
  SemimetricKind kind_;
  double bound_;
  std::vector<CoordKind> signature_;
  std::shared_ptr<const Evaluator> evaluator_;
  std::string description_;
};

// Circle distance min(|x - y|, 1 - |x - y|) on a torus coordinate; bound 1/2.
Semimetric arc_semimetric();

// Fraction of positions where two equal-length words differ; bound 1.
Semimetric hamming_semimetric();

using Labeling = std::function<std::int64_t(PointView)>;

// 0 on pairs with equal labels, 1 otherwise.
Semimetric cut_semimetric(Labeling labeling, std::vector<CoordKind> signature,
                          std::string description);

// Cut by the partition of the circle into [b_0, b_1), ..., [b_last, 1 + b_0).
// Breakpoints must be strictly increasing in [0, 1).
Semimetric interval_cut_semimetric(std::vector<double> breakpoints);

// Cut by the first symbol of a word.
Semimetric first_symbol_cut_semimetric();

// Cut with a single cell: identically zero, on points of any shape.
Semimetric zero_semimetric();

struct WeightedComponent {
  double weight;
  Semimetric semimetric;
};

// sum_m C_m rho_m(x_m, y_m): component m is fed coordinate m of a product point.
Semimetric weighted_sum_semimetric(std::vector<WeightedComponent> components);

// Symmetric, zero diagonal, nonnegative. Stores the strict lower triangle.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t n, double bound);

  // Rejects asymmetric input, nonzero diagonal or negative entries.
  static DistanceMatrix from_dense(const std::vector<std::vector<double>>& rows,
                                   double bound);

  std::size_t size() const noexcept { return n_; }
  double bound() const noexcept { return bound_; }

  double operator()(std::size_t i, std::size_t j) const noexcept {
    if (i == j) return 0.0;
    return i > j ? lower_[offset(i, j)] : lower_[offset(j, i)];
  }
  void set(std::size_t i, std::size_t j, double value);

  // Lower triangle, row-major: (1,0), (2,0), (2,1), (3,0), ...
  std::span<const double> lower_triangle() const noexcept { return lower_; }
  std::span<double> lower_triangle() noexcept { return lower_; }

  DistanceMatrix scaled(double factor) const;

  bool operator==(const DistanceMatrix&) const = default;

  static constexpr std::size_t offset(std::size_t i, std::size_t j) noexcept {
    return i * (i - 1) / 2 + j;
  }

 private:
  std::size_t n_ = 0;
  double bound_ = 0.0;
  std::vector<double> lower_;
};

// M[i][j] = rho(points[i], points[j]). Parallel over rows, bit-identical to
// the sequential evaluation.
DistanceMatrix eval_matrix(const SampledSpace& space, const Semimetric& rho);

struct TriangleViolation {
  std::size_t x, y, z;
  double deficit;  // rho(x,z) - rho(x,y) - rho(y,z)
};

struct PairViolation {
  std::size_t x, y;
  double value;
};

struct SemimetricReport {
  std::vector<TriangleViolation> triangle;
  std::vector<PairViolation> asymmetric;  // value = rho(x,y) - rho(y,x)
  std::vector<PairViolation> diagonal;    // value = rho(x,x)
  std::vector<PairViolation> negative;
  std::vector<PairViolation> above_bound;

  bool empty() const noexcept {
    return triangle.empty() && asymmetric.empty() && diagonal.empty() &&
           negative.empty() && above_bound.empty();
  }
};

// Scans every sampled pair and triple of a dense n x n matrix (row-major).
SemimetricReport check_matrix(std::span<const double> dense, std::size_t n,
                              double tol);

SemimetricReport check_semimetric(const SampledSpace& space, const Semimetric& rho,
                                  double tol = 1e-12);

// Declarative semimetric description, used by configuration files and as
// part of cache keys.
struct SemimetricSpec;

struct ArcSpec {};
struct HammingSpec {};
struct IntervalCutSpec {
  std::vector<double> breakpoints;
};
struct FirstSymbolCutSpec {};
struct ZeroSpec {};
struct WeightedSumSpec {
  std::vector<std::pair<double, SemimetricSpec>> components;
};

struct SemimetricSpec {
  std::variant<ArcSpec, HammingSpec, IntervalCutSpec, FirstSymbolCutSpec, ZeroSpec,
               WeightedSumSpec>
      kind;
};

Semimetric build_semimetric(const SemimetricSpec& spec);
std::string describe(const SemimetricSpec& spec);

// Binary cache of a DistanceMatrix.
//
//   bytes 0..7    magic "SCDMATRX"
//   bytes 8..11   format version, uint32 little-endian (currently 1)
//   bytes 12..15  reserved, zero
//   bytes 16..23  N, uint64 little-endian
//   then          N(N-1)/2 float64 little-endian, strict lower triangle
//                 row-major ((1,0), (2,0), (2,1), ...)
//
// The bound is not stored: it is implied by the semimetric in the cache key.
inline constexpr std::uint32_t kMatrixCacheVersion = 1;

void write_matrix_cache(const std::filesystem::path& path, const DistanceMatrix& m);

// Throws std::runtime_error on bad magic, unknown version or truncation.
DistanceMatrix read_matrix_cache(const std::filesystem::path& path, double bound);

// FNV-1a 64-bit of the text, as 16 lowercase hex digits.
std::string content_digest(std::string_view text);

}  // namespace scalent
