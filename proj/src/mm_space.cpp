#include "scalent/mm_space.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "scalent/parallel.hpp"

namespace scalent {

namespace {

const double& torus_coord(PointView p) {
  const double* v = std::get_if<double>(&p[0]);
  if (v == nullptr) throw RepresentationError("expected a torus coordinate, got a word");
  return *v;
}

const Word& word_coord(PointView p) {
  const Word* w = std::get_if<Word>(&p[0]);
  if (w == nullptr) throw RepresentationError("expected a word, got a torus coordinate");
  return *w;
}

std::string join_signature(const std::vector<CoordKind>& sig) {
  std::string out = "(";
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (i) out += ",";
    out += to_string(sig[i]);
  }
  return out + ")";
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

CoordKind kind_of(const Coordinate& c) noexcept {
  return std::holds_alternative<double>(c) ? CoordKind::torus : CoordKind::word;
}

std::string to_string(CoordKind kind) {
  return kind == CoordKind::torus ? "torus" : "word";
}

SampledSpace::SampledSpace(std::vector<Point> points, std::vector<double> weights,
                           std::string provenance)
    : points_(std::move(points)), weights_(std::move(weights)),
      provenance_(std::move(provenance)) {
  if (points_.empty()) throw std::invalid_argument("sampled space must be non-empty");
  if (weights_.size() != points_.size())
    throw std::invalid_argument("weight count does not match point count");
  for (double w : weights_)
    if (!(w > 0.0) || !std::isfinite(w))
      throw std::invalid_argument("weights must be strictly positive and finite");
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (total != 1.0)
    for (double& w : weights_) w /= total;

  for (const Coordinate& c : points_.front()) signature_.push_back(kind_of(c));
  if (signature_.empty()) throw std::invalid_argument("points must have at least one coordinate");
  for (const Point& p : points_) {
    if (p.size() != signature_.size())
      throw std::invalid_argument("points must share one representation");
    for (std::size_t c = 0; c < p.size(); ++c)
      if (kind_of(p[c]) != signature_[c])
        throw std::invalid_argument("points must share one representation");
  }
}

SampledSpace SampledSpace::uniform(std::vector<Point> points, std::string provenance) {
  const std::size_t n = points.size();
  std::vector<double> weights(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  return SampledSpace(std::move(points), std::move(weights), std::move(provenance));
}

std::string to_string(SemimetricKind kind) {
  switch (kind) {
    case SemimetricKind::arc: return "arc";
    case SemimetricKind::cut: return "cut";
    case SemimetricKind::hamming_word: return "hamming-word";
    case SemimetricKind::weighted_sum: return "weighted-sum";
    case SemimetricKind::averaged: return "averaged";
    case SemimetricKind::shifted: return "shifted";
  }
  return "unknown";
}

Semimetric::Semimetric(SemimetricKind kind, double bound, std::vector<CoordKind> signature,
                       Evaluator evaluator, std::string description)
    : kind_(kind), bound_(bound), signature_(std::move(signature)),
      evaluator_(std::make_shared<const Evaluator>(std::move(evaluator))),
      description_(std::move(description)) {
  if (!(bound >= 0.0) || !std::isfinite(bound))
    throw std::invalid_argument("semimetric bound must be finite and nonnegative");
}

void Semimetric::require_compatible(const std::vector<CoordKind>& point_signature) const {
  if (signature_.empty()) return;
  if (signature_ != point_signature)
    throw RepresentationError("semimetric " + description_ + " expects points " +
                              join_signature(signature_) + ", got " +
                              join_signature(point_signature));
}

Semimetric arc_semimetric() {
  return Semimetric(
      SemimetricKind::arc, 0.5, {CoordKind::torus},
      [](PointView x, PointView y) {
        const double d = std::fabs(torus_coord(x) - torus_coord(y));
        return std::min(d, 1.0 - d);
      },
      "arc");
}

Semimetric hamming_semimetric() {
  return Semimetric(
      SemimetricKind::hamming_word, 1.0, {CoordKind::word},
      [](PointView x, PointView y) {
        const Word& a = word_coord(x);
        const Word& b = word_coord(y);
        if (a.size() != b.size()) throw RepresentationError("hamming: word lengths differ");
        if (a.empty()) return 0.0;
        std::size_t diff = 0;
        for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
        return static_cast<double>(diff) / static_cast<double>(a.size());
      },
      "hamming");
}

Semimetric cut_semimetric(Labeling labeling, std::vector<CoordKind> signature,
                          std::string description) {
  return Semimetric(
      SemimetricKind::cut, 1.0, std::move(signature),
      [labeling = std::move(labeling)](PointView x, PointView y) {
        return labeling(x) == labeling(y) ? 0.0 : 1.0;
      },
      std::move(description));
}

Semimetric interval_cut_semimetric(std::vector<double> breakpoints) {
  if (breakpoints.empty()) throw std::invalid_argument("interval cut needs breakpoints");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!(breakpoints[i] >= 0.0 && breakpoints[i] < 1.0))
      throw std::invalid_argument("interval cut breakpoints must lie in [0, 1)");
    if (i && !(breakpoints[i] > breakpoints[i - 1]))
      throw std::invalid_argument("interval cut breakpoints must be strictly increasing");
  }
  std::string desc = "interval_cut[";
  for (std::size_t i = 0; i < breakpoints.size(); ++i)
    desc += (i ? "," : "") + format_double(breakpoints[i]);
  desc += "]";
  // Cell i is [b_i, b_{i+1}); the last cell wraps around through 0.
  auto label = [b = std::move(breakpoints)](PointView p) -> std::int64_t {
    const double x = torus_coord(p);
    const auto it = std::upper_bound(b.begin(), b.end(), x);
    if (it == b.begin()) return static_cast<std::int64_t>(b.size()) - 1;
    return static_cast<std::int64_t>(it - b.begin()) - 1;
  };
  return cut_semimetric(std::move(label), {CoordKind::torus}, std::move(desc));
}

Semimetric first_symbol_cut_semimetric() {
  return cut_semimetric(
      [](PointView p) -> std::int64_t {
        const Word& w = word_coord(p);
        if (w.empty()) throw RepresentationError("first-symbol cut on an empty word");
        return w.front();
      },
      {CoordKind::word}, "first_symbol_cut");
}

Semimetric zero_semimetric() {
  return cut_semimetric([](PointView) -> std::int64_t { return 0; }, {}, "zero");
}

Semimetric weighted_sum_semimetric(std::vector<WeightedComponent> components) {
  if (components.empty()) throw std::invalid_argument("weighted sum needs components");
  double bound = 0.0;
  std::vector<CoordKind> signature;
  std::string desc = "weighted_sum[";
  for (std::size_t m = 0; m < components.size(); ++m) {
    const auto& [w, rho] = components[m];
    if (!(w > 0.0) || !std::isfinite(w))
      throw std::invalid_argument("weighted sum weights must be positive and finite");
    if (rho.signature().size() > 1)
      throw std::invalid_argument("weighted sum components must act on one coordinate");
    // A shape-agnostic component (zero) still occupies one coordinate; its
    // kind is left to the point.
    signature.push_back(rho.signature().empty() ? CoordKind::torus : rho.signature()[0]);
    bound += w * rho.bound();
    desc += (m ? "," : "") + format_double(w) + "*" + rho.description();
  }
  desc += "]";
  const bool any_free = std::any_of(components.begin(), components.end(),
                                    [](const auto& c) { return c.semimetric.signature().empty(); });
  const std::size_t arity = components.size();
  auto evaluator = [components = std::move(components), arity](PointView x, PointView y) {
    if (x.size() != arity || y.size() != arity)
      throw RepresentationError("weighted sum: point arity does not match component count");
    double sum = 0.0;
    for (std::size_t m = 0; m < arity; ++m)
      sum += components[m].weight * components[m].semimetric(x.subspan(m, 1), y.subspan(m, 1));
    return sum;
  };
  Semimetric out(SemimetricKind::weighted_sum, bound, std::move(signature),
                 std::move(evaluator), std::move(desc));
  if (!any_free) return out;
  // Signature checks only cover arity when some component is shape-agnostic.
  return Semimetric(SemimetricKind::weighted_sum, out.bound(), {},
                    [out, arity](PointView x, PointView y) {
                      if (x.size() != arity || y.size() != arity)
                        throw RepresentationError(
                            "weighted sum: point arity does not match component count");
                      return out(x, y);
                    },
                    out.description());
}

DistanceMatrix::DistanceMatrix(std::size_t n, double bound)
    : n_(n), bound_(bound), lower_(n > 1 ? n * (n - 1) / 2 : 0, 0.0) {}

DistanceMatrix DistanceMatrix::from_dense(const std::vector<std::vector<double>>& rows,
                                          double bound) {
  const std::size_t n = rows.size();
  DistanceMatrix m(n, bound);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw std::invalid_argument("dense matrix must be square");
    if (rows[i][i] != 0.0) throw std::invalid_argument("dense matrix diagonal must be zero");
    for (std::size_t j = 0; j < i; ++j) {
      if (rows[i][j] != rows[j][i]) throw std::invalid_argument("dense matrix must be symmetric");
      m.set(i, j, rows[i][j]);
    }
  }
  return m;
}

void DistanceMatrix::set(std::size_t i, std::size_t j, double value) {
  if (i == j) throw std::invalid_argument("diagonal of a distance matrix is fixed at zero");
  if (!(value >= 0.0)) throw std::invalid_argument("distances must be nonnegative");
  if (i < j) std::swap(i, j);
  lower_[offset(i, j)] = value;
}

DistanceMatrix DistanceMatrix::scaled(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be positive");
  DistanceMatrix out(n_, bound_ * factor);
  for (std::size_t i = 0; i < lower_.size(); ++i) out.lower_[i] = lower_[i] * factor;
  return out;
}

DistanceMatrix eval_matrix(const SampledSpace& space, const Semimetric& rho) {
  rho.require_compatible(space.signature());
  const std::size_t n = space.size();
  DistanceMatrix m(n, rho.bound());
  auto out = m.lower_triangle();
  parallel_for(1, n, [&](std::size_t i) {
    const PointView x = space.point(i);
    for (std::size_t j = 0; j < i; ++j) {
      const double d = rho(x, space.point(j));
      if (!(d >= 0.0)) throw std::domain_error("semimetric returned a negative or NaN value");
      out[DistanceMatrix::offset(i, j)] = d;
    }
  });
  return m;
}

SemimetricReport check_matrix(std::span<const double> dense, std::size_t n, double tol) {
  if (dense.size() != n * n) throw std::invalid_argument("dense matrix size mismatch");
  SemimetricReport report;
  auto at = [&](std::size_t i, std::size_t j) { return dense[i * n + j]; };
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(at(i, i)) > tol) report.diagonal.push_back({i, i, at(i, i)});
    for (std::size_t j = 0; j < n; ++j) {
      if (at(i, j) < -tol) report.negative.push_back({i, j, at(i, j)});
      if (j > i && std::fabs(at(i, j) - at(j, i)) > tol)
        report.asymmetric.push_back({i, j, at(i, j) - at(j, i)});
    }
  }
  // (x, y, z) and (z, y, x) are the same inequality; report x < z only.
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t z = x + 1; z < n; ++z) {
        const double deficit = at(x, z) - at(x, y) - at(y, z);
        if (deficit > tol) report.triangle.push_back({x, y, z, deficit});
      }
  return report;
}

SemimetricReport check_semimetric(const SampledSpace& space, const Semimetric& rho,
                                  double tol) {
  rho.require_compatible(space.signature());
  const std::size_t n = space.size();
  std::vector<double> dense(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dense[i * n + j] = rho(space.point(i), space.point(j));
  SemimetricReport report = check_matrix(dense, n, tol);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (dense[i * n + j] > rho.bound() + tol)
        report.above_bound.push_back({i, j, dense[i * n + j]});
  return report;
}

Semimetric build_semimetric(const SemimetricSpec& spec) {
  return std::visit(
      [](const auto& s) -> Semimetric {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ArcSpec>) {
          return arc_semimetric();
        } else if constexpr (std::is_same_v<T, HammingSpec>) {
          return hamming_semimetric();
        } else if constexpr (std::is_same_v<T, IntervalCutSpec>) {
          return interval_cut_semimetric(s.breakpoints);
        } else if constexpr (std::is_same_v<T, FirstSymbolCutSpec>) {
          return first_symbol_cut_semimetric();
        } else if constexpr (std::is_same_v<T, ZeroSpec>) {
          return zero_semimetric();
        } else {
          std::vector<WeightedComponent> parts;
          for (const auto& [w, sub] : s.components) parts.push_back({w, build_semimetric(sub)});
          return weighted_sum_semimetric(std::move(parts));
        }
      },
      spec.kind);
}

std::string describe(const SemimetricSpec& spec) { return build_semimetric(spec).description(); }

namespace {

constexpr char kMagic[8] = {'S', 'C', 'D', 'M', 'A', 'T', 'R', 'X'};

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("matrix cache: truncated file");
  return value;
}

}  // namespace

void write_matrix_cache(const std::filesystem::path& path, const DistanceMatrix& m) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("matrix cache: cannot write " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(os, kMatrixCacheVersion);
    put_le<std::uint32_t>(os, 0);
    put_le<std::uint64_t>(os, m.size());
    for (double v : m.lower_triangle()) put_le<double>(os, v);
    if (!os) throw std::runtime_error("matrix cache: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

DistanceMatrix read_matrix_cache(const std::filesystem::path& path, double bound) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("matrix cache: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("matrix cache: bad magic in " + path.string());
  const auto version = get_le<std::uint32_t>(is);
  if (version != kMatrixCacheVersion)
    throw std::runtime_error("matrix cache: unsupported version " + std::to_string(version));
  (void)get_le<std::uint32_t>(is);
  const auto n = get_le<std::uint64_t>(is);
  if (n > (std::uint64_t{1} << 20)) throw std::runtime_error("matrix cache: implausible size");
  DistanceMatrix m(static_cast<std::size_t>(n), bound);
  for (double& v : m.lower_triangle()) {
    v = get_le<double>(is);
    if (!(v >= 0.0)) throw std::runtime_error("matrix cache: negative or NaN entry");
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("matrix cache: trailing bytes in " + path.string());
  return m;
}

std::string content_digest(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xF];
  return out;
}

}  // namespace scalent
