#include "scalent/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "scalent/parallel.hpp"
#include "scalent/rng.hpp"

namespace scalent {

namespace {

// Atom-count ceiling for enumeration.
constexpr std::size_t kMaxAtoms = std::size_t{1} << 22;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<double> bernoulli_probabilities(const BernoulliShift& b) {
  if (!b.probabilities.empty()) return b.probabilities;
  return std::vector<double>(b.alphabet, 1.0 / static_cast<double>(b.alphabet));
}

const std::vector<SystemSpec>& product_components(const SystemSpec& spec) {
  return std::get<ProductSystem>(spec.kind).components;
}

bool is_product(const SystemSpec& spec) {
  return std::holds_alternative<ProductSystem>(spec.kind);
}

std::optional<std::size_t> checked_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > kMaxAtoms / a) return std::nullopt;
  return a * b;
}

std::vector<std::uint8_t> substitution_prefix(const SubstitutionShift& s) {
  std::vector<std::uint8_t> word{0};
  while (word.size() < s.prefix_length) {
    std::vector<std::uint8_t> next;
    next.reserve(word.size() * 2);
    for (std::uint8_t c : word) next.insert(next.end(), s.rules[c].begin(), s.rules[c].end());
    word = std::move(next);
  }
  word.resize(s.prefix_length);
  return word;
}

Point drop_first_symbol(const Point& x) {
  Word w = std::get<Word>(x.at(0));
  if (w.size() <= 1) throw std::out_of_range("shift: window exhausted (insufficient orbit depth)");
  w.erase(w.begin());
  return Point{Coordinate{std::move(w)}};
}

// Points of a single (non-product) component, one coordinate each.
std::vector<Point> enumerate_atoms(const SystemSpec& spec, std::vector<double>& weights) {
  std::vector<Point> points;
  weights.clear();
  if (const auto* r = std::get_if<CyclicRotation>(&spec.kind)) {
    for (std::uint64_t j = 0; j < r->q; ++j) {
      points.push_back({Coordinate{static_cast<double>(j) / static_cast<double>(r->q)}});
      weights.push_back(1.0 / static_cast<double>(r->q));
    }
    return points;
  }
  const auto& b = std::get<BernoulliShift>(spec.kind);
  const auto probs = bernoulli_probabilities(b);
  const std::size_t count = *atom_count(spec);
  for (std::size_t idx = 0; idx < count; ++idx) {
    Word w(b.length);
    std::size_t rest = idx;
    double weight = 1.0;
    for (std::size_t pos = b.length; pos-- > 0;) {
      w[pos] = static_cast<std::uint8_t>(rest % b.alphabet);
      rest /= b.alphabet;
    }
    for (std::uint8_t c : w) weight *= probs[c];
    points.push_back({Coordinate{std::move(w)}});
    weights.push_back(weight);
  }
  return points;
}

std::vector<Point> draw_points(const SystemSpec& spec, std::size_t n, std::uint64_t seed) {
  std::vector<Point> points(n);
  if (const auto* r = std::get_if<CyclicRotation>(&spec.kind)) {
    const CounterRng rng(seed, 1);
    for (std::size_t i = 0; i < n; ++i)
      points[i] = {Coordinate{static_cast<double>(rng.below(i, r->q)) / static_cast<double>(r->q)}};
  } else if (std::holds_alternative<TorusRotation>(spec.kind)) {
    const CounterRng rng(seed, 2);
    for (std::size_t i = 0; i < n; ++i) points[i] = {Coordinate{rng.uniform(i)}};
  } else if (const auto* b = std::get_if<BernoulliShift>(&spec.kind)) {
    const CounterRng rng(seed, 3);
    const auto probs = bernoulli_probabilities(*b);
    for (std::size_t i = 0; i < n; ++i) {
      Word w(b->length);
      for (std::size_t pos = 0; pos < b->length; ++pos) {
        const double u = rng.uniform(i * b->length + pos);
        double acc = 0.0;
        std::size_t c = 0;
        for (; c + 1 < probs.size(); ++c) {
          acc += probs[c];
          if (u < acc) break;
        }
        w[pos] = static_cast<std::uint8_t>(c);
      }
      points[i] = {Coordinate{std::move(w)}};
    }
  } else {
    const auto& s = std::get<SubstitutionShift>(spec.kind);
    const CounterRng rng(seed, 4);
    const auto prefix = substitution_prefix(s);
    const std::size_t starts = prefix.size() - s.length + 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t start = rng.below(i, starts);
      points[i] = {Coordinate{Word(prefix.begin() + static_cast<std::ptrdiff_t>(start),
                                   prefix.begin() + static_cast<std::ptrdiff_t>(start + s.length))}};
    }
  }
  return points;
}

}  // namespace

SystemSpec thue_morse(std::size_t length) {
  return {SubstitutionShift{{Word{0, 1}, Word{1, 0}}, length}};
}

void validate(const SystemSpec& spec) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CyclicRotation>) {
          if (s.q < 1) throw std::invalid_argument("cyclic_rotation: q must be positive");
          if (std::gcd(s.p, s.q) != 1)
            throw std::invalid_argument("cyclic_rotation: gcd(p, q) must be 1");
        } else if constexpr (std::is_same_v<T, TorusRotation>) {
          if (!std::isfinite(s.alpha) || s.alpha < 0.0 || s.alpha >= 1.0)
            throw std::invalid_argument("torus_rotation: alpha must lie in [0, 1)");
        } else if constexpr (std::is_same_v<T, BernoulliShift>) {
          if (s.alphabet < 1 || s.alphabet > 256)
            throw std::invalid_argument("bernoulli: alphabet size must be in [1, 256]");
          if (s.length < 1) throw std::invalid_argument("bernoulli: word length must be >= 1");
          if (!s.probabilities.empty()) {
            if (s.probabilities.size() != s.alphabet)
              throw std::invalid_argument("bernoulli: need one probability per symbol");
            double total = 0.0;
            for (double p : s.probabilities) {
              if (!(p > 0.0)) throw std::invalid_argument("bernoulli: probabilities must be positive");
              total += p;
            }
            if (std::fabs(total - 1.0) > 1e-12)
              throw std::invalid_argument("bernoulli: probabilities must sum to 1");
          }
        } else if constexpr (std::is_same_v<T, SubstitutionShift>) {
          if (s.rules.empty() || s.rules.size() > 256)
            throw std::invalid_argument("substitution: need between 1 and 256 rules");
          for (const Word& r : s.rules) {
            if (r.empty()) throw std::invalid_argument("substitution: empty rule");
            for (std::uint8_t c : r)
              if (c >= s.rules.size()) throw std::invalid_argument("substitution: unknown symbol in rule");
          }
          if (s.rules[0].size() < 2 || s.rules[0][0] != 0)
            throw std::invalid_argument("substitution: rule for 0 must start with 0 and grow");
          if (s.length < 1 || s.length > s.prefix_length)
            throw std::invalid_argument("substitution: window length must be in [1, prefix_length]");
        } else {
          if (s.components.size() < 2)
            throw std::invalid_argument("product: arity must be at least 2");
          for (const SystemSpec& c : s.components) {
            if (is_product(c)) throw std::invalid_argument("product: nested products are not supported");
            validate(c);
          }
        }
      },
      spec.kind);
}

std::string describe(const SystemSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CyclicRotation>) {
          return "cyclic_rotation(q=" + std::to_string(s.q) + ",p=" + std::to_string(s.p) + ")";
        } else if constexpr (std::is_same_v<T, TorusRotation>) {
          return "torus_rotation(alpha=" + fmt(s.alpha) + ")";
        } else if constexpr (std::is_same_v<T, BernoulliShift>) {
          std::string out = "bernoulli(a=" + std::to_string(s.alphabet) + ",p=[";
          const auto probs = bernoulli_probabilities(s);
          for (std::size_t i = 0; i < probs.size(); ++i) out += (i ? "," : "") + fmt(probs[i]);
          return out + "],L=" + std::to_string(s.length) + (s.cyclic ? ",cyclic)" : ",one-sided)");
        } else if constexpr (std::is_same_v<T, SubstitutionShift>) {
          std::string out = "substitution(rules=[";
          for (std::size_t i = 0; i < s.rules.size(); ++i) {
            out += i ? "," : "";
            for (std::uint8_t c : s.rules[i]) out += std::to_string(c) + (s.rules.size() > 10 ? "." : "");
          }
          return out + "],L=" + std::to_string(s.length) +
                 ",prefix=" + std::to_string(s.prefix_length) + ")";
        } else {
          std::string out = "product(";
          for (std::size_t i = 0; i < s.components.size(); ++i)
            out += (i ? "," : "") + describe(s.components[i]);
          return out + ")";
        }
      },
      spec.kind);
}

bool is_finite_exact(const SystemSpec& spec) {
  if (std::holds_alternative<CyclicRotation>(spec.kind)) return true;
  if (const auto* b = std::get_if<BernoulliShift>(&spec.kind)) return b->cyclic;
  if (is_product(spec)) {
    const auto& cs = product_components(spec);
    return std::all_of(cs.begin(), cs.end(), [](const SystemSpec& c) { return is_finite_exact(c); });
  }
  return false;
}

std::optional<std::size_t> atom_count(const SystemSpec& spec) {
  if (!is_finite_exact(spec)) return std::nullopt;
  if (const auto* r = std::get_if<CyclicRotation>(&spec.kind)) {
    if (r->q > kMaxAtoms) return std::nullopt;
    return static_cast<std::size_t>(r->q);
  }
  if (const auto* b = std::get_if<BernoulliShift>(&spec.kind)) {
    std::optional<std::size_t> count = 1;
    for (std::size_t i = 0; i < b->length && count; ++i) count = checked_mul(*count, b->alphabet);
    return count;
  }
  std::optional<std::size_t> count = 1;
  for (const SystemSpec& c : product_components(spec)) {
    const auto sub = atom_count(c);
    if (!sub || !count) return std::nullopt;
    count = checked_mul(*count, *sub);
  }
  return count;
}

std::optional<std::size_t> max_orbit_depth(const SystemSpec& spec) {
  if (const auto* b = std::get_if<BernoulliShift>(&spec.kind))
    return b->cyclic ? std::nullopt : std::optional<std::size_t>(b->length);
  if (const auto* s = std::get_if<SubstitutionShift>(&spec.kind)) return s->length;
  if (is_product(spec)) {
    std::optional<std::size_t> depth;
    for (const SystemSpec& c : product_components(spec))
      if (const auto d = max_orbit_depth(c)) depth = depth ? std::min(*depth, *d) : *d;
    return depth;
  }
  return std::nullopt;
}

Transformation make_transformation(const SystemSpec& spec) {
  validate(spec);
  const std::string desc = "T:" + describe(spec);
  if (const auto* r = std::get_if<CyclicRotation>(&spec.kind)) {
    const std::uint64_t q = r->q, p = r->p;
    return {[q, p](const Point& x) {
              const double v = std::get<double>(x.at(0));
              const auto j = static_cast<std::uint64_t>(std::llround(v * static_cast<double>(q))) % q;
              return Point{Coordinate{static_cast<double>((j + p) % q) / static_cast<double>(q)}};
            },
            true, desc};
  }
  if (const auto* t = std::get_if<TorusRotation>(&spec.kind)) {
    const double alpha = t->alpha;
    return {[alpha](const Point& x) {
              double y = std::get<double>(x.at(0)) + alpha;
              if (y >= 1.0) y -= 1.0;
              return Point{Coordinate{y}};
            },
            true, desc};
  }
  if (const auto* b = std::get_if<BernoulliShift>(&spec.kind)) {
    if (!b->cyclic) return {drop_first_symbol, false, desc};
    return {[](const Point& x) {
              Word w = std::get<Word>(x.at(0));
              std::rotate(w.begin(), w.begin() + 1, w.end());
              return Point{Coordinate{std::move(w)}};
            },
            true, desc};
  }
  if (std::holds_alternative<SubstitutionShift>(spec.kind)) return {drop_first_symbol, false, desc};

  std::vector<Transformation> parts;
  bool invertible = true;
  for (const SystemSpec& c : product_components(spec)) {
    parts.push_back(make_transformation(c));
    invertible = invertible && parts.back().invertible;
  }
  return {[parts = std::move(parts)](const Point& x) {
            if (x.size() != parts.size())
              throw RepresentationError("product transformation: point arity mismatch");
            Point y(x.size());
            for (std::size_t c = 0; c < parts.size(); ++c) y[c] = parts[c](Point{x[c]}).at(0);
            return y;
          },
          invertible, desc};
}

SampledSpace sample_space(const SystemSpec& spec, std::size_t n, std::uint64_t seed,
                          bool enumerate) {
  validate(spec);
  if (enumerate) {
    const auto count = atom_count(spec);
    if (!count)
      throw std::invalid_argument("enumerate: " + describe(spec) +
                                  " is not a finite exact system of manageable size");
    if (n > *count)
      throw std::invalid_argument("enumerate: N = " + std::to_string(n) + " exceeds atom count " +
                                  std::to_string(*count));
    const std::string provenance = describe(spec) + ";enumerated";
    if (!is_product(spec)) {
      std::vector<double> weights;
      auto points = enumerate_atoms(spec, weights);
      return SampledSpace(std::move(points), std::move(weights), provenance);
    }
    // Cartesian product, first factor varying slowest.
    std::vector<Point> points{Point{}};
    std::vector<double> weights{1.0};
    for (const SystemSpec& c : product_components(spec)) {
      std::vector<double> cw;
      const auto cp = enumerate_atoms(c, cw);
      std::vector<Point> next;
      std::vector<double> next_w;
      next.reserve(points.size() * cp.size());
      for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = 0; j < cp.size(); ++j) {
          Point p = points[i];
          p.push_back(cp[j][0]);
          next.push_back(std::move(p));
          next_w.push_back(weights[i] * cw[j]);
        }
      points = std::move(next);
      weights = std::move(next_w);
    }
    return SampledSpace(std::move(points), std::move(weights), provenance);
  }

  if (n < 1) throw std::invalid_argument("sample size N must be at least 1");
  const std::string provenance =
      describe(spec) + ";N=" + std::to_string(n) + ";seed=" + std::to_string(seed);
  if (!is_product(spec)) return SampledSpace::uniform(draw_points(spec, n, seed), provenance);

  // Independent coordinates: the product measure stands in for a joining.
  const auto& cs = product_components(spec);
  std::vector<Point> points(n);
  for (std::size_t c = 0; c < cs.size(); ++c) {
    const auto part = draw_points(cs[c], n, CounterRng::mix(seed + 0x51ED270B27A0F3ULL * (c + 1)));
    for (std::size_t i = 0; i < n; ++i) points[i].push_back(part[i][0]);
  }
  return SampledSpace::uniform(std::move(points), provenance);
}

OrbitTable::OrbitTable(const SampledSpace& space, const Transformation& t, std::size_t depth)
    : depth_(depth), rows_(space.size()) {
  if (depth < 1) throw std::invalid_argument("orbit depth must be at least 1");
  parallel_for(0, space.size(), [&](std::size_t i) {
    auto& row = rows_[i];
    row.reserve(depth);
    row.push_back(space.point(i));
    for (std::size_t k = 1; k < depth; ++k) row.push_back(t(row.back()));
  });
}

Semimetric averaged_semimetric(const Semimetric& rho, const Transformation& t, std::size_t n) {
  if (n < 1) throw std::invalid_argument("averaging length n must be at least 1");
  return Semimetric(
      SemimetricKind::averaged, rho.bound(), rho.signature(),
      [rho, t, n](PointView x, PointView y) {
        Point a(x.begin(), x.end());
        Point b(y.begin(), y.end());
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          sum += rho(a, b);
          if (k + 1 < n) {
            a = t(a);
            b = t(b);
          }
        }
        return sum / static_cast<double>(n);
      },
      "avg(n=" + std::to_string(n) + "," + t.description + ")[" + rho.description() + "]");
}

Semimetric shifted_semimetric(const Semimetric& rho, const Transformation& t, std::size_t j) {
  return Semimetric(
      SemimetricKind::shifted, rho.bound(), rho.signature(),
      [rho, t, j](PointView x, PointView y) {
        Point a(x.begin(), x.end());
        Point b(y.begin(), y.end());
        for (std::size_t k = 0; k < j; ++k) {
          a = t(a);
          b = t(b);
        }
        return rho(a, b);
      },
      "shift(j=" + std::to_string(j) + "," + t.description + ")[" + rho.description() + "]");
}

void averaged_matrix_stream(const SampledSpace& space, const Semimetric& rho,
                            const Transformation& t, const std::vector<std::size_t>& n_grid,
                            const std::function<void(std::size_t, const DistanceMatrix&)>& sink,
                            std::optional<std::size_t> max_depth) {
  if (n_grid.empty()) return;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw std::invalid_argument("n grid entries must be positive");
    if (i && n_grid[i] <= n_grid[i - 1])
      throw std::invalid_argument("n grid must be strictly increasing");
  }
  const std::size_t depth = n_grid.back();
  if (max_depth && depth > *max_depth)
    throw std::invalid_argument("insufficient orbit depth: need " + std::to_string(depth) +
                                ", system provides " + std::to_string(*max_depth));
  rho.require_compatible(space.signature());

  const OrbitTable orbits(space, t, depth);
  const std::size_t n = space.size();
  DistanceMatrix running(n, rho.bound());
  auto sum = running.lower_triangle();
  std::size_t next = 0;
  for (std::size_t k = 0; k < depth; ++k) {
    parallel_for(1, n, [&](std::size_t i) {
      const Point& x = orbits.at(i, k);
      double* row = sum.data() + DistanceMatrix::offset(i, 0);
      for (std::size_t j = 0; j < i; ++j) row[j] += rho(x, orbits.at(j, k));
    });
    if (k + 1 == n_grid[next]) {
      DistanceMatrix averaged(n, rho.bound());
      auto out = averaged.lower_triangle();
      const double count = static_cast<double>(k + 1);
      for (std::size_t e = 0; e < out.size(); ++e) out[e] = sum[e] / count;
      sink(k + 1, averaged);
      ++next;
    }
  }
}

std::vector<DistanceMatrix> averaged_matrices(const SampledSpace& space, const Semimetric& rho,
                                              const Transformation& t,
                                              const std::vector<std::size_t>& n_grid,
                                              std::optional<std::size_t> max_depth) {
  std::vector<DistanceMatrix> out;
  averaged_matrix_stream(
      space, rho, t, n_grid, [&](std::size_t, const DistanceMatrix& m) { out.push_back(m); },
      max_depth);
  return out;
}

}  // namespace scalent
