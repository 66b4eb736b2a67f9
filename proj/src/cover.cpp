#include "scalent/cover.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace scalent {

namespace {

using Mask = std::uint64_t;

void require_positive_epsilon(double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

void require_weights(const DistanceMatrix& matrix, std::span<const double> weights) {
  if (weights.size() != matrix.size())
    throw std::invalid_argument("weight count does not match matrix size");
}

EntropyValue make_value(Cover cover, Estimator estimator) {
  EntropyValue v;
  v.k = cover.cells;
  v.bits = std::log2(static_cast<double>(cover.cells));
  v.estimator = estimator;
  v.certificate = std::move(cover);
  return v;
}

Mask bit_of(std::size_t i) { return Mask{1} << i; }

std::size_t low_index(Mask m) { return static_cast<std::size_t>(std::countr_zero(m)); }

// Maximum-weight clique by branch and bound with a greedy colouring bound:
// the vertices of one colour class are pairwise incompatible, so a clique
// takes at most the heaviest of each class.
class MaxWeightClique {
 public:
  MaxWeightClique(const std::vector<Mask>& adj, const std::vector<double>& w)
      : adj_(adj), w_(w) {}

  double solve(Mask candidates) {
    best_ = 0.0;
    expand(0.0, candidates);
    return best_;
  }

  double colour_bound(Mask p) const {
    double bound = 0.0;
    while (p) {
      Mask uncoloured = p;
      double heaviest = 0.0;
      while (uncoloured) {
        const std::size_t v = low_index(uncoloured);
        heaviest = std::max(heaviest, w_[v]);
        p &= ~bit_of(v);
        uncoloured &= ~adj_[v] & ~bit_of(v);
      }
      bound += heaviest;
    }
    return bound;
  }


 private:
  void expand(double weight, Mask p) {
    if (p == 0) {
      best_ = std::max(best_, weight);
      return;
    }
    while (p) {
      if (weight + colour_bound(p) <= best_) return;
      std::size_t v = low_index(p);
      for (Mask m = p; m; m &= m - 1)
        if (w_[low_index(m)] > w_[v]) v = low_index(m);
      expand(weight + w_[v], p & adj_[v] & ~bit_of(v));
      p &= ~bit_of(v);
    }
  }

  const std::vector<Mask>& adj_;
  const std::vector<double>& w_;
  double best_ = 0.0;
};

// Shared state of both exact searches: compatibility graph (d < epsilon,
// reflexive) and the weights of the collapsed classes.
struct SearchBase {
  SearchBase(const CollapsedSpace& space, std::span<const double> original_weights, double epsilon)
      : space(space), original_weights(original_weights), epsilon(epsilon),
        m(space.weights.size()) {
    adj.assign(m, 0);
    strict.assign(m, 0);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        if (a == b || space.matrix(a, b) < epsilon) adj[a] |= bit_of(b);
    for (std::size_t a = 0; a < m; ++a) strict[a] = adj[a] & ~bit_of(a);
    all = m == 64 ? ~Mask{0} : bit_of(m) - 1;
    // Weights on a 2^-46 grid make every bound below an exact double sum
    // (at most 64 terms of size <= 1), so ties with epsilon can be pruned.
    bool dyadic = true;
    for (double w : original_weights) {
      const double scaled = std::ldexp(w, 46);
      dyadic = dyadic && scaled == std::floor(scaled);
    }
    slack = dyadic ? 0.0 : 1e-12;
  }

  // Exact error weight of an outlier set, summed over original points in
  // index order (the same order is_valid_cover uses).
  double exact_weight(Mask classes) const {
    double total = 0.0;
    for (std::size_t i = 0; i < space.class_of.size(); ++i)
      if (classes >> space.class_of[i] & 1) total += original_weights[i];
    return total;
  }

  double class_weight(Mask classes) const {
    double total = 0.0;
    for (Mask x = classes; x; x &= x - 1) total += space.weights[low_index(x)];
    return total;
  }

  Cover witness(const std::vector<Mask>& cells) const {
    Cover cover;
    cover.epsilon = epsilon;
    cover.cells = std::max<std::size_t>(1, cells.size());
    std::vector<std::size_t> class_cell(m, 0);
    for (std::size_t c = 0; c < cells.size(); ++c)
      for (Mask x = cells[c]; x; x &= x - 1) class_cell[low_index(x)] = c + 1;
    cover.assignment.resize(space.class_of.size());
    for (std::size_t i = 0; i < space.class_of.size(); ++i)
      cover.assignment[i] = class_cell[space.class_of[i]];
    return cover;
  }

  // Pruning tolerance on rounded class sums; final decisions use
  // exact_weight.
  double slack = 0.0;

  const CollapsedSpace& space;
  std::span<const double> original_weights;
  double epsilon;
  std::size_t m;
  Mask all = 0;
  std::vector<Mask> adj, strict;
};

// Bron-Kerbosch with pivoting; false once more than cap cliques are found.
bool maximal_cliques(const std::vector<Mask>& adj, Mask r, Mask p, Mask x, std::size_t cap,
                     std::vector<Mask>& out) {
  if (p == 0) {
    if (x == 0) out.push_back(r);
    return out.size() <= cap;
  }
  const Mask px = p | x;
  std::size_t pivot = low_index(px);
  int best = -1;
  for (Mask q = px; q; q &= q - 1) {
    const std::size_t u = low_index(q);
    const int c = std::popcount(p & adj[u]);
    if (c > best) {
      best = c;
      pivot = u;
    }
  }
  for (Mask q = p & ~adj[pivot]; q; q &= q - 1) {
    const std::size_t v = low_index(q);
    if (!maximal_cliques(adj, r | bit_of(v), p & adj[v], x & adj[v], cap, out)) return false;
    p &= ~bit_of(v);
    x |= bit_of(v);
  }
  return true;
}

struct MaskVectorHash {
  std::size_t operator()(const std::vector<Mask>& key) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Mask x : key) h = (h ^ x) * 0x100000001b3ULL;
    return static_cast<std::size_t>(h);
  }
};

constexpr std::size_t kMemoCap = std::size_t{1} << 20;
constexpr std::size_t kCliqueCap = 4096;

// Sparse graphs: branch on the heaviest unresolved class, which is either
// an outlier or covered by one of the maximal cliques through it.
class CliqueSearch {
 public:
  CliqueSearch(const SearchBase& base, std::vector<Mask> cliques)
      : b_(base), cliques_(std::move(cliques)) {
    std::sort(cliques_.begin(), cliques_.end());
    by_class_.assign(b_.m, {});
    for (std::size_t c = 0; c < cliques_.size(); ++c)
      for (Mask x = cliques_[c]; x; x &= x - 1) by_class_[low_index(x)].push_back(c);
    order_.resize(b_.m);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t c) {
      return b_.space.weights[a] > b_.space.weights[c];
    });
  }

  bool feasible(std::size_t k) {
    k_ = k;
    chosen_.clear();
    return search(0, 0);
  }

  const std::vector<Mask>& cells() const { return chosen_; }

 private:
  bool bound_allows(Mask unresolved, double outlier_weight, std::size_t cells_left) const {
    std::vector<double> independent;
    Mask blocked = 0;
    for (std::size_t a : order_) {
      if (!(unresolved >> a & 1) || (blocked >> a & 1)) continue;
      independent.push_back(b_.space.weights[a]);
      blocked |= b_.adj[a];
    }
    double forced = outlier_weight;
    for (std::size_t i = cells_left; i < independent.size(); ++i) forced += independent[i];
    if (!(forced < b_.epsilon + b_.slack)) return false;

    // No cell covers more than the heaviest clique footprint.
    std::vector<double> gains;
    for (Mask c : cliques_)
      if (c & unresolved) gains.push_back(b_.class_weight(c & unresolved));
    double reach = 0.0;
    if (gains.size() <= cells_left) {
      for (double g : gains) reach += g;
    } else {
      std::nth_element(gains.begin(), gains.begin() + static_cast<std::ptrdiff_t>(cells_left),
                       gains.end(), std::greater<>());
      for (std::size_t i = 0; i < cells_left; ++i) reach += gains[i];
    }
    return outlier_weight + b_.class_weight(unresolved) - reach < b_.epsilon + b_.slack;
  }

  bool search(Mask covered, Mask outliers) {
    const Mask unresolved = b_.all & ~covered & ~outliers;
    const std::size_t cells_left = k_ - chosen_.size();
    if (b_.exact_weight(b_.all & ~covered) < b_.epsilon) return true;
    if (cells_left == 0 || unresolved == 0) return false;

    const std::vector<Mask> key{covered, outliers};
    if (const auto it = failed_.find(key); it != failed_.end() && it->second >= cells_left)
      return false;
    const double outlier_weight = b_.class_weight(outliers);
    if (!bound_allows(unresolved, outlier_weight, cells_left)) return remember(key, cells_left);

    std::size_t pivot = b_.m;
    for (std::size_t a : order_)
      if (unresolved >> a & 1) {
        pivot = a;
        break;
      }

    // Distinct useful footprints of the cliques through the pivot, with
    // dominated ones dropped.
    std::vector<Mask> options;
    for (std::size_t c : by_class_[pivot]) options.push_back(cliques_[c] & unresolved);
    std::sort(options.begin(), options.end());
    options.erase(std::unique(options.begin(), options.end()), options.end());
    std::vector<Mask> kept;
    for (std::size_t i = 0; i < options.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < options.size() && !dominated; ++j)
        dominated = j != i && (options[i] & ~options[j]) == 0;
      if (!dominated) kept.push_back(options[i]);
    }
    std::stable_sort(kept.begin(), kept.end(), [&](Mask a, Mask c) {
      return b_.class_weight(a) > b_.class_weight(c);
    });
    for (Mask gain : kept) {
      chosen_.push_back(gain);
      if (search(covered | gain, outliers)) return true;
      chosen_.pop_back();
    }

    if (outlier_weight + b_.space.weights[pivot] < b_.epsilon + b_.slack)
      if (search(covered, outliers | bit_of(pivot))) return true;
    return remember(key, cells_left);
  }

  // Failure with c cells left implies failure with fewer.
  bool remember(const std::vector<Mask>& key, std::size_t cells_left) {
    if (failed_.size() >= kMemoCap) failed_.clear();
    auto& best = failed_[key];
    best = std::max(best, cells_left);
    return false;
  }

  const SearchBase& b_;
  std::vector<Mask> cliques_;
  std::vector<std::vector<std::size_t>> by_class_;
  std::vector<std::size_t> order_;
  std::size_t k_ = 1;
  std::vector<Mask> chosen_;
  std::unordered_map<std::vector<Mask>, std::size_t, MaskVectorHash> failed_;
};

// Dense graphs: points are placed one at a time, most constrained first,
// into a compatible open cell, a new cell, or the error cell.
class AssignmentSearch {
 public:
  explicit AssignmentSearch(const SearchBase& base)
      : b_(base), cliques_(base.strict, base.space.weights) {
    max_cell_ = cliques_.solve(b_.all);
  }

  bool feasible(std::size_t k) {
    k_ = k;
    cells_.clear();
    compat_.clear();
    failed_.clear();
    return search(b_.all, 0, 0.0);
  }

  const std::vector<Mask>& cells() const { return cells_; }

 private:
  std::size_t options(std::size_t p) const {
    std::size_t n = 0;
    for (Mask c : compat_) n += c >> p & 1;
    return n;
  }

  bool bound_allows(Mask open, double error) const {
    const std::size_t cells_left = k_ - cells_.size();
    // Points fitting no open cell, pairwise incompatible, need a new cell
    // each or go to the error cell.
    std::vector<std::size_t> stuck;
    for (Mask x = open; x; x &= x - 1)
      if (options(low_index(x)) == 0) stuck.push_back(low_index(x));
    std::stable_sort(stuck.begin(), stuck.end(), [&](std::size_t a, std::size_t c) {
      return b_.space.weights[a] > b_.space.weights[c];
    });
    std::vector<double> independent;
    Mask blocked = 0;
    for (std::size_t a : stuck) {
      if (blocked >> a & 1) continue;
      independent.push_back(b_.space.weights[a]);
      blocked |= b_.adj[a];
    }
    double forced = error;
    for (std::size_t i = cells_left; i < independent.size(); ++i) forced += independent[i];
    if (!(forced < b_.epsilon + b_.slack)) return false;

    // An open cell absorbs at most a clique of its compatible points, a new
    // cell at most a clique of the open points.
    double reach = 0.0;
    for (Mask c : compat_) reach += cliques_.colour_bound(c & open);
    if (cells_left > 0)
      reach += static_cast<double>(cells_left) * std::min(max_cell_, cliques_.colour_bound(open));
    return error + b_.class_weight(open) - reach < b_.epsilon + b_.slack;
  }

  bool search(Mask open, Mask outliers, double error) {
    if (error + b_.class_weight(open) < b_.epsilon + b_.slack &&
        b_.exact_weight(outliers | open) < b_.epsilon)
      return true;
    if (open == 0) return false;
    if (!bound_allows(open, error)) return false;

    std::vector<Mask> key(cells_);
    std::sort(key.begin(), key.end());
    key.push_back(outliers);
    if (failed_.count(key)) return false;

    std::size_t pivot = b_.m, fewest = k_ + 1;
    for (Mask x = open; x; x &= x - 1) {
      const std::size_t p = low_index(x);
      const std::size_t n = options(p);
      if (n < fewest || (n == fewest && b_.space.weights[p] > b_.space.weights[pivot])) {
        pivot = p;
        fewest = n;
      }
    }
    const Mask bit = bit_of(pivot);
    const Mask rest = open & ~bit;

    for (std::size_t c = 0; c < cells_.size(); ++c) {
      if (!(compat_[c] & bit)) continue;
      const Mask saved_cell = cells_[c], saved_compat = compat_[c];
      cells_[c] |= bit;
      compat_[c] &= b_.adj[pivot];
      if (search(rest, outliers, error)) return true;
      cells_[c] = saved_cell;
      compat_[c] = saved_compat;
    }
    if (cells_.size() < k_) {
      cells_.push_back(bit);
      compat_.push_back(b_.strict[pivot]);
      if (search(rest, outliers, error)) return true;
      cells_.pop_back();
      compat_.pop_back();
    }
    if (error + b_.space.weights[pivot] < b_.epsilon + b_.slack)
      if (search(rest, outliers | bit, error + b_.space.weights[pivot])) return true;

    if (failed_.size() >= kMemoCap) failed_.clear();
    failed_.insert(std::move(key));
    return false;
  }

  const SearchBase& b_;
  MaxWeightClique cliques_;
  double max_cell_ = 0.0;
  std::size_t k_ = 1;
  std::vector<Mask> cells_;   // members of each open cell
  std::vector<Mask> compat_;  // points compatible with every member
  std::unordered_set<std::vector<Mask>, MaskVectorHash> failed_;
};

struct GreedyResult {
  Cover cover;
  bool valid;
};

GreedyResult greedy_pass(const DistanceMatrix& matrix, std::span<const double> weights,
                         double epsilon, double radius) {
  const std::size_t n = matrix.size();
  std::vector<char> remaining(n, 1);
  std::vector<double> ball(n, 0.0);
  auto recompute_balls = [&] {
    for (std::size_t c = 0; c < n; ++c) {
      double w = 0.0;
      for (std::size_t x = 0; x < n; ++x)
        if (remaining[x] && matrix(c, x) <= radius) w += weights[x];
      ball[c] = w;
    }
  };
  recompute_balls();

  Cover cover;
  cover.epsilon = epsilon;
  cover.assignment.assign(n, 0);
  std::size_t cells = 0;
  auto remaining_weight = [&] {
    double total = 0.0;
    for (std::size_t x = 0; x < n; ++x)
      if (remaining[x]) total += weights[x];
    return total;
  };

  while (remaining_weight() >= epsilon) {
    std::size_t center = 0;
    for (std::size_t c = 1; c < n; ++c)
      if (ball[c] > ball[center]) center = c;
    std::vector<std::size_t> members;
    for (std::size_t x = 0; x < n; ++x)
      if (remaining[x] && matrix(center, x) <= radius) members.push_back(x);
    if (members.empty()) {
      // Drift in the running ball weights; start over from exact sums.
      recompute_balls();
      continue;
    }
    ++cells;
    for (std::size_t x : members) {
      remaining[x] = 0;
      cover.assignment[x] = cells;
      for (std::size_t y = 0; y < n; ++y)
        if (matrix(x, y) <= radius) ball[y] -= weights[x];
    }
  }
  cover.cells = std::max<std::size_t>(1, cells);
  return {cover, is_valid_cover(cover, matrix, weights, epsilon)};
}

// Moves every member of a cell with diameter >= epsilon into its own cell.
Cover split_offending_cells(Cover cover, const DistanceMatrix& matrix, double epsilon) {
  std::vector<std::vector<std::size_t>> members(cover.cells + 1);
  for (std::size_t i = 0; i < cover.assignment.size(); ++i)
    members[cover.assignment[i]].push_back(i);
  for (std::size_t cell = 1; cell < members.size(); ++cell) {
    const auto& m = members[cell];
    bool bad = false;
    for (std::size_t a = 0; a < m.size() && !bad; ++a)
      for (std::size_t b = 0; b < a && !bad; ++b) bad = !(matrix(m[a], m[b]) < epsilon);
    if (!bad) continue;
    for (std::size_t a = 1; a < m.size(); ++a) cover.assignment[m[a]] = ++cover.cells;
  }
  return cover;
}

}  // namespace

std::string to_string(Estimator e) { return e == Estimator::exact ? "exact" : "greedy"; }

Estimator parse_estimator(const std::string& name) {
  if (name == "exact") return Estimator::exact;
  if (name == "greedy") return Estimator::greedy;
  throw std::invalid_argument("unknown estimator '" + name + "' (expected exact or greedy)");
}

double error_weight(const Cover& cover, std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < cover.assignment.size(); ++i)
    if (cover.assignment[i] == 0) total += weights[i];
  return total;
}

bool is_valid_cover(const Cover& cover, const DistanceMatrix& matrix,
                    std::span<const double> weights, double epsilon) {
  const std::size_t n = matrix.size();
  if (cover.assignment.size() != n || weights.size() != n || cover.cells < 1) return false;
  for (std::size_t cell : cover.assignment)
    if (cell > cover.cells) return false;
  if (!(error_weight(cover, weights) < epsilon)) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (cover.assignment[i] == 0) continue;
    for (std::size_t j = 0; j < i; ++j)
      if (cover.assignment[j] == cover.assignment[i] && !(matrix(i, j) < epsilon)) return false;
  }
  return true;
}

CollapsedSpace collapse_zero_distance(const DistanceMatrix& matrix,
                                      std::span<const double> weights) {
  require_weights(matrix, weights);
  const std::size_t n = matrix.size();
  CollapsedSpace out;
  out.class_of.resize(n);
  std::vector<std::size_t> reps;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cls = reps.size();
    for (std::size_t r = 0; r < reps.size(); ++r)
      if (matrix(i, reps[r]) == 0.0) {
        cls = r;
        break;
      }
    if (cls == reps.size()) {
      reps.push_back(i);
      out.weights.push_back(0.0);
    }
    out.class_of[i] = cls;
    out.weights[cls] += weights[i];
  }
  out.matrix = DistanceMatrix(reps.size(), matrix.bound());
  for (std::size_t a = 1; a < reps.size(); ++a)
    for (std::size_t b = 0; b < a; ++b) out.matrix.set(a, b, matrix(reps[a], reps[b]));
  return out;
}

EntropyValue exact_entropy(const DistanceMatrix& matrix, std::span<const double> weights,
                           double epsilon, std::size_t oracle_limit, ExactSearchKind kind) {
  require_positive_epsilon(epsilon);
  require_weights(matrix, weights);
  if (matrix.size() == 0) throw std::invalid_argument("exact_entropy: empty space");
  const CollapsedSpace collapsed = collapse_zero_distance(matrix, weights);
  const std::size_t m = collapsed.weights.size();
  if (m > std::min(oracle_limit, kMaxExactPoints))
    throw OracleLimitError("exact_entropy: " + std::to_string(m) +
                           " distinct points exceed the oracle limit " +
                           std::to_string(std::min(oracle_limit, kMaxExactPoints)));
  const SearchBase base(collapsed, weights, epsilon);
  std::vector<Mask> cliques;
  const std::size_t cap = kind == ExactSearchKind::clique_branching ? SIZE_MAX : kCliqueCap;
  if (kind != ExactSearchKind::cell_assignment &&
      maximal_cliques(base.strict, 0, base.all, 0, cap, cliques)) {
    CliqueSearch search(base, std::move(cliques));
    for (std::size_t k = 1; k <= m; ++k)
      if (search.feasible(k)) return make_value(base.witness(search.cells()), Estimator::exact);
  } else {
    AssignmentSearch search(base);
    for (std::size_t k = 1; k <= m; ++k)
      if (search.feasible(k)) return make_value(base.witness(search.cells()), Estimator::exact);
  }
  throw std::logic_error("exact_entropy: singleton cells rejected (search bug)");
}

EntropyValue greedy_entropy(const DistanceMatrix& matrix, std::span<const double> weights,
                            double epsilon) {
  require_positive_epsilon(epsilon);
  require_weights(matrix, weights);
  if (matrix.size() == 0) throw std::invalid_argument("greedy_entropy: empty space");
  constexpr double kShrink = 1.0 - 1e-9;
  double radius = epsilon / 2.0 * kShrink;
  GreedyResult pass = greedy_pass(matrix, weights, epsilon, radius);
  for (int retry = 0; retry < 3 && !pass.valid; ++retry) {
    radius *= kShrink;
    pass = greedy_pass(matrix, weights, epsilon, radius);
  }
  if (!pass.valid) pass.cover = split_offending_cells(std::move(pass.cover), matrix, epsilon);
  if (!is_valid_cover(pass.cover, matrix, weights, epsilon))
    throw std::logic_error("greedy_entropy: produced an invalid cover");
  return make_value(std::move(pass.cover), Estimator::greedy);
}

EntropyValue estimate_entropy(const DistanceMatrix& matrix, std::span<const double> weights,
                              double epsilon, Estimator estimator, std::size_t oracle_limit) {
  return estimator == Estimator::exact ? exact_entropy(matrix, weights, epsilon, oracle_limit)
                                       : greedy_entropy(matrix, weights, epsilon);
}

std::vector<EntropyValue> entropy_curve(const DistanceMatrix& matrix,
                                        std::span<const double> weights,
                                        std::span<const double> eps_grid, Estimator estimator,
                                        std::size_t oracle_limit) {
  for (std::size_t i = 1; i < eps_grid.size(); ++i)
    if (!(eps_grid[i] < eps_grid[i - 1]))
      throw std::invalid_argument("epsilon grid must be strictly decreasing");
  std::vector<EntropyValue> out;
  out.reserve(eps_grid.size());
  for (double eps : eps_grid) out.push_back(estimate_entropy(matrix, weights, eps, estimator, oracle_limit));
  return out;
}

}  // namespace scalent
