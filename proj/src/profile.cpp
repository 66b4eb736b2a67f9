#include "scalent/profile.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace scalent {

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::size_t find_epsilon(const std::vector<double>& grid, double eps) {
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] == eps || std::fabs(grid[i] - eps) <= 1e-15 * std::max(1.0, std::fabs(eps)))
      return i;
  return grid.size();
}

void validate_grids(const std::vector<std::size_t>& n_grid, const std::vector<double>& eps_grid) {
  if (n_grid.empty()) throw std::invalid_argument("n grid must be non-empty");
  if (eps_grid.empty()) throw std::invalid_argument("epsilon grid must be non-empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw std::invalid_argument("n grid entries must be positive");
    if (i && n_grid[i] <= n_grid[i - 1])
      throw std::invalid_argument("n grid must be strictly increasing");
  }
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    if (!(eps_grid[i] > 0.0)) throw std::invalid_argument("epsilon grid entries must be positive");
    if (i && !(eps_grid[i] < eps_grid[i - 1]))
      throw std::invalid_argument("epsilon grid must be strictly decreasing");
  }
}

}  // namespace

void ProfileGrid::validate() const {
  validate_grids(n_grid, eps_grid);
  if (bits.size() != n_grid.size() || cells.size() != n_grid.size())
    throw std::invalid_argument("profile: row count does not match n grid");
  for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
    if (bits[ni].size() != eps_grid.size() || cells[ni].size() != eps_grid.size())
      throw std::invalid_argument("profile: column count does not match epsilon grid");
    for (double v : bits[ni])
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("profile: values must be finite and nonnegative");
  }
}

ProfileGrid make_profile(std::vector<std::size_t> n_grid, std::vector<double> eps_grid,
                         std::vector<std::vector<double>> bits, Estimator estimator) {
  ProfileGrid g;
  g.n_grid = std::move(n_grid);
  g.eps_grid = std::move(eps_grid);
  g.bits = std::move(bits);
  g.estimator = estimator;
  g.system = "explicit";
  g.semimetric = "explicit";
  g.cells.resize(g.bits.size());
  for (std::size_t ni = 0; ni < g.bits.size(); ++ni)
    for (double v : g.bits[ni])
      g.cells[ni].push_back(static_cast<std::size_t>(std::llround(std::exp2(v))));
  g.validate();
  return g;
}

std::string matrix_cache_key(const SampledSpace& space, const std::string& semimetric,
                             std::size_t n) {
  return content_digest(space.provenance() + "|" + semimetric + "|n=" + std::to_string(n)) +
         ".dmat";
}

ProfileGrid profile_from_matrices(const std::vector<DistanceMatrix>& matrices,
                                  std::span<const double> weights,
                                  std::vector<std::size_t> n_grid,
                                  std::vector<double> eps_grid, Estimator estimator,
                                  std::size_t oracle_limit) {
  validate_grids(n_grid, eps_grid);
  if (matrices.size() != n_grid.size())
    throw std::invalid_argument("profile: one matrix per n grid entry required");
  ProfileGrid g;
  g.n_grid = std::move(n_grid);
  g.eps_grid = std::move(eps_grid);
  g.estimator = estimator;
  g.bits.assign(g.n_grid.size(), std::vector<double>(g.eps_grid.size()));
  g.cells.assign(g.n_grid.size(), std::vector<std::size_t>(g.eps_grid.size()));
  for (std::size_t ni = 0; ni < matrices.size(); ++ni) {
    const auto curve = entropy_curve(matrices[ni], weights, g.eps_grid, estimator, oracle_limit);
    for (std::size_t ei = 0; ei < curve.size(); ++ei) {
      g.bits[ni][ei] = curve[ei].bits;
      g.cells[ni][ei] = curve[ei].k;
    }
  }
  return g;
}

ProfileGrid compute_profile(const ProfileRequest& request) {
  validate_grids(request.n_grid, request.eps_grid);
  const SampledSpace space =
      sample_space(request.system, request.sample_size, request.seed, request.enumerate);
  // The exact oracle limit is enforced per matrix, after distance-zero
  // points are merged.
  const Semimetric rho = build_semimetric(request.semimetric);
  const Transformation t = make_transformation(request.system);

  std::vector<DistanceMatrix> matrices;
  bool cached = false;
  if (request.cache_dir) {
    std::vector<DistanceMatrix> loaded;
    for (std::size_t n : request.n_grid) {
      const auto path = *request.cache_dir / matrix_cache_key(space, rho.description(), n);
      if (!std::filesystem::exists(path)) break;
      loaded.push_back(read_matrix_cache(path, rho.bound()));
      if (loaded.back().size() != space.size())
        throw std::runtime_error("matrix cache: size mismatch in " + path.string());
    }
    cached = loaded.size() == request.n_grid.size();
    if (cached) matrices = std::move(loaded);
  }
  if (!cached) {
    matrices = averaged_matrices(space, rho, t, request.n_grid, max_orbit_depth(request.system));
    if (request.cache_dir) {
      std::filesystem::create_directories(*request.cache_dir);
      for (std::size_t i = 0; i < matrices.size(); ++i)
        write_matrix_cache(
            *request.cache_dir / matrix_cache_key(space, rho.description(), request.n_grid[i]),
            matrices[i]);
    }
  }

  ProfileGrid g = profile_from_matrices(matrices, space.weights(), request.n_grid,
                                        request.eps_grid, request.estimator, request.oracle_limit);
  g.system = space.provenance();
  g.semimetric = rho.description();
  g.sample_size = space.size();
  g.seed = request.enumerate ? 0 : request.seed;
  return g;
}

Comparison preceq_check(const ProfileGrid& left, const ProfileGrid& right, double c_max) {
  if (left.n_grid != right.n_grid) throw std::invalid_argument("preceq_check: n grids differ");
  if (!(c_max > 0.0)) throw std::invalid_argument("preceq_check: C_max must be positive");
  Comparison out;
  for (std::size_t ei = 0; ei < left.eps_grid.size(); ++ei) {
    bool found = false;
    for (std::size_t di = 0; di < right.eps_grid.size() && !found; ++di) {
      double needed = 0.0;
      bool possible = true;
      for (std::size_t ni = 0; ni < left.n_grid.size() && possible; ++ni) {
        const double l = left.at(ni, ei);
        const double r = right.at(ni, di);
        if (l == 0.0) continue;
        if (r == 0.0) {
          possible = false;
          break;
        }
        needed = std::max(needed, l / r);
      }
      if (possible && needed <= c_max) {
        out.witness.push_back({left.eps_grid[ei], right.eps_grid[di], needed});
        out.max_constant = std::max(out.max_constant, needed);
        found = true;
      }
    }
    if (!found) {
      out.holds = false;
      out.refused_epsilon = left.eps_grid[ei];
      out.witness.clear();
      out.max_constant = 0.0;
      return out;
    }
  }
  out.holds = true;
  return out;
}

bool equivalent(const ProfileGrid& left, const ProfileGrid& right, double c_max) {
  return preceq_check(left, right, c_max).holds && preceq_check(right, left, c_max).holds;
}

StabilityReport stability_diagnostic(const ProfileGrid& grid, double ratio_cap) {
  grid.validate();
  if (grid.eps_grid.size() < 2)
    throw std::invalid_argument("stability_diagnostic: need at least two epsilon rows");
  StabilityReport report;
  report.ratio_cap = ratio_cap;
  const std::size_t nn = grid.n_grid.size();
  const std::size_t ne = grid.eps_grid.size();
  const std::size_t tail = std::min<std::size_t>(3, nn);

  for (std::size_t i = 0; i < ne; ++i)
    for (std::size_t j = i + 1; j < ne; ++j) {
      BandReport b;
      b.epsilon = grid.eps_grid[i];
      b.delta = grid.eps_grid[j];
      for (std::size_t ni = 0; ni < nn; ++ni)
        b.band_by_n.push_back(grid.at(ni, j) / std::max(grid.at(ni, i), 1.0));
      b.band = *std::max_element(b.band_by_n.begin(), b.band_by_n.end());
      bool increasing = tail >= 2;
      for (std::size_t ni = nn - tail + 1; ni < nn; ++ni)
        increasing = increasing && b.band_by_n[ni] > b.band_by_n[ni - 1];
      b.growing_tail = increasing;
      b.flagged = b.band > ratio_cap && b.growing_tail;
      report.flagged = report.flagged || b.flagged;
      report.pairs.push_back(std::move(b));
    }

  for (std::size_t ei = 0; ei < ne; ++ei)
    report.growth_ratio.push_back(std::max(grid.at(nn - 1, ei), 1.0) /
                                  std::max(grid.at(0, ei), 1.0));
  report.growth_divergence = report.growth_ratio.back() / report.growth_ratio.front();
  return report;
}

std::size_t product_rank(double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("product_rank: epsilon must be positive");
  const double r = std::ceil(-std::log2(epsilon));
  return r < 1.0 ? 1 : static_cast<std::size_t>(r);
}

ProductBoundReport product_bound_check(const std::vector<ProfileGrid>& components,
                                       const ProfileGrid& product, double epsilon) {
  if (product.estimator != Estimator::exact)
    throw std::invalid_argument("product_bound_check: product grid must use the exact estimator");
  ProductBoundReport report;
  report.epsilon = epsilon;
  report.rank = product_rank(epsilon);
  report.component_epsilon = epsilon / (2.0 * static_cast<double>(report.rank));
  const std::size_t pe = find_epsilon(product.eps_grid, epsilon);
  if (pe == product.eps_grid.size())
    throw std::invalid_argument("product_bound_check: epsilon missing from the product grid");
  const std::size_t used = std::min(report.rank, components.size());
  std::vector<std::size_t> ce(used);
  for (std::size_t m = 0; m < used; ++m) {
    const ProfileGrid& c = components[m];
    if (c.estimator != Estimator::exact)
      throw std::invalid_argument("product_bound_check: component grids must use the exact estimator");
    if (c.n_grid != product.n_grid)
      throw std::invalid_argument("product_bound_check: misaligned n grids");
    ce[m] = find_epsilon(c.eps_grid, report.component_epsilon);
    if (ce[m] == c.eps_grid.size())
      throw std::invalid_argument("product_bound_check: component " + std::to_string(m + 1) +
                                  " lacks epsilon " + shortest(report.component_epsilon));
  }
  for (std::size_t ni = 0; ni < product.n_grid.size(); ++ni) {
    ProductBoundRow row;
    row.n = product.n_grid[ni];
    row.product_bits = product.at(ni, pe);
    row.bound_bits = 0.0;
    for (std::size_t m = 0; m < used; ++m) row.bound_bits += components[m].at(ni, ce[m]);
    row.margin = row.bound_bits - row.product_bits;
    report.holds = report.holds && row.margin >= 0.0;
    report.rows.push_back(row);
  }
  return report;
}

FactorBoundReport factor_bound_check(const ProfileGrid& factor, const ProfileGrid& system,
                                     double c_max) {
  FactorBoundReport r;
  r.comparison = preceq_check(factor, system, c_max);
  r.holds = r.comparison.holds;
  return r;
}

std::string profile_to_csv(const ProfileGrid& grid) {
  grid.validate();
  std::string out = "n,epsilon,H_bits,k,estimator,N,seed\n";
  for (std::size_t ni = 0; ni < grid.n_grid.size(); ++ni)
    for (std::size_t ei = 0; ei < grid.eps_grid.size(); ++ei) {
      out += std::to_string(grid.n_grid[ni]) + "," + shortest(grid.eps_grid[ei]) + "," +
             shortest(grid.bits[ni][ei]) + "," + std::to_string(grid.cells[ni][ei]) + "," +
             to_string(grid.estimator) + "," + std::to_string(grid.sample_size) + "," +
             std::to_string(grid.seed) + "\n";
    }
  return out;
}

ProfileGrid profile_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "n,epsilon,H_bits,k,estimator,N,seed")
    throw std::invalid_argument("profile csv: unexpected header");
  struct Row {
    std::size_t n;
    double eps, bits;
    std::size_t k;
  };
  std::vector<Row> rows;
  ProfileGrid g;
  bool first = true;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7)
      throw std::invalid_argument("profile csv: line " + std::to_string(line_no) + " needs 7 fields");
    try {
      rows.push_back({std::stoull(f[0]), std::stod(f[1]), std::stod(f[2]), std::stoull(f[3])});
      const Estimator e = parse_estimator(f[4]);
      const std::size_t n = std::stoull(f[5]);
      const std::uint64_t seed = std::stoull(f[6]);
      if (first) {
        g.estimator = e;
        g.sample_size = n;
        g.seed = seed;
        first = false;
      } else if (e != g.estimator || n != g.sample_size || seed != g.seed) {
        throw std::invalid_argument("inconsistent provenance columns");
      }
    } catch (const std::exception& ex) {
      throw std::invalid_argument("profile csv: line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  for (const Row& r : rows) {
    if (std::find(g.n_grid.begin(), g.n_grid.end(), r.n) == g.n_grid.end()) g.n_grid.push_back(r.n);
    if (find_epsilon(g.eps_grid, r.eps) == g.eps_grid.size()) g.eps_grid.push_back(r.eps);
  }
  if (rows.size() != g.n_grid.size() * g.eps_grid.size())
    throw std::invalid_argument("profile csv: rows do not form a full grid");
  g.bits.assign(g.n_grid.size(), std::vector<double>(g.eps_grid.size()));
  g.cells.assign(g.n_grid.size(), std::vector<std::size_t>(g.eps_grid.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t ni = i / g.eps_grid.size(), ei = i % g.eps_grid.size();
    if (rows[i].n != g.n_grid[ni] || find_epsilon(g.eps_grid, rows[i].eps) != ei)
      throw std::invalid_argument("profile csv: rows must be in n-major order");
    g.bits[ni][ei] = rows[i].bits;
    g.cells[ni][ei] = rows[i].k;
  }
  g.system = "csv";
  g.semimetric = "csv";
  g.validate();
  return g;
}

}  // namespace scalent
