#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracle.hpp"
#include "scalent/cover.hpp"
#include "scalent/profile.hpp"
#include "scalent/rng.hpp"

using namespace scalent;

namespace {

SystemSpec rotation4() { return {CyclicRotation{4, 1}}; }
SystemSpec bernoulli(std::size_t len) { return {BernoulliShift{2, {}, len, true}}; }

ProfileRequest exact_request(SystemSpec sys, SemimetricSpec rho, std::vector<std::size_t> n_grid,
                             std::vector<double> eps_grid) {
  ProfileRequest r;
  r.system = std::move(sys);
  r.semimetric = std::move(rho);
  r.n_grid = std::move(n_grid);
  r.eps_grid = std::move(eps_grid);
  r.estimator = Estimator::exact;
  r.enumerate = true;
  r.oracle_limit = kMaxExactPoints;
  return r;
}

ProfileGrid single_row(const std::vector<std::size_t>& ns, double (*f)(double)) {
  std::vector<std::vector<double>> bits;
  for (std::size_t n : ns) bits.push_back({f(static_cast<double>(n))});
  return make_profile(ns, {0.1}, bits);
}

std::vector<std::size_t> powers_of_two() {
  std::vector<std::size_t> ns;
  for (std::size_t n = 2; n <= 1024; n *= 2) ns.push_back(n);
  return ns;
}

ProfileGrid random_grid(std::uint64_t seed) {
  const CounterRng rng(seed, 11);
  std::vector<std::vector<double>> bits(4, std::vector<double>(3));
  std::uint64_t c = 0;
  for (auto& row : bits) {
    double v = 0.0;
    for (auto& x : row) x = v += static_cast<double>(rng.below(c++, 4));
  }
  return make_profile({1, 2, 4, 8}, {0.4, 0.2, 0.1}, bits);
}

}  // namespace

TEST_CASE("profile grids validate their shape") {
  CHECK_NOTHROW(make_profile({1, 2}, {0.2, 0.1}, {{0, 1}, {1, 2}}));
  CHECK_THROWS_AS(make_profile({2, 1}, {0.2}, {{0}, {0}}), std::invalid_argument);
  CHECK_THROWS_AS(make_profile({1}, {0.1, 0.2}, {{0, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(make_profile({1}, {0.1}, {{-1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(make_profile({1, 2}, {0.1}, {{0}}), std::invalid_argument);
  CHECK(make_profile({1}, {0.1}, {{std::log2(3.0)}}).cells[0][0] == 3);
}

TEST_CASE("invariant metric gives a profile constant in n") {
  const auto g = compute_profile(
      exact_request(rotation4(), SemimetricSpec{ArcSpec{}}, {1, 2, 3, 4, 8}, {0.3, 0.2, 0.1}));
  for (std::size_t ni = 1; ni < g.n_grid.size(); ++ni)
    for (std::size_t ei = 0; ei < g.eps_grid.size(); ++ei) CHECK(g.at(ni, ei) == g.at(0, ei));
  CHECK(g.at(0, 2) == 2.0);  // four atoms 1/4 apart
}

TEST_CASE("zero semimetric gives a zero profile") {
  const auto g = compute_profile(exact_request(bernoulli(3), SemimetricSpec{ZeroSpec{}}, {1, 2}, {0.5, 0.01}));
  for (const auto& row : g.bits)
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("Bernoulli words of length 8 at n = 4, epsilon = 0.1") {
  auto req = exact_request(bernoulli(8), SemimetricSpec{FirstSymbolCutSpec{}}, {4}, {0.1});
  req.oracle_limit = 16;
  const auto g = compute_profile(req);

  const auto space = sample_space(bernoulli(8), 0, 0, true);
  const auto m = averaged_matrices(space, first_symbol_cut_semimetric(),
                                   make_transformation(bernoulli(8)), {4})[0];
  const auto collapsed = collapse_zero_distance(m, space.weights());
  REQUIRE(collapsed.matrix.size() == 16);
  const std::size_t oracle =
      testing::brute_force_min_cells(collapsed.matrix, collapsed.weights, 0.1);
  CHECK(oracle == 15);
  CHECK(g.cells[0][0] == oracle);
  CHECK(g.at(0, 0) == std::log2(15.0));

  req.oracle_limit = 15;
  CHECK_THROWS_AS(compute_profile(req), OracleLimitError);
}

TEST_CASE("exact profiles are nonincreasing in epsilon") {
  const auto g = compute_profile(
      exact_request(bernoulli(5), SemimetricSpec{FirstSymbolCutSpec{}}, {1, 2, 3, 5}, {0.5, 0.3, 0.2, 0.1, 0.05}));
  for (const auto& row : g.bits)
    for (std::size_t ei = 1; ei < row.size(); ++ei) CHECK(row[ei] >= row[ei - 1]);
}

TEST_CASE("matrix cache reproduces the uncached profile") {
  const auto dir = std::filesystem::temp_directory_path() / "scalent_profile_cache";
  std::filesystem::remove_all(dir);
  ProfileRequest r;
  r.system = {TorusRotation{}};
  r.semimetric = {IntervalCutSpec{{0.0, 0.5}}};
  r.n_grid = {1, 4, 16};
  r.eps_grid = {0.3, 0.1};
  r.sample_size = 64;
  r.seed = 5;
  const auto plain = compute_profile(r);
  r.cache_dir = dir;
  const auto cold = compute_profile(r);
  CHECK(std::distance(std::filesystem::directory_iterator(dir), {}) == 3);
  const auto warm = compute_profile(r);
  CHECK(plain.bits == cold.bits);
  CHECK(plain.bits == warm.bits);
  CHECK(plain.cells == warm.cells);
  std::filesystem::remove_all(dir);
}

TEST_CASE("preceq on finite grids") {
  SUBCASE("a grid against itself") {
    const auto g = random_grid(3);
    const auto c = preceq_check(g, g, 1.0);
    REQUIRE(c.holds);
    for (std::size_t i = 0; i < c.witness.size(); ++i) {
      CHECK(c.witness[i].delta == g.eps_grid[i]);
      CHECK(c.witness[i].constant <= 1.0);
    }
  }
  SUBCASE("logarithmic against linear growth") {
    const auto ns = powers_of_two();
    const auto lg = single_row(ns, [](double n) { return std::ceil(std::log2(n)); });
    const auto lin = single_row(ns, [](double n) { return n; });
    CHECK(preceq_check(lg, lin, 8.0).holds);
    const auto back = preceq_check(lin, lg, 8.0);
    CHECK_FALSE(back.holds);
    CHECK(back.refused_epsilon == 0.1);
    CHECK_FALSE(equivalent(lg, lin, 8.0));
  }
  SUBCASE("constant rescaling is equivalent") {
    const auto g = random_grid(4);
    auto doubled = g.bits;
    for (auto& row : doubled)
      for (auto& v : row) v *= 2.0;
    const auto h = make_profile(g.n_grid, g.eps_grid, doubled);
    CHECK(equivalent(g, h, 2.0));
    CHECK(preceq_check(h, g, 2.0).max_constant <= 2.0);
  }
  SUBCASE("zero convention") {
    const auto zero = make_profile({1, 2}, {0.1}, {{0.0}, {0.0}});
    const auto pos = make_profile({1, 2}, {0.1}, {{0.0}, {1.0}});
    CHECK(preceq_check(zero, zero, 1.0).holds);
    CHECK(preceq_check(zero, pos, 1.0).holds);
    CHECK_FALSE(preceq_check(pos, zero, 16.0).holds);
  }
  SUBCASE("mismatched n grids") {
    CHECK_THROWS_AS(preceq_check(make_profile({1}, {0.1}, {{0}}), make_profile({2}, {0.1}, {{0}}), 1),
                    std::invalid_argument);
  }
}

TEST_CASE("preceq is transitive with the squared cap") {
  const double cap = 4.0;
  std::size_t chains = 0;
  for (std::uint64_t a = 0; a < 12; ++a)
    for (std::uint64_t b = 0; b < 12; ++b)
      for (std::uint64_t c = 0; c < 12; ++c) {
        const auto x = random_grid(a), y = random_grid(100 + b), z = random_grid(200 + c);
        if (preceq_check(x, y, cap).holds && preceq_check(y, z, cap).holds) {
          ++chains;
          CHECK(preceq_check(x, z, cap * cap).holds);
        }
      }
  CHECK(chains > 0);
}

TEST_CASE("stability diagnostic") {
  SUBCASE("constant in epsilon") {
    const auto g = make_profile({1, 2, 4, 8}, {0.3, 0.1}, {{1, 1}, {2, 2}, {3, 3}, {4, 4}});
    const auto r = stability_diagnostic(g, 2.0);
    CHECK_FALSE(r.flagged);
    CHECK(r.caveat == kStabilityCaveat);
  }
  SUBCASE("coarse row flat, fine row linear") {
    const auto g = make_profile({1, 2, 4, 8, 16}, {0.3, 0.1},
                                {{1, 1}, {1, 2}, {1, 4}, {1, 8}, {1, 16}});
    const auto r = stability_diagnostic(g, 2.0);
    CHECK(r.flagged);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].band == 16.0);
    CHECK(r.pairs[0].growing_tail);
    CHECK(r.growth_ratio[0] == 1.0);
    CHECK(r.growth_ratio[1] == 16.0);
    CHECK(r.growth_divergence == 16.0);
  }
  SUBCASE("large but shrinking band") {
    const auto g = make_profile({1, 2, 4}, {0.3, 0.1}, {{1, 9}, {1, 8}, {1, 7}});
    CHECK_FALSE(stability_diagnostic(g, 2.0).flagged);
  }
  SUBCASE("one epsilon row is refused") {
    CHECK_THROWS_AS(stability_diagnostic(make_profile({1}, {0.1}, {{0}}), 2.0),
                    std::invalid_argument);
  }
}

TEST_CASE("product rank") {
  CHECK(product_rank(0.5) == 1);
  CHECK(product_rank(0.25) == 2);
  CHECK(product_rank(0.3) == 2);
  CHECK(product_rank(0.1) == 4);
  CHECK(product_rank(1.0) == 1);
  CHECK(product_rank(2.0) == 1);
}

TEST_CASE("product bound on rotation(4) x Bernoulli words of length 4") {
  const std::vector<std::size_t> ns{1, 2, 3, 4};
  const SystemSpec product{ProductSystem{{rotation4(), bernoulli(4)}}};
  const SemimetricSpec rho{WeightedSumSpec{{{0.5, SemimetricSpec{IntervalCutSpec{{0.0, 0.5}}}},
                                            {0.25, SemimetricSpec{FirstSymbolCutSpec{}}}}}};
  const auto pg = compute_profile(exact_request(product, rho, ns, {0.5, 0.25}));
  const std::vector<ProfileGrid> components{
      compute_profile(exact_request(rotation4(), SemimetricSpec{IntervalCutSpec{{0.0, 0.5}}}, ns, {0.25, 0.0625})),
      compute_profile(exact_request(bernoulli(4), SemimetricSpec{FirstSymbolCutSpec{}}, ns, {0.25, 0.0625}))};

  for (double eps : {0.5, 0.25}) {
    CAPTURE(eps);
    const auto r = product_bound_check(components, pg, eps);
    CHECK(r.holds);
    CHECK(r.rows.size() == ns.size());
    for (const auto& row : r.rows) CHECK(row.margin >= 0.0);
  }
  const auto half = product_bound_check(components, pg, 0.5);
  CHECK(half.rank == 1);
  CHECK(half.component_epsilon == 0.25);
  for (std::size_t i = 0; i < ns.size(); ++i)
    CHECK(half.rows[i].bound_bits == components[0].at(i, 0));
  CHECK(product_bound_check(components, pg, 0.25).component_epsilon == 0.0625);

  SUBCASE("factor bound: each component is dominated by the product") {
    const auto fine = compute_profile(exact_request(product, rho, ns, {0.0625, 0.03125}));
    const auto comp = compute_profile(exact_request(bernoulli(4), SemimetricSpec{FirstSymbolCutSpec{}}, ns, {0.25, 0.125}));
    CHECK(factor_bound_check(comp, fine, 1.0).holds);
    CHECK(factor_bound_check(fine, fine, 1.0).holds);
    const auto zero = compute_profile(exact_request(bernoulli(4), SemimetricSpec{ZeroSpec{}}, ns, {0.25}));
    CHECK(factor_bound_check(zero, fine, 1.0).holds);
  }
  SUBCASE("argument errors") {
    CHECK_THROWS_AS(product_bound_check(components, pg, 0.3), std::invalid_argument);
    auto greedy = pg;
    greedy.estimator = Estimator::greedy;
    CHECK_THROWS_AS(product_bound_check(components, greedy, 0.5), std::invalid_argument);
  }
}

TEST_CASE("single-component product bound") {
  const std::vector<std::size_t> ns{1, 2, 4};
  const auto half_scaled = compute_profile(exact_request(
      bernoulli(4), SemimetricSpec{WeightedSumSpec{{{0.5, SemimetricSpec{FirstSymbolCutSpec{}}}}}}, ns, {0.5}));
  const auto comp = compute_profile(exact_request(bernoulli(4), SemimetricSpec{FirstSymbolCutSpec{}}, ns, {0.25}));
  CHECK(product_bound_check({comp}, half_scaled, 0.5).holds);
}

TEST_CASE("csv round trip") {
  auto g = compute_profile(exact_request(bernoulli(3), SemimetricSpec{FirstSymbolCutSpec{}}, {1, 3}, {0.3, 0.1}));
  const auto text = profile_to_csv(g);
  CHECK(text.rfind("n,epsilon,H_bits,k,estimator,N,seed\n", 0) == 0);
  const auto back = profile_from_csv(text);
  CHECK(back.n_grid == g.n_grid);
  CHECK(back.eps_grid == g.eps_grid);
  CHECK(back.bits == g.bits);
  CHECK(back.cells == g.cells);
  CHECK(back.estimator == g.estimator);
  CHECK_THROWS_AS(profile_from_csv("n,eps\n"), std::invalid_argument);
}
