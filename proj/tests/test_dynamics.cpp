#include <cmath>
#include <map>

#include "doctest.h"
#include "scalent/dynamics.hpp"
#include "scalent/parallel.hpp"

using namespace scalent;

namespace {

SystemSpec rotation4() { return {CyclicRotation{4, 1}}; }
SystemSpec bernoulli(std::size_t len, bool cyclic = true) {
  return {BernoulliShift{2, {}, len, cyclic}};
}

double as_real(const Point& p) { return std::get<double>(p[0]); }

}  // namespace

TEST_CASE("sample_space on finite systems") {
  SUBCASE("rotation on 4 atoms") {
    const auto s = sample_space(rotation4(), 0, 0, true);
    REQUIRE(s.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(as_real(s.point(i)) == static_cast<double>(i) / 4.0);
      CHECK(s.weight(i) == 0.25);
    }
  }
  SUBCASE("Bernoulli words of length 3") {
    const auto s = sample_space(bernoulli(3), 0, 0, true);
    REQUIRE(s.size() == 8);
    CHECK(std::get<Word>(s.point(0)[0]) == Word{0, 0, 0});
    CHECK(std::get<Word>(s.point(7)[0]) == Word{1, 1, 1});
    for (std::size_t i = 0; i < 8; ++i) CHECK(s.weight(i) == 0.125);
  }
  SUBCASE("biased Bernoulli weights are products") {
    const auto s = sample_space({BernoulliShift{2, {0.25, 0.75}, 2, true}}, 0, 0, true);
    REQUIRE(s.size() == 4);
    CHECK(s.weight(0) == doctest::Approx(0.0625));
    CHECK(s.weight(3) == doctest::Approx(0.5625));
  }
  SUBCASE("product of rotation and Bernoulli") {
    const auto s = sample_space({ProductSystem{{rotation4(), bernoulli(3)}}}, 0, 0, true);
    REQUIRE(s.size() == 32);
    for (std::size_t i = 0; i < 32; ++i) {
      CHECK(s.weight(i) == 1.0 / 32.0);
      CHECK(s.point(i).size() == 2);
    }
    CHECK(atom_count({ProductSystem{{rotation4(), bernoulli(3)}}}) == 32);
  }
  SUBCASE("too many atoms requested") {
    CHECK_THROWS_AS(sample_space(rotation4(), 5, 0, true), std::invalid_argument);
  }
  SUBCASE("sampling is deterministic in the seed") {
    const auto a = sample_space({TorusRotation{}}, 50, 7);
    const auto b = sample_space({TorusRotation{}}, 50, 7);
    const auto c = sample_space({TorusRotation{}}, 50, 8);
    bool differs = false;
    for (std::size_t i = 0; i < 50; ++i) {
      CHECK(as_real(a.point(i)) == as_real(b.point(i)));
      differs = differs || as_real(a.point(i)) != as_real(c.point(i));
    }
    CHECK(differs);
  }
}

TEST_CASE("system validation") {
  CHECK_THROWS_AS(validate({CyclicRotation{4, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(validate({BernoulliShift{2, {0.5, 0.6}, 3, true}}), std::invalid_argument);
  CHECK_THROWS_AS(validate({ProductSystem{{rotation4()}}}), std::invalid_argument);
  CHECK_NOTHROW(validate(thue_morse(8)));
  CHECK(is_finite_exact(rotation4()));
  CHECK_FALSE(is_finite_exact({TorusRotation{}}));
  CHECK(max_orbit_depth(bernoulli(5, false)) == 5);
}

TEST_CASE("Thue-Morse windows") {
  const auto s = sample_space(thue_morse(4), 40, 3);
  const std::vector<Word> forbidden{{0, 0, 0}, {1, 1, 1}};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& w = std::get<Word>(s.point(i)[0]);
    REQUIRE(w.size() == 4);
    for (std::size_t j = 0; j + 3 <= 4; ++j)
      for (const auto& f : forbidden) CHECK_FALSE(std::equal(f.begin(), f.end(), w.begin() + j));
  }
}

TEST_CASE("averaged and shifted semimetrics on the 4-rotation") {
  const auto space = sample_space(rotation4(), 0, 0, true);
  const auto t = make_transformation(rotation4());
  const auto cut = interval_cut_semimetric({0.0, 0.5});
  const Point x{Coordinate{0.0}}, y{Coordinate{0.25}};
  CHECK(averaged_semimetric(cut, t, 2)(x, y) == 0.5);
  CHECK(shifted_semimetric(cut, t, 1)(x, y) == 1.0);
  CHECK(averaged_semimetric(cut, t, 1)(x, y) == cut(x, y));
  CHECK(averaged_semimetric(cut, t, 4)(x, Point{Coordinate{0.5}}) == 1.0);
}

TEST_CASE("streamed matrices equal the direct averaged semimetric") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SystemSpec sys{TorusRotation{}};
    const auto space = sample_space(sys, 24, seed);
    const auto t = make_transformation(sys);
    const auto rho = interval_cut_semimetric({0.0, 0.5});
    const std::vector<std::size_t> grid{1, 2, 5, 16};
    std::vector<std::size_t> seen;
    averaged_matrix_stream(space, rho, t, grid, [&](std::size_t n, const DistanceMatrix& m) {
      seen.push_back(n);
      const auto direct = eval_matrix(space, averaged_semimetric(rho, t, n));
      CHECK(m == direct);
    });
    CHECK(seen == grid);
  }
}

TEST_CASE("streamed matrices are independent of the thread count") {
  const auto space = sample_space(bernoulli(10), 60, 9);
  const auto t = make_transformation(bernoulli(10));
  const std::vector<std::size_t> grid{1, 3, 8};
  set_thread_count(1);
  const auto one = averaged_matrices(space, hamming_semimetric(), t, grid);
  set_thread_count(4);
  const auto four = averaged_matrices(space, hamming_semimetric(), t, grid);
  set_thread_count(1);
  CHECK(one == four);
}

TEST_CASE("orbit depth beyond a one-sided word is rejected") {
  const auto sys = bernoulli(4, false);
  const auto space = sample_space(sys, 10, 1);
  const auto t = make_transformation(sys);
  CHECK_THROWS_AS(averaged_matrices(space, first_symbol_cut_semimetric(), t, {2, 6},
                                    max_orbit_depth(sys)),
                  std::invalid_argument);
}

TEST_CASE("finite exact systems permute atoms and preserve weights") {
  const std::vector<SystemSpec> systems{rotation4(), {CyclicRotation{9, 4}}, bernoulli(4),
                                        {BernoulliShift{3, {0.2, 0.3, 0.5}, 3, true}},
                                        {ProductSystem{{rotation4(), bernoulli(2)}}}};
  for (const auto& sys : systems) {
    CAPTURE(describe(sys));
    const auto s = sample_space(sys, 0, 0, true);
    const auto t = make_transformation(sys);
    std::map<Point, double> weight;
    for (std::size_t i = 0; i < s.size(); ++i) weight[Point(s.point(i).begin(), s.point(i).end())] = s.weight(i);
    REQUIRE(weight.size() == s.size());
    std::map<Point, double> image;
    for (const auto& [p, w] : weight) {
      const auto q = t(p);
      REQUIRE(weight.count(q) == 1);
      CHECK(weight.at(q) == doctest::Approx(w).epsilon(1e-14));
      image[q] += w;
    }
    CHECK(image.size() == weight.size());
  }
}

TEST_CASE("averaging over kn splits into k shifted averages over n") {
  const auto sys = bernoulli(6);
  const auto space = sample_space(sys, 0, 0, true);
  const auto t = make_transformation(sys);
  const auto rho = first_symbol_cut_semimetric();
  for (std::size_t k = 1; k <= 3; ++k)
    for (std::size_t n = 1; n <= 3; ++n) {
      const auto lhs = eval_matrix(space, averaged_semimetric(rho, t, k * n));
      const auto avg_n = averaged_semimetric(rho, t, n);
      std::vector<DistanceMatrix> parts;
      for (std::size_t i = 0; i < k; ++i)
        parts.push_back(eval_matrix(space, shifted_semimetric(avg_n, t, i * n)));
      for (std::size_t a = 0; a < space.size(); ++a)
        for (std::size_t b = 0; b < a; ++b) {
          double sum = 0.0;
          for (const auto& p : parts) sum += p(a, b);
          CHECK(std::abs(lhs(a, b) - sum / static_cast<double>(k)) <= 1e-12);
        }
    }
}

TEST_CASE("half-length averages bound the full average") {
  // T_av^{2n} rho >= (1/2) T_av^n rho pointwise.
  const SystemSpec sys{TorusRotation{}};
  const auto space = sample_space(sys, 30, 4);
  const auto t = make_transformation(sys);
  const auto rho = arc_semimetric();
  for (std::size_t n : {1, 2, 7}) {
    const auto full = eval_matrix(space, averaged_semimetric(rho, t, 2 * n));
    const auto half = eval_matrix(space, averaged_semimetric(rho, t, n));
    for (std::size_t e = 0; e < full.lower_triangle().size(); ++e)
      CHECK(full.lower_triangle()[e] + 1e-15 >= 0.5 * half.lower_triangle()[e]);
  }
}

TEST_CASE("orbit table columns follow the transformation") {
  const auto sys = rotation4();
  const auto space = sample_space(sys, 0, 0, true);
  const auto t = make_transformation(sys);
  const OrbitTable orbits(space, t, 6);
  CHECK(orbits.depth() == 6);
  for (std::size_t i = 0; i < orbits.size(); ++i) {
    CHECK(as_real(orbits.at(i, 0)) == as_real(space.point(i)));
    for (std::size_t k = 1; k < 6; ++k) CHECK(orbits.at(i, k) == t(orbits.at(i, k - 1)));
    CHECK(orbits.at(i, 4) == orbits.at(i, 0));
  }
}
