#include "scalent/subadd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace scalent {

namespace {

void require_nonempty(const std::vector<double>& seq, const char* what) {
  if (seq.empty()) throw std::invalid_argument(std::string(what) + ": empty sequence");
}

}  // namespace

Envelope lower_monotone_envelope(const std::vector<double>& phi) {
  require_nonempty(phi, "lower_monotone_envelope");
  const std::size_t n = phi.size();
  Envelope out{std::vector<double>(n), std::vector<bool>(n)};
  // Suffix minimum; argmin tracked as the first index attaining it.
  std::size_t arg = n - 1;
  double best = phi[n - 1];
  for (std::size_t i = n; i-- > 0;) {
    if (phi[i] <= best) {
      best = phi[i];
      arg = i;
    }
    out.values[i] = best;
    out.at_horizon[i] = arg == n - 1 && i != n - 1;
  }
  return out;
}

Envelope theta_hat(const std::vector<double>& phi_hat) {
  require_nonempty(phi_hat, "theta_hat");
  const std::size_t n = phi_hat.size();
  Envelope out{std::vector<double>(n), std::vector<bool>(n)};
  for (std::size_t m = 1; m <= n; ++m) {
    const std::size_t k_max = n / m;
    double best = phi_hat[m - 1];
    std::size_t arg = 1;
    for (std::size_t k = 2; k <= k_max; ++k) {
      const double v = phi_hat[k * m - 1] / static_cast<double>(k);
      if (v > best) {
        best = v;
        arg = k;
      }
    }
    out.values[m - 1] = best;
    out.at_horizon[m - 1] = arg == k_max;
  }
  return out;
}

Envelope theta(const std::vector<double>& theta_hat_values) {
  require_nonempty(theta_hat_values, "theta");
  const std::size_t n = theta_hat_values.size();
  Envelope out{std::vector<double>(n), std::vector<bool>(n)};
  double best = theta_hat_values[n - 1] / static_cast<double>(n);
  std::size_t arg = n;
  for (std::size_t m = n; m >= 1; --m) {
    const double v = theta_hat_values[m - 1] / static_cast<double>(m);
    if (v >= best) {
      best = v;
      arg = m;
    }
    // theta_hat(arg) * m / arg is exact at m = arg; theta >= theta_hat holds
    // in exact arithmetic, so the max only absorbs rounding.
    const double scaled =
        theta_hat_values[arg - 1] * static_cast<double>(m) / static_cast<double>(arg);
    out.values[m - 1] = std::max(scaled, theta_hat_values[m - 1]);
    out.at_horizon[m - 1] = arg == n && m != n;
  }
  // Nondecreasing in exact arithmetic; this pass only removes rounding.
  for (std::size_t m = 1; m < n; ++m) out.values[m] = std::max(out.values[m], out.values[m - 1]);
  return out;
}

std::optional<TripleViolation> check_triple(const SeqTriple& t) {
  const std::size_t n = t.phi.size();
  if (n == 0 || t.eta.size() != n || t.psi.size() != n)
    throw std::invalid_argument("sequence triple: eta, phi, psi must share a nonzero length");
  for (const auto* seq : {&t.eta, &t.phi, &t.psi})
    for (double v : *seq)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("sequence triple: terms must be finite and nonnegative");
  for (std::size_t m = 1; m <= n; ++m)
    for (std::size_t k = 1; k * m <= n; ++k)
      if (t.phi[k * m - 1] > static_cast<double>(k) * t.psi[m - 1])
        return TripleViolation{"multiplicative", m, k};
  double eta_max = 0.0;
  std::size_t eta_arg = 1;
  for (std::size_t m = 1; m <= n; ++m) {
    if (t.eta[m - 1] > eta_max) {
      eta_max = t.eta[m - 1];
      eta_arg = m;
    }
    if (t.phi[m - 1] < eta_max) return TripleViolation{"lower", m, eta_arg};
  }
  return std::nullopt;
}

HullPreconditionError::HullPreconditionError(TripleViolation v)
    : std::invalid_argument(v.condition == "multiplicative"
                                ? "phi(kn) <= k psi(n) fails at n=" + std::to_string(v.n) +
                                      ", k=" + std::to_string(v.k)
                                : "phi(n) >= eta(k) fails at n=" + std::to_string(v.n) +
                                      ", k=" + std::to_string(v.k)),
      violation_(std::move(v)) {}

HullResult subadditive_hull(const SeqTriple& triple) {
  if (const auto v = check_triple(triple)) throw HullPreconditionError(*v);
  HullResult out;
  out.phi_hat = lower_monotone_envelope(triple.phi);
  out.theta_hat = theta_hat(out.phi_hat.values);
  out.theta = theta(out.theta_hat.values);
  const std::size_t n = triple.phi.size();
  for (std::size_t m = 1; m <= n; ++m) {
    const double th = out.theta.values[m - 1];
    const bool horizon = 2 * m > n || out.theta.at_horizon[m - 1] || out.theta_hat.at_horizon[m - 1];
    if (triple.eta[m - 1] > th * (1.0 + kSubadditivityTolerance))
      out.sandwich_violations.push_back({m, "lower", triple.eta[m - 1] - th, horizon});
    if (th > 2.0 * triple.psi[m - 1] * (1.0 + kSubadditivityTolerance))
      out.sandwich_violations.push_back({m, "upper", th - 2.0 * triple.psi[m - 1], horizon});
  }
  std::size_t flagged = 0;
  for (bool b : out.theta.at_horizon) flagged += b;
  out.horizon_note = "extrema truncated at N=" + std::to_string(n) + "; theta decided at the horizon for " +
                     std::to_string(flagged) + " of " + std::to_string(n) +
                     " terms; upper sandwich guaranteed only for n <= N/2";
  return out;
}

bool is_nondecreasing(const std::vector<double>& seq) {
  return std::is_sorted(seq.begin(), seq.end());
}

std::optional<std::pair<std::size_t, std::size_t>> find_subadditivity_violation(
    const std::vector<double>& seq, double relative_tolerance) {
  const std::size_t n = seq.size();
  for (std::size_t a = 1; a <= n; ++a)
    for (std::size_t b = a; a + b <= n; ++b) {
      const double sum = seq[a - 1] + seq[b - 1];
      if (seq[a + b - 1] > sum + relative_tolerance * std::abs(sum)) return std::make_pair(a, b);
    }
  return std::nullopt;
}

ProfileGrid monotone_eps_envelope(const ProfileGrid& theta_grid) {
  theta_grid.validate();
  ProfileGrid out = theta_grid;
  for (std::size_t ni = 0; ni < out.n_grid.size(); ++ni)
    for (std::size_t ei = 1; ei < out.eps_grid.size(); ++ei)
      if (out.bits[ni][ei - 1] > out.bits[ni][ei]) {
        out.bits[ni][ei] = out.bits[ni][ei - 1];
        out.cells[ni][ei] = out.cells[ni][ei - 1];
      }
  return out;
}

LmPzReport verify_lm_pz(const std::vector<DistanceMatrix>& rhos, std::span<const double> weights,
                        double epsilon, std::size_t oracle_limit) {
  if (rhos.empty()) throw std::invalid_argument("verify_lm_pz: need at least one semimetric");
  const std::size_t n = rhos.front().size();
  for (const auto& r : rhos) {
    if (r.size() != n) throw std::invalid_argument("verify_lm_pz: matrices must share a space");
    for (double v : r.lower_triangle())
      if (v > 1.0) throw std::invalid_argument("verify_lm_pz: semimetrics must be bounded by 1");
  }
  DistanceMatrix avg(n, 1.0);
  auto out = avg.lower_triangle();
  for (std::size_t e = 0; e < out.size(); ++e) {
    double sum = 0.0;
    for (const auto& r : rhos) sum += r.lower_triangle()[e];
    out[e] = sum / static_cast<double>(rhos.size());
  }

  const double wide = 2.0 * std::sqrt(epsilon);
  LmPzReport report;
  report.epsilon = epsilon;
  report.count = rhos.size();

  double sum_fine = 0.0;
  double min_wide = std::numeric_limits<double>::infinity();
  for (const auto& r : rhos) {
    const double fine = exact_entropy(r, weights, epsilon, oracle_limit).bits;
    if (fine == 0.0) report.part1_skipped = true;
    sum_fine += fine;
    min_wide = std::min(min_wide, exact_entropy(r, weights, wide, oracle_limit).bits);
  }
  if (!report.part1_skipped)
    report.part1_margin = 2.0 * sum_fine - exact_entropy(avg, weights, wide, oracle_limit).bits;
  report.part2_margin = exact_entropy(avg, weights, epsilon, oracle_limit).bits - min_wide;
  return report;
}

double semimetric_integral(const DistanceMatrix& m, std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 1; i < m.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) total += 2.0 * weights[i] * weights[j] * m(i, j);
  return total;
}

Prop1Report verify_prop1(const SystemSpec& system, const SemimetricSpec& rho_spec, std::size_t k,
                         std::size_t n, double epsilon, std::size_t oracle_limit) {
  if (!is_finite_exact(system))
    throw std::invalid_argument("verify_prop1: requires a finite exact system");
  if (k < 1 || n < 1) throw std::invalid_argument("verify_prop1: k and n must be positive");
  const SampledSpace space = sample_space(system, 0, 0, true);
  const Semimetric rho = build_semimetric(rho_spec);
  if (rho.bound() > 1.0) throw std::invalid_argument("verify_prop1: rho must be bounded by 1");
  const Transformation t = make_transformation(system);

  std::vector<std::size_t> depths{1, k, n, k * n};
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
  const auto matrices = averaged_matrices(space, rho, t, depths);
  auto psi = [&](std::size_t depth, double eps) {
    const auto at = std::find(depths.begin(), depths.end(), depth) - depths.begin();
    return exact_entropy(matrices[static_cast<std::size_t>(at)], space.weights(), eps, oracle_limit).bits;
  };
  const auto& base = matrices.front();  // depth 1: rho itself
  const auto& avg_n = matrices[static_cast<std::size_t>(
      std::find(depths.begin(), depths.end(), n) - depths.begin())];

  Prop1Report report;
  report.k = k;
  report.n = n;
  report.epsilon = epsilon;
  report.part1_skipped = !(epsilon < semimetric_integral(base, space.weights()) / 3.0);
  if (!report.part1_skipped) {
    // T permutes the atoms and keeps their weights, so every shifted copy
    // T^{(i-1)n} T_av^n rho has the entropy of T_av^n rho.
    std::map<Point, std::size_t> index;
    for (std::size_t i = 0; i < space.size(); ++i) index.emplace(space.point(i), i);
    std::vector<std::size_t> perm(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
      Point x = space.point(i);
      for (std::size_t s = 0; s < n; ++s) x = t(x);
      const auto it = index.find(x);
      if (it == index.end()) throw std::logic_error("verify_prop1: T does not permute the atoms");
      perm[i] = it->second;
      if (space.weight(i) != space.weight(it->second))
        throw std::logic_error("verify_prop1: T does not preserve atom weights");
    }
    const double fine = epsilon * epsilon / 4.0;
    const double h_avg = exact_entropy(avg_n, space.weights(), fine, oracle_limit).bits;
    std::vector<std::size_t> shift(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) shift[i] = i;
    for (std::size_t block = 1; block < k; ++block) {
      for (std::size_t i = 0; i < space.size(); ++i) shift[i] = perm[shift[i]];
      DistanceMatrix shifted(space.size(), avg_n.bound());
      for (std::size_t a = 1; a < space.size(); ++a)
        for (std::size_t b = 0; b < a; ++b) shifted.set(a, b, avg_n(shift[a], shift[b]));
      if (exact_entropy(shifted, space.weights(), fine, oracle_limit).bits != h_avg)
        throw std::logic_error("verify_prop1: shifted semimetric changed the entropy");
    }
    if (h_avg == 0.0)
      report.part1_skipped = true;
    else
      report.part1_margin = 2.0 * static_cast<double>(k) * h_avg - psi(k * n, epsilon);
  }
  report.part2_applicable = k <= n;
  if (report.part2_applicable)
    report.part2_margin = psi(n, epsilon) - psi(k, 2.0 * std::sqrt(2.0 * epsilon));
  return report;
}

}  // namespace scalent
