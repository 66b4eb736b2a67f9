#include "scalent/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <system_error>

#include <CLI11.hpp>

#include "scalent/parallel.hpp"
#include "scalent/rng.hpp"

namespace scalent::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError((path.empty() ? std::string("config") : path) + ": " + what);
}

std::string child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string element(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

// Object reader that rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  const json* optional(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& required(const std::string& key) {
    const json* v = optional(key);
    if (!v) fail(child(path_, key), "missing required key");
    return *v;
  }

  std::string path(const std::string& key) const { return child(path_, key); }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(child(path_, key), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::uint64_t as_u64(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  fail(path, "expected a nonnegative integer");
}

std::size_t as_size(const json& j, const std::string& path) {
  return static_cast<std::size_t>(as_u64(j, path));
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

const json& as_array(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  return j;
}

std::vector<double> as_doubles(const json& j, const std::string& path) {
  std::vector<double> out;
  for (std::size_t i = 0; i < as_array(j, path).size(); ++i)
    out.push_back(as_double(j[i], element(path, i)));
  return out;
}

Word as_word(const json& j, const std::string& path) {
  Word w;
  for (std::size_t i = 0; i < as_array(j, path).size(); ++i) {
    const auto s = as_u64(j[i], element(path, i));
    if (s > 255) fail(element(path, i), "symbol above 255");
    w.push_back(static_cast<std::uint8_t>(s));
  }
  return w;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

}  // namespace

SystemSpec parse_system(const json& j, const std::string& path) {
  Fields f(j, path);
  const std::string kind = as_string(f.required("kind"), f.path("kind"));
  SystemSpec spec;
  if (kind == "cyclic_rotation") {
    CyclicRotation r;
    r.q = as_u64(f.required("q"), f.path("q"));
    if (const json* p = f.optional("p")) r.p = as_u64(*p, f.path("p"));
    spec.kind = r;
  } else if (kind == "torus_rotation") {
    TorusRotation r;
    if (const json* a = f.optional("alpha")) r.alpha = as_double(*a, f.path("alpha"));
    spec.kind = r;
  } else if (kind == "bernoulli_shift") {
    BernoulliShift b;
    if (const json* a = f.optional("alphabet")) {
      const auto v = as_u64(*a, f.path("alphabet"));
      if (v > 256) fail(f.path("alphabet"), "at most 256 symbols");
      b.alphabet = static_cast<unsigned>(v);
    }
    if (const json* p = f.optional("probabilities"))
      b.probabilities = as_doubles(*p, f.path("probabilities"));
    b.length = as_size(f.required("length"), f.path("length"));
    if (const json* c = f.optional("cyclic")) b.cyclic = as_bool(*c, f.path("cyclic"));
    spec.kind = b;
  } else if (kind == "substitution_shift") {
    SubstitutionShift s;
    const json& rules = as_array(f.required("rules"), f.path("rules"));
    for (std::size_t i = 0; i < rules.size(); ++i)
      s.rules.push_back(as_word(rules[i], element(f.path("rules"), i)));
    s.length = as_size(f.required("length"), f.path("length"));
    if (const json* p = f.optional("prefix_length"))
      s.prefix_length = as_size(*p, f.path("prefix_length"));
    spec.kind = s;
  } else if (kind == "thue_morse") {
    spec = thue_morse(as_size(f.required("length"), f.path("length")));
  } else if (kind == "product") {
    ProductSystem p;
    const json& comps = as_array(f.required("components"), f.path("components"));
    for (std::size_t i = 0; i < comps.size(); ++i)
      p.components.push_back(parse_system(comps[i], element(f.path("components"), i)));
    spec.kind = p;
  } else {
    fail(f.path("kind"),
         "unknown system kind '" + kind +
             "' (cyclic_rotation, torus_rotation, bernoulli_shift, substitution_shift, "
             "thue_morse, product)");
  }
  f.finish();
  try {
    validate(spec);
  } catch (const std::invalid_argument& e) {
    fail(path.empty() ? "system" : path, e.what());
  }
  return spec;
}

SemimetricSpec parse_semimetric(const json& j, const std::string& path) {
  Fields f(j, path);
  const std::string kind = as_string(f.required("kind"), f.path("kind"));
  SemimetricSpec spec;
  if (kind == "arc") {
    spec.kind = ArcSpec{};
  } else if (kind == "hamming") {
    spec.kind = HammingSpec{};
  } else if (kind == "interval_cut") {
    spec.kind = IntervalCutSpec{as_doubles(f.required("breakpoints"), f.path("breakpoints"))};
  } else if (kind == "first_symbol_cut") {
    spec.kind = FirstSymbolCutSpec{};
  } else if (kind == "zero") {
    spec.kind = ZeroSpec{};
  } else if (kind == "weighted_sum") {
    WeightedSumSpec w;
    const json& comps = as_array(f.required("components"), f.path("components"));
    for (std::size_t i = 0; i < comps.size(); ++i) {
      Fields c(comps[i], element(f.path("components"), i));
      const double weight = as_double(c.required("weight"), c.path("weight"));
      w.components.emplace_back(weight, parse_semimetric(c.required("semimetric"), c.path("semimetric")));
      c.finish();
    }
    spec.kind = std::move(w);
  } else {
    fail(f.path("kind"), "unknown semimetric kind '" + kind +
                             "' (arc, hamming, interval_cut, first_symbol_cut, zero, weighted_sum)");
  }
  f.finish();
  try {
    build_semimetric(spec);
  } catch (const std::invalid_argument& e) {
    fail(path.empty() ? "semimetric" : path, e.what());
  }
  return spec;
}

json to_json(const SystemSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CyclicRotation>) {
          return {{"kind", "cyclic_rotation"}, {"q", s.q}, {"p", s.p}};
        } else if constexpr (std::is_same_v<T, TorusRotation>) {
          return {{"kind", "torus_rotation"}, {"alpha", s.alpha}};
        } else if constexpr (std::is_same_v<T, BernoulliShift>) {
          return {{"kind", "bernoulli_shift"},
                  {"alphabet", s.alphabet},
                  {"probabilities", s.probabilities},
                  {"length", s.length},
                  {"cyclic", s.cyclic}};
        } else if constexpr (std::is_same_v<T, SubstitutionShift>) {
          json rules = json::array();
          for (const auto& r : s.rules) rules.push_back(std::vector<unsigned>(r.begin(), r.end()));
          return {{"kind", "substitution_shift"},
                  {"rules", rules},
                  {"length", s.length},
                  {"prefix_length", s.prefix_length}};
        } else {
          json comps = json::array();
          for (const auto& c : s.components) comps.push_back(to_json(c));
          return {{"kind", "product"}, {"components", comps}};
        }
      },
      spec.kind);
}

json to_json(const SemimetricSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ArcSpec>) {
          return {{"kind", "arc"}};
        } else if constexpr (std::is_same_v<T, HammingSpec>) {
          return {{"kind", "hamming"}};
        } else if constexpr (std::is_same_v<T, IntervalCutSpec>) {
          return {{"kind", "interval_cut"}, {"breakpoints", s.breakpoints}};
        } else if constexpr (std::is_same_v<T, FirstSymbolCutSpec>) {
          return {{"kind", "first_symbol_cut"}};
        } else if constexpr (std::is_same_v<T, ZeroSpec>) {
          return {{"kind", "zero"}};
        } else {
          json comps = json::array();
          for (const auto& [w, c] : s.components)
            comps.push_back({{"weight", w}, {"semimetric", to_json(c)}});
          return {{"kind", "weighted_sum"}, {"components", comps}};
        }
      },
      spec.kind);
}

ExperimentConfig parse_config(const json& j) {
  Fields f(j, "");
  ExperimentConfig c;
  c.system = parse_system(f.required("system"), "system");
  c.semimetric = parse_semimetric(f.required("semimetric"), "semimetric");

  const json& ns = as_array(f.required("n_grid"), "n_grid");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const auto n = as_size(ns[i], element("n_grid", i));
    if (n == 0) fail(element("n_grid", i), "must be at least 1");
    if (!c.n_grid.empty() && n <= c.n_grid.back()) fail(element("n_grid", i), "n_grid must be strictly increasing");
    c.n_grid.push_back(n);
  }
  if (c.n_grid.empty()) fail("n_grid", "must not be empty");

  const json& es = as_array(f.required("eps_grid"), "eps_grid");
  for (std::size_t i = 0; i < es.size(); ++i) {
    const double e = as_double(es[i], element("eps_grid", i));
    if (e <= 0.0) fail(element("eps_grid", i), "must be positive");
    if (!c.eps_grid.empty() && e >= c.eps_grid.back()) fail(element("eps_grid", i), "eps_grid must be strictly decreasing");
    c.eps_grid.push_back(e);
  }
  if (c.eps_grid.empty()) fail("eps_grid", "must not be empty");

  if (const json* v = f.optional("enumerate")) c.enumerate = as_bool(*v, "enumerate");
  if (const json* v = f.optional("N")) c.sample_size = as_size(*v, "N");
  if (const json* v = f.optional("seed")) c.seed = as_u64(*v, "seed");
  if (const json* v = f.optional("estimator")) {
    try {
      c.estimator = parse_estimator(as_string(*v, "estimator"));
    } catch (const std::invalid_argument& e) {
      fail("estimator", e.what());
    }
  }
  if (const json* v = f.optional("oracle_limit")) {
    c.oracle_limit = as_size(*v, "oracle_limit");
    if (c.oracle_limit == 0 || c.oracle_limit > kMaxExactPoints)
      fail("oracle_limit", "must be in 1.." + std::to_string(kMaxExactPoints));
  }
  if (const json* v = f.optional("C_max")) {
    c.c_max = as_double(*v, "C_max");
    if (c.c_max < 1.0) fail("C_max", "must be at least 1");
  }
  if (const json* v = f.optional("ratio_cap")) {
    c.ratio_cap = as_double(*v, "ratio_cap");
    if (c.ratio_cap <= 0.0) fail("ratio_cap", "must be positive");
  }
  if (const json* v = f.optional("threads")) c.threads = as_size(*v, "threads");
  if (const json* v = f.optional("cache_dir")) c.cache_dir = fs::path(as_string(*v, "cache_dir"));
  if (const json* v = f.optional("output")) {
    Fields o(*v, "output");
    if (const json* d = o.optional("dir")) c.out_dir = fs::path(as_string(*d, "output.dir"));
    if (const json* n = o.optional("name")) {
      c.name = as_string(*n, "output.name");
      if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos)
        fail("output.name", "must be a plain file stem");
    }
    o.finish();
  }
  f.finish();

  if (c.enumerate) {
    if (!is_finite_exact(c.system)) fail("enumerate", "system is not finite exact");
    if (c.sample_size > *atom_count(c.system))
      fail("N", "exceeds the atom count " + std::to_string(*atom_count(c.system)));
  } else if (c.sample_size == 0) {
    fail("N", "required (positive) unless enumerate is true");
  }
  if (const auto depth = max_orbit_depth(c.system); depth && c.n_grid.back() > *depth)
    fail("n_grid", "largest n exceeds the orbit depth " + std::to_string(*depth) + " of the system");
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(parse_json_text(text, path.string()));
}

ProfileRequest to_request(const ExperimentConfig& c) {
  if (!c.enumerate && !c.seed) throw ConfigError("seed: required when sampling");
  ProfileRequest r;
  r.system = c.system;
  r.semimetric = c.semimetric;
  r.n_grid = c.n_grid;
  r.eps_grid = c.eps_grid;
  r.sample_size = c.sample_size;
  r.seed = c.seed.value_or(0);
  r.estimator = c.estimator;
  r.enumerate = c.enumerate;
  r.oracle_limit = c.oracle_limit;
  return r;
}

json profile_json(const ProfileGrid& g, const ExperimentConfig& c) {
  json prov = {{"system", g.system},
               {"system_spec", to_json(c.system)},
               {"semimetric", g.semimetric},
               {"semimetric_spec", to_json(c.semimetric)},
               {"N", g.sample_size},
               {"seed", g.seed},
               {"enumerate", c.enumerate},
               {"estimator", to_string(g.estimator)},
               {"oracle_limit", c.oracle_limit}};
  return {{"provenance", prov},
          {"n_grid", g.n_grid},
          {"eps_grid", g.eps_grid},
          {"H_bits", g.bits},
          {"k", g.cells}};
}

json stability_json(const StabilityReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"epsilon", p.epsilon},
                     {"delta", p.delta},
                     {"band_by_n", p.band_by_n},
                     {"band", p.band},
                     {"growing_tail", p.growing_tail},
                     {"flagged", p.flagged}});
  return {{"pairs", pairs},
          {"growth_ratio", r.growth_ratio},
          {"growth_divergence", r.growth_divergence},
          {"ratio_cap", r.ratio_cap},
          {"flagged", r.flagged},
          {"caveat", r.caveat}};
}

json comparison_json(const Comparison& c) {
  json witness = json::array();
  for (const auto& w : c.witness)
    witness.push_back({{"epsilon", w.epsilon}, {"delta", w.delta}, {"constant", w.constant}});
  return {{"holds", c.holds},
          {"witness", witness},
          {"max_constant", c.max_constant},
          {"refused_epsilon", c.refused_epsilon ? json(*c.refused_epsilon) : json(nullptr)}};
}

json hull_json(const SeqTriple& t, const HullResult& h) {
  json violations = json::array();
  for (const auto& v : h.sandwich_violations)
    violations.push_back({{"n", v.n},
                          {"side", v.side},
                          {"excess", v.excess},
                          {"horizon_implicated", v.horizon_implicated}});
  return {{"N_max", t.phi.size()},
          {"eta", t.eta},
          {"phi", t.phi},
          {"psi", t.psi},
          {"phi_hat", h.phi_hat.values},
          {"phi_hat_at_horizon", h.phi_hat.at_horizon},
          {"theta_hat", h.theta_hat.values},
          {"theta_hat_at_horizon", h.theta_hat.at_horizon},
          {"theta", h.theta.values},
          {"theta_at_horizon", h.theta.at_horizon},
          {"sandwich_violations", violations},
          {"horizon_note", h.horizon_note}};
}

std::size_t SuiteReport::violations() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.violation; }));
}

std::size_t SuiteReport::skipped() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.skipped; }));
}

json suite_json(const SuiteReport& r) {
  json records = json::array();
  for (const auto& c : r.records)
    records.push_back({{"check", c.check},
                       {"instance", c.instance},
                       {"margin", c.margin},
                       {"skipped", c.skipped},
                       {"boundary_flag", c.boundary_flag},
                       {"violation", c.violation}});
  return {{"suite", r.suite},
          {"seed", r.seed},
          {"budget", r.budget},
          {"instances", r.instances},
          {"violations", r.violations()},
          {"skipped", r.skipped()},
          {"records", records}};
}

SeqTriple random_triple(std::size_t n, std::uint64_t seed, std::uint64_t index) {
  // psi nondecreasing and concave, phi = psi * u with u in [1/2, 1], and
  // eta = v * (running tail minimum of phi) with v in [0, 1].
  const CounterRng rng(seed, 0x4855'4c4c'0000'0000ULL + index);
  SeqTriple t;
  t.psi.resize(n);
  t.phi.resize(n);
  t.eta.resize(n);
  double level = 0.0;
  double step = 1.0 + 4.0 * rng.uniform(0);
  for (std::size_t i = 0; i < n; ++i) {
    level += step;
    if (rng.below(3 * i + 2, 3) == 0) step *= rng.uniform(3 * i + 1);
    t.psi[i] = level;
    t.phi[i] = level * (0.5 + 0.5 * rng.uniform(3 * i + 3));
  }
  const double v = rng.uniform(1'000'000);
  double tail = n ? t.phi[n - 1] : 0.0;
  for (std::size_t i = n; i-- > 0;) {
    tail = std::min(tail, t.phi[i]);
    t.eta[i] = v * tail;
  }
  return t;
}

namespace {

std::string matrices_digest(const std::vector<DistanceMatrix>& ms, std::span<const double> w,
                            double eps) {
  std::string text;
  char buf[64];
  auto put = [&](double v) {
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    text.append(buf, r.ptr);
    text.push_back(',');
  };
  put(eps);
  for (double x : w) put(x);
  for (const auto& m : ms) {
    text.push_back('|');
    for (double x : m.lower_triangle()) put(x);
  }
  return content_digest(text);
}

CheckRecord margin_record(std::string check, std::string instance, double margin, bool skipped) {
  CheckRecord r;
  r.check = std::move(check);
  r.instance = std::move(instance);
  r.margin = margin;
  r.skipped = skipped;
  r.boundary_flag = !skipped && margin == 0.0;
  r.violation = !skipped && margin < 0.0;
  return r;
}

// Random bounded semimetrics on torus samples: doubled arc length, capped
// dilations of the arc metric, and cuts by random interval partitions.
DistanceMatrix random_torus_semimetric(const std::vector<double>& xs, const CounterRng& rng,
                                       std::uint64_t counter) {
  const std::size_t n = xs.size();
  DistanceMatrix m(n, 1.0);
  const auto arc = [](double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, 1.0 - d);
  };
  const auto kind = rng.below(counter, 3);
  if (kind == 2) {
    std::vector<double> cuts(2 + rng.below(counter + 1, 3));
    for (std::size_t c = 0; c < cuts.size(); ++c) cuts[c] = rng.uniform(counter + 2 + c);
    std::sort(cuts.begin(), cuts.end());
    const auto label = [&](double x) {
      // intervals wrap around the circle: the piece before cuts[0] joins the last one
      const auto k = std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin();
      return static_cast<std::size_t>(k) % cuts.size();
    };
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) m.set(i, j, label(xs[i]) == label(xs[j]) ? 0.0 : 1.0);
  } else {
    const double scale = kind == 0 ? 2.0 : 2.0 + 6.0 * rng.uniform(counter + 1);
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) m.set(i, j, std::min(1.0, scale * arc(xs[i], xs[j])));
  }
  return m;
}

SuiteReport lm_pz_suite(std::uint64_t seed, std::size_t budget, std::size_t oracle_limit) {
  SuiteReport rep;
  for (std::size_t i = 0; i < budget; ++i) {
    const CounterRng rng(seed, 0x4c4d'505a'0000'0000ULL + i);
    const std::size_t n = 3 + rng.below(0, 10);
    const std::size_t k = 1 + rng.below(1, 4);
    std::vector<double> xs(n);
    for (std::size_t p = 0; p < n; ++p) xs[p] = rng.uniform(16 + p);
    const std::vector<double> w(n, 1.0 / static_cast<double>(n));
    std::vector<DistanceMatrix> rhos;
    for (std::size_t r = 0; r < k; ++r) rhos.push_back(random_torus_semimetric(xs, rng, 1000 + 16 * r));
    for (double eps : {0.2, 0.1, 0.05}) {
      const auto id = matrices_digest(rhos, w, eps);
      const auto r = verify_lm_pz(rhos, w, eps, oracle_limit);
      rep.records.push_back(margin_record("lm_pz.part1", id, r.part1_margin, r.part1_skipped));
      rep.records.push_back(margin_record("lm_pz.part2", id, r.part2_margin, false));
    }
    ++rep.instances;
  }
  return rep;
}

SuiteReport prop1_suite(std::size_t budget, std::size_t oracle_limit) {
  const std::vector<std::pair<SystemSpec, SemimetricSpec>> systems{
      {{CyclicRotation{5, 2}}, {IntervalCutSpec{{0.0, 0.5}}}},
      {{CyclicRotation{7, 3}}, {IntervalCutSpec{{0.0, 0.5}}}},
      {{BernoulliShift{2, {}, 4, true}}, {FirstSymbolCutSpec{}}}};
  SuiteReport rep;
  for (const auto& [sys, rho] : systems)
    for (std::size_t k : {1, 2, 3})
      for (std::size_t n : {2, 3, 4, 6}) {
        if (k * n > 12) continue;
        for (double eps : {0.1, 0.05}) {
          if (rep.instances == budget) return rep;
          const auto id = content_digest(describe(sys) + "|" + describe(rho) + "|k=" +
                                         std::to_string(k) + "|n=" + std::to_string(n) +
                                         "|eps=" + fmt(eps));
          const auto r = verify_prop1(sys, rho, k, n, eps, oracle_limit);
          rep.records.push_back(margin_record("prop1.part1", id, r.part1_margin, r.part1_skipped));
          rep.records.push_back(margin_record("prop1.part2", id, r.part2_margin, !r.part2_applicable));
          ++rep.instances;
        }
      }
  return rep;
}

SuiteReport lmex_suite(std::size_t budget, std::size_t oracle_limit) {
  const SystemSpec rot{CyclicRotation{4, 1}};
  const SystemSpec ber{BernoulliShift{2, {}, 3, true}};
  const SemimetricSpec cut{IntervalCutSpec{{0.0, 0.5}}};
  const SemimetricSpec first{FirstSymbolCutSpec{}};
  struct Product {
    std::vector<SystemSpec> systems;
    std::vector<SemimetricSpec> rhos;
  };
  const std::vector<Product> products{{{rot, ber}, {cut, first}}, {{ber, rot}, {first, cut}}};
  const std::vector<std::size_t> ns{1, 2, 3, 4};
  const std::vector<double> eps_grid{0.5, 0.25};

  const auto exact = [&](const SystemSpec& s, const SemimetricSpec& r, std::vector<double> grid) {
    ProfileRequest q;
    q.system = s;
    q.semimetric = r;
    q.n_grid = ns;
    q.eps_grid = std::move(grid);
    q.estimator = Estimator::exact;
    q.enumerate = true;
    q.oracle_limit = oracle_limit;
    return compute_profile(q);
  };

  SuiteReport rep;
  for (const auto& p : products) {
    WeightedSumSpec sum;
    for (std::size_t m = 0; m < p.rhos.size(); ++m)
      sum.components.emplace_back(std::ldexp(1.0, -static_cast<int>(m + 1)), p.rhos[m]);
    const SystemSpec product{ProductSystem{p.systems}};
    const SemimetricSpec rho{sum};
    std::vector<double> component_grid;
    for (double e : eps_grid) component_grid.push_back(e / (2.0 * static_cast<double>(product_rank(e))));
    const auto pg = exact(product, rho, eps_grid);
    std::vector<ProfileGrid> comps;
    for (std::size_t m = 0; m < p.systems.size(); ++m)
      comps.push_back(exact(p.systems[m], p.rhos[m], component_grid));
    for (double eps : eps_grid) {
      if (rep.instances == budget) return rep;
      const auto id = content_digest(describe(product) + "|" + describe(rho) + "|eps=" + fmt(eps));
      const auto r = product_bound_check(comps, pg, eps);
      for (const auto& row : r.rows)
        rep.records.push_back(margin_record("lmex.n=" + std::to_string(row.n), id, row.margin, false));
      ++rep.instances;
    }
  }
  return rep;
}

SuiteReport hull_suite(std::uint64_t seed, std::size_t budget) {
  constexpr std::size_t kN = 64;
  SuiteReport rep;
  for (std::size_t i = 0; i < budget; ++i) {
    const auto t = random_triple(kN, seed, i);
    std::string text;
    for (const auto* seq : {&t.eta, &t.phi, &t.psi}) {
      for (double v : *seq) text += fmt(v) + ",";
      text += "|";
    }
    const auto id = content_digest(text);
    ++rep.instances;
    if (const auto v = check_triple(t)) {
      CheckRecord r;
      r.check = "hull.precondition";
      r.instance = id;
      r.violation = true;
      rep.records.push_back(r);
      continue;
    }
    const auto h = subadditive_hull(t);
    const auto& th = h.theta.values;

    double mono = 0.0;
    for (std::size_t m = 1; m < kN; ++m) mono = std::min(mono, th[m] - th[m - 1]);
    rep.records.push_back(margin_record("hull.monotone", id, mono, false));

    double sub = std::numeric_limits<double>::infinity();
    for (std::size_t a = 1; a < kN; ++a)
      for (std::size_t b = a; a + b <= kN; ++b)
        sub = std::min(sub, th[a - 1] + th[b - 1] - th[a + b - 2]);
    auto sr = margin_record("hull.subadditive", id, sub, false);
    sr.violation = find_subadditivity_violation(th).has_value();
    rep.records.push_back(sr);

    double lower = std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    bool upper_violated = false;
    for (std::size_t m = 1; 2 * m <= kN; ++m) {
      lower = std::min(lower, th[m - 1] - t.eta[m - 1]);
      upper = std::min(upper, 2.0 * t.psi[m - 1] - th[m - 1]);
      upper_violated = upper_violated || th[m - 1] > 2.0 * t.psi[m - 1] * (1.0 + kSubadditivityTolerance);
    }
    const bool beyond = std::any_of(h.sandwich_violations.begin(), h.sandwich_violations.end(),
                                    [&](const auto& v) { return 2 * v.n > kN; });
    rep.records.push_back(margin_record("hull.lower", id, lower, false));
    auto ur = margin_record("hull.upper", id, upper, false);
    ur.violation = upper_violated;
    ur.boundary_flag = ur.boundary_flag || beyond;
    rep.records.push_back(ur);
  }
  return rep;
}

}  // namespace

SuiteReport run_suite(const std::string& name, std::uint64_t seed, std::size_t budget,
                      std::size_t oracle_limit) {
  SuiteReport rep;
  if (name == "lm_pz")
    rep = lm_pz_suite(seed, budget, oracle_limit);
  else if (name == "prop1")
    rep = prop1_suite(budget, oracle_limit);
  else if (name == "lmex")
    rep = lmex_suite(budget, oracle_limit);
  else if (name == "hull")
    rep = hull_suite(seed, budget);
  else
    throw ConfigError("suite: unknown suite '" + name + "' (lm_pz, prop1, lmex, hull)");
  rep.suite = name;
  rep.seed = seed;
  rep.budget = budget;
  return rep;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string estimator;
  std::string out;
  bool no_cache = false;
  std::optional<std::size_t> oracle_limit;
  std::optional<std::size_t> threads;
};

ExperimentConfig resolve(const Common& o) {
  auto c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.estimator.empty()) c.estimator = parse_estimator(o.estimator);
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.oracle_limit) {
    if (*o.oracle_limit == 0 || *o.oracle_limit > kMaxExactPoints)
      throw ConfigError("--oracle-limit: must be in 1.." + std::to_string(kMaxExactPoints));
    c.oracle_limit = *o.oracle_limit;
  }
  if (o.threads) c.threads = *o.threads;
  if (o.no_cache)
    c.cache_dir.reset();
  else if (!c.cache_dir)
    c.cache_dir = c.out_dir / "cache";
  set_thread_count(c.threads);
  return c;
}

ProfileGrid run_profile(const ExperimentConfig& c, const SystemSpec& sys, const SemimetricSpec& rho) {
  auto r = to_request(c);
  r.system = sys;
  r.semimetric = rho;
  r.cache_dir = c.cache_dir;
  return compute_profile(r);
}

void write_grid(const ExperimentConfig& c, const std::string& stem, const ProfileGrid& g,
                const SystemSpec& sys, const SemimetricSpec& rho) {
  auto cc = c;
  cc.system = sys;
  cc.semimetric = rho;
  write_atomic(c.out_dir / (stem + ".csv"), profile_to_csv(g));
  write_atomic(c.out_dir / (stem + ".json"), dump(profile_json(g, cc)));
}

int cmd_profile(const Common& o) {
  const auto c = resolve(o);
  const auto g = run_profile(c, c.system, c.semimetric);
  write_grid(c, c.name, g, c.system, c.semimetric);
  std::cout << "profile: " << g.n_grid.size() << " x " << g.eps_grid.size() << " grid written to "
            << (c.out_dir / (c.name + ".csv")).string() << "\n";
  return kOk;
}

int cmd_sample(const Common& o) {
  const auto c = resolve(o);
  const auto r = to_request(c);
  const auto space = sample_space(r.system, r.sample_size, r.seed, r.enumerate);
  std::string csv = "index,weight,point\n";
  json points = json::array();
  for (std::size_t i = 0; i < space.size(); ++i) {
    std::string coords;
    json jc = json::array();
    for (const auto& coord : space.point(i)) {
      if (!coords.empty()) coords += ';';
      if (const double* x = std::get_if<double>(&coord)) {
        coords += fmt(*x);
        jc.push_back(*x);
      } else {
        const auto& w = std::get<Word>(coord);
        std::string text;
        for (std::size_t k = 0; k < w.size(); ++k) text += (k ? "." : "") + std::to_string(w[k]);
        coords += text;
        jc.push_back(std::vector<unsigned>(w.begin(), w.end()));
      }
    }
    csv += std::to_string(i) + "," + fmt(space.weight(i)) + "," + coords + "\n";
    points.push_back({{"weight", space.weight(i)}, {"point", jc}});
  }
  const json doc = {{"provenance",
                     {{"system", describe(c.system)},
                      {"system_spec", to_json(c.system)},
                      {"N", space.size()},
                      {"seed", r.enumerate ? 0 : r.seed},
                      {"enumerate", r.enumerate}}},
                    {"points", points}};
  write_atomic(c.out_dir / (c.name + "_sample.csv"), csv);
  write_atomic(c.out_dir / (c.name + "_sample.json"), dump(doc));
  std::cout << "sample: " << space.size() << " points written to "
            << (c.out_dir / (c.name + "_sample.csv")).string() << "\n";
  return kOk;
}

bool is_power_of_half(double w) {
  int e = 0;
  return w > 0.0 && w < 1.0 && std::frexp(w, &e) == 0.5;
}

int cmd_demo(const Common& o) {
  const auto c = resolve(o);
  std::vector<SystemSpec> systems;
  if (const auto* p = std::get_if<ProductSystem>(&c.system.kind))
    systems = p->components;
  else
    systems = {c.system};
  std::vector<SemimetricSpec> rhos;
  if (const auto* w = std::get_if<WeightedSumSpec>(&c.semimetric.kind)) {
    for (std::size_t m = 0; m < w->components.size(); ++m) {
      if (systems.size() > 1 && !is_power_of_half(w->components[m].first))
        throw ConfigError(element("semimetric.components", m) + ".weight: must be 2^-m");
      rhos.push_back(w->components[m].second);
    }
  } else {
    rhos = {c.semimetric};
  }
  if (rhos.size() != systems.size())
    throw ConfigError("semimetric: demo-unstable needs one weighted component per system factor");

  const auto product = run_profile(c, c.system, c.semimetric);
  write_grid(c, c.name + "_product", product, c.system, c.semimetric);
  const auto product_report = stability_diagnostic(product, c.ratio_cap);
  json components = json::array();
  bool component_flagged = false;
  if (systems.size() > 1) {
    for (std::size_t m = 0; m < systems.size(); ++m) {
      const auto g = run_profile(c, systems[m], rhos[m]);
      const auto stem = c.name + "_component" + std::to_string(m + 1);
      write_grid(c, stem, g, systems[m], rhos[m]);
      const auto rep = stability_diagnostic(g, c.ratio_cap);
      component_flagged = component_flagged || rep.flagged;
      components.push_back({{"grid", stem}, {"stability", stability_json(rep)}});
    }
  }
  const bool demonstrated = product_report.flagged && !component_flagged;
  const json doc = {{"product", {{"grid", c.name + "_product"}, {"stability", stability_json(product_report)}}},
                    {"components", components},
                    {"epsilon_dependence_shown", demonstrated},
                    {"caveat", kStabilityCaveat}};
  write_atomic(c.out_dir / (c.name + "_stability.json"), dump(doc));
  std::cout << "demo-unstable: product " << (product_report.flagged ? "flagged" : "not flagged")
            << " (growth divergence " << fmt(product_report.growth_divergence) << "), components "
            << (component_flagged ? "flagged" : "not flagged") << "\n"
            << "note: " << kStabilityCaveat << "\n";
  return kOk;
}

SeqTriple parse_triple(const json& j, const std::string& origin) {
  Fields f(j, "");
  SeqTriple t;
  t.eta = as_doubles(f.required("eta"), "eta");
  t.phi = as_doubles(f.required("phi"), "phi");
  t.psi = as_doubles(f.required("psi"), "psi");
  f.finish();
  if (t.phi.empty() || t.eta.size() != t.phi.size() || t.psi.size() != t.phi.size())
    throw ConfigError(origin + ": eta, phi and psi must be nonempty and of equal length");
  return t;
}

int cmd_hull(const std::string& input, std::optional<std::size_t> n_max, const std::string& out) {
  std::string text;
  try {
    text = read_file(input);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  auto t = parse_triple(parse_json_text(text, input), input);
  if (n_max) {
    if (*n_max == 0 || *n_max > t.phi.size())
      throw ConfigError("--n-max: must be in 1.." + std::to_string(t.phi.size()));
    t.eta.resize(*n_max);
    t.phi.resize(*n_max);
    t.psi.resize(*n_max);
  }
  HullResult h;
  try {
    h = subadditive_hull(t);
  } catch (const HullPreconditionError& e) {
    const auto& v = e.violation();
    std::cerr << "hull: refused, " << v.condition << " condition fails at n=" << v.n << ", k=" << v.k
              << "\n";
    return kViolation;
  }
  const fs::path dir = out.empty() ? fs::path("out") : fs::path(out);
  std::string csv = "n,eta,phi,psi,phi_hat,theta_hat,theta,theta_at_horizon\n";
  for (std::size_t i = 0; i < t.phi.size(); ++i)
    csv += std::to_string(i + 1) + "," + fmt(t.eta[i]) + "," + fmt(t.phi[i]) + "," + fmt(t.psi[i]) +
           "," + fmt(h.phi_hat.values[i]) + "," + fmt(h.theta_hat.values[i]) + "," +
           fmt(h.theta.values[i]) + "," + (h.theta.at_horizon[i] ? "1" : "0") + "\n";
  write_atomic(dir / "hull.csv", csv);
  write_atomic(dir / "hull.json", dump(hull_json(t, h)));
  std::cout << "hull: N_max=" << t.phi.size() << ", " << h.sandwich_violations.size()
            << " flagged sandwich entries; " << h.horizon_note << "\n";
  return kOk;
}

int cmd_compare(const std::string& left, const std::string& right, double c_max,
                const std::string& out) {
  ProfileGrid l, r;
  try {
    l = profile_from_csv(read_file(left));
    r = profile_from_csv(read_file(right));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("compare: ") + e.what());
  }
  if (c_max < 1.0) throw ConfigError("--c-max: must be at least 1");
  const auto forward = preceq_check(l, r, c_max);
  const auto backward = preceq_check(r, l, c_max);
  const json doc = {{"left", fs::path(left).filename().string()},
                    {"right", fs::path(right).filename().string()},
                    {"C_max", c_max},
                    {"left_preceq_right", comparison_json(forward)},
                    {"right_preceq_left", comparison_json(backward)},
                    {"equivalent", forward.holds && backward.holds}};
  const fs::path dir = out.empty() ? fs::path("out") : fs::path(out);
  write_atomic(dir / "compare.json", dump(doc));
  std::cout << "compare: left <= right " << (forward.holds ? "holds" : "fails") << ", right <= left "
            << (backward.holds ? "holds" : "fails") << "\n";
  return kOk;
}

std::size_t default_budget(const std::string& suite) {
  if (suite == "lm_pz") return 100;
  if (suite == "hull") return 500;
  return std::numeric_limits<std::size_t>::max();  // every listed instance
}

int cmd_verify(const std::string& suite, std::uint64_t seed, std::optional<std::size_t> budget,
               std::optional<std::size_t> oracle_limit, const std::string& out) {
  const std::size_t limit = oracle_limit.value_or(kMaxExactPoints);
  if (limit == 0 || limit > kMaxExactPoints)
    throw ConfigError("--oracle-limit: must be in 1.." + std::to_string(kMaxExactPoints));
  const auto rep = run_suite(suite, seed, budget.value_or(default_budget(suite)), limit);
  auto doc = suite_json(rep);
  if (!budget) doc["budget"] = nullptr;
  const fs::path dir = out.empty() ? fs::path("out") : fs::path(out);
  write_atomic(dir / ("verify_" + suite + ".json"), dump(doc));
  std::cout << "verify " << suite << ": " << rep.instances << " instances, " << rep.records.size()
            << " checks, " << rep.skipped() << " skipped, " << rep.violations() << " violations\n";
  return rep.violations() ? kViolation : kOk;
}

void add_common(CLI::App* app, Common& o) {
  app->add_option("--config", o.config, "experiment config (JSON)")->required();
  app->add_option("--seed", o.seed, "64-bit seed (overrides the config)");
  app->add_option("--estimator", o.estimator, "exact or greedy (overrides the config)")
      ->check(CLI::IsMember({"exact", "greedy"}));
  app->add_option("--out", o.out, "output directory (overrides the config)");
  app->add_flag("--no-cache", o.no_cache, "bypass the averaged-matrix cache");
  app->add_option("--oracle-limit", o.oracle_limit, "exact oracle size limit after collapse");
  app->add_option("--threads", o.threads, "worker threads (0 = hardware concurrency)");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"scaling entropy of averaged semimetrics", "scalent"};
  app.require_subcommand(1);

  Common profile_opts, sample_opts, demo_opts;
  add_common(app.add_subcommand("profile", "compute an entropy profile grid"), profile_opts);
  add_common(app.add_subcommand("sample", "write the sampled (or enumerated) space"), sample_opts);
  add_common(app.add_subcommand("demo-unstable", "epsilon-dependence demo with stability diagnostic"),
             demo_opts);

  std::string hull_input, hull_out;
  std::optional<std::size_t> hull_n;
  auto* hull = app.add_subcommand("hull", "subadditive hull of a sequence triple");
  hull->add_option("--input", hull_input, "JSON file with eta, phi, psi arrays")->required();
  hull->add_option("--n-max", hull_n, "truncate the sequences to N_max terms");
  hull->add_option("--out", hull_out, "output directory");

  std::string left, right, compare_out;
  double c_max = kDefaultCmax;
  auto* compare = app.add_subcommand("compare", "preorder check between two profile CSV files");
  compare->add_option("--left", left, "left profile CSV")->required();
  compare->add_option("--right", right, "right profile CSV")->required();
  compare->add_option("--c-max", c_max, "largest admissible constant");
  compare->add_option("--out", compare_out, "output directory");

  std::string suite, verify_out;
  std::uint64_t verify_seed = 0;
  std::optional<std::size_t> budget, verify_limit;
  auto* verify = app.add_subcommand("verify", "run a randomized inequality suite");
  verify->add_option("--suite", suite, "lm_pz, prop1, lmex or hull")
      ->required()
      ->check(CLI::IsMember(kSuites));
  verify->add_option("--seed", verify_seed, "64-bit seed");
  verify->add_option("--budget", budget, "maximum number of instances");
  verify->add_option("--oracle-limit", verify_limit, "exact oracle size limit after collapse");
  verify->add_option("--out", verify_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (app.got_subcommand("profile")) return cmd_profile(profile_opts);
    if (app.got_subcommand("sample")) return cmd_sample(sample_opts);
    if (app.got_subcommand("demo-unstable")) return cmd_demo(demo_opts);
    if (app.got_subcommand("hull")) return cmd_hull(hull_input, hull_n, hull_out);
    if (app.got_subcommand("compare")) return cmd_compare(left, right, c_max, compare_out);
    return cmd_verify(suite, verify_seed, budget, verify_limit, verify_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const OracleLimitError& e) {
    std::cerr << "config error: " << e.what() << " (raise --oracle-limit or use --estimator greedy)\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace scalent::cli
