#pragma once

// Command-line frontend: JSON experiment configs, the verify suites, and
// deterministic CSV/JSON output.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scalent/profile.hpp"
#include "scalent/subadd.hpp"

namespace scalent::cli {

enum ExitCode : int { kOk = 0, kViolation = 1, kConfigError = 2, kRuntimeError = 3 };

// Message starts with the offending field path, e.g. "system.q: ...".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  SystemSpec system;
  SemimetricSpec semimetric;
  std::vector<std::size_t> n_grid;
  std::vector<double> eps_grid;
  std::size_t sample_size = 0;
  std::optional<std::uint64_t> seed;
  Estimator estimator = Estimator::greedy;
  bool enumerate = false;
  std::size_t oracle_limit = kDefaultOracleLimit;
  double c_max = kDefaultCmax;
  double ratio_cap = 2.0;
  std::filesystem::path out_dir = "out";
  std::string name = "profile";
  std::optional<std::filesystem::path> cache_dir;
  std::size_t threads = 1;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

SystemSpec parse_system(const nlohmann::json& j, const std::string& path);
SemimetricSpec parse_semimetric(const nlohmann::json& j, const std::string& path);
nlohmann::json to_json(const SystemSpec& spec);
nlohmann::json to_json(const SemimetricSpec& spec);

// Throws ConfigError when a sampled run has no seed.
ProfileRequest to_request(const ExperimentConfig& config);

nlohmann::json profile_json(const ProfileGrid& grid, const ExperimentConfig& config);
nlohmann::json stability_json(const StabilityReport& report);
nlohmann::json comparison_json(const Comparison& c);
nlohmann::json hull_json(const SeqTriple& triple, const HullResult& hull);

struct CheckRecord {
  std::string check;
  std::string instance;  // content digest of the instance
  double margin = 0.0;   // >= 0 when the inequality holds
  bool skipped = false;
  bool boundary_flag = false;
  bool violation = false;
};

struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::size_t instances = 0;
  std::vector<CheckRecord> records;

  std::size_t violations() const;
  std::size_t skipped() const;
};

inline const std::vector<std::string> kSuites{"lm_pz", "prop1", "lmex", "hull"};

// budget caps the number of instances; 0 gives an empty report.
SuiteReport run_suite(const std::string& name, std::uint64_t seed, std::size_t budget,
                      std::size_t oracle_limit = kMaxExactPoints);
nlohmann::json suite_json(const SuiteReport& report);

// Random sequence triple satisfying the hull preconditions by construction.
SeqTriple random_triple(std::size_t n, std::uint64_t seed, std::uint64_t index);

// Writes to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::string dump(const nlohmann::json& j);

// Full command line; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace scalent::cli
