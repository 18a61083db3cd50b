#pragma once

// Synthetic on-disk inputs for end-to-end runs: one nearby catalog split into
// three components and two high-redshift compilations covering five bins.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include <nlohmann/json.hpp>

namespace fixture {

namespace fs = std::filesystem;

inline fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("xcorr-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline void write_nearby(const fs::path& path, std::size_t per_component, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> m(10.6, 0.4), lr(0.0, 0.3);
  std::ofstream out(path);
  out.precision(10);
  out << "name,logM,Re_kpc,component\n";
  const char* comps[] = {"inner", "intermediate", "outer"};
  const double scale[] = {0.6, 2.0, 6.0};
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per_component; ++i) {
      out << "G" << i << ',' << m(gen) << ',' << scale[c] * std::exp(lr(gen)) << ',' << comps[c] << '\n';
    }
  }
}

inline void write_highz(const fs::path& path, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> z(0.5, 2.7), m(8.5, 11.5), lr(-1.0, 1.5);
  std::ofstream out(path);
  out.precision(10);
  out << "z\tlogM\tRe\tref\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << z(gen) << '\t' << m(gen) << '\t' << std::exp(lr(gen)) << "\tref" << (i % 3) << '\n';
  }
}

/// Writes the inputs and returns a configuration with 3 components x 5 bins.
inline nlohmann::json make_inputs(const fs::path& dir, std::size_t bootstrap_reps = 8) {
  write_nearby(dir / "nearby.csv", 40, 1);
  write_highz(dir / "survey_a.tsv", 180, 2);
  write_highz(dir / "survey_b.tsv", 150, 3);
  nlohmann::json cats = nlohmann::json::array();
  for (const char* comp : {"inner", "intermediate", "outer"}) {
    cats.push_back({{"label", comp},
                    {"path", "nearby.csv"},
                    {"role", "component"},
                    {"component", comp},
                    {"columns", {{"mass", "logM"}, {"size", "Re_kpc"}, {"source", "name"}, {"component", "component"}}}});
  }
  for (const char* s : {"survey_a", "survey_b"}) {
    cats.push_back({{"label", s},
                    {"path", std::string(s) + ".tsv"},
                    {"role", "redshift"},
                    {"columns", {{"mass", "logM"}, {"size", "Re"}, {"redshift", "z"}, {"source", "ref"}}}});
  }
  return {{"schema_version", 1},
          {"seed", 20240501},
          {"catalogs", cats},
          {"redshift_bins", {{0.5, 0.75}, {0.75, 1.0}, {1.0, 1.4}, {1.4, 2.0}, {2.0, 2.7}}},
          {"mass_floor", 8.73},
          {"bins", 10},
          {"bootstrap_reps", bootstrap_reps},
          {"workers", 2},
          {"ranktest", {{"reference", "survey_a"}, {"permutations", 199}}}};
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2);
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
