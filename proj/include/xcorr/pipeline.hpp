#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "xcorr/catalog.hpp"
#include "xcorr/error.hpp"
#include "xcorr/estimators.hpp"
#include "xcorr/fitstats.hpp"
#include "xcorr/merger.hpp"
#include "xcorr/ranktest.hpp"
#include "xcorr/version.hpp"

namespace xcorr {

// End-to-end analyses driven by a JSON configuration file. See README.md for
// the schema; every key below is validated before any computation starts.

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputDirEnv = "XCORR_OUTPUT_DIR";

enum class CatalogRole { component, redshift };

struct CatalogSource {
  std::string label;
  std::string path;
  ColumnSchema columns;
  CatalogRole role = CatalogRole::component;
  std::optional<Component> component;  // keep only rows of this component
};

struct RankTestConfig {
  std::string reference;
  std::vector<std::string> others;  // empty: every other catalog
  double alpha = 0.005;
  RankMethodChoice method = RankMethodChoice::automatic;
  std::size_t permutations = 9999;
  bool match_redshift = false;  // restrict the reference to each comparison's redshift span
};

struct AnalysisConfig {
  std::vector<CatalogSource> catalogs;
  std::vector<std::pair<double, double>> redshift_bins;
  double mass_floor = -std::numeric_limits<double>::infinity();
  XiConfig xi;  // transform, bins, estimators, randoms, scale, bootstrap, seed
  double fit_alpha = 0.05;
  bool weighted_fit = false;
  unsigned workers = 1;
  std::string output_dir;
  std::optional<RankTestConfig> ranktest;
  nlohmann::json source;  // the validated document, for hashing
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { throw InvalidArgument("config: " + what); }

inline AxisTransform parse_axis(const nlohmann::json& j) {
  AxisTransform t;
  const auto scale = j.value("scale", std::string("identity"));
  if (scale == "identity") {
    t.scale = AxisScale::identity;
  } else if (scale == "log10") {
    t.scale = AxisScale::log10;
  } else if (scale == "pow10" || scale == "linear") {
    t.scale = AxisScale::pow10;
  } else {
    config_error("unknown axis scale '" + scale + "'");
  }
  t.rescale = j.value("rescale", true);
  return t;
}

inline ColumnSchema parse_columns(const nlohmann::json& j) {
  ColumnSchema s;
  s.mass = j.value("mass", std::string("mass"));
  s.size = j.value("size", std::string("size"));
  if (j.contains("redshift")) s.redshift = j.at("redshift").get<std::string>();
  if (j.contains("source")) s.source = j.at("source").get<std::string>();
  if (j.contains("component")) s.component = j.at("component").get<std::string>();
  return s;
}

inline RankMethodChoice parse_method(const std::string& m) {
  if (m == "auto") return RankMethodChoice::automatic;
  if (m == "mckeon") return RankMethodChoice::mckeon_f;
  if (m == "permutation") return RankMethodChoice::permutation;
  config_error("unknown rank-test method '" + m + "' (auto, mckeon, permutation)");
}

inline ScaleSource parse_scale_source(const std::string& s) {
  if (s == "all-pairs") return ScaleSource::all_pairs;
  if (s == "data-data") return ScaleSource::data_data;
  if (s == "user") return ScaleSource::user;
  config_error("unknown scale source '" + s + "'");
}

inline std::string safe_name(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.') ? ch : '_';
  return out;
}

inline std::string bin_label(double lo, double hi) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "z%g-%g", lo, hi);
  return buf;
}

}  // namespace detail

/// Parses and validates a configuration document. Relative catalog paths are
/// resolved against `base_dir`.
inline AnalysisConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::config_error;
  if (!doc.is_object()) config_error("top level must be an object");
  if (doc.value("schema_version", kSchemaVersion) != kSchemaVersion) config_error("unsupported schema_version");
  AnalysisConfig cfg;
  cfg.source = doc;
  try {
    if (!doc.contains("seed")) config_error("'seed' is mandatory");
    cfg.xi.seed = doc.at("seed").get<std::uint64_t>();

    if (!doc.contains("catalogs") || !doc.at("catalogs").is_array() || doc.at("catalogs").empty()) {
      config_error("'catalogs' must be a non-empty array");
    }
    std::set<std::string> labels;
    for (const auto& c : doc.at("catalogs")) {
      CatalogSource s;
      s.label = c.at("label").get<std::string>();
      if (!labels.insert(s.label).second) config_error("duplicate catalog label '" + s.label + "'");
      std::filesystem::path path = c.at("path").get<std::string>();
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      s.path = path.string();
      if (!std::filesystem::exists(path)) config_error("catalog file not found: " + s.path);
      s.columns = detail::parse_columns(c.value("columns", nlohmann::json::object()));
      const auto role = c.value("role", std::string("component"));
      if (role == "component") {
        s.role = CatalogRole::component;
      } else if (role == "redshift") {
        s.role = CatalogRole::redshift;
        if (!s.columns.redshift) config_error("catalog '" + s.label + "' has role redshift but no redshift column");
      } else {
        config_error("catalog '" + s.label + "': role must be 'component' or 'redshift'");
      }
      if (c.contains("component")) {
        s.component = parse_component(c.at("component").get<std::string>());
        if (!s.component) config_error("catalog '" + s.label + "': unknown component");
        if (!s.columns.component) config_error("catalog '" + s.label + "' filters on component but has no component column");
      }
      cfg.catalogs.push_back(std::move(s));
    }

    for (const auto& b : doc.value("redshift_bins", nlohmann::json::array())) {
      const double lo = b.at(0).get<double>(), hi = b.at(1).get<double>();
      if (!(lo < hi)) config_error("redshift bin needs lo < hi");
      cfg.redshift_bins.emplace_back(lo, hi);
    }
    if (doc.contains("mass_floor")) cfg.mass_floor = doc.at("mass_floor").get<double>();

    const auto t = doc.value("transform", nlohmann::json::object());
    cfg.xi.transform.axes[0] = detail::parse_axis(t.value("mass", nlohmann::json::object()));
    cfg.xi.transform.axes[1] = detail::parse_axis(t.value("size", nlohmann::json::object()));

    cfg.xi.n_bins = doc.value("bins", std::size_t{10});
    if (cfg.xi.n_bins == 0) config_error("'bins' must be positive");
    if (doc.contains("estimators")) {
      cfg.xi.estimators = {false, false, false, false};
      for (const auto& e : doc.at("estimators")) {
        const int id = e.get<int>();
        if (id < 1 || id > 4) config_error("estimator ids are 1..4");
        cfg.xi.estimators[static_cast<std::size_t>(id - 1)] = true;
      }
    }
    const auto r = doc.value("randoms", nlohmann::json::object());
    cfg.xi.random_multiplier = r.value("multiplier", 1.0);
    cfg.xi.realizations = r.value("realizations", std::size_t{1});
    if (!(cfg.xi.random_multiplier > 0.0)) config_error("randoms.multiplier must be > 0");
    if (cfg.xi.realizations == 0) config_error("randoms.realizations must be >= 1");

    const auto sc = doc.value("scale", nlohmann::json::object());
    cfg.xi.scale_source = detail::parse_scale_source(sc.value("source", std::string("all-pairs")));
    if (cfg.xi.scale_source == ScaleSource::user) {
      if (!sc.contains("r_max")) config_error("scale.source 'user' needs scale.r_max");
      cfg.xi.user_r_max = sc.at("r_max").get<double>();
      if (!(cfg.xi.user_r_max > 0.0)) config_error("scale.r_max must be > 0");
    }
    cfg.xi.bootstrap_reps = doc.value("bootstrap_reps", std::size_t{100});
    if (cfg.xi.bootstrap_reps == 1) config_error("bootstrap_reps must be 0 or >= 2");
    cfg.xi.kernel.threads = doc.value("threads", 0u);

    const auto fit = doc.value("fit", nlohmann::json::object());
    cfg.fit_alpha = fit.value("alpha", 0.05);
    cfg.weighted_fit = fit.value("weighted", false);
    if (!(cfg.fit_alpha > 0.0 && cfg.fit_alpha < 1.0)) config_error("fit.alpha must lie in (0,1)");

    cfg.workers = doc.value("workers", 1u);
    if (cfg.workers == 0) config_error("'workers' must be >= 1");

    if (doc.contains("output_dir")) {
      std::filesystem::path out = doc.at("output_dir").get<std::string>();
      if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
      cfg.output_dir = out.string();
    } else if (const char* env = std::getenv(kOutputDirEnv)) {
      cfg.output_dir = env;
    } else {
      cfg.output_dir = "xcorr-out";
    }

    if (doc.contains("ranktest")) {
      const auto& rt = doc.at("ranktest");
      RankTestConfig rc;
      rc.reference = rt.at("reference").get<std::string>();
      if (!labels.count(rc.reference)) config_error("ranktest.reference names no catalog");
      for (const auto& o : rt.value("others", nlohmann::json::array())) {
        rc.others.push_back(o.get<std::string>());
        if (!labels.count(rc.others.back())) config_error("ranktest.others names no catalog: " + rc.others.back());
      }
      rc.alpha = rt.value("alpha", 0.005);
      if (!(rc.alpha > 0.0 && rc.alpha < 1.0)) config_error("ranktest.alpha must lie in (0,1)");
      rc.method = detail::parse_method(rt.value("method", std::string("auto")));
      rc.permutations = rt.value("permutations", std::size_t{9999});
      if (rc.permutations < 99) config_error("ranktest.permutations must be >= 99");
      rc.match_redshift = rt.value("match_redshift", false);
      cfg.ranktest = rc;
    }
  } catch (const nlohmann::json::exception& e) {
    config_error(e.what());
  }
  return cfg;
}

inline AnalysisConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return parse_config(doc, std::filesystem::path(path).parent_path());
}

inline std::string config_hash(const AnalysisConfig& cfg) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(cfg.source.dump())));
  return hex;
}

// ---------------------------------------------------------------------------
// Output

/// Writes `content` to a temporary sibling and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1)) + "-" +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string to_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Catalog assembly

struct AssembledCatalogs {
  std::vector<Catalog> components;  // one per component-role source
  std::vector<Catalog> bins;        // merged redshift-role sources, one per bin
  std::map<std::string, std::size_t> rejected;  // label -> rejected row count
};

inline Catalog load_source(const CatalogSource& s, std::map<std::string, std::size_t>* rejected = nullptr) {
  auto res = load_catalog(s.path, s.columns, s.label);
  if (rejected) (*rejected)[s.label] = res.rejected;
  if (s.component) return filter_component(res.catalog, *s.component);
  return res.catalog;
}

inline AssembledCatalogs assemble_catalogs(const AnalysisConfig& cfg) {
  AssembledCatalogs out;
  std::vector<Catalog> highz;
  for (const auto& s : cfg.catalogs) {
    auto c = load_source(s, &out.rejected);
    if (s.role == CatalogRole::component) {
      out.components.push_back(std::move(c));
    } else {
      highz.push_back(filter_mass_floor(c, cfg.mass_floor));
    }
  }
  if (!highz.empty()) {
    const auto merged = merge_catalogs(highz, "redshift");
    for (const auto& [lo, hi] : cfg.redshift_bins) {
      out.bins.push_back(relabel(select_redshift_bin(merged, lo, hi), detail::bin_label(lo, hi)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// correlate

struct PairOutcome {
  std::string name;
  std::vector<std::string> files;
  std::optional<std::string> error;
};

inline std::vector<double> defined_values(const BinValues& v, std::span<const double> centers,
                                          std::vector<double>* r_out, const BinValues* sigma = nullptr,
                                          std::vector<double>* sigma_out = nullptr) {
  std::vector<double> xi;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!v[k]) continue;
    if (sigma && !(*sigma)[k]) continue;
    xi.push_back(*v[k]);
    r_out->push_back(centers[k]);
    if (sigma) sigma_out->push_back(*(*sigma)[k]);
  }
  return xi;
}

/// Fit and KS report per selected estimator; null where no bin is defined.
inline nlohmann::json fit_report(const XiResult& res, double alpha, bool weighted,
                                 std::array<std::optional<PowerLawFit>, kEstimatorCount>* fits = nullptr) {
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"catalog_a", res.meta.label_a},
                      {"catalog_b", res.meta.label_b},
                      {"model", "xi = A / r"},
                      {"weighted", weighted}};
  for (std::size_t e = 0; e < kEstimatorCount; ++e) {
    if (!res.meta.estimators[e]) continue;
    const auto key = "xi_" + std::to_string(e + 1);
    std::vector<double> r, s;
    const auto xi = weighted ? defined_values(res.xi[e], res.bin_centers, &r, &res.sigma[e], &s)
                             : defined_values(res.xi[e], res.bin_centers, &r);
    bool positive_sigma = true;
    for (double v : s) positive_sigma = positive_sigma && v > 0.0;
    if (xi.empty() || (weighted && !positive_sigma)) {
      j[key] = nullptr;
      continue;
    }
    const auto fit = weighted ? fit_inverse_power_law_weighted(r, xi, s) : fit_inverse_power_law(r, xi);
    if (fits) (*fits)[e] = fit;
    j[key] = {{"fit", to_json(fit)}, {"goodness_of_fit", to_json(goodness_of_fit(xi, fit, r, alpha))}};
  }
  return j;
}

/// r_center, xi, sigma and fitted A/r per estimator, for external plotting.
inline std::string plot_csv(const XiResult& res, const std::array<std::optional<PowerLawFit>, kEstimatorCount>& fits) {
  std::ostringstream os;
  os << "r_center";
  for (std::size_t e = 1; e <= kEstimatorCount; ++e) os << ",xi_" << e << ",sigma_" << e << ",fit_" << e;
  os << '\n';
  auto num = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
  for (std::size_t k = 0; k < res.bins.size(); ++k) {
    os << detail::format_double(res.bin_centers[k]);
    for (std::size_t e = 0; e < kEstimatorCount; ++e) {
      os << ',' << num(res.xi[e][k]) << ',' << num(res.sigma[e][k]) << ','
         << (fits[e] ? detail::format_double((*fits[e])(res.bin_centers[k])) : std::string());
    }
    os << '\n';
  }
  return os.str();
}

struct CorrelateSummary {
  int exit_code = 0;
  std::vector<PairOutcome> pairs;
  std::filesystem::path manifest;
};

/// Cross-correlates every component catalog with every redshift-bin catalog.
/// Per pair: xi_<a>__<b>.csv, xi_<a>__<b>.meta.json, fit_<a>__<b>.json and
/// plot_<a>__<b>.csv; afterwards manifest.json (or error.json on failure).
inline CorrelateSummary run_correlate(const AnalysisConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  CorrelateSummary summary;

  AssembledCatalogs cats;
  try {
    cats = assemble_catalogs(cfg);
    if (cats.components.empty() || cats.bins.empty()) {
      throw InvalidArgument("correlate needs at least one component catalog and one redshift bin");
    }
  } catch (const std::exception& e) {
    write_atomic(out_dir / "error.json", to_text({{"schema_version", kSchemaVersion},
                                                  {"status", "error"},
                                                  {"stage", "ingest"},
                                                  {"message", e.what()}}));
    summary.exit_code = 2;
    return summary;
  }

  struct Job {
    const Catalog* a;
    const Catalog* b;
  };
  std::vector<Job> jobs;
  for (const auto& a : cats.components) {
    for (const auto& b : cats.bins) jobs.push_back({&a, &b});
  }
  summary.pairs.resize(jobs.size());

  auto run_one = [&](std::size_t i) {
    const auto& job = jobs[i];
    auto& outcome = summary.pairs[i];
    outcome.name = detail::safe_name(job.a->label()) + "__" + detail::safe_name(job.b->label());
    try {
      const auto res = estimate_xi(*job.a, *job.b, cfg.xi);
      std::ostringstream xi_csv;
      write_xi_csv(xi_csv, res);
      std::array<std::optional<PowerLawFit>, kEstimatorCount> fits;
      const auto fit = fit_report(res, cfg.fit_alpha, cfg.weighted_fit, &fits);
      const std::pair<std::string, std::string> files[] = {
          {"xi_" + outcome.name + ".csv", xi_csv.str()},
          {"xi_" + outcome.name + ".meta.json", to_text(xi_metadata(res))},
          {"fit_" + outcome.name + ".json", to_text(fit)},
          {"plot_" + outcome.name + ".csv", plot_csv(res, fits)},
      };
      for (const auto& [name, body] : files) {
        write_atomic(out_dir / name, body);
        outcome.files.push_back(name);
      }
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
  };

  const unsigned workers = std::min<unsigned>(cfg.workers, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) run_one(i);
      });
    }
  }

  bool failed = false;
  nlohmann::json outputs = nlohmann::json::array(), errors = nlohmann::json::array();
  for (const auto& p : summary.pairs) {
    for (const auto& f : p.files) outputs.push_back(f);
    if (p.error) {
      failed = true;
      errors.push_back({{"pair", p.name}, {"message", *p.error}});
    }
  }
  nlohmann::json rejected = nlohmann::json::object();
  for (const auto& [label, n] : cats.rejected) rejected[label] = n;

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  nlohmann::json manifest = {
      {"schema_version", kSchemaVersion},
      {"status", failed ? "partial" : "ok"},
      {"created_at", stamp},
      {"version", kVersion},
      {"config_hash", config_hash(cfg)},
      {"config", cfg.source},
      {"seed", cfg.xi.seed},
      {"random_generator", SplitMix64::kAlgorithmId},
      {"rejected_rows", rejected},
      {"outputs", outputs},
      {"errors", errors},
  };
  summary.manifest = out_dir / "manifest.json";
  write_atomic(summary.manifest, to_text(manifest));
  if (failed) {
    write_atomic(out_dir / "error.json", to_text({{"schema_version", kSchemaVersion},
                                                  {"status", "error"},
                                                  {"stage", "correlate"},
                                                  {"errors", errors}}));
    summary.exit_code = 1;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// ranktest

inline RankTestInput rank_input(std::span<const Catalog* const> cats) {
  RankTestInput in;
  for (const Catalog* c : cats) {
    Eigen::MatrixXd g(static_cast<Eigen::Index>(c->size()), 2);
    for (std::size_t i = 0; i < c->size(); ++i) {
      g(static_cast<Eigen::Index>(i), 0) = (*c)[i].mass;
      g(static_cast<Eigen::Index>(i), 1) = (*c)[i].size;
    }
    in.groups.push_back(std::move(g));
  }
  return in;
}

struct RankReport {
  nlohmann::json json;
  std::string table;
};

/// Reference catalog against each other catalog on (mass, size).
inline RankReport run_ranktest(const std::vector<Catalog>& catalogs, const RankTestConfig& rc, std::uint64_t seed) {
  const Catalog* ref = nullptr;
  for (const auto& c : catalogs) {
    if (c.label() == rc.reference) ref = &c;
  }
  if (!ref) throw InvalidArgument("ranktest: unknown reference catalog '" + rc.reference + "'");
  std::vector<const Catalog*> others;
  if (rc.others.empty()) {
    for (const auto& c : catalogs) {
      if (&c != ref) others.push_back(&c);
    }
  } else {
    for (const auto& name : rc.others) {
      auto it = std::find_if(catalogs.begin(), catalogs.end(), [&](const Catalog& c) { return c.label() == name; });
      if (it == catalogs.end()) throw InvalidArgument("ranktest: unknown catalog '" + name + "'");
      others.push_back(&*it);
    }
  }
  if (others.empty()) throw InvalidArgument("ranktest needs at least two catalogs");

  RankReport rep;
  rep.json = {{"schema_version", kSchemaVersion},
              {"alpha", rc.alpha},
              {"method", rc.method == RankMethodChoice::automatic   ? "auto"
                         : rc.method == RankMethodChoice::mckeon_f ? "mckeon"
                                                                   : "permutation"},
              {"variables", {"mass", "size"}},
              {"rows", nlohmann::json::array()}};
  std::ostringstream table;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-24s %10s  %-9s %s\n", "Sample1", "Sample2", "p-value", "Decision", "Method");
  table << line;
  for (std::size_t i = 0; i < others.size(); ++i) {
    Catalog reference = *ref;
    if (rc.match_redshift) {
      double zlo = std::numeric_limits<double>::infinity(), zhi = -zlo;
      for (const auto& r : others[i]->records()) {
        if (!r.redshift) throw InvalidArgument("ranktest: match_redshift needs redshifts in '" + others[i]->label() + "'");
        zlo = std::min(zlo, *r.redshift);
        zhi = std::max(zhi, *r.redshift);
      }
      std::vector<GalaxyRecord> kept;
      for (const auto& r : ref->records()) {
        if (r.redshift && *r.redshift >= zlo && *r.redshift <= zhi) kept.push_back(r);
      }
      reference = Catalog(ref->label(), std::move(kept));
    }
    nlohmann::json row = {{"sample1", ref->label()}, {"sample2", others[i]->label()}};
    try {
      const Catalog* pair[] = {&reference, others[i]};
      RankTestOptions opt{rc.method, rc.permutations, derive_seed(seed, i), kDefaultMaxCondition};
      const auto res = rank_test(rank_input(pair), opt);
      const auto dec = compatibility_decision(res, rc.alpha);
      row["p_value"] = res.p_value;
      row["decision"] = dec.label();
      row["n1"] = reference.size();
      row["n2"] = others[i]->size();
      row["test"] = to_json(res);
      std::snprintf(line, sizeof line, "%-24s %-24s %10.4f  %-9s %s\n", ref->label().c_str(),
                    others[i]->label().c_str(), res.p_value, dec.label(), to_string(res.method));
    } catch (const std::exception& e) {
      row["p_value"] = nullptr;
      row["decision"] = "Error";
      row["error"] = e.what();
      std::snprintf(line, sizeof line, "%-24s %-24s %10s  %-9s %s\n", ref->label().c_str(),
                    others[i]->label().c_str(), "-", "Error", e.what());
    }
    rep.json["rows"].push_back(row);
    table << line;
  }
  rep.table = table.str();
  return rep;
}

// ---------------------------------------------------------------------------
// fit (standalone, from an exported xi CSV)

struct XiTable {
  std::vector<double> r_center;
  std::array<BinValues, kEstimatorCount> xi;
  std::array<BinValues, kEstimatorCount> sigma;
};

inline XiTable read_xi_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("xi CSV: empty input");
  const auto names = detail::split_fields(line, ',');
  auto col = [&](const std::string& n) -> std::size_t {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw InvalidArgument("xi CSV: missing column '" + n + "'");
    return static_cast<std::size_t>(it - names.begin());
  };
  const auto rc = col("r_center");
  XiTable t;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line, ',');
    if (f.size() != names.size()) throw InvalidArgument("xi CSV: ragged row");
    auto r = detail::parse_double(f[rc]);
    if (!r) throw InvalidArgument("xi CSV: bad r_center");
    t.r_center.push_back(*r);
    for (std::size_t e = 0; e < kEstimatorCount; ++e) {
      const auto idx = std::to_string(e + 1);
      const auto xc = col("xi_" + idx), sc = col("sigma_" + idx);
      t.xi[e].push_back(f[xc].empty() ? std::nullopt : detail::parse_double(f[xc]));
      t.sigma[e].push_back(f[sc].empty() ? std::nullopt : detail::parse_double(f[sc]));
    }
  }
  return t;
}

/// Fit report for an xi table read back from disk.
inline nlohmann::json fit_table(const XiTable& t, double alpha, bool weighted, const EstimatorSet& which) {
  XiResult res;
  res.bin_centers = t.r_center;
  res.xi = t.xi;
  res.sigma = t.sigma;
  res.meta.estimators = which;
  for (std::size_t e = 0; e < kEstimatorCount; ++e) {
    bool any = false;
    for (const auto& v : t.xi[e]) any = any || v.has_value();
    res.meta.estimators[e] = which[e] && any;
  }
  auto j = fit_report(res, alpha, weighted);
  j.erase("catalog_a");
  j.erase("catalog_b");
  return j;
}

// ---------------------------------------------------------------------------
// validate-config

inline nlohmann::json validation_report(const AnalysisConfig& cfg) {
  nlohmann::json cats = nlohmann::json::array();
  std::size_t n_components = 0;
  for (const auto& c : cfg.catalogs) {
    cats.push_back({{"label", c.label},
                    {"path", c.path},
                    {"role", c.role == CatalogRole::component ? "component" : "redshift"}});
    n_components += c.role == CatalogRole::component;
  }
  return {{"schema_version", kSchemaVersion},
          {"status", "valid"},
          {"config_hash", config_hash(cfg)},
          {"catalogs", cats},
          {"redshift_bins", cfg.redshift_bins.size()},
          {"planned_pairs", n_components * cfg.redshift_bins.size()},
          {"output_dir", cfg.output_dir}};
}

}  // namespace xcorr
