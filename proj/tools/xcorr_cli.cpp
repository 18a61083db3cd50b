// Command-line front end: correlate, ranktest, fit, randoms, merger,
// validate-config. Exit status 0 on success, 1 on a failed run, 2 on bad
// input or configuration.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xcorr/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string default_output_dir() {
  if (const char* env = std::getenv(xcorr::kOutputDirEnv)) return env;
  return "xcorr-out";
}

void emit(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << xcorr::to_text(j);
  } else {
    xcorr::write_atomic(path, xcorr::to_text(j));
  }
}

struct ColumnFlags {
  std::string mass = "mass", size = "size", redshift, source, component;

  void add(CLI::App* app) {
    app->add_option("--mass-col", mass, "Mass column name")->capture_default_str();
    app->add_option("--size-col", size, "Size column name")->capture_default_str();
    app->add_option("--z-col", redshift, "Redshift column name");
    app->add_option("--source-col", source, "Source column name");
    app->add_option("--component-col", component, "Component column name");
  }

  xcorr::ColumnSchema schema() const {
    xcorr::ColumnSchema s;
    s.mass = mass;
    s.size = size;
    if (!redshift.empty()) s.redshift = redshift;
    if (!source.empty()) s.source = source;
    if (!component.empty()) s.component = component;
    return s;
  }
};

std::string stem_label(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-correlation and rank-test analysis of galaxy catalogs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", xcorr::kVersion);

  // correlate
  auto* correlate = app.add_subcommand("correlate", "Cross-correlate component catalogs with redshift bins");
  std::string corr_config, corr_output;
  std::optional<std::uint64_t> corr_seed;
  std::optional<std::size_t> corr_boot;
  std::optional<unsigned> corr_workers;
  correlate->add_option("--config", corr_config, "Analysis configuration (JSON)")->required()->check(CLI::ExistingFile);
  correlate->add_option("--output-dir", corr_output, "Overrides output_dir and $XCORR_OUTPUT_DIR");
  correlate->add_option("--seed", corr_seed, "Overrides the configured seed");
  correlate->add_option("--bootstrap", corr_boot, "Overrides bootstrap_reps");
  correlate->add_option("--workers", corr_workers, "Catalog pairs processed concurrently");

  // ranktest
  auto* ranktest = app.add_subcommand("ranktest", "Multivariate rank test of a reference catalog against others");
  std::string rt_config, rt_reference, rt_output;
  std::vector<std::string> rt_others;
  double rt_alpha = 0.005;
  std::string rt_method = "auto";
  std::size_t rt_perms = 9999;
  std::uint64_t rt_seed = 0;
  bool rt_match_z = false;
  ColumnFlags rt_cols;
  ranktest->add_option("--config", rt_config, "Use the ranktest section of a configuration")->check(CLI::ExistingFile);
  ranktest->add_option("--reference", rt_reference, "Reference catalog CSV")->check(CLI::ExistingFile);
  ranktest->add_option("--other", rt_others, "Catalog CSV to compare (repeatable)")->check(CLI::ExistingFile);
  ranktest->add_option("--alpha", rt_alpha, "Significance level")->capture_default_str();
  ranktest->add_option("--method", rt_method, "auto, mckeon or permutation")
      ->check(CLI::IsMember({"auto", "mckeon", "permutation"}))
      ->capture_default_str();
  ranktest->add_option("--permutations", rt_perms, "Permutations for the exact p-value")->capture_default_str();
  ranktest->add_option("--seed", rt_seed, "Permutation seed")->capture_default_str();
  ranktest->add_flag("--match-redshift", rt_match_z, "Restrict the reference to each sample's redshift span");
  ranktest->add_option("--output", rt_output, "JSON report path (default: <output dir>/ranktest.json)");
  rt_cols.add(ranktest);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit xi = A/r to an exported xi table and run the KS check");
  std::string fit_input, fit_output = "-";
  double fit_alpha = 0.05;
  bool fit_weighted = false;
  std::vector<int> fit_estimators{1, 2, 3, 4};
  fit->add_option("--xi", fit_input, "xi CSV written by correlate")->required()->check(CLI::ExistingFile);
  fit->add_option("--alpha", fit_alpha, "KS significance level")->capture_default_str();
  fit->add_flag("--weighted", fit_weighted, "Weight by 1/sigma^2");
  fit->add_option("--estimator", fit_estimators, "Estimator ids to fit")->check(CLI::Range(1, 4));
  fit->add_option("--output", fit_output, "JSON report path, '-' for stdout")->capture_default_str();

  // randoms
  auto* randoms = app.add_subcommand("randoms", "Generate a uniform comparison catalog in feature space");
  std::string rnd_catalog, rnd_output;
  std::uint64_t rnd_seed = 0;
  std::optional<std::size_t> rnd_n;
  ColumnFlags rnd_cols;
  randoms->add_option("--catalog", rnd_catalog, "Source catalog CSV")->required()->check(CLI::ExistingFile);
  randoms->add_option("--seed", rnd_seed, "Random seed")->required();
  randoms->add_option("--n", rnd_n, "Number of points (default: catalog size)");
  randoms->add_option("--output-dir", rnd_output, "Output directory");
  rnd_cols.add(randoms);

  // merger
  auto* merger = app.add_subcommand("merger", "Virial ratios for a dissipationless merger");
  std::optional<double> m_eta, m_eps, m_target;
  std::string m_output = "-";
  merger->add_option("--eta", m_eta, "Accreted-to-initial mass ratio");
  merger->add_option("--epsilon", m_eps, "Ratio of mean square speeds")->required();
  merger->add_option("--target-size", m_target, "Solve for eta given a size ratio");
  merger->add_option("--output", m_output, "JSON path, '-' for stdout")->capture_default_str();

  // validate-config
  auto* validate = app.add_subcommand("validate-config", "Check a configuration without running it");
  std::string val_config;
  validate->add_option("--config", val_config, "Analysis configuration (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*correlate) {
      auto cfg = xcorr::load_config(corr_config);
      if (!corr_output.empty()) cfg.output_dir = corr_output;
      if (corr_seed) cfg.xi.seed = *corr_seed;
      if (corr_boot) cfg.xi.bootstrap_reps = *corr_boot;
      if (corr_workers) cfg.workers = std::max(1u, *corr_workers);
      const auto summary = xcorr::run_correlate(cfg);
      for (const auto& p : summary.pairs) {
        if (p.error) std::cerr << "error: " << p.name << ": " << *p.error << '\n';
      }
      if (summary.exit_code == 0) std::cout << summary.manifest.string() << '\n';
      return summary.exit_code;
    }

    if (*ranktest) {
      std::vector<xcorr::Catalog> cats;
      xcorr::RankTestConfig rc;
      std::uint64_t seed = rt_seed;
      std::string out_dir = default_output_dir();
      if (!rt_config.empty()) {
        const auto cfg = xcorr::load_config(rt_config);
        if (!cfg.ranktest) throw xcorr::InvalidArgument("config has no ranktest section");
        rc = *cfg.ranktest;
        seed = cfg.xi.seed;
        out_dir = cfg.output_dir;
        for (const auto& s : cfg.catalogs) cats.push_back(xcorr::load_source(s));
      } else {
        if (rt_reference.empty() || rt_others.empty()) {
          std::cerr << "ranktest: give --config, or --reference with at least one --other\n";
          return kExitUsage;
        }
        const auto schema = rt_cols.schema();
        rc.reference = stem_label(rt_reference);
        cats.push_back(xcorr::load_catalog(rt_reference, schema, rc.reference).catalog);
        for (const auto& o : rt_others) {
          auto label = stem_label(o);
          for (const auto& c : cats) {
            if (c.label() == label) label += "_" + std::to_string(cats.size());
          }
          rc.others.push_back(label);
          cats.push_back(xcorr::load_catalog(o, schema, label).catalog);
        }
        rc.alpha = rt_alpha;
        rc.method = xcorr::detail::parse_method(rt_method);
        rc.permutations = rt_perms;
        rc.match_redshift = rt_match_z;
      }
      const auto rep = xcorr::run_ranktest(cats, rc, seed);
      std::cout << rep.table;
      for (const auto& row : rep.json.at("rows")) {
        if (!row.contains("test")) continue;
        for (const auto& w : row["test"].at("warnings")) {
          std::cerr << "warning: " << row["sample2"].get<std::string>() << ": " << w.get<std::string>() << '\n';
        }
      }
      emit(rep.json, rt_output.empty() ? (fs::path(out_dir) / "ranktest.json").string() : rt_output);
      return 0;
    }

    if (*fit) {
      std::ifstream in(fit_input);
      const auto table = xcorr::read_xi_csv(in);
      xcorr::EstimatorSet which{false, false, false, false};
      for (int e : fit_estimators) which[static_cast<std::size_t>(e - 1)] = true;
      emit(xcorr::fit_table(table, fit_alpha, fit_weighted, which), fit_output);
      return 0;
    }

    if (*randoms) {
      const auto label = stem_label(rnd_catalog);
      const auto cat = xcorr::load_catalog(rnd_catalog, rnd_cols.schema(), label).catalog;
      const auto pts = xcorr::to_point_set(cat, xcorr::AxisTransformSpec{});
      const auto set = xcorr::generate_randoms(pts, {rnd_n.value_or(cat.size()), rnd_seed, std::nullopt});
      const fs::path dir = rnd_output.empty() ? default_output_dir() : rnd_output;
      std::ostringstream csv;
      xcorr::write_point_set_csv(csv, set.points);
      xcorr::write_atomic(dir / ("randoms_" + label + ".csv"), csv.str());
      xcorr::write_atomic(dir / ("randoms_" + label + ".meta.json"), xcorr::to_text(xcorr::random_set_metadata(set)));
      for (const auto& w : set.warnings) std::cerr << "warning: " << w << '\n';
      return 0;
    }

    if (*merger) {
      if (m_eta.has_value() == m_target.has_value()) {
        std::cerr << "merger: give exactly one of --eta or --target-size, plus --epsilon\n";
        return kExitUsage;
      }
      xcorr::MergerParams p{m_eta ? *m_eta : xcorr::invert_for_eta(*m_target, *m_eps), *m_eps};
      auto j = xcorr::to_json(p, xcorr::merger_ratios(p));
      if (m_target) j["target_size_ratio"] = *m_target;
      emit(j, m_output);
      return 0;
    }

    if (*validate) {
      const auto cfg = xcorr::load_config(val_config);
      std::cout << xcorr::to_text(xcorr::validation_report(cfg));
      return 0;
    }
  } catch (const xcorr::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const xcorr::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
