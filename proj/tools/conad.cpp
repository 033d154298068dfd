// Command-line driver: generate synthetic data, fit metrics, score cases,
// run the evaluation grid, and render reports.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "conad/conad.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string replace_suffix(const std::string& path, const std::string& suffix,
                           const std::string& replacement) {
  if (path.size() > suffix.size() && path.ends_with(suffix))
    return path.substr(0, path.size() - suffix.size()) + replacement;
  return path + replacement;
}

void write_file(const std::string& path, const std::string& content) {
  if (const fs::path dir = fs::path(path).parent_path(); !dir.empty())
    fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) conad::fail("cannot write output file '%s'", path.c_str());
  out << content;
  if (!out) conad::fail("failed writing output file '%s'", path.c_str());
}

/// Run manifest: everything needed to reproduce the invocation exactly, plus
/// checksums of what it produced.
class Manifest {
 public:
  Manifest(std::string subcommand, std::vector<std::string> argv)
      : subcommand_(std::move(subcommand)), argv_(std::move(argv)) {}

  void set_config(json config) { config_ = std::move(config); }
  void add_input(const std::string& name, const std::string& path) { inputs_[name] = path; }
  void add_warning(const std::string& message) { warnings_.push_back(message); }

  void write_output(const std::string& path, const std::string& content) {
    write_file(path, content);
    outputs_[fs::path(path).filename().string()] =
        conad::detail::strformat("0x%016llx",
                                 static_cast<unsigned long long>(conad::fnv1a64(content)));
  }

  void save(const std::string& path) const {
    json doc;
    doc["tool"] = "conad";
    doc["version"] = kToolVersion;
    doc["subcommand"] = subcommand_;
    doc["argv"] = argv_;
    doc["config"] = config_;
    doc["inputs"] = inputs_;
    doc["outputs"] = outputs_;
    doc["warnings"] = warnings_;
    write_file(path, doc.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  std::vector<std::string> argv_;
  json config_ = json::object();
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  std::vector<std::string> warnings_;
};

/// `key = value` override file: values take precedence over command-line
/// flags. Unknown keys are an error naming the key.
class ConfigOverrides {
 public:
  using Setter = std::function<void(const std::string& value)>;

  void add(const std::string& key, Setter setter) { setters_[key] = std::move(setter); }

  void apply(const std::string& path) const {
    for (const auto& [key, value] : conad::load_keyvals(path)) {
      const auto it = setters_.find(key);
      if (it == setters_.end()) conad::fail("%s: unknown config key '%s'", path.c_str(), key.c_str());
      try {
        it->second(value);
      } catch (const conad::Error&) {
        throw;
      } catch (const std::exception&) {
        conad::fail("%s: bad value '%s' for key '%s'", path.c_str(), value.c_str(), key.c_str());
      }
    }
  }

 private:
  std::map<std::string, Setter> setters_;
};

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

conad::SchemaSpec make_schema_spec(const std::string& schema_file, const std::string& target,
                                   const std::string& context_list) {
  if (!schema_file.empty()) return conad::SchemaSpec::load(schema_file);
  conad::SchemaSpec spec;
  spec.target = target;
  if (!context_list.empty()) spec.context = conad::split_list(context_list);
  return spec;
}

std::string scores_csv_header() {
  return "model_kind,metric_kind,scope,n_reference,case_id,posterior,is_anomaly,label\n";
}

std::string roc_csv(const conad::RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (const auto& [fpr, tpr] : curve.points)
    out += conad::format_g17(fpr) + "," + conad::format_g17(tpr) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
  conad::SyntheticConfig config = conad::SyntheticConfig::defaults();
  std::string out;
  std::string config_file;
};

int run_gen(GenOptions& opt, Manifest& manifest) {
  if (!opt.config_file.empty()) {
    const conad::AttributeSchema schema = conad::port_schema();
    auto context_index = [&](const std::string& name) -> std::size_t {
      for (std::size_t i = 0; i + 1 < schema.size(); ++i)
        if (schema.name(i) == name) return i;
      conad::fail("unknown context attribute '%s'", name.c_str());
    };
    ConfigOverrides overrides;
    overrides.add("n", [&](const std::string& v) { opt.config.n_cases = parse_u64(v); });
    overrides.add("anomaly_rate",
                  [&](const std::string& v) { opt.config.anomaly_rate = parse_double(v); });
    overrides.add("seed", [&](const std::string& v) { opt.config.seed = parse_u64(v); });
    overrides.add("out", [&](const std::string& v) { opt.out = v; });
    overrides.add("bias", [&](const std::string& v) { opt.config.logistic_bias = parse_double(v); });
    for (std::size_t i = 0; i + 1 < schema.size(); ++i) {
      overrides.add("marginal." + schema.name(i),
                    [&, i](const std::string& v) { opt.config.marginals[i] = parse_double(v); });
      overrides.add("weight." + schema.name(i), [&, i](const std::string& v) {
        opt.config.logistic_weights[i] = parse_double(v);
      });
      overrides.add("dep." + schema.name(i), [&, i, context_index](const std::string& v) {
        const auto parts = conad::split_list(v);
        if (parts.size() != 3)
          conad::fail("dependency value must be '<parent>,<p_if_1>,<p_if_0>', got '%s'",
                      v.c_str());
        // Replaces any default rule for this child.
        auto& deps = opt.config.dependencies;
        deps.erase(std::remove_if(deps.begin(), deps.end(),
                                  [&](const conad::DependencyRule& r) { return r.child == i; }),
                   deps.end());
        deps.push_back(conad::DependencyRule{context_index(parts[0]), i,
                                             parse_double(parts[1]), parse_double(parts[2])});
      });
    }
    overrides.apply(opt.config_file);
  }
  if (opt.out.empty()) conad::fail("gen: --out is required");

  const auto [dataset, truth] = conad::generate_synthetic(opt.config);

  std::ostringstream db;
  conad::write_csv(dataset, db);
  std::ostringstream truth_csv;
  truth_csv << "id,is_anomaly,true_conditional\n";
  for (std::size_t i = 0; i < truth.size(); ++i)
    truth_csv << truth.case_ids[i] << ',' << static_cast<int>(truth.anomaly_flags[i]) << ','
              << conad::format_g17(truth.true_conditional[i]) << '\n';

  const std::string truth_path = replace_suffix(opt.out, ".csv", ".truth.csv");
  manifest.write_output(opt.out, db.str());
  manifest.write_output(truth_path, truth_csv.str());

  json config;
  config["n"] = opt.config.n_cases;
  config["anomaly_rate"] = opt.config.anomaly_rate;
  config["seed"] = opt.config.seed;
  config["bias"] = opt.config.logistic_bias;
  config["marginals"] = opt.config.marginals;
  config["weights"] = opt.config.logistic_weights;
  json deps = json::array();
  for (const auto& d : opt.config.dependencies)
    deps.push_back({{"parent", d.parent},
                    {"child", d.child},
                    {"p_given_parent1", d.p_given_parent1},
                    {"p_given_parent0", d.p_given_parent0}});
  config["dependencies"] = deps;
  config["out"] = opt.out;
  manifest.set_config(std::move(config));
  manifest.save(replace_suffix(opt.out, ".csv", ".manifest.json"));

  std::cout << "wrote " << dataset.size() << " cases to " << opt.out << " ("
            << truth.flag_count() << " planted anomalies)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit-metric

struct FitMetricOptions {
  std::string db;
  std::string schema_file;
  std::string target = "hospitalization";
  std::string context_list;
  std::string metric = "euclidean";
  std::optional<double> ridge;
  int nca_max_iter = 200;
  double nca_tol = 1e-6;
  std::string out;
  std::string config_file;
};

int run_fit_metric(FitMetricOptions& opt, Manifest& manifest) {
  if (!opt.config_file.empty()) {
    ConfigOverrides overrides;
    overrides.add("db", [&](const std::string& v) { opt.db = v; });
    overrides.add("schema", [&](const std::string& v) { opt.schema_file = v; });
    overrides.add("target", [&](const std::string& v) { opt.target = v; });
    overrides.add("context", [&](const std::string& v) { opt.context_list = v; });
    overrides.add("metric", [&](const std::string& v) { opt.metric = v; });
    overrides.add("ridge", [&](const std::string& v) { opt.ridge = parse_double(v); });
    overrides.add("nca_max_iter",
                  [&](const std::string& v) { opt.nca_max_iter = static_cast<int>(parse_u64(v)); });
    overrides.add("nca_tol", [&](const std::string& v) { opt.nca_tol = parse_double(v); });
    overrides.add("out", [&](const std::string& v) { opt.out = v; });
    overrides.apply(opt.config_file);
  }
  if (opt.db.empty()) conad::fail("fit-metric: --db is required");
  if (opt.out.empty()) conad::fail("fit-metric: --out is required");

  const conad::Dataset dataset =
      conad::load_csv(opt.db, make_schema_spec(opt.schema_file, opt.target, opt.context_list));

  conad::DetectorConfig config;
  config.metric_kind = conad::metric_kind_from_string(opt.metric);
  config.scope = conad::Scope::local;  // force uses_metric() for the fit
  config.ridge = opt.ridge;
  config.nca.max_iterations = opt.nca_max_iter;
  config.nca.tolerance = opt.nca_tol;
  const conad::GeneralizedMetric metric = conad::fit_config_metric(config, dataset);

  std::ostringstream text;
  text << metric.transform().rows() << '\n';
  for (Eigen::Index r = 0; r < metric.transform().rows(); ++r) {
    for (Eigen::Index c = 0; c < metric.transform().cols(); ++c) {
      if (c) text << ' ';
      text << conad::format_g17(metric.transform()(r, c));
    }
    text << '\n';
  }
  manifest.add_input("db", opt.db);
  manifest.write_output(opt.out, text.str());

  json config_json;
  config_json["metric"] = opt.metric;
  config_json["target"] = opt.target;
  if (!opt.context_list.empty()) config_json["context"] = opt.context_list;
  if (opt.ridge) config_json["ridge"] = *opt.ridge;
  config_json["nca_max_iter"] = opt.nca_max_iter;
  config_json["nca_tol"] = opt.nca_tol;
  config_json["out"] = opt.out;
  manifest.set_config(std::move(config_json));
  manifest.save(opt.out + ".manifest.json");

  std::cout << "fitted " << opt.metric << " metric on " << dataset.size() << " cases -> "
            << opt.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// score

struct ScoreOptions {
  std::string db;
  std::string schema_file;
  std::string target = "hospitalization";
  std::string context_list;
  std::string metric = "euclidean";
  std::string metric_file;
  std::string scope = "global";
  std::size_t k = 40;
  std::string model = "softmax";
  double threshold = 0.05;
  double alpha = 1.0;
  double beta = 1.0;
  std::optional<double> ridge;
  int nca_max_iter = 45;
  double nca_tol = 1e-6;
  double nca_reg = 1.5;
  bool fit_once = false;
  unsigned jobs = 1;
  std::string out;
  std::string config_file;
};

conad::DetectorConfig detector_config_from(const std::string& metric, const std::string& scope,
                                           std::size_t k, const std::string& model,
                                           double threshold, double alpha, double beta,
                                           std::optional<double> ridge, int nca_max_iter,
                                           double nca_tol, double nca_reg) {
  conad::DetectorConfig config;
  config.metric_kind = conad::metric_kind_from_string(metric);
  config.scope = conad::scope_from_string(scope);
  config.k = k;
  config.model_kind = conad::model_kind_from_string(model);
  config.threshold = threshold;
  config.nb_alpha = alpha;
  config.nb_beta = beta;
  config.ridge = ridge;
  config.nca.max_iterations = nca_max_iter;
  config.nca.tolerance = nca_tol;
  config.nca.epsilon_reg = nca_reg;
  config.nca.initial_step = 0.1;
  config.nca.step_growth = 1.3;
  config.validate();
  return config;
}

int run_score(ScoreOptions& opt, Manifest& manifest) {
  if (!opt.config_file.empty()) {
    ConfigOverrides overrides;
    overrides.add("db", [&](const std::string& v) { opt.db = v; });
    overrides.add("schema", [&](const std::string& v) { opt.schema_file = v; });
    overrides.add("target", [&](const std::string& v) { opt.target = v; });
    overrides.add("context", [&](const std::string& v) { opt.context_list = v; });
    overrides.add("metric", [&](const std::string& v) { opt.metric = v; });
    overrides.add("metric_file", [&](const std::string& v) { opt.metric_file = v; });
    overrides.add("scope", [&](const std::string& v) { opt.scope = v; });
    overrides.add("k", [&](const std::string& v) { opt.k = parse_u64(v); });
    overrides.add("model", [&](const std::string& v) { opt.model = v; });
    overrides.add("threshold", [&](const std::string& v) { opt.threshold = parse_double(v); });
    overrides.add("alpha", [&](const std::string& v) { opt.alpha = parse_double(v); });
    overrides.add("beta", [&](const std::string& v) { opt.beta = parse_double(v); });
    overrides.add("ridge", [&](const std::string& v) { opt.ridge = parse_double(v); });
    overrides.add("nca_max_iter",
                  [&](const std::string& v) { opt.nca_max_iter = static_cast<int>(parse_u64(v)); });
    overrides.add("nca_tol", [&](const std::string& v) { opt.nca_tol = parse_double(v); });
    overrides.add("nca_reg", [&](const std::string& v) { opt.nca_reg = parse_double(v); });
    overrides.add("fit_once", [&](const std::string& v) { opt.fit_once = v == "true" || v == "1"; });
    overrides.add("jobs", [&](const std::string& v) { opt.jobs = static_cast<unsigned>(parse_u64(v)); });
    overrides.add("out", [&](const std::string& v) { opt.out = v; });
    overrides.apply(opt.config_file);
  }
  if (opt.db.empty()) conad::fail("score: --db is required");
  if (opt.out.empty()) conad::fail("score: --out is required");

  const conad::Dataset dataset =
      conad::load_csv(opt.db, make_schema_spec(opt.schema_file, opt.target, opt.context_list));
  const conad::DetectorConfig config =
      detector_config_from(opt.metric, opt.scope, opt.k, opt.model, opt.threshold, opt.alpha,
                           opt.beta, opt.ridge, opt.nca_max_iter, opt.nca_tol, opt.nca_reg);

  std::optional<conad::GeneralizedMetric> fixed_metric;
  if (!opt.metric_file.empty()) {
    fixed_metric = conad::load_metric(opt.metric_file);
  } else if (opt.fit_once) {
    fixed_metric = conad::fit_config_metric(config, dataset);
  }

  std::vector<conad::AnomalyScore> scores(dataset.size());
  conad::detail::parallel_for(dataset.size(), opt.jobs, [&](std::size_t i) {
    const std::string& id = dataset.case_ids()[i];
    const conad::Dataset remaining = dataset.without(id);
    const conad::GeneralizedMetric metric =
        fixed_metric ? *fixed_metric : conad::fit_config_metric(config, remaining);
    scores[i] = conad::score_case(id, dataset.instance(i), remaining, config, metric);
  });

  std::string csv = "case_id,metric_kind,scope,model_kind,posterior,is_anomaly\n";
  for (const auto& s : scores)
    csv += conad::detail::strformat("%s,%s,%s,%s,%s,%d\n", s.case_id.c_str(),
                                    conad::to_string(config.metric_kind),
                                    conad::to_string(config.scope),
                                    conad::to_string(config.model_kind),
                                    conad::format_g17(s.posterior).c_str(),
                                    s.is_anomaly ? 1 : 0);
  manifest.add_input("db", opt.db);
  if (!opt.metric_file.empty()) manifest.add_input("metric_file", opt.metric_file);
  manifest.write_output(opt.out, csv);

  json config_json;
  config_json["metric"] = opt.metric;
  config_json["scope"] = opt.scope;
  config_json["k"] = opt.k;
  config_json["model"] = opt.model;
  config_json["threshold"] = opt.threshold;
  config_json["alpha"] = opt.alpha;
  config_json["beta"] = opt.beta;
  if (opt.ridge) config_json["ridge"] = *opt.ridge;
  config_json["nca_max_iter"] = opt.nca_max_iter;
  config_json["nca_tol"] = opt.nca_tol;
  config_json["nca_reg"] = opt.nca_reg;
  config_json["fit_once"] = opt.fit_once;
  config_json["jobs"] = opt.jobs;
  config_json["target"] = opt.target;
  config_json["out"] = opt.out;
  manifest.set_config(std::move(config_json));
  manifest.save(replace_suffix(opt.out, ".csv", ".manifest.json"));

  std::size_t flagged = 0;
  for (const auto& s : scores) flagged += s.is_anomaly ? 1 : 0;
  std::cout << "scored " << scores.size() << " cases, " << flagged << " flagged at threshold "
            << config.threshold << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string db;
  std::string truth;
  std::string schema_file;
  std::string target = "hospitalization";
  std::string context_list;
  std::string grid = "table1";
  std::string metric = "euclidean";  // for --grid single
  std::string scope = "global";
  std::string model = "softmax";
  std::size_t k = 40;
  double threshold = 0.05;
  std::size_t cohort_flagged = 21;
  std::size_t cohort_random = 79;
  double alpha = 1.0;
  double beta = 1.0;
  std::optional<double> ridge;
  int nca_max_iter = 45;
  double nca_tol = 1e-6;
  double nca_reg = 1.5;
  std::uint64_t seed = 0;
  unsigned jobs = 0;  // auto
  bool fit_once = false;
  std::string out;
  std::string config_file;
};

std::string loo_scores_csv(const std::vector<conad::LooResult>& results) {
  std::string csv = scores_csv_header();
  for (const auto& result : results) {
    std::vector<const conad::ScoreRecord*> rows;
    rows.reserve(result.records.size());
    for (const auto& r : result.records) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(),
              [](const auto* a, const auto* b) { return a->case_id < b->case_id; });
    for (const auto* r : rows)
      csv += conad::detail::strformat(
          "%s,%s,%s,%zu,%s,%s,%d,%d\n", conad::to_string(result.config.model_kind),
          conad::to_string(result.config.metric_kind), conad::to_string(result.config.scope),
          result.n_reference, r->case_id.c_str(), conad::format_g17(r->posterior).c_str(),
          r->is_anomaly ? 1 : 0, r->label ? 1 : 0);
  }
  return csv;
}

int run_eval(EvalOptions& opt, Manifest& manifest) {
  if (!opt.config_file.empty()) {
    ConfigOverrides overrides;
    overrides.add("db", [&](const std::string& v) { opt.db = v; });
    overrides.add("truth", [&](const std::string& v) { opt.truth = v; });
    overrides.add("schema", [&](const std::string& v) { opt.schema_file = v; });
    overrides.add("target", [&](const std::string& v) { opt.target = v; });
    overrides.add("context", [&](const std::string& v) { opt.context_list = v; });
    overrides.add("grid", [&](const std::string& v) { opt.grid = v; });
    overrides.add("metric", [&](const std::string& v) { opt.metric = v; });
    overrides.add("scope", [&](const std::string& v) { opt.scope = v; });
    overrides.add("model", [&](const std::string& v) { opt.model = v; });
    overrides.add("k", [&](const std::string& v) { opt.k = parse_u64(v); });
    overrides.add("threshold", [&](const std::string& v) { opt.threshold = parse_double(v); });
    overrides.add("cohort_flagged",
                  [&](const std::string& v) { opt.cohort_flagged = parse_u64(v); });
    overrides.add("cohort_random", [&](const std::string& v) { opt.cohort_random = parse_u64(v); });
    overrides.add("alpha", [&](const std::string& v) { opt.alpha = parse_double(v); });
    overrides.add("beta", [&](const std::string& v) { opt.beta = parse_double(v); });
    overrides.add("ridge", [&](const std::string& v) { opt.ridge = parse_double(v); });
    overrides.add("nca_max_iter",
                  [&](const std::string& v) { opt.nca_max_iter = static_cast<int>(parse_u64(v)); });
    overrides.add("nca_tol", [&](const std::string& v) { opt.nca_tol = parse_double(v); });
    overrides.add("nca_reg", [&](const std::string& v) { opt.nca_reg = parse_double(v); });
    overrides.add("seed", [&](const std::string& v) { opt.seed = parse_u64(v); });
    overrides.add("jobs", [&](const std::string& v) { opt.jobs = static_cast<unsigned>(parse_u64(v)); });
    overrides.add("fit_once", [&](const std::string& v) { opt.fit_once = v == "true" || v == "1"; });
    overrides.add("out", [&](const std::string& v) { opt.out = v; });
    overrides.apply(opt.config_file);
  }
  if (opt.db.empty()) conad::fail("eval: --db is required");
  if (opt.truth.empty()) conad::fail("eval: --truth is required");
  if (opt.out.empty()) conad::fail("eval: --out is required");

  const conad::Dataset dataset =
      conad::load_csv(opt.db, make_schema_spec(opt.schema_file, opt.target, opt.context_list));
  const conad::GroundTruth truth = conad::load_truth_csv(opt.truth);

  std::vector<conad::DetectorConfig> grid;
  if (opt.grid == "table1") {
    conad::NcaOptions nca;
    nca.max_iterations = opt.nca_max_iter;
    nca.tolerance = opt.nca_tol;
    nca.epsilon_reg = opt.nca_reg;
    nca.initial_step = 0.1;
    nca.step_growth = 1.3;
    grid = conad::table1_grid(opt.k, opt.threshold, &nca);
    for (auto& config : grid) {
      config.nb_alpha = opt.alpha;
      config.nb_beta = opt.beta;
      config.ridge = opt.ridge;
    }
  } else if (opt.grid == "single") {
    grid.push_back(detector_config_from(opt.metric, opt.scope, opt.k, opt.model, opt.threshold,
                                        opt.alpha, opt.beta, opt.ridge, opt.nca_max_iter,
                                        opt.nca_tol, opt.nca_reg));
  } else {
    conad::fail("eval: unknown grid '%s' (expected table1|single)", opt.grid.c_str());
  }

  const conad::Cohort cohort = conad::select_cohort(dataset, truth, opt.cohort_flagged,
                                                    opt.cohort_random, opt.threshold, opt.seed);
  for (const auto& warning : cohort.warnings) {
    std::cerr << "conad: warning: " << warning << "\n";
    manifest.add_warning(warning);
  }

  conad::RunLooOptions loo;
  loo.jobs = opt.jobs;
  loo.refit_per_case = !opt.fit_once;
  const std::vector<conad::LooResult> results = conad::run_loo(dataset, cohort, grid, loo);
  const conad::EvalReport report = conad::emit_report(results);

  const fs::path out_dir(opt.out);
  manifest.add_input("db", opt.db);
  manifest.add_input("truth", opt.truth);
  manifest.write_output((out_dir / "scores.csv").string(), loo_scores_csv(results));
  manifest.write_output((out_dir / "report.csv").string(), report.to_csv());
  manifest.write_output((out_dir / "report.txt").string(), report.to_text());
  for (const auto& result : results) {
    std::vector<std::pair<double, bool>> scores;
    scores.reserve(result.records.size());
    for (const auto& r : result.records) scores.emplace_back(r.posterior, r.label);
    const std::string name = conad::detail::strformat(
        "roc_%s_%s_%s.csv", conad::to_string(result.config.model_kind),
        conad::to_string(result.config.metric_kind), conad::to_string(result.config.scope));
    manifest.write_output((out_dir / name).string(), roc_csv(conad::roc_curve(scores)));
  }

  json config_json;
  config_json["grid"] = opt.grid;
  config_json["k"] = opt.k;
  config_json["threshold"] = opt.threshold;
  config_json["cohort_flagged"] = opt.cohort_flagged;
  config_json["cohort_random"] = opt.cohort_random;
  config_json["alpha"] = opt.alpha;
  config_json["beta"] = opt.beta;
  if (opt.ridge) config_json["ridge"] = *opt.ridge;
  config_json["nca_max_iter"] = opt.nca_max_iter;
  config_json["nca_tol"] = opt.nca_tol;
  config_json["nca_reg"] = opt.nca_reg;
  config_json["seed"] = opt.seed;
  config_json["jobs"] = opt.jobs;
  config_json["fit_once"] = opt.fit_once;
  config_json["target"] = opt.target;
  config_json["out"] = opt.out;
  if (opt.grid == "single") {
    config_json["metric"] = opt.metric;
    config_json["scope"] = opt.scope;
    config_json["model"] = opt.model;
  }
  manifest.set_config(std::move(config_json));
  manifest.save((out_dir / "manifest.json").string());

  std::cout << report.to_text();
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  std::string scores;
  std::string out;
  std::string config_file;
};

int run_report(ReportOptions& opt, Manifest& manifest) {
  if (!opt.config_file.empty()) {
    ConfigOverrides overrides;
    overrides.add("scores", [&](const std::string& v) { opt.scores = v; });
    overrides.add("out", [&](const std::string& v) { opt.out = v; });
    overrides.apply(opt.config_file);
  }
  if (opt.scores.empty()) conad::fail("report: --scores is required");
  if (opt.out.empty()) conad::fail("report: --out is required");

  std::ifstream in(opt.scores);
  if (!in) conad::fail("cannot open scores file '%s'", opt.scores.c_str());
  std::string line;
  if (!std::getline(in, line)) conad::fail("%s: missing header row", opt.scores.c_str());
  if (line != "model_kind,metric_kind,scope,n_reference,case_id,posterior,is_anomaly,label")
    conad::fail("%s: unexpected header '%s'", opt.scores.c_str(), line.c_str());

  std::vector<conad::LooResult> results;
  std::map<std::string, std::size_t> group_index;
  std::size_t rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (conad::detail::trim(line).empty()) continue;
    const auto cells = conad::detail::split_csv_line(line);
    if (cells.size() != 8)
      conad::fail("%s:%zu: expected 8 cells, got %zu", opt.scores.c_str(), rowno, cells.size());
    const std::string key = cells[0] + "," + cells[1] + "," + cells[2] + "," + cells[3];
    auto [it, inserted] = group_index.emplace(key, results.size());
    if (inserted) {
      conad::LooResult result;
      result.config.model_kind = conad::model_kind_from_string(cells[0]);
      result.config.metric_kind = conad::metric_kind_from_string(cells[1]);
      result.config.scope = conad::scope_from_string(cells[2]);
      result.n_reference = parse_u64(cells[3]);
      results.push_back(std::move(result));
    }
    conad::ScoreRecord record;
    record.case_id = cells[4];
    record.posterior = parse_double(cells[5]);
    record.is_anomaly = cells[6] == "1";
    record.label = cells[7] == "1";
    results[it->second].records.push_back(std::move(record));
  }
  if (results.empty()) conad::fail("%s: no score rows", opt.scores.c_str());

  const conad::EvalReport report = conad::emit_report(results);
  const fs::path out_dir(opt.out);
  manifest.add_input("scores", opt.scores);
  manifest.write_output((out_dir / "report.csv").string(), report.to_csv());
  manifest.write_output((out_dir / "report.txt").string(), report.to_text());

  json config_json;
  config_json["scores"] = opt.scores;
  config_json["out"] = opt.out;
  manifest.set_config(std::move(config_json));
  manifest.save((out_dir / "manifest.json").string());

  std::cout << report.to_text();
  return 0;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"Conditional anomaly detection for binary tabular data"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset with planted anomalies");
  gen_cmd->add_option("--n", gen.config.n_cases, "Number of cases");
  gen_cmd->add_option("--anomaly-rate", gen.config.anomaly_rate, "Fraction of flipped targets");
  gen_cmd->add_option("--seed", gen.config.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Output dataset CSV path");
  gen_cmd->add_option("--config", gen.config_file, "Key=value config overriding flags");

  FitMetricOptions fitm;
  CLI::App* fit_cmd = app.add_subcommand("fit-metric", "Fit a distance metric and serialize it");
  fit_cmd->add_option("--db", fitm.db, "Dataset CSV");
  fit_cmd->add_option("--schema", fitm.schema_file, "Schema spec file (target/context keys)");
  fit_cmd->add_option("--target", fitm.target, "Target column name");
  fit_cmd->add_option("--context", fitm.context_list, "Comma-separated context columns");
  fit_cmd->add_option("--metric", fitm.metric, "euclidean|mahalanobis|rca|nca");
  fit_cmd->add_option("--ridge", [&fitm](const std::vector<std::string>& v) {
    fitm.ridge = parse_double(v.back());
    return true;
  }, "Covariance ridge (default: 1e-6 * trace/d)");
  fit_cmd->add_option("--nca-max-iter", fitm.nca_max_iter, "NCA iteration cap");
  fit_cmd->add_option("--nca-tol", fitm.nca_tol, "NCA objective-improvement tolerance");
  fit_cmd->add_option("--out", fitm.out, "Output metric file");
  fit_cmd->add_option("--config", fitm.config_file, "Key=value config overriding flags");

  ScoreOptions score;
  CLI::App* score_cmd = app.add_subcommand("score", "Score every case leave-one-out");
  score_cmd->add_option("--db", score.db, "Dataset CSV");
  score_cmd->add_option("--schema", score.schema_file, "Schema spec file");
  score_cmd->add_option("--target", score.target, "Target column name");
  score_cmd->add_option("--context", score.context_list, "Comma-separated context columns");
  score_cmd->add_option("--metric", score.metric, "euclidean|mahalanobis|rca|nca");
  score_cmd->add_option("--metric-file", score.metric_file, "Use a serialized metric instead of fitting");
  score_cmd->add_option("--scope", score.scope, "global|local");
  score_cmd->add_option("--k", score.k, "Local neighborhood size");
  score_cmd->add_option("--model", score.model, "softmax|nb");
  score_cmd->add_option("--threshold", score.threshold, "Anomaly threshold p_epsilon");
  score_cmd->add_option("--alpha", score.alpha, "Beta prior alpha");
  score_cmd->add_option("--beta", score.beta, "Beta prior beta");
  score_cmd->add_option("--ridge", [&score](const std::vector<std::string>& v) {
    score.ridge = parse_double(v.back());
    return true;
  }, "Covariance ridge");
  score_cmd->add_option("--nca-max-iter", score.nca_max_iter, "NCA iteration cap");
  score_cmd->add_option("--nca-tol", score.nca_tol, "NCA tolerance");
  score_cmd->add_option("--nca-reg", score.nca_reg, "NCA transform damping");
  score_cmd->add_flag("--fit-once", score.fit_once, "Fit the metric once on the full database");
  score_cmd->add_option("--jobs", score.jobs, "Worker threads (0 = hardware)");
  score_cmd->add_option("--out", score.out, "Output scores CSV");
  score_cmd->add_option("--config", score.config_file, "Key=value config overriding flags");

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Run the leave-one-out evaluation grid");
  eval_cmd->add_option("--db", eval.db, "Dataset CSV");
  eval_cmd->add_option("--truth", eval.truth, "Ground-truth CSV (id,is_anomaly,...)");
  eval_cmd->add_option("--schema", eval.schema_file, "Schema spec file");
  eval_cmd->add_option("--target", eval.target, "Target column name");
  eval_cmd->add_option("--context", eval.context_list, "Comma-separated context columns");
  eval_cmd->add_option("--grid", eval.grid, "table1|single");
  eval_cmd->add_option("--metric", eval.metric, "Metric for --grid single");
  eval_cmd->add_option("--scope", eval.scope, "Scope for --grid single");
  eval_cmd->add_option("--model", eval.model, "Model for --grid single");
  eval_cmd->add_option("--k", eval.k, "Local neighborhood size");
  eval_cmd->add_option("--threshold", eval.threshold, "Anomaly threshold p_epsilon");
  eval_cmd->add_option("--cohort-flagged", eval.cohort_flagged, "Detector-flagged cohort size");
  eval_cmd->add_option("--cohort-random", eval.cohort_random, "Random cohort fill size");
  eval_cmd->add_option("--alpha", eval.alpha, "Beta prior alpha");
  eval_cmd->add_option("--beta", eval.beta, "Beta prior beta");
  eval_cmd->add_option("--ridge", [&eval](const std::vector<std::string>& v) {
    eval.ridge = parse_double(v.back());
    return true;
  }, "Covariance ridge");
  eval_cmd->add_option("--nca-max-iter", eval.nca_max_iter, "NCA iteration cap per fit");
  eval_cmd->add_option("--nca-tol", eval.nca_tol, "NCA tolerance");
  eval_cmd->add_option("--nca-reg", eval.nca_reg, "NCA transform damping");
  eval_cmd->add_option("--seed", eval.seed, "Cohort selection seed");
  eval_cmd->add_option("--jobs", eval.jobs, "Worker threads (0 = hardware)");
  eval_cmd->add_flag("--fit-once", eval.fit_once, "Fit each metric once per run");
  eval_cmd->add_option("--out", eval.out, "Output directory");
  eval_cmd->add_option("--config", eval.config_file, "Key=value config overriding flags");

  ReportOptions report;
  CLI::App* report_cmd = app.add_subcommand("report", "Re-render a report from stored scores");
  report_cmd->add_option("--scores", report.scores, "scores.csv from a previous eval");
  report_cmd->add_option("--out", report.out, "Output directory");
  report_cmd->add_option("--config", report.config_file, "Key=value config overriding flags");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (gen_cmd->parsed()) {
      Manifest manifest("gen", args);
      return run_gen(gen, manifest);
    }
    if (fit_cmd->parsed()) {
      Manifest manifest("fit-metric", args);
      return run_fit_metric(fitm, manifest);
    }
    if (score_cmd->parsed()) {
      Manifest manifest("score", args);
      return run_score(score, manifest);
    }
    if (eval_cmd->parsed()) {
      Manifest manifest("eval", args);
      return run_eval(eval, manifest);
    }
    if (report_cmd->parsed()) {
      Manifest manifest("report", args);
      return run_report(report, manifest);
    }
  } catch (const conad::Error& e) {
    std::cerr << "conad: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "conad: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int main(int argc, char** argv) { return dispatch(argc, argv); }
