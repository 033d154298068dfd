#include <gtest/gtest.h>

#include <random>

#include "conad/evaluation.hpp"
#include "test_util.hpp"

using namespace conad;

namespace {

TEST(RocCurve, PerfectSeparationPassesTopLeft) {
  std::vector<std::pair<double, bool>> scores{{0.01, true}, {0.02, true}, {0.5, false},
                                              {0.9, false}};
  const RocCurve curve = roc_curve(scores);
  bool has_top_left = false;
  for (const auto& [fpr, tpr] : curve.points)
    if (fpr == 0.0 && tpr == 1.0) has_top_left = true;
  EXPECT_TRUE(has_top_left);
}

TEST(RocCurve, AllTiedIsJustTheEndpoints) {
  std::vector<std::pair<double, bool>> scores{{0.3, true}, {0.3, false}, {0.3, true},
                                              {0.3, false}};
  const RocCurve curve = roc_curve(scores);
  ASSERT_EQ(curve.points.size(), 2u);
  EXPECT_EQ(curve.points.front(), (std::pair<double, double>{0.0, 0.0}));
  EXPECT_EQ(curve.points.back(), (std::pair<double, double>{1.0, 1.0}));
}

TEST(RocCurve, HandEnumeratedThresholds) {
  // posteriors 0.01 A, 0.02 N, 0.03 A, 0.04 N
  std::vector<std::pair<double, bool>> scores{
      {0.01, true}, {0.02, false}, {0.03, true}, {0.04, false}};
  const RocCurve curve = roc_curve(scores);
  const std::vector<std::pair<double, double>> expected{
      {0.0, 0.0}, {0.0, 0.5}, {0.5, 0.5}, {0.5, 1.0}, {1.0, 1.0}};
  EXPECT_EQ(curve.points, expected);
}

TEST(RocCurve, MonotoneOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<double, bool>> scores;
    for (int i = 0; i < 50; ++i)
      scores.emplace_back(unif(rng) < 0.3 ? 0.25 : unif(rng), rng() % 4 == 0);
    bool pos = false, neg = false;
    for (const auto& s : scores) (s.second ? pos : neg) = true;
    if (!pos || !neg) continue;
    const RocCurve curve = roc_curve(scores);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      EXPECT_GE(curve.points[i].first, curve.points[i - 1].first);
      EXPECT_GE(curve.points[i].second, curve.points[i - 1].second);
    }
  }
}

TEST(RocCurve, SingleClassRejected) {
  std::vector<std::pair<double, bool>> scores{{0.1, true}, {0.2, true}};
  EXPECT_THROW(roc_curve(scores), Error);
}

TEST(PartialAuc, PerfectDetectorIsHundredPercent) {
  RocCurve curve;
  curve.points = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  EXPECT_DOUBLE_EQ(partial_auc_norm(curve), 100.0);
}

TEST(PartialAuc, DiagonalIsTwoPointFive) {
  RocCurve diagonal;
  diagonal.points = {{0.0, 0.0}, {1.0, 1.0}};
  EXPECT_NEAR(partial_auc_norm(diagonal), 2.5, 1e-12);
}

TEST(PartialAuc, ConstantThirdTprIsThirtyThree) {
  RocCurve curve;
  curve.points = {{0.0, 0.0}, {0.0, 0.33}, {0.06, 0.33}, {1.0, 1.0}};
  EXPECT_NEAR(partial_auc_norm(curve), 33.0, 1e-9);
}

TEST(PartialAuc, InterpolatesAtRegionEdge) {
  // Single segment from (0,0) to (1,1) but region ends at 0.05: the curve is
  // cut at (0.05, 0.05).
  RocCurve curve;
  curve.points = {{0.0, 0.0}, {1.0, 1.0}};
  EXPECT_NEAR(partial_auc_norm(curve, 0.9), 5.0, 1e-12);  // width 0.1 diagonal
}

TEST(PartialAuc, RandomScoresAverageNearBaseline) {
  // Light version of the acceptance sweep: uniform posteriors average about
  // 2.5%. Trials are sized so trapezoid discreteness stays small.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double total = 0.0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::pair<double, bool>> scores;
    for (int i = 0; i < 1000; ++i) scores.emplace_back(unif(rng), i < 230);
    total += partial_auc_norm(roc_curve(scores));
  }
  const double mean = total / trials;
  EXPECT_GT(mean, 2.0);
  EXPECT_LT(mean, 3.0);
}

SyntheticConfig small_config(std::uint64_t seed, std::size_t n = 260) {
  SyntheticConfig config = SyntheticConfig::defaults();
  config.n_cases = n;
  config.seed = seed;
  return config;
}

TEST(SelectCohort, DeterministicAndCorrectlySized) {
  const auto [db, truth] = generate_synthetic(small_config(1));
  const Cohort a = select_cohort(db, truth, 5, 20, 0.2, 42);
  const Cohort b = select_cohort(db, truth, 5, 20, 0.2, 42);
  EXPECT_EQ(a.case_ids, b.case_ids);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.size(), 25u);
  const Cohort c = select_cohort(db, truth, 5, 20, 0.2, 43);
  EXPECT_NE(a.case_ids, c.case_ids);
  // cohort is a subset of the database with labels from the ground truth
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t row = db.index_of(a.case_ids[i]);
    EXPECT_EQ(a.labels[i], truth.anomaly_flags[row]);
  }
}

TEST(SelectCohort, ZeroFlaggedMeansPurelyRandom) {
  const auto [db, truth] = generate_synthetic(small_config(2));
  const Cohort cohort = select_cohort(db, truth, 0, 30, 0.05, 7);
  EXPECT_EQ(cohort.size(), 30u);
  EXPECT_TRUE(cohort.warnings.empty());
}

TEST(SelectCohort, NothingFlaggedFallsBackWithWarning) {
  // A constant-target database gives posteriors near 1 for every case, so
  // the detector flags nothing and the cohort is filled randomly.
  std::vector<std::vector<int>> rows;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 40; ++i)
    rows.push_back({static_cast<int>(rng() % 2), static_cast<int>(rng() % 2), 1});
  const Dataset db = test_util::make_dataset(rows);
  GroundTruth truth;
  truth.case_ids = db.case_ids();
  truth.anomaly_flags.assign(db.size(), 0);
  truth.anomaly_flags[3] = 1;
  truth.true_conditional.assign(db.size(), 0.9);

  const Cohort cohort = select_cohort(db, truth, 5, 10, 0.05, 3);
  EXPECT_EQ(cohort.size(), 15u);
  ASSERT_EQ(cohort.warnings.size(), 1u);
  EXPECT_NE(cohort.warnings[0].find("filling the cohort randomly"), std::string::npos);
}

TEST(SelectCohort, FailsWhenDatabaseTooSmall) {
  const auto [db, truth] = generate_synthetic(small_config(3, 20));
  EXPECT_THROW(select_cohort(db, truth, 15, 10, 0.05, 1), Error);
}

TEST(RunLoo, SingleConfigMatchesManualScore) {
  const auto [db, truth] = generate_synthetic(small_config(5));
  Cohort cohort;
  cohort.case_ids = {db.case_ids()[7]};
  cohort.labels = {truth.anomaly_flags[7]};

  DetectorConfig config;
  config.model_kind = ModelKind::softmax;
  config.scope = Scope::local;
  const auto results = run_loo(db, cohort, {config});
  ASSERT_EQ(results.size(), 1u);
  ASSERT_EQ(results[0].records.size(), 1u);

  const Dataset rest = db.without(cohort.case_ids[0]);
  const AnomalyScore manual = score_case(cohort.case_ids[0], db.instance(7), rest, config,
                                         GeneralizedMetric::identity(19));
  EXPECT_EQ(results[0].records[0].posterior, manual.posterior);
}

TEST(RunLoo, GlobalNaiveBayesIgnoresMetricKind) {
  const auto [db, truth] = generate_synthetic(small_config(6));
  const Cohort cohort = select_cohort(db, truth, 0, 10, 0.05, 1);

  std::vector<DetectorConfig> grid;
  for (MetricKind mk : {MetricKind::euclidean, MetricKind::mahalanobis, MetricKind::rca,
                        MetricKind::nca}) {
    DetectorConfig config;
    config.metric_kind = mk;
    config.model_kind = ModelKind::naive_bayes;
    config.scope = Scope::global;
    config.nca.max_iterations = 2;
    grid.push_back(config);
  }
  const auto results = run_loo(db, cohort, grid);
  for (std::size_t c = 1; c < results.size(); ++c)
    for (std::size_t i = 0; i < cohort.size(); ++i)
      EXPECT_EQ(results[c].records[i].posterior, results[0].records[i].posterior);
}

TEST(RunLoo, JobCountDoesNotChangeResults) {
  const auto [db, truth] = generate_synthetic(small_config(7));
  const Cohort cohort = select_cohort(db, truth, 2, 10, 0.2, 9);
  std::vector<DetectorConfig> grid = table1_grid(10, 0.05);
  for (auto& config : grid) config.nca.max_iterations = 3;

  RunLooOptions serial;
  serial.jobs = 1;
  RunLooOptions parallel;
  parallel.jobs = 4;
  const auto a = run_loo(db, cohort, grid, serial);
  const auto b = run_loo(db, cohort, grid, parallel);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t c = 0; c < a.size(); ++c)
    for (std::size_t i = 0; i < cohort.size(); ++i)
      EXPECT_EQ(a[c].records[i].posterior, b[c].records[i].posterior);
}

TEST(RunLoo, CohortMustBeInDatabase) {
  const auto [db, truth] = generate_synthetic(small_config(8));
  Cohort cohort;
  cohort.case_ids = {"not_a_case"};
  cohort.labels = {0};
  EXPECT_THROW(run_loo(db, cohort, {DetectorConfig{}}), Error);
}

TEST(EmitReport, Table1GridCollapsesToThirteenRows) {
  const auto [db, truth] = generate_synthetic(small_config(9));
  const Cohort cohort = select_cohort(db, truth, 2, 14, 0.2, 4);
  std::vector<DetectorConfig> grid = table1_grid(10, 0.05);
  for (auto& config : grid) config.nca.max_iterations = 2;
  const auto results = run_loo(db, cohort, grid);
  ASSERT_EQ(results.size(), 16u);

  const EvalReport report = emit_report(results);
  EXPECT_EQ(report.rows.size(), 13u);
  std::size_t any_rows = 0;
  for (const auto& row : report.rows) {
    EXPECT_GE(row.pauc_percent, 0.0);
    EXPECT_LE(row.pauc_percent, 100.0);
    if (row.metric == "any") {
      ++any_rows;
      EXPECT_EQ(row.model, ModelKind::naive_bayes);
      EXPECT_EQ(row.scope, Scope::global);
      EXPECT_EQ(row.n_reference, db.size() - 1);
    }
  }
  EXPECT_EQ(any_rows, 1u);
  // deterministic rendering
  EXPECT_EQ(report.to_text(), emit_report(results).to_text());
  EXPECT_NE(report.to_csv().find("model_kind,metric_kind,scope"), std::string::npos);
}

TEST(EmitReport, SingleConfigMakesSingleRow) {
  const auto [db, truth] = generate_synthetic(small_config(10));
  const Cohort cohort = select_cohort(db, truth, 0, 12, 0.05, 2);
  DetectorConfig config;
  config.scope = Scope::local;
  config.k = 15;
  const auto results = run_loo(db, cohort, {config});
  const EvalReport report = emit_report(results);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].n_reference, 15u);
  EXPECT_EQ(report.rows[0].metric, "euclidean");
}

TEST(LabelPermutation, DestroysMetricAdvantage) {
  // With cohort labels shuffled, the NCA-over-Euclidean advantage averages
  // out to about zero.
  double advantage = 0.0;
  int trials = 0;
  std::mt19937_64 shuffle_rng(123);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SyntheticConfig config = SyntheticConfig::defaults();
    config.n_cases = 400;
    config.seed = seed;
    const auto [db, truth] = generate_synthetic(config);
    Cohort cohort = select_cohort(db, truth, 10, 40, 0.2, seed);
    std::shuffle(cohort.labels.begin(), cohort.labels.end(), shuffle_rng);
    bool pos = false, neg = false;
    for (auto l : cohort.labels) (l ? pos : neg) = true;
    if (!pos || !neg) continue;

    DetectorConfig euclid;
    euclid.model_kind = ModelKind::softmax;
    DetectorConfig nca = euclid;
    nca.metric_kind = MetricKind::nca;
    nca.nca.max_iterations = 15;
    nca.nca.epsilon_reg = 1.5;
    RunLooOptions opts;
    opts.jobs = 2;
    opts.refit_per_case = false;
    const auto results = run_loo(db, cohort, {euclid, nca}, opts);

    auto pauc = [](const LooResult& r) {
      std::vector<std::pair<double, bool>> s;
      for (const auto& rec : r.records) s.emplace_back(rec.posterior, rec.label);
      return partial_auc_norm(roc_curve(s));
    };
    advantage += pauc(results[1]) - pauc(results[0]);
    ++trials;
  }
  ASSERT_GT(trials, 0);
  EXPECT_LT(std::abs(advantage / trials), 8.0);
}

}  // namespace
