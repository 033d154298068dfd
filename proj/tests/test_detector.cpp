#include <gtest/gtest.h>

#include <random>

#include "conad/detector.hpp"
#include "test_util.hpp"

using namespace conad;

namespace {

TEST(Flag, StrictThresholdConvention) {
  EXPECT_TRUE(flag(0.04, 0.05));
  EXPECT_FALSE(flag(0.05, 0.05));  // boundary is not anomalous
  EXPECT_FALSE(flag(0.9, 0.05));
  EXPECT_THROW(flag(-0.1, 0.05), Error);
  EXPECT_THROW(flag(0.5, 1.5), Error);
}

TEST(Flag, MonotoneInThreshold) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double posterior = unif(rng);
    const double low = unif(rng);
    const double high = std::min(1.0, low + unif(rng) * (1.0 - low));
    if (flag(posterior, low)) EXPECT_TRUE(flag(posterior, high) || high == low);
  }
}

Dataset unanimous_dataset(int n, int target) {
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < n; ++i) rows.push_back({1, 0, 1, target});
  return test_util::make_dataset(rows);
}

TEST(ScoreCase, UnanimousNeighborhoodIsNotAnomalous) {
  const Dataset db = unanimous_dataset(30, 1);
  Instance x;
  x.values = (Eigen::VectorXd(4) << 1, 0, 1, 1).finished();
  DetectorConfig config;
  config.model_kind = ModelKind::softmax;
  const auto metric = GeneralizedMetric::identity(3);
  const AnomalyScore score = score_case("query", x, db, config, metric);
  EXPECT_GT(score.posterior, 0.99);
  EXPECT_FALSE(score.is_anomaly);
}

TEST(ScoreCase, FlippedMinorityAmongFortyIdenticalNeighbors) {
  // 40 identical-context references, 39 with the opposite target: the
  // held-out case's observed value gets posterior exactly 1/40 < 0.05.
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 39; ++i) rows.push_back({1, 1, 0, 1});
  rows.push_back({1, 1, 0, 0});
  // a few far-away cases that local scope must exclude
  for (int i = 0; i < 5; ++i) rows.push_back({0, 0, 1, 0});
  const Dataset db = test_util::make_dataset(rows);

  Instance x;
  x.values = (Eigen::VectorXd(4) << 1, 1, 0, 0).finished();  // observed the minority value
  DetectorConfig config;
  config.model_kind = ModelKind::softmax;
  config.scope = Scope::local;
  config.k = 40;
  const AnomalyScore score =
      score_case("query", x, db, config, GeneralizedMetric::identity(3));
  EXPECT_NEAR(score.posterior, 1.0 / 40.0, 1e-12);
  EXPECT_TRUE(score.is_anomaly);
}

TEST(ScoreCase, GlobalNaiveBayesEqualsPlainModel) {
  std::mt19937_64 rng(7);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 25; ++i) {
    std::vector<int> row(4);
    for (auto& v : row) v = static_cast<int>(rng() % 2);
    rows.push_back(row);
  }
  const Dataset db = test_util::make_dataset(rows);
  const Dataset rest = db.without("case0");
  const Instance held = db.instance(0);

  DetectorConfig config;
  config.model_kind = ModelKind::naive_bayes;
  config.scope = Scope::global;
  const AnomalyScore score =
      score_case("case0", held, rest, config, GeneralizedMetric::identity(3));

  const NaiveBayesModel model = nb_fit(rest);
  const Projection q = project(held, db.schema());
  EXPECT_EQ(score.posterior, nb_predict(model, q.context).probability_of(q.target));
}

TEST(ScoreCase, LeaveOneOutViolationRejected) {
  const Dataset db = unanimous_dataset(5, 1);
  const Instance x = db.instance(2);
  DetectorConfig config;
  try {
    score_case("case2", x, db, config, GeneralizedMetric::identity(3));
    FAIL() << "expected leave-one-out violation";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("leave-one-out"), std::string::npos);
  }
}

TEST(ScoreCase, EmptyDatabaseRejected) {
  const Dataset db = unanimous_dataset(1, 1);
  DetectorConfig config;
  EXPECT_THROW(score_case("query", db.instance(0), db.without("case0"), config,
                          GeneralizedMetric::identity(3)),
               Error);
}

TEST(ScoreCase, LocalWithLargeKMatchesGlobal) {
  std::mt19937_64 rng(11);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 20; ++i) {
    std::vector<int> row(5);
    for (auto& v : row) v = static_cast<int>(rng() % 2);
    rows.push_back(row);
  }
  const Dataset db = test_util::make_dataset(rows);
  const Dataset rest = db.without("case3");
  const Instance held = db.instance(3);

  for (ModelKind model : {ModelKind::softmax, ModelKind::naive_bayes}) {
    DetectorConfig global;
    global.scope = Scope::global;
    global.model_kind = model;
    DetectorConfig local = global;
    local.scope = Scope::local;
    local.k = 100;  // k >= n
    const auto metric = GeneralizedMetric::identity(4);
    EXPECT_EQ(score_case("case3", held, rest, global, metric).posterior,
              score_case("case3", held, rest, local, metric).posterior);
  }
}

TEST(ScoreCase, NeverReadsTheScoredCaseRow) {
  // Replacing the stored row with noise before removal must not change the
  // score the extracted case receives.
  std::mt19937_64 rng(13);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 30; ++i) {
    std::vector<int> row(5);
    for (auto& v : row) v = static_cast<int>(rng() % 2);
    rows.push_back(row);
  }
  const Dataset db = test_util::make_dataset(rows);

  DetectorConfig config;
  config.scope = Scope::local;
  config.k = 7;
  const auto metric = GeneralizedMetric::identity(4);
  for (int c = 0; c < 10; ++c) {
    const std::string id = "case" + std::to_string(c);
    const Instance held = db.instance(db.index_of(id));  // extracted before mutation
    Eigen::VectorXd noise(5);
    for (Eigen::Index i = 0; i < 5; ++i) noise[i] = static_cast<double>(rng() % 2);
    const Dataset mutated = db.with_row_replaced(id, noise);
    EXPECT_EQ(score_case(id, held, db.without(id), config, metric).posterior,
              score_case(id, held, mutated.without(id), config, metric).posterior);
  }
}

TEST(ScoreCase, PosteriorAlwaysInUnitInterval) {
  std::mt19937_64 rng(17);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 40; ++i) {
    std::vector<int> row(6);
    for (auto& v : row) v = static_cast<int>(rng() % 2);
    rows.push_back(row);
  }
  const Dataset db = test_util::make_dataset(rows);
  for (MetricKind mk : {MetricKind::euclidean, MetricKind::mahalanobis, MetricKind::rca,
                        MetricKind::nca}) {
    for (ModelKind model : {ModelKind::softmax, ModelKind::naive_bayes}) {
      DetectorConfig config;
      config.metric_kind = mk;
      config.model_kind = model;
      config.scope = Scope::local;
      config.k = 10;
      const Dataset rest = db.without("case5");
      const GeneralizedMetric metric = fit_config_metric(config, rest);
      const AnomalyScore score = score_case("case5", db.instance(5), rest, config, metric);
      EXPECT_GE(score.posterior, 0.0);
      EXPECT_LE(score.posterior, 1.0);
      EXPECT_EQ(score.is_anomaly, score.posterior < config.threshold);
    }
  }
}

TEST(DetectorConfig, Validation) {
  DetectorConfig config;
  config.threshold = 0.0;
  EXPECT_THROW(config.validate(), Error);
  config = DetectorConfig{};
  config.scope = Scope::local;
  config.k = 0;
  EXPECT_THROW(config.validate(), Error);
  config = DetectorConfig{};
  config.ridge = -1.0;
  EXPECT_THROW(config.validate(), Error);
}

TEST(DetectorConfig, MetricUsage) {
  DetectorConfig config;
  config.model_kind = ModelKind::naive_bayes;
  config.scope = Scope::global;
  EXPECT_FALSE(config.uses_metric());
  config.scope = Scope::local;
  EXPECT_TRUE(config.uses_metric());
  config.model_kind = ModelKind::softmax;
  config.scope = Scope::global;
  EXPECT_TRUE(config.uses_metric());
}

}  // namespace
