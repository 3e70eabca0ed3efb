#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "exocast/lstm.hpp"
#include "support.hpp"

namespace {

using namespace exocast;

FeatureFrame ramp_frame(std::size_t rows, std::size_t predictors = 2) {
  FeatureFrame f;
  f.target_name = "target_next_close";
  for (std::size_t j = 0; j < predictors; ++j) {
    f.column_names.push_back("x" + std::to_string(j));
    f.groups.push_back(ColumnGroup::Market);
  }
  f.column_names.push_back(f.target_name);
  f.groups.push_back(ColumnGroup::Target);
  f.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(predictors + 1));
  for (std::size_t i = 0; i < rows; ++i) {
    f.dates.push_back(Date(2020, 1, 1) + static_cast<std::int64_t>(i));
    for (std::size_t j = 0; j <= predictors; ++j)
      f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(100 * j + i);
  }
  return f;
}

// One column s_t = sin(0.2 t), target s_{t+1}.
FeatureFrame sine_frame(std::size_t rows) {
  FeatureFrame f;
  f.target_name = "target_next_close";
  f.column_names = {"s", f.target_name};
  f.groups = {ColumnGroup::Market, ColumnGroup::Target};
  f.values.resize(static_cast<Eigen::Index>(rows), 2);
  for (std::size_t i = 0; i < rows; ++i) {
    f.dates.push_back(Date(2020, 1, 1) + static_cast<std::int64_t>(i));
    f.values(static_cast<Eigen::Index>(i), 0) = std::sin(0.2 * static_cast<double>(i));
    f.values(static_cast<Eigen::Index>(i), 1) = std::sin(0.2 * static_cast<double>(i + 1));
  }
  return f;
}

SequenceBatch random_batch(Rng& rng, std::size_t inputs, std::size_t steps, std::size_t windows) {
  SequenceBatch b;
  for (std::size_t t = 0; t < steps; ++t)
    b.steps.push_back(Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(inputs),
                                                   static_cast<Eigen::Index>(windows), [&] { return rng.normal(); }));
  b.targets = Eigen::RowVectorXd::NullaryExpr(static_cast<Eigen::Index>(windows), [&] { return rng.normal(); });
  return b;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

TEST(Windows, Counts) {
  EXPECT_EQ(make_windows(ramp_frame(30), {}).size(), 7u);
  EXPECT_EQ(make_windows(ramp_frame(24), {}).size(), 1u);
  EXPECT_EQ(make_windows(ramp_frame(244), {}).size(), 221u);
  EXPECT_ERRC(Errc::TooFewRows, make_windows(ramp_frame(23), {}));
}

TEST(Windows, ContentsAndTargets) {
  const auto f = ramp_frame(30);
  const auto ds = make_windows(f, {}, 100);
  EXPECT_EQ(ds.steps, 23u);
  EXPECT_EQ(ds.features, 2u);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"x0", "x1"}));
  for (std::size_t k = 0; k < ds.size(); ++k) {
    for (std::size_t t = 0; t < 23; ++t) {
      EXPECT_EQ(ds.inputs[k](static_cast<Eigen::Index>(t), 0), static_cast<double>(k + t));
      EXPECT_EQ(ds.inputs[k](static_cast<Eigen::Index>(t), 1), static_cast<double>(100 + k + t));
    }
    // The target column of the last input row holds the close of the following day.
    EXPECT_EQ(ds.targets[static_cast<Eigen::Index>(k)], static_cast<double>(200 + k + 22));
    EXPECT_EQ(ds.start_dates[k], f.dates[k]);
    EXPECT_EQ(ds.target_dates[k], f.dates[k + 23]);
    EXPECT_EQ(ds.start_rows[k], 100 + k);
    EXPECT_EQ(ds.target_rows[k], 100 + k + 23);
  }
}

TEST(Forward, ZeroParamsPredictBias) {
  auto p = LstmParams::zeros(3, 4);
  p.b_out = 0.7;
  Rng rng(1);
  const auto b = random_batch(rng, 3, 23, 5);
  const auto cache = lstm_forward(p, b);
  for (Eigen::Index k = 0; k < 5; ++k) EXPECT_EQ(cache.predictions[k], 0.7);
  EXPECT_TRUE(cache.h.back().isZero());
}

TEST(Forward, ScalarUnrollMatchesHandArithmetic) {
  auto p = LstmParams::zeros(1, 1);
  p.W << 0.5, -0.3, 0.8, 0.2;   // f, i, o, g
  p.U << 0.1, 0.4, -0.2, 0.7;
  p.b << 1.0, 0.1, -0.1, 0.05;
  p.w_out << 1.5;
  p.b_out = -0.2;
  const double xs[2] = {0.9, -0.4};
  double h = 0, c = 0;
  for (double x : xs) {
    const double f = sigmoid(0.5 * x + 0.1 * h + 1.0);
    const double i = sigmoid(-0.3 * x + 0.4 * h + 0.1);
    const double o = sigmoid(0.8 * x - 0.2 * h - 0.1);
    const double g = std::tanh(0.2 * x + 0.7 * h + 0.05);
    c = f * c + i * g;
    h = o * std::tanh(c);
  }
  Eigen::MatrixXd window(2, 1);
  window << 0.9, -0.4;
  EXPECT_NEAR(lstm_forward(p, window).prediction, 1.5 * h - 0.2, 1e-15);
}

TEST(Forward, OutputBiasShiftsEveryPrediction) {
  Rng rng(2);
  auto p = init_params(3, 5, 9);
  p.b_out = 0.3;
  const auto b = random_batch(rng, 3, 10, 6);
  const auto before = lstm_forward(p, b).predictions;
  const double delta = p.b_out;
  p.b_out *= 2;
  const auto after = lstm_forward(p, b).predictions;
  for (Eigen::Index k = 0; k < 6; ++k) EXPECT_NEAR(after[k] - before[k], delta, 1e-15);
}

TEST(Forward, ShapeErrors) {
  Rng rng(3);
  const auto b = random_batch(rng, 3, 5, 2);
  EXPECT_ERRC(Errc::ShapeMismatch, lstm_forward(LstmParams::zeros(4, 2), b));
}

TEST(Forward, FeaturePermutationWithPermutedWeights) {
  Rng rng(4);
  const auto p = init_params(4, 3, 5);
  const auto b = random_batch(rng, 4, 12, 3);
  const std::vector<Eigen::Index> perm = {2, 0, 3, 1};
  auto q = p;
  SequenceBatch pb = b;
  for (std::size_t j = 0; j < 4; ++j) {
    q.W.col(static_cast<Eigen::Index>(j)) = p.W.col(perm[j]);
    for (std::size_t t = 0; t < b.steps.size(); ++t) pb.steps[t].row(static_cast<Eigen::Index>(j)) = b.steps[t].row(perm[j]);
  }
  EXPECT_LT((lstm_forward(p, b).predictions - lstm_forward(q, pb).predictions).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Loss, Examples) {
  EXPECT_EQ(mse_loss(std::vector{1.0, 2.0}, std::vector{1.0, 2.0}), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(std::vector{1.0, 2.0}, std::vector{0.0, 0.0}), 2.5);
  EXPECT_ERRC(Errc::LengthMismatch, mse_loss(std::vector{1.0}, std::vector{1.0, 2.0}));
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto a = testkit::random_vector(rng, 10), b = testkit::random_vector(rng, 10);
    double mae = 0;
    for (std::size_t i = 0; i < 10; ++i) mae += std::abs(a[i] - b[i]) / 10;
    EXPECT_GE(mse_loss(a, b), mae * mae - 1e-15);
  }
}

TEST(Bptt, ZeroParamsZeroTargets) {
  Rng rng(6);
  auto b = random_batch(rng, 2, 5, 4);
  b.targets.setZero();
  const auto lg = bptt_gradients(LstmParams::zeros(2, 3), b);
  EXPECT_EQ(lg.gradient.b_out, 0.0);
  EXPECT_EQ(lg.loss, 0.0);
}

TEST(Bptt, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) EXPECT_LT(gradient_check(GradientCheckConfig{}, seed), 1e-4);
}

TEST(Bptt, DuplicatedWindowsLeaveGradientUnchanged) {
  Rng rng(7);
  const auto p = init_params(3, 4, 1);
  const auto b = random_batch(rng, 3, 8, 3);
  SequenceBatch doubled;
  for (const auto& x : b.steps) {
    Eigen::MatrixXd d(x.rows(), 2 * x.cols());
    d << x, x;
    doubled.steps.push_back(d);
  }
  doubled.targets.resize(6);
  doubled.targets << b.targets, b.targets;
  const auto g1 = bptt_gradients(p, b).gradient.flatten(), g2 = bptt_gradients(p, doubled).gradient.flatten();
  EXPECT_LT((g1 - g2).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GradientCheck, DetectsCorruptedRecurrentGradient) {
  Rng rng(8);
  const auto p = init_params(3, 4, 2);
  const auto b = random_batch(rng, 3, 23, 3);
  const GradientFn corrupted = [](const LstmParams& params, const SequenceBatch& batch) {
    auto lg = bptt_gradients(params, batch);
    lg.gradient.U(1, 2) = lg.gradient.U(1, 2) * 1.5 + 1e-3;
    return lg;
  };
  EXPECT_LT(gradient_check(p, b, bptt_gradients), 1e-4);
  EXPECT_GT(gradient_check(p, b, corrupted), 1e-4);
}

TEST(GradientCheck, WindowOrderDoesNotMatter) {
  Rng rng(9);
  const auto p = init_params(2, 3, 3);
  const auto b = random_batch(rng, 2, 6, 3);
  SequenceBatch rev = b;
  for (auto& x : rev.steps) x = x.rowwise().reverse().eval();
  rev.targets = b.targets.reverse().eval();
  const auto g1 = bptt_gradients(p, b).gradient.flatten(), g2 = bptt_gradients(p, rev).gradient.flatten();
  EXPECT_LT((g1 - g2).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(gradient_check(p, b, bptt_gradients), gradient_check(p, rev, bptt_gradients), 1e-6);
}

TEST(Adam, Examples) {
  AdamConfig cfg;
  Eigen::VectorXd theta(3);
  theta << 1, -2, 3;
  auto state = AdamState::fresh(3);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  auto t0 = theta;
  adam_step(t0, zero, state, cfg, 1);
  EXPECT_EQ(t0, theta);

  state = AdamState::fresh(3);
  Eigen::VectorXd g(3);
  g << 0.5, -4, 1e-3;
  auto t1 = theta;
  adam_step(t1, g, state, cfg, 1);
  for (Eigen::Index k = 0; k < 3; ++k)
    EXPECT_NEAR(t1[k] - theta[k], -cfg.learning_rate * (g[k] > 0 ? 1 : -1), 1e-8);

  auto s1 = AdamState::fresh(3), s2 = AdamState::fresh(3);
  auto a = theta, b = theta;
  adam_step(a, g, s1, cfg, 1);
  adam_step(b, g, s2, cfg, 1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(s1, s2);
  EXPECT_ERRC(Errc::InvalidArgument, adam_step(a, g, s1, cfg, 0));
}

struct SineData {
  WindowedDataset train, val, test;
};

SineData sine_data() {
  const auto f = sine_frame(200);
  return {make_windows(f.slice_rows({0, 140}), {}, 0), make_windows(f.slice_rows({140, 165}), {}, 140),
          make_windows(f.slice_rows({165, 200}), {}, 165)};
}

TrainConfig sine_config() {
  TrainConfig c;
  c.hidden_size = 8;
  c.adam.learning_rate = 1e-2;
  c.max_epochs = 300;
  c.patience = 50;
  c.seed = 3;
  return c;
}

TEST(Train, SineBeatsPersistence) {
  const auto d = sine_data();
  const auto result = train_lstm(d.train, d.val, sine_config());
  const auto preds = predict(result.model, d.test);
  double mae = 0, persistence = 0;
  for (std::size_t k = 0; k < d.test.size(); ++k) {
    const double target = d.test.targets[static_cast<Eigen::Index>(k)];
    mae += std::abs(preds[static_cast<Eigen::Index>(k)] - target);
    persistence += std::abs(d.test.inputs[k](22, 0) - target);
  }
  EXPECT_LT(mae, persistence) << "model " << mae / d.test.size() << " persistence " << persistence / d.test.size();
}

TEST(Train, SineLossDecreasesOverFirstEpochs) {
  const auto d = sine_data();
  auto c = sine_config();
  c.max_epochs = 10;
  c.patience = 100;
  const auto report = train_lstm(d.train, d.val, c).report;
  ASSERT_EQ(report.epochs.size(), 10u);
  for (std::size_t e = 1; e < 10; ++e) EXPECT_LT(report.epochs[e].train_loss, report.epochs[e - 1].train_loss);
}

TEST(Train, PatienceZeroRunsOneEpoch) {
  const auto d = sine_data();
  auto c = sine_config();
  c.patience = 0;
  const auto report = train_lstm(d.train, d.val, c).report;
  EXPECT_EQ(report.epochs.size(), 1u);
  EXPECT_EQ(report.stopped_epoch, 1u);
}

TEST(Train, DeterministicAndKeepsBestEpoch) {
  const auto d = sine_data();
  auto c = sine_config();
  c.max_epochs = 40;
  const auto a = train_lstm(d.train, d.val, c), b = train_lstm(d.train, d.val, c);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.model.params, b.model.params);
  const auto val_loss = mse_loss(predict(a.model, d.val), d.val.targets.transpose());
  EXPECT_DOUBLE_EQ(val_loss, a.report.best_val_loss);
  EXPECT_EQ(a.report.epochs[a.report.best_epoch - 1].val_loss, a.report.best_val_loss);
}

TEST(Train, Errors) {
  const auto d = sine_data();
  const auto two = make_windows(ramp_frame(30), {});
  EXPECT_ERRC(Errc::DatasetMismatch, train_lstm(d.train, two, sine_config()));
  EXPECT_ERRC(Errc::DatasetMismatch, train_lstm(d.train, WindowedDataset{}, sine_config()));
  auto big = d.train;
  big.targets *= 1e200;
  EXPECT_ERRC(Errc::DivergedLoss, train_lstm(big, d.val, sine_config()));
}

TEST(Evaluate, Examples) {
  const auto f = ramp_frame(40);
  Normalizer n{f.column_names, {0, 0, 500}, {1, 1, 20}};
  auto ds = make_windows(f.slice_rows({0, 30}), {});
  ds.targets.setConstant(0.25);
  LstmModel model;
  model.params = LstmParams::zeros(2, 3);
  model.params.b_out = 0.25;
  auto m = evaluate_forecaster(model, ds, n, "target_next_close");
  EXPECT_EQ(m.mae_normalized, 0.0);
  EXPECT_EQ(m.loss_normalized, 0.0);
  EXPECT_EQ(m.mae_price_units, 0.0);

  Rng rng(10);
  for (Eigen::Index k = 0; k < ds.targets.size(); ++k) ds.targets[k] = rng.normal();
  model.params.b_out = 0.0;
  m = evaluate_forecaster(model, ds, n, "target_next_close");
  EXPECT_NEAR(m.mae_normalized, ds.targets.cwiseAbs().mean(), 1e-15);
  EXPECT_NEAR(m.mae_price_units, m.mae_normalized * 20, 1e-12);
  EXPECT_NEAR(m.actuals_price[0], ds.targets[0] * 20 + 500, 1e-12);
  EXPECT_ERRC(Errc::DatasetMismatch, evaluate_forecaster(model, WindowedDataset{}, n, "target_next_close"));
}

TEST(LstmJson, RoundTripAndLayout) {
  LstmModel m;
  m.params = init_params(3, 2, 4);
  m.config.seed = 12;
  m.feature_names = {"a", "b", "c"};
  const auto j = to_json(m);
  EXPECT_EQ(j.at("tensors").at("W_i").at("shape"), nlohmann::json({2, 3}));
  EXPECT_EQ(j.at("tensors").at("W_i").at("data")[1], m.params.W_gate(Gate::Input)(0, 1));
  const auto back = lstm_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(back.feature_names, m.feature_names);
  EXPECT_EQ(back.config.seed, 12u);
}

TEST(TrainReportCsv, Layout) {
  TrainReport r;
  r.epochs = {{1, 0.5, 0.25}, {2, 0.125, 0.375}};
  std::ostringstream out;
  write_train_report_csv(out, r);
  EXPECT_EQ(out.str(), "epoch,train_loss,val_loss\n1,0.5,0.25\n2,0.125,0.375\n");
}

}  // namespace
