#pragma once

// Single-layer LSTM forecaster with a scalar linear head, trained full-batch with Adam
// on mean squared error. Gate equations:
//   f, i, o = sigmoid(W x + U h + b),  g = tanh(W x + U h + b)
//   c <- f*c + i*g,  h <- o*tanh(c),   prediction = w_out . h_T + b_out
// Weights for the four gates are stacked row-wise in the order f, i, o, g.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "exocast/date.hpp"
#include "exocast/error.hpp"
#include "exocast/features.hpp"
#include "exocast/rng.hpp"
#include "exocast/text.hpp"

namespace exocast {

struct WindowSpec {
  std::size_t width = 24;
  std::size_t horizon = 1;

  void validate() const {
    if (width < 2) fail(Errc::InvalidArgument, "window width must be >= 2");
    if (horizon != 1) fail(Errc::InvalidArgument, "only a one-day horizon is supported");
  }
  [[nodiscard]] std::size_t input_length() const { return width - horizon; }
};

/// Stride-1 windows over one frame. Window k reads rows [k, k+L) as inputs (L = width-1)
/// and predicts the close of row k+L, which is the target column of row k+L-1. The whole
/// width-day span therefore lies inside the frame it was cut from.
struct WindowedDataset {
  std::size_t steps = 0;
  std::size_t features = 0;
  std::vector<Eigen::MatrixXd> inputs;  // each steps x features
  Eigen::VectorXd targets;
  std::vector<Date> start_dates;
  std::vector<Date> target_dates;
  std::vector<std::size_t> start_rows;   // first input row, offset into the source frame
  std::vector<std::size_t> target_rows;  // day whose close is predicted
  std::vector<std::string> feature_names;

  [[nodiscard]] std::size_t size() const { return inputs.size(); }

  [[nodiscard]] WindowedDataset subset(std::span<const std::size_t> idx) const {
    WindowedDataset out;
    out.steps = steps;
    out.features = features;
    out.feature_names = feature_names;
    out.targets.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.inputs.push_back(inputs[idx[k]]);
      out.targets[static_cast<Eigen::Index>(k)] = targets[static_cast<Eigen::Index>(idx[k])];
      out.start_dates.push_back(start_dates[idx[k]]);
      out.target_dates.push_back(target_dates[idx[k]]);
      out.start_rows.push_back(start_rows[idx[k]]);
      out.target_rows.push_back(target_rows[idx[k]]);
    }
    return out;
  }
};

/// `row_offset` is added to the recorded row indices, so windows cut from a split block
/// can be traced back to rows of the full frame.
inline WindowedDataset make_windows(const FeatureFrame& frame, const WindowSpec& spec, std::size_t row_offset = 0) {
  spec.validate();
  if (frame.rows() < spec.width)
    fail(Errc::TooFewRows, std::to_string(frame.rows()) + " rows < window width " + std::to_string(spec.width));
  const std::size_t target_col = frame.target_index();
  const std::size_t len = spec.input_length();
  WindowedDataset ds;
  ds.steps = len;
  for (std::size_t j = 0; j < frame.cols(); ++j)
    if (j != target_col) ds.feature_names.push_back(frame.column_names[j]);
  ds.features = ds.feature_names.size();
  if (ds.features == 0) fail(Errc::ShapeMismatch, "frame has no predictor columns");
  const std::size_t count = frame.rows() - spec.width + 1;
  ds.targets.resize(static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    Eigen::MatrixXd window(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(ds.features));
    for (std::size_t t = 0; t < len; ++t) {
      std::size_t c = 0;
      for (std::size_t j = 0; j < frame.cols(); ++j) {
        if (j == target_col) continue;
        window(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c++)) =
            frame.values(static_cast<Eigen::Index>(k + t), static_cast<Eigen::Index>(j));
      }
    }
    ds.inputs.push_back(std::move(window));
    ds.targets[static_cast<Eigen::Index>(k)] =
        frame.values(static_cast<Eigen::Index>(k + len - 1), static_cast<Eigen::Index>(target_col));
    ds.start_dates.push_back(frame.dates[k]);
    ds.target_dates.push_back(frame.dates[k + len]);
    ds.start_rows.push_back(row_offset + k);
    ds.target_rows.push_back(row_offset + k + len);
  }
  return ds;
}

/// Time-major view of many windows: steps[t] is features x batch.
struct SequenceBatch {
  std::vector<Eigen::MatrixXd> steps;
  Eigen::RowVectorXd targets;

  [[nodiscard]] std::size_t batch_size() const { return static_cast<std::size_t>(targets.size()); }
  [[nodiscard]] std::size_t input_size() const {
    return steps.empty() ? 0 : static_cast<std::size_t>(steps.front().rows());
  }
};

inline SequenceBatch make_batch(const WindowedDataset& ds) {
  if (ds.size() == 0) fail(Errc::EmptyDataset, "no windows");
  SequenceBatch b;
  const auto B = static_cast<Eigen::Index>(ds.size());
  b.steps.assign(ds.steps, Eigen::MatrixXd(static_cast<Eigen::Index>(ds.features), B));
  for (Eigen::Index k = 0; k < B; ++k)
    for (std::size_t t = 0; t < ds.steps; ++t)
      b.steps[t].col(k) = ds.inputs[static_cast<std::size_t>(k)].row(static_cast<Eigen::Index>(t)).transpose();
  b.targets = ds.targets.transpose();
  return b;
}

enum class Gate : int { Forget = 0, Input = 1, Output = 2, Cell = 3 };

struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Eigen::MatrixXd W;  // 4H x I
  Eigen::MatrixXd U;  // 4H x H
  Eigen::VectorXd b;  // 4H
  Eigen::VectorXd w_out;  // H
  double b_out = 0.0;

  static LstmParams zeros(std::size_t input, std::size_t hidden) {
    LstmParams p;
    p.input_size = input;
    p.hidden_size = hidden;
    const auto H = static_cast<Eigen::Index>(hidden), I = static_cast<Eigen::Index>(input);
    p.W = Eigen::MatrixXd::Zero(4 * H, I);
    p.U = Eigen::MatrixXd::Zero(4 * H, H);
    p.b = Eigen::VectorXd::Zero(4 * H);
    p.w_out = Eigen::VectorXd::Zero(H);
    return p;
  }

  [[nodiscard]] auto W_gate(Gate g) const {
    const auto H = static_cast<Eigen::Index>(hidden_size);
    return W.middleRows(static_cast<int>(g) * H, H);
  }
  [[nodiscard]] auto U_gate(Gate g) const {
    const auto H = static_cast<Eigen::Index>(hidden_size);
    return U.middleRows(static_cast<int>(g) * H, H);
  }
  [[nodiscard]] auto b_gate(Gate g) const {
    const auto H = static_cast<Eigen::Index>(hidden_size);
    return b.segment(static_cast<int>(g) * H, H);
  }

  [[nodiscard]] std::size_t parameter_count() const {
    return static_cast<std::size_t>(W.size() + U.size() + b.size() + w_out.size() + 1);
  }

  [[nodiscard]] Eigen::VectorXd flatten() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index at = 0;
    for (const Eigen::MatrixXd* m : {&W, &U}) {
      flat.segment(at, m->size()) = Eigen::Map<const Eigen::VectorXd>(m->data(), m->size());
      at += m->size();
    }
    flat.segment(at, b.size()) = b;
    at += b.size();
    flat.segment(at, w_out.size()) = w_out;
    at += w_out.size();
    flat[at] = b_out;
    return flat;
  }

  void assign(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count())
      fail(Errc::ShapeMismatch, "flat parameter vector has wrong length");
    Eigen::Index at = 0;
    for (Eigen::MatrixXd* m : {&W, &U}) {
      Eigen::Map<Eigen::VectorXd>(m->data(), m->size()) = flat.segment(at, m->size());
      at += m->size();
    }
    b = flat.segment(at, b.size());
    at += b.size();
    w_out = flat.segment(at, w_out.size());
    at += w_out.size();
    b_out = flat[at];
  }

  [[nodiscard]] bool all_finite() const {
    return W.allFinite() && U.allFinite() && b.allFinite() && w_out.allFinite() && std::isfinite(b_out);
  }

  friend bool operator==(const LstmParams& a, const LstmParams& b) {
    return a.input_size == b.input_size && a.hidden_size == b.hidden_size && a.W == b.W && a.U == b.U &&
           a.b == b.b && a.w_out == b.w_out && a.b_out == b.b_out;
  }
};

/// Activations of one forward pass, kept for backpropagation. Index t is the time step.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> f, i, o, g, c, tanh_c, h;  // each H x B
  Eigen::RowVectorXd predictions;
};

namespace detail {
// Both activations go through Eigen's packet exp, which vectorizes where std::tanh does not.
// exp overflowing to +inf still yields the correct limits 0 and -1.
template <typename Derived>
inline Eigen::MatrixXd sigmoid(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

template <typename Derived>
inline Eigen::MatrixXd tanh(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

inline void check_shapes(const LstmParams& p, const SequenceBatch& batch) {
  const auto H = static_cast<Eigen::Index>(p.hidden_size), I = static_cast<Eigen::Index>(p.input_size);
  if (p.W.rows() != 4 * H || p.W.cols() != I || p.U.rows() != 4 * H || p.U.cols() != H || p.b.size() != 4 * H ||
      p.w_out.size() != H)
    fail(Errc::ShapeMismatch, "inconsistent LSTM parameter shapes");
  if (batch.steps.empty()) fail(Errc::ShapeMismatch, "batch has no time steps");
  for (const auto& x : batch.steps)
    if (x.rows() != I || x.cols() != batch.targets.size())
      fail(Errc::ShapeMismatch, "batch input has " + std::to_string(x.rows()) + " features, model expects " +
                                    std::to_string(I));
}
}  // namespace detail

inline ForwardCache lstm_forward(const LstmParams& p, const SequenceBatch& batch) {
  detail::check_shapes(p, batch);
  const auto H = static_cast<Eigen::Index>(p.hidden_size);
  const auto B = batch.targets.size();
  ForwardCache cache;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(H, B);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(H, B);
  for (const auto& x : batch.steps) {
    Eigen::MatrixXd z = p.W * x + p.U * h;
    z.colwise() += p.b;
    Eigen::MatrixXd f = detail::sigmoid(z.middleRows(0, H));
    Eigen::MatrixXd i = detail::sigmoid(z.middleRows(H, H));
    Eigen::MatrixXd o = detail::sigmoid(z.middleRows(2 * H, H));
    Eigen::MatrixXd g = detail::tanh(z.middleRows(3 * H, H));
    c = (f.array() * c.array() + i.array() * g.array()).matrix();
    Eigen::MatrixXd tc = detail::tanh(c);
    h = (o.array() * tc.array()).matrix();
    cache.f.push_back(std::move(f));
    cache.i.push_back(std::move(i));
    cache.o.push_back(std::move(o));
    cache.g.push_back(std::move(g));
    cache.c.push_back(c);
    cache.tanh_c.push_back(std::move(tc));
    cache.h.push_back(h);
  }
  cache.predictions = (p.w_out.transpose() * h).array() + p.b_out;
  if (!cache.predictions.allFinite()) fail(Errc::NonFiniteActivation, "forward pass produced a non-finite value");
  return cache;
}

struct SingleForward {
  double prediction = 0.0;
  ForwardCache cache;
};

/// Forward pass over one window (steps x features).
inline SingleForward lstm_forward(const LstmParams& p, const Eigen::MatrixXd& window) {
  SequenceBatch batch;
  for (Eigen::Index t = 0; t < window.rows(); ++t) batch.steps.push_back(window.row(t).transpose());
  batch.targets = Eigen::RowVectorXd::Zero(1);
  auto cache = lstm_forward(p, batch);
  const double pred = cache.predictions[0];
  return {pred, std::move(cache)};
}

inline double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    fail(Errc::LengthMismatch, "mse_loss needs equal nonzero lengths");
  double sum = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double d = predictions[k] - targets[k];
    sum += d * d;
  }
  return sum / static_cast<double>(predictions.size());
}

inline double mse_loss(const Eigen::RowVectorXd& predictions, const Eigen::RowVectorXd& targets) {
  return mse_loss(std::span<const double>(predictions.data(), static_cast<std::size_t>(predictions.size())),
                  std::span<const double>(targets.data(), static_cast<std::size_t>(targets.size())));
}

struct LossAndGradient {
  double loss = 0.0;
  LstmParams gradient;  // same shapes as the parameters
};

/// Exact gradient of the batch-mean squared error, backpropagated through every step.
inline LossAndGradient bptt_gradients(const LstmParams& p, const SequenceBatch& batch) {
  if (batch.batch_size() == 0) fail(Errc::EmptyDataset, "empty batch");
  const auto cache = lstm_forward(p, batch);
  const auto H = static_cast<Eigen::Index>(p.hidden_size);
  const auto B = batch.targets.size();
  const std::size_t T = batch.steps.size();

  LossAndGradient out;
  out.loss = mse_loss(cache.predictions, batch.targets);
  auto& grad = out.gradient;
  grad = LstmParams::zeros(p.input_size, p.hidden_size);

  const Eigen::RowVectorXd dpred = 2.0 * (cache.predictions - batch.targets) / static_cast<double>(B);
  grad.w_out = cache.h.back() * dpred.transpose();
  grad.b_out = dpred.sum();

  Eigen::MatrixXd dh = p.w_out * dpred;  // H x B
  Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(H, B);
  Eigen::MatrixXd dz(4 * H, B);
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(H, B);
  for (std::size_t t = T; t-- > 0;) {
    const auto& f = cache.f[t].array();
    const auto& i = cache.i[t].array();
    const auto& o = cache.o[t].array();
    const auto& g = cache.g[t].array();
    const auto& tc = cache.tanh_c[t].array();
    const Eigen::MatrixXd& c_prev = t > 0 ? cache.c[t - 1] : zeros;
    const Eigen::MatrixXd& h_prev = t > 0 ? cache.h[t - 1] : zeros;

    dc.array() += dh.array() * o * (1.0 - tc.square());
    dz.middleRows(0, H) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
    dz.middleRows(H, H) = (dc.array() * g * i * (1.0 - i)).matrix();
    dz.middleRows(2 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dz.middleRows(3 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();

    grad.W.noalias() += dz * batch.steps[t].transpose();
    grad.U.noalias() += dz * h_prev.transpose();
    grad.b += dz.rowwise().sum();
    dh.noalias() = p.U.transpose() * dz;
    dc.array() *= f;
  }
  return out;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  static AdamState fresh(std::size_t n) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))};
  }
  friend bool operator==(const AdamState& a, const AdamState& b) { return a.m == b.m && a.v == b.v; }
};

/// One bias-corrected Adam update in place. `step` counts from 1.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
                      const AdamConfig& config, std::size_t step) {
  if (step < 1) fail(Errc::InvalidArgument, "adam step index starts at 1");
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    fail(Errc::ShapeMismatch, "adam vectors differ in length");
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  params.array() -=
      config.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.epsilon);
}

struct TrainConfig {
  std::size_t hidden_size = 32;
  AdamConfig adam;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden_size < 1) fail(Errc::InvalidArgument, "hidden_size must be >= 1");
    if (!(adam.learning_rate > 0.0)) fail(Errc::InvalidArgument, "learning_rate must be > 0");
    if (max_epochs < 1) fail(Errc::InvalidArgument, "max_epochs must be >= 1");
  }
};

/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1, other biases 0.
inline LstmParams init_params(std::size_t input_size, std::size_t hidden_size, std::uint64_t seed) {
  auto p = LstmParams::zeros(input_size, hidden_size);
  Rng rng(derive_seed(seed, 0x157));
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  auto fill = [&](auto& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-a, a);
  };
  fill(p.W);
  fill(p.U);
  fill(p.w_out);
  p.b.segment(0, static_cast<Eigen::Index>(hidden_size)).setOnes();
  return p;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // before that epoch's update
  double val_loss = 0.0;    // after it
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct LstmModel {
  LstmParams params;
  TrainConfig config;
  std::vector<std::string> feature_names;
};

struct TrainResult {
  LstmModel model;
  TrainReport report;
};

/// Full-batch training with early stopping on validation loss. Keeps the parameters with
/// the lowest validation loss.
inline TrainResult train_lstm(const WindowedDataset& train, const WindowedDataset& val, const TrainConfig& config) {
  config.validate();
  if (train.size() == 0 || val.size() == 0) fail(Errc::DatasetMismatch, "training and validation sets must be nonempty");
  if (train.features != val.features || train.steps != val.steps)
    fail(Errc::DatasetMismatch, "train has " + std::to_string(train.features) + " features, validation " +
                                    std::to_string(val.features));
  const auto train_batch = make_batch(train);
  const auto val_batch = make_batch(val);

  TrainResult result;
  result.model.config = config;
  result.model.feature_names = train.feature_names;
  LstmParams params = init_params(train.features, config.hidden_size, config.seed);
  LstmParams best = params;
  Eigen::VectorXd flat = params.flatten();
  AdamState state = AdamState::fresh(static_cast<std::size_t>(flat.size()));
  auto& report = result.report;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double train_loss = 0.0, val_loss = 0.0;
    try {
      auto lg = bptt_gradients(params, train_batch);
      train_loss = lg.loss;
      if (!std::isfinite(train_loss) || !lg.gradient.all_finite())
        fail(Errc::DivergedLoss, "non-finite training loss at epoch " + std::to_string(epoch));
      adam_step(flat, lg.gradient.flatten(), state, config.adam, epoch);
      params.assign(flat);
      val_loss = mse_loss(lstm_forward(params, val_batch).predictions, val_batch.targets);
    } catch (const Error& e) {
      if (e.code() == Errc::NonFiniteActivation)
        fail(Errc::DivergedLoss, "non-finite activation at epoch " + std::to_string(epoch));
      throw;
    }
    if (!std::isfinite(val_loss)) fail(Errc::DivergedLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
    report.epochs.push_back({epoch, train_loss, val_loss});
    if (val_loss < report.best_val_loss) {
      report.best_val_loss = val_loss;
      report.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else {
      ++since_best;
    }
    report.stopped_epoch = epoch;
    if (since_best >= config.patience) break;
  }
  result.model.params = std::move(best);
  return result;
}

inline Eigen::RowVectorXd predict(const LstmModel& model, const WindowedDataset& ds) {
  if (ds.features != model.params.input_size)
    fail(Errc::DatasetMismatch, "dataset has " + std::to_string(ds.features) + " features, model expects " +
                                    std::to_string(model.params.input_size));
  return lstm_forward(model.params, make_batch(ds)).predictions;
}

struct ForecastMetrics {
  double mae_normalized = 0.0;
  double loss_normalized = 0.0;  // MSE
  double mae_price_units = 0.0;
  std::vector<double> predictions_normalized;
  std::vector<double> actuals_normalized;
  std::vector<double> predictions_price;
  std::vector<double> actuals_price;
};

/// Test metrics in z-score units plus MAE mapped back to prices through the target's
/// normalizer parameters.
inline ForecastMetrics evaluate_forecaster(const LstmModel& model, const WindowedDataset& ds,
                                           const Normalizer& normalizer, const std::string& target_name) {
  if (ds.size() == 0) fail(Errc::DatasetMismatch, "empty evaluation set");
  const auto preds = predict(model, ds);
  ForecastMetrics m;
  const auto j = normalizer.index_of(target_name);
  double abs_norm = 0.0, sq_norm = 0.0, abs_price = 0.0;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const double p = preds[static_cast<Eigen::Index>(k)];
    const double a = ds.targets[static_cast<Eigen::Index>(k)];
    const double pp = p * normalizer.stds[j] + normalizer.means[j];
    const double ap = a * normalizer.stds[j] + normalizer.means[j];
    abs_norm += std::abs(p - a);
    sq_norm += (p - a) * (p - a);
    abs_price += std::abs(pp - ap);
    m.predictions_normalized.push_back(p);
    m.actuals_normalized.push_back(a);
    m.predictions_price.push_back(pp);
    m.actuals_price.push_back(ap);
  }
  const double n = static_cast<double>(ds.size());
  m.mae_normalized = abs_norm / n;
  m.loss_normalized = sq_norm / n;
  m.mae_price_units = abs_price / n;
  return m;
}

using GradientFn = std::function<LossAndGradient(const LstmParams&, const SequenceBatch&)>;

/// Max relative error between `analytic` and central finite differences over every
/// parameter: |a - n| / max(|a|, |n|, 1e-8).
inline double gradient_check(const LstmParams& params, const SequenceBatch& batch, const GradientFn& analytic,
                             double step = 1e-5) {
  const Eigen::VectorXd ga = analytic(params, batch).gradient.flatten();
  Eigen::VectorXd theta = params.flatten();
  LstmParams probe = params;
  auto loss_at = [&](const Eigen::VectorXd& v) {
    probe.assign(v);
    return mse_loss(lstm_forward(probe, batch).predictions, batch.targets);
  };
  double worst = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + step;
    const double up = loss_at(theta);
    theta[k] = saved - step;
    const double down = loss_at(theta);
    theta[k] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(ga[k]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(ga[k] - numeric) / denom);
  }
  return worst;
}

struct GradientCheckConfig {
  std::size_t hidden_size = 4;
  std::size_t input_size = 3;
  std::size_t steps = 23;
  std::size_t windows = 3;
  double step = 1e-5;
};

/// Random small model and batch drawn from `seed`, checked against `bptt_gradients`.
inline double gradient_check(const GradientCheckConfig& config, std::uint64_t seed) {
  if (config.hidden_size > 8 || config.windows > 3 || config.windows < 1)
    fail(Errc::InvalidArgument, "gradient check expects hidden <= 8 and 1..3 windows");
  LstmParams p = init_params(config.input_size, config.hidden_size, seed);
  Rng rng(derive_seed(seed, 1));
  for (Eigen::Index k = 0; k < p.b.size(); ++k) p.b[k] += rng.uniform(-0.5, 0.5);
  p.b_out = rng.uniform(-0.5, 0.5);
  SequenceBatch batch;
  const auto B = static_cast<Eigen::Index>(config.windows);
  for (std::size_t t = 0; t < config.steps; ++t) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(config.input_size), B);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
    batch.steps.push_back(std::move(x));
  }
  batch.targets.resize(B);
  for (Eigen::Index k = 0; k < B; ++k) batch.targets[k] = rng.normal();
  return gradient_check(p, batch, bptt_gradients, config.step);
}

inline nlohmann::json to_json(const LstmModel& model) {
  const auto& p = model.params;
  nlohmann::json j;
  j["format"] = "exocast.lstm";
  j["version"] = 1;
  j["input_size"] = p.input_size;
  j["hidden_size"] = p.hidden_size;
  j["feature_names"] = model.feature_names;
  j["seed"] = model.config.seed;
  j["config"] = {{"hidden_size", model.config.hidden_size},
                 {"learning_rate", model.config.adam.learning_rate},
                 {"beta1", model.config.adam.beta1},
                 {"beta2", model.config.adam.beta2},
                 {"epsilon", model.config.adam.epsilon},
                 {"max_epochs", model.config.max_epochs},
                 {"patience", model.config.patience}};
  auto row_major = [](const auto& m) {
    std::vector<double> out;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    return out;
  };
  auto& tensors = j["tensors"];
  static constexpr const char* gate_names[] = {"f", "i", "o", "g"};
  for (int g = 0; g < 4; ++g) {
    const auto gate = static_cast<Gate>(g);
    tensors[std::string("W_") + gate_names[g]] = {{"shape", {p.hidden_size, p.input_size}},
                                                  {"data", row_major(p.W_gate(gate))}};
    tensors[std::string("U_") + gate_names[g]] = {{"shape", {p.hidden_size, p.hidden_size}},
                                                  {"data", row_major(p.U_gate(gate))}};
    tensors[std::string("b_") + gate_names[g]] = {{"shape", {p.hidden_size}}, {"data", row_major(p.b_gate(gate))}};
  }
  tensors["w_out"] = {{"shape", {p.hidden_size}}, {"data", row_major(p.w_out)}};
  tensors["b_out"] = {{"shape", nlohmann::json::array()}, {"data", {p.b_out}}};
  return j;
}

inline LstmModel lstm_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "exocast.lstm" || j.value("version", 0) != 1)
    fail(Errc::InvalidArgument, "not a version-1 LSTM document");
  LstmModel model;
  const auto I = j.at("input_size").get<std::size_t>(), H = j.at("hidden_size").get<std::size_t>();
  model.params = LstmParams::zeros(I, H);
  model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  model.config.seed = j.at("seed").get<std::uint64_t>();
  const auto& c = j.at("config");
  model.config.hidden_size = c.at("hidden_size").get<std::size_t>();
  model.config.adam = {c.at("learning_rate").get<double>(), c.at("beta1").get<double>(), c.at("beta2").get<double>(),
                       c.at("epsilon").get<double>()};
  model.config.max_epochs = c.at("max_epochs").get<std::size_t>();
  model.config.patience = c.at("patience").get<std::size_t>();
  auto load = [&](const std::string& name, auto&& block) {
    const auto data = j.at("tensors").at(name).at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(block.size())) fail(Errc::ShapeMismatch, "tensor " + name);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index col = 0; col < block.cols(); ++col) block(r, col) = data[k++];
  };
  auto& p = model.params;
  const auto Hi = static_cast<Eigen::Index>(H);
  static constexpr const char* gate_names[] = {"f", "i", "o", "g"};
  for (int g = 0; g < 4; ++g) {
    load(std::string("W_") + gate_names[g], p.W.middleRows(g * Hi, Hi));
    load(std::string("U_") + gate_names[g], p.U.middleRows(g * Hi, Hi));
    load(std::string("b_") + gate_names[g], p.b.segment(g * Hi, Hi));
  }
  load("w_out", p.w_out);
  p.b_out = j.at("tensors").at("b_out").at("data").at(0).get<double>();
  return model;
}

inline void write_train_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : report.epochs)
    out << e.epoch << ',' << text::format_double(e.train_loss) << ',' << text::format_double(e.val_loss) << '\n';
}

}  // namespace exocast
