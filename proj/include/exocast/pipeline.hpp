#pragma once

// Experiment orchestration: config loading, single-arm experiments, the paired
// price-only vs full-feature ablation, and report emission.

#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "exocast/error.hpp"
#include "exocast/features.hpp"
#include "exocast/forest.hpp"
#include "exocast/ingest.hpp"
#include "exocast/log.hpp"
#include "exocast/lstm.hpp"
#include "exocast/rng.hpp"
#include "exocast/select.hpp"
#include "exocast/svg.hpp"
#include "exocast/text.hpp"
#include "exocast/version.hpp"

namespace exocast {

enum class FeatureMode { PriceOnly, Full };

inline std::string_view to_string(FeatureMode m) { return m == FeatureMode::PriceOnly ? "price_only" : "full"; }

inline FeatureMode feature_mode_from_string(std::string_view s) {
  if (s == "price_only") return FeatureMode::PriceOnly;
  if (s == "full") return FeatureMode::Full;
  fail(Errc::ConfigError, "feature_mode must be 'price_only' or 'full', got '" + std::string(s) + "'");
}

struct RunConfig {
  std::filesystem::path minute_csv;
  std::filesystem::path epi_csv;
  std::string epi_scope = "global";  // "global" or a WHO country code
  Date start_date{2020, 1, 6};
  Date end_date{2020, 9, 5};
  FeatureSchema schema;
  SelectConfig select;
  bool select_in_price_only = false;
  ForestConfig forest;
  SplitSpec split;
  WindowSpec window;
  TrainConfig train;
  FeatureMode feature_mode = FeatureMode::Full;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 42;

  // Every stochastic component draws from a stream of the master seed.
  [[nodiscard]] std::uint64_t forest_seed() const { return derive_seed(seed, 1); }
  [[nodiscard]] std::uint64_t lstm_seed() const { return derive_seed(seed, 2); }

  [[nodiscard]] EpiScope scope() const {
    if (epi_scope == "global") return GlobalSum{};
    return CountryCode{epi_scope};
  }
};

namespace detail {

class TomlReader {
 public:
  TomlReader(const toml::table& root, std::string section) : section_(std::move(section)) {
    const auto* node = root.get(section_);
    if (node && !node->is_table()) fail(Errc::ConfigError, "[" + section_ + "] must be a table");
    table_ = node ? node->as_table() : nullptr;
  }

  template <typename T>
  void read(const char* key, T& into) {
    seen_.insert(key);
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node->value<bool>()) return void(into = *v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node->value<std::string>()) return void(into = *v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = node->value<double>()) return void(into = *v);
    } else if constexpr (std::is_unsigned_v<T>) {
      if (auto v = node->value<std::int64_t>(); v && *v >= 0) return void(into = static_cast<T>(*v));
    }
    fail(Errc::ConfigError, "[" + section_ + "] " + key + " has the wrong type");
  }

  void read_date(const char* key, Date& into) {
    std::string s;
    seen_.insert(key);
    if (!table_ || !table_->get(key)) return;
    if (const auto* d = table_->get(key)->as_date()) {
      into = Date(static_cast<int>(d->get().year), d->get().month, d->get().day);
      return;
    }
    read(key, s);
    auto parsed = Date::parse(s);
    if (!parsed) fail(Errc::ConfigError, "[" + section_ + "] " + key + " is not YYYY-MM-DD");
    into = *parsed;
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_)
      if (!seen_.contains(std::string(k.str())))
        fail(Errc::ConfigError, "unknown key '" + std::string(k.str()) + "' in [" + section_ + "]");
  }

 private:
  std::string section_;
  const toml::table* table_ = nullptr;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace detail

/// Parses a TOML run config. Relative data paths resolve against `base_dir`.
inline RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir = {}) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    fail(Errc::ConfigError, std::string(e.description()));
  }
  static const std::set<std::string> sections = {"data", "features", "select", "forest",
                                                 "split", "window",   "train",  "run"};
  for (const auto& [k, v] : root)
    if (!sections.contains(std::string(k.str()))) fail(Errc::ConfigError, "unknown section [" + std::string(k.str()) + "]");

  RunConfig c;
  {
    detail::TomlReader r(root, "data");
    std::string minute, epi;
    r.read("minute_csv", minute);
    r.read("epi_csv", epi);
    r.read("epi_scope", c.epi_scope);
    r.read_date("start_date", c.start_date);
    r.read_date("end_date", c.end_date);
    r.reject_unknown();
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    if (!minute.empty()) c.minute_csv = resolve(minute);
    if (!epi.empty()) c.epi_csv = resolve(epi);
  }
  {
    detail::TomlReader r(root, "features");
    r.read("epi_window", c.schema.epi_window);
    r.read("include_high_low", c.schema.include_high_low);
    r.read("include_moments", c.schema.include_moments);
    r.reject_unknown();
  }
  {
    detail::TomlReader r(root, "select");
    r.read("rf_top_k", c.select.rf_top_k);
    r.read("r_min", c.select.r_min);
    r.read("p_max", c.select.p_max);
    r.read("signed_r", c.select.signed_r);
    r.read("in_price_only", c.select_in_price_only);
    r.reject_unknown();
  }
  {
    detail::TomlReader r(root, "forest");
    std::size_t depth = 0, max_features = 0;
    r.read("n_trees", c.forest.n_trees);
    r.read("max_depth", depth);
    r.read("min_samples_leaf", c.forest.min_samples_leaf);
    r.read("max_features", max_features);
    r.read("bootstrap", c.forest.bootstrap);
    r.read("threads", c.forest.n_threads);
    r.reject_unknown();
    if (depth > 0) c.forest.max_depth = depth;
    if (max_features > 0) c.forest.max_features = max_features;
  }
  {
    detail::TomlReader r(root, "split");
    std::string order = "train-validation-test";
    r.read("train", c.split.train);
    r.read("validation", c.split.validation);
    r.read("test", c.split.test);
    r.read("order", order);
    r.reject_unknown();
    if (order == "train-validation-test")
      c.split.order = BlockOrder::TrainValidationTest;
    else if (order == "train-test-validation")
      c.split.order = BlockOrder::TrainTestValidation;
    else
      fail(Errc::ConfigError, "[split] order must be train-validation-test or train-test-validation");
  }
  {
    detail::TomlReader r(root, "window");
    r.read("width", c.window.width);
    r.read("horizon", c.window.horizon);
    r.reject_unknown();
  }
  {
    detail::TomlReader r(root, "train");
    r.read("hidden_size", c.train.hidden_size);
    r.read("learning_rate", c.train.adam.learning_rate);
    r.read("beta1", c.train.adam.beta1);
    r.read("beta2", c.train.adam.beta2);
    r.read("epsilon", c.train.adam.epsilon);
    r.read("max_epochs", c.train.max_epochs);
    r.read("patience", c.train.patience);
    r.reject_unknown();
  }
  {
    detail::TomlReader r(root, "run");
    std::string mode(to_string(c.feature_mode)), out;
    r.read("feature_mode", mode);
    r.read("seed", c.seed);
    r.read("out_dir", out);
    r.reject_unknown();
    c.feature_mode = feature_mode_from_string(mode);
    if (!out.empty()) c.out_dir = out;
  }
  try {
    c.split.validate();
    c.window.validate();
    c.train.validate();
    c.forest.validate();
    c.select.validate();
  } catch (const Error& e) {
    fail(Errc::ConfigError, e.what());
  }
  if (c.schema.epi_window < 4) fail(Errc::ConfigError, "[features] epi_window must be >= 4");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::ConfigError, "config file not found: " + path.string());
  auto c = parse_run_config(text::read_file(path), path.parent_path());
  for (const auto& p : {c.minute_csv, c.epi_csv})
    if (p.empty() || !std::filesystem::exists(p)) fail(Errc::ConfigError, "data file not found: " + p.string());
  return c;
}

/// Configuration echo embedded in reports. Paths are reported by file name only so
/// outputs do not depend on where the repository is checked out.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["data"] = {{"minute_csv", c.minute_csv.filename().string()},
               {"epi_csv", c.epi_csv.filename().string()},
               {"epi_scope", c.epi_scope},
               {"start_date", c.start_date.to_string()},
               {"end_date", c.end_date.to_string()}};
  j["features"] = {{"epi_window", c.schema.epi_window},
                   {"include_high_low", c.schema.include_high_low},
                   {"include_moments", c.schema.include_moments}};
  j["select"] = {{"rf_top_k", c.select.rf_top_k},
                 {"r_min", c.select.r_min},
                 {"p_max", c.select.p_max},
                 {"signed_r", c.select.signed_r},
                 {"in_price_only", c.select_in_price_only}};
  j["forest"] = {{"n_trees", c.forest.n_trees},
                 {"max_depth", c.forest.max_depth ? *c.forest.max_depth : 0},
                 {"min_samples_leaf", c.forest.min_samples_leaf},
                 {"max_features", c.forest.max_features ? *c.forest.max_features : 0},
                 {"bootstrap", c.forest.bootstrap}};
  j["split"] = {{"train", c.split.train},
                {"validation", c.split.validation},
                {"test", c.split.test},
                {"order", c.split.order == BlockOrder::TrainValidationTest ? "train-validation-test"
                                                                           : "train-test-validation"}};
  j["window"] = {{"width", c.window.width}, {"horizon", c.window.horizon}};
  j["train"] = {{"hidden_size", c.train.hidden_size},   {"learning_rate", c.train.adam.learning_rate},
                {"beta1", c.train.adam.beta1},          {"beta2", c.train.adam.beta2},
                {"epsilon", c.train.adam.epsilon},      {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience}};
  j["run"] = {{"feature_mode", std::string(to_string(c.feature_mode))}, {"seed", c.seed}};
  return j;
}

template <typename F>
auto run_stage(std::string_view stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw e.in_stage(stage);
  }
}

/// Reads both sources and builds the daily feature frame.
inline EngineeredFeatures build_features(const RunConfig& c) {
  const auto bars = run_stage("ingest", [&] {
    std::ifstream in(c.minute_csv);
    if (!in) fail(Errc::IoError, "cannot open " + c.minute_csv.string());
    return parse_minute_bars(in, OrderPolicy::RejectUnsorted);
  });
  const auto epi = run_stage("ingest", [&] {
    std::ifstream in(c.epi_csv);
    if (!in) fail(Errc::IoError, "cannot open " + c.epi_csv.string());
    return parse_epi_daily(in, c.scope());
  });
  const auto aligned = run_stage("align", [&] { return align_date_range(bars, epi, c.start_date, c.end_date); });
  log::info("aligned " + std::to_string(aligned.day_count()) + " days, " + std::to_string(aligned.bars().size()) +
            " bars");
  return run_stage("features", [&] {
    const auto daily = resample_daily(aligned);
    return engineer_features(daily, aligned.epi(), c.schema);
  });
}

struct ExperimentResult {
  FeatureMode feature_mode = FeatureMode::Full;
  std::vector<std::string> features;
  std::optional<SelectionReport> selection;
  ForecastMetrics test;
  std::vector<Date> prediction_dates;
  TrainReport train_report;
  std::size_t train_windows = 0, validation_windows = 0, test_windows = 0;
  RowRange train_rows, validation_rows, test_rows;
  LstmModel model;
  Normalizer normalizer;
  std::string target_name;
};

/// Columns fed to the forecaster for one arm. Selection looks at training rows only.
inline std::pair<std::vector<std::string>, std::optional<SelectionReport>> choose_features(
    const FeatureFrame& frame, const Splits& splits, const RunConfig& c, FeatureMode mode) {
  ForestConfig forest = c.forest;
  forest.master_seed = c.forest_seed();
  if (mode == FeatureMode::PriceOnly) {
    auto market = frame.names_in_group(ColumnGroup::Market);
    if (!c.select_in_price_only) return {market, std::nullopt};
    auto report = select_features(splits.train.with_predictors(market), c.select, forest);
    return {report.final_names(), report};
  }
  auto report = select_features(splits.train, c.select, forest);
  return {report.final_names(), report};
}

inline ExperimentResult run_experiment_on_frame(const FeatureFrame& frame, const RunConfig& c, FeatureMode mode) {
  ExperimentResult r;
  r.feature_mode = mode;
  r.target_name = frame.target_name;
  const auto splits = run_stage("split", [&] { return split_chronological(frame, c.split); });
  r.train_rows = splits.train_rows;
  r.validation_rows = splits.validation_rows;
  r.test_rows = splits.test_rows;

  run_stage("select", [&] {
    auto [names, report] = choose_features(frame, splits, c, mode);
    if (names.empty()) fail(Errc::EmptyDataset, "no features selected for " + std::string(to_string(mode)));
    r.features = std::move(names);
    r.selection = std::move(report);
  });

  const auto subset = frame.with_predictors(r.features);
  r.normalizer = run_stage("normalize", [&] { return fit_normalizer(subset, splits.train_rows); });
  const auto normalized = apply_normalizer(r.normalizer, subset);

  auto windows_for = [&](RowRange rows) {
    return make_windows(normalized.slice_rows(rows), c.window, rows.begin);
  };
  const auto [train_w, val_w, test_w] = run_stage("window", [&] {
    return std::make_tuple(windows_for(splits.train_rows), windows_for(splits.validation_rows),
                           windows_for(splits.test_rows));
  });
  r.train_windows = train_w.size();
  r.validation_windows = val_w.size();
  r.test_windows = test_w.size();

  TrainConfig train = c.train;
  train.seed = c.lstm_seed();
  auto trained = run_stage("train", [&] { return train_lstm(train_w, val_w, train); });
  r.model = std::move(trained.model);
  r.train_report = std::move(trained.report);
  r.test = run_stage("evaluate", [&] { return evaluate_forecaster(r.model, test_w, r.normalizer, r.target_name); });
  r.prediction_dates = test_w.target_dates;
  log::info(std::string(to_string(mode)) + ": test MAE " + text::format_fixed(r.test.mae_normalized, 4) +
            " (normalized), " + text::format_fixed(r.test.mae_price_units, 2) + " (price units), " +
            std::to_string(r.features.size()) + " features, stopped at epoch " +
            std::to_string(r.train_report.stopped_epoch));
  return r;
}

inline ExperimentResult run_experiment(const RunConfig& c) {
  const auto features = build_features(c);
  return run_experiment_on_frame(features.frame, c, c.feature_mode);
}

struct AblationReport {
  ExperimentResult baseline;   // price_only
  ExperimentResult treatment;  // full
  double delta_mae = 0.0;      // baseline - treatment, normalized units
  bool treatment_improved = false;
};

/// Both arms share split, window, training config and seed; only the feature mode differs.
/// The arms run concurrently; each arm's training is single-threaded.
inline AblationReport run_ablation_on_frame(const FeatureFrame& frame, const RunConfig& c) {
  auto baseline = std::async(std::launch::async, [&] { return run_experiment_on_frame(frame, c, FeatureMode::PriceOnly); });
  auto treatment = run_experiment_on_frame(frame, c, FeatureMode::Full);
  AblationReport report{baseline.get(), std::move(treatment)};
  if (report.baseline.prediction_dates != report.treatment.prediction_dates)
    fail(Errc::DatasetMismatch, "ablation arms evaluated different windows");
  report.delta_mae = report.baseline.test.mae_normalized - report.treatment.test.mae_normalized;
  report.treatment_improved = report.delta_mae > 0.0;
  return report;
}

inline AblationReport run_ablation(const RunConfig& c) { return run_ablation_on_frame(build_features(c).frame, c); }

inline nlohmann::json metrics_json(const ExperimentResult& r) {
  nlohmann::json j;
  j["feature_mode"] = std::string(to_string(r.feature_mode));
  j["features"] = r.features;
  j["target"] = r.target_name;
  j["test"] = {{"mae_normalized", r.test.mae_normalized},
               {"loss_normalized", r.test.loss_normalized},
               {"mae_price_units", r.test.mae_price_units},
               {"windows", r.test_windows},
               {"first_date", r.prediction_dates.empty() ? "" : r.prediction_dates.front().to_string()},
               {"last_date", r.prediction_dates.empty() ? "" : r.prediction_dates.back().to_string()}};
  j["train"] = {{"windows", r.train_windows},
                {"rows", {r.train_rows.begin, r.train_rows.end}},
                {"best_epoch", r.train_report.best_epoch},
                {"stopped_epoch", r.train_report.stopped_epoch},
                {"best_val_loss", r.train_report.best_val_loss}};
  j["validation"] = {{"windows", r.validation_windows}, {"rows", {r.validation_rows.begin, r.validation_rows.end}}};
  j["test_rows"] = {r.test_rows.begin, r.test_rows.end};
  if (r.selection) j["selection"] = to_json(*r.selection);
  return j;
}

namespace detail {
inline nlohmann::json metrics_header(const char* schema, const RunConfig& c) {
  nlohmann::json j;
  j["schema"] = schema;
  j["schema_version"] = 1;
  j["tool_version"] = kVersion;
  j["seed"] = c.seed;
  j["config"] = to_json(c);
  return j;
}
}  // namespace detail

/// Writes metrics.json, predictions.csv, predictions.svg, train_report.csv, model.json
/// and (when selection ran) selection.json. Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const ExperimentResult& r, const RunConfig& c,
                                                      const std::filesystem::path& out_dir) {
  if (r.prediction_dates.empty()) fail(Errc::InvalidArgument, "no predictions to report");
  std::vector<std::filesystem::path> written;
  auto put = [&](const char* name, const std::string& body) {
    text::write_file_atomic(out_dir / name, body);
    written.push_back(out_dir / name);
  };
  auto metrics = detail::metrics_header("exocast.experiment", c);
  metrics["result"] = metrics_json(r);
  put("metrics.json", metrics.dump(2) + "\n");

  std::ostringstream csv;
  csv << "date,actual,predicted,actual_norm,predicted_norm\n";
  for (std::size_t k = 0; k < r.prediction_dates.size(); ++k)
    csv << r.prediction_dates[k].to_string() << ',' << text::format_double(r.test.actuals_price[k]) << ','
        << text::format_double(r.test.predictions_price[k]) << ',' << text::format_double(r.test.actuals_normalized[k])
        << ',' << text::format_double(r.test.predictions_normalized[k]) << '\n';
  put("predictions.csv", csv.str());

  std::vector<std::string> labels;
  for (auto d : r.prediction_dates) labels.push_back(d.to_string());
  const std::string title = r.feature_mode == FeatureMode::PriceOnly
                                ? "Next-day close, price features only"
                                : "Next-day close, market and epidemic features";
  put("predictions.svg", svg::line_chart(labels,
                                         {{"actual", r.test.actuals_price, "#1f77b4"},
                                          {"predicted", r.test.predictions_price, "#d62728"}},
                                         {title, "date", "close (USD)"}));

  std::ostringstream train_csv;
  write_train_report_csv(train_csv, r.train_report);
  put("train_report.csv", train_csv.str());
  put("model.json", to_json(r.model).dump() + "\n");
  if (r.selection) put("selection.json", to_json(*r.selection).dump(2) + "\n");
  return written;
}

/// Per-arm reports under baseline/ and treatment/, plus a top-level metrics.json.
inline std::vector<std::filesystem::path> emit_report(const AblationReport& a, const RunConfig& c,
                                                      const std::filesystem::path& out_dir) {
  auto written = emit_report(a.baseline, c, out_dir / "baseline");
  auto more = emit_report(a.treatment, c, out_dir / "treatment");
  written.insert(written.end(), more.begin(), more.end());
  auto metrics = detail::metrics_header("exocast.ablation", c);
  metrics["baseline"] = metrics_json(a.baseline);
  metrics["treatment"] = metrics_json(a.treatment);
  metrics["delta_mae"] = a.delta_mae;
  metrics["treatment_improved"] = a.treatment_improved;
  metrics["expectation"] = "expected-direction";
  text::write_file_atomic(out_dir / "metrics.json", metrics.dump(2) + "\n");
  written.push_back(out_dir / "metrics.json");
  return written;
}

struct PredictionRow {
  Date date;
  double actual = 0.0, predicted = 0.0, actual_norm = 0.0, predicted_norm = 0.0;
};

inline std::vector<PredictionRow> read_predictions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim_cr(line) != "date,actual,predicted,actual_norm,predicted_norm")
    fail(Errc::MalformedRow, "predictions.csv header mismatch");
  std::vector<PredictionRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim_cr(line).empty()) continue;
    auto f = text::split_csv(text::trim_cr(line));
    if (!f || f->size() != 5) detail::malformed(line_no, "expected 5 fields");
    PredictionRow r;
    auto d = Date::parse((*f)[0]);
    auto a = text::parse_double((*f)[1]), p = text::parse_double((*f)[2]);
    auto an = text::parse_double((*f)[3]), pn = text::parse_double((*f)[4]);
    if (!d || !a || !p || !an || !pn) detail::malformed(line_no, "bad value");
    rows.push_back({*d, *a, *p, *an, *pn});
  }
  return rows;
}

}  // namespace exocast
