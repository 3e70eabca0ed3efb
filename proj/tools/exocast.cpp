// Command-line front end: fetch, build-features, select, train, ablation, report.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "exocast/fetch.hpp"
#include "exocast/pipeline.hpp"

namespace {

using namespace exocast;

struct Globals {
  std::filesystem::path config = "data/fixture/default.toml";
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool verbose = false;
};

RunConfig load(const Globals& g) {
  auto c = load_run_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.out) c.out_dir = *g.out;
  return c;
}

void print_written(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) std::cout << f.string() << '\n';
}

int cmd_fetch(bool allow_network, const std::string& source, const std::string& start, const std::string& end,
              const std::filesystem::path& dest) {
  if (!allow_network) fail(Errc::ConfigError, "fetch needs --allow-network");
  FetchOptions options;
  options.get = make_http_get();
  RemoteSource remote;
  if (source == "candles") {
    auto s = Date::parse(start), e = Date::parse(end);
    if (!s || !e) fail(Errc::ConfigError, "--start and --end must be YYYY-MM-DD");
    remote = CandleRequest{.start = *s, .end = *e};
  } else {
    remote = EpiCsvRequest{};
  }
  std::ostringstream body;
  const auto bytes = fetch_remote(remote, body, options);
  text::write_file_atomic(dest, body.str());
  log::info("wrote " + std::to_string(bytes) + " bytes to " + dest.string());
  return 0;
}

int cmd_build_features(const Globals& g) {
  const auto c = load(g);
  const auto features = build_features(c);
  std::ostringstream csv;
  write_frame_csv(csv, features.frame);
  const auto splits = split_chronological(features.frame, c.split);
  const auto normalizer = fit_normalizer(features.frame, splits.train_rows);
  text::write_file_atomic(c.out_dir / "features.csv", csv.str());
  text::write_file_atomic(c.out_dir / "features.json",
                          frame_sidecar(features.frame, c.schema, normalizer).dump(2) + "\n");
  print_written({c.out_dir / "features.csv", c.out_dir / "features.json"});
  return 0;
}

int cmd_select(const Globals& g) {
  const auto c = load(g);
  const auto frame = build_features(c).frame;
  const auto splits = split_chronological(frame, c.split);
  auto forest = c.forest;
  forest.master_seed = c.forest_seed();
  const auto report = run_stage("select", [&] { return select_features(splits.train, c.select, forest); });
  print_table(std::cout, report);
  text::write_file_atomic(c.out_dir / "selection.json", to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_train(const Globals& g, const std::optional<std::string>& mode) {
  auto c = load(g);
  if (mode) c.feature_mode = feature_mode_from_string(*mode);
  const auto result = run_experiment(c);
  print_written(emit_report(result, c, c.out_dir));
  std::cout << "test mae (normalized) " << text::format_fixed(result.test.mae_normalized, 4) << ", price units "
            << text::format_fixed(result.test.mae_price_units, 2) << '\n';
  return 0;
}

int cmd_ablation(const Globals& g) {
  const auto c = load(g);
  const auto report = run_ablation(c);
  print_written(emit_report(report, c, c.out_dir));
  std::cout << "baseline mae " << text::format_fixed(report.baseline.test.mae_normalized, 4) << ", treatment mae "
            << text::format_fixed(report.treatment.test.mae_normalized, 4) << ", delta "
            << text::format_fixed(report.delta_mae, 4) << (report.treatment_improved ? " (improved)" : " (not improved)")
            << '\n';
  return 0;
}

int cmd_report(const std::filesystem::path& dir) {
  std::ifstream in(dir / "predictions.csv");
  if (!in) fail(Errc::IoError, "cannot open " + (dir / "predictions.csv").string());
  const auto rows = read_predictions_csv(in);
  if (rows.empty()) fail(Errc::InvalidArgument, "no predictions to plot");
  std::vector<std::string> labels;
  std::vector<double> actual, predicted;
  for (const auto& r : rows) {
    labels.push_back(r.date.to_string());
    actual.push_back(r.actual);
    predicted.push_back(r.predicted);
  }
  text::write_file_atomic(dir / "predictions.svg",
                          svg::line_chart(labels, {{"actual", actual, "#1f77b4"}, {"predicted", predicted, "#d62728"}},
                                          {"Next-day close", "date", "close (USD)"}));
  print_written({dir / "predictions.svg"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Next-day BTC close forecasting with market and epidemic features", "exocast"};
  app.set_version_flag("--version", exocast::kVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "TOML run configuration")->capture_default_str();
  app.add_option("--seed", g.seed, "master seed (overrides [run] seed)");
  app.add_option("--out", g.out, "output directory (overrides [run] out_dir)");
  app.add_flag("-v,--verbose", g.verbose, "debug logging");

  auto* fetch = app.add_subcommand("fetch", "download raw data");
  bool allow_network = false;
  std::string source = "candles", start, end;
  std::filesystem::path dest;
  fetch->add_flag("--allow-network", allow_network, "permit HTTP requests");
  fetch->add_option("--source", source, "candles or epi")->check(CLI::IsMember({"candles", "epi"}))->capture_default_str();
  fetch->add_option("--start", start, "first day, YYYY-MM-DD (candles)");
  fetch->add_option("--end", end, "last day, YYYY-MM-DD (candles)");
  fetch->add_option("--dest", dest, "output CSV path")->required();

  auto* build = app.add_subcommand("build-features", "write the daily feature frame and sidecar");
  auto* select = app.add_subcommand("select", "run feature selection on the training split");
  auto* train = app.add_subcommand("train", "run one experiment and write its report");
  std::optional<std::string> mode;
  train->add_option("--mode", mode, "price_only or full (overrides [run] feature_mode)")
      ->check(CLI::IsMember({"price_only", "full"}));
  auto* ablation = app.add_subcommand("ablation", "run the price-only vs full-feature comparison");
  auto* report = app.add_subcommand("report", "re-render predictions.svg from predictions.csv");
  std::filesystem::path report_dir;
  report->add_option("--in", report_dir, "directory holding predictions.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ExitCode::Usage);
  }
  log::set_level(g.verbose ? log::Level::Debug : log::Level::Info);

  try {
    if (fetch->parsed()) return cmd_fetch(allow_network, source, start, end, dest);
    if (build->parsed()) return cmd_build_features(g);
    if (select->parsed()) return cmd_select(g);
    if (train->parsed()) return cmd_train(g, mode);
    if (ablation->parsed()) return cmd_ablation(g);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const Error& e) {
    log::error(e.what());
    return static_cast<int>(exit_code_for(e.code()));
  } catch (const std::exception& e) {
    log::error(e.what());
    return static_cast<int>(ExitCode::Data);
  }
  return 0;
}
