// Writes the offline fixture: 10-minute BTC/USD bars and WHO-layout daily counts.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "exocast/fixture.hpp"
#include "exocast/text.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic market and epidemic fixture", "make_fixture"};
  std::filesystem::path out = "data/fixture";
  std::uint64_t seed = 2020;
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "generator seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  exocast::fixture::Market2020Spec spec;
  spec.seed = seed;
  const auto data = exocast::fixture::market_2020(spec);
  std::ostringstream bars, who;
  exocast::write_minute_bars(bars, data.bars);
  exocast::fixture::write_who_rows(who, data.epi_rows);
  exocast::text::write_file_atomic(out / "btcusd_10m.csv", bars.str());
  exocast::text::write_file_atomic(out / "who_daily.csv", who.str());
  std::cout << data.bars.size() << " bars, " << data.epi_rows.size() << " epi rows\n";
  return 0;
}
