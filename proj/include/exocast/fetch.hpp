#pragma once

// Optional network ingestion. Callers must opt in explicitly (the CLI requires
// --allow-network); nothing else in the library touches the network.
//
// Candles come from the Bitfinex public REST endpoint
//   GET {base}/v2/candles/trade:{granularity}:{symbol}/hist?start=&end=&limit=&sort=1
// which returns JSON rows [MTS, OPEN, CLOSE, HIGH, LOW, VOLUME], at most `limit` per page.

#include <chrono>
#include <cstdint>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <httplib.h>
// <resolv.h> (pulled in by httplib) defines `_res`, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "exocast/date.hpp"
#include "exocast/error.hpp"
#include "exocast/ingest.hpp"
#include "exocast/log.hpp"

namespace exocast {

struct HttpResponse {
  int status = 0;  // 0 means the request never produced a response
  std::string body;
};

using HttpGet = std::function<HttpResponse(const std::string& url)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct CandleRequest {
  std::string symbol = "tBTCUSD";
  std::string granularity = "1m";
  Date start;
  Date end;  // inclusive
};

struct EpiCsvRequest {
  std::string url = "https://covid19.who.int/WHO-COVID-19-global-data.csv";
};

using RemoteSource = std::variant<CandleRequest, EpiCsvRequest>;

struct FetchOptions {
  HttpGet get;
  Sleeper sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  std::string candle_base_url = "https://api-pub.bitfinex.com";
  std::size_t page_limit = 10000;
  int max_attempts = 5;
  std::chrono::milliseconds base_backoff{1000};
};

inline std::int64_t granularity_ms(const std::string& g) {
  if (g == "1m") return 60'000;
  if (g == "5m") return 300'000;
  if (g == "15m") return 900'000;
  if (g == "30m") return 1'800'000;
  if (g == "1h") return 3'600'000;
  fail(Errc::InvalidArgument, "unsupported candle granularity '" + g + "'");
}

/// Blocking GET over cpp-httplib. Connection failures come back as status 0.
inline HttpGet make_http_get(std::chrono::seconds timeout = std::chrono::seconds(30)) {
  return [timeout](const std::string& url) -> HttpResponse {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, "bad url"};
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    try {
      httplib::Client client(origin);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_follow_location(true);
      auto res = client.Get(path);
      if (!res) return {0, httplib::to_string(res.error())};
      return {res->status, res->body};
    } catch (const std::exception& e) {
      return {0, e.what()};
    }
  };
}

namespace detail {

inline std::string get_with_retry(const std::string& url, const FetchOptions& opt) {
  for (int attempt = 1;; ++attempt) {
    HttpResponse res = opt.get(url);
    bool limited = res.status == 429;
    if (res.status == 200 && res.body.rfind("[\"error\"", 0) == 0 &&
        res.body.find("ratelimit") != std::string::npos)
      limited = true;
    if (!limited) {
      if (res.status != 200) fail(Errc::HttpError, "status " + std::to_string(res.status) + " for " + url);
      return std::move(res.body);
    }
    if (attempt >= opt.max_attempts)
      fail(Errc::RateLimited, "gave up after " + std::to_string(attempt) + " attempts: " + url);
    const auto wait = opt.base_backoff * (1LL << (attempt - 1));
    log::warn("rate limited, retrying in " + std::to_string(wait.count()) + " ms");
    opt.sleep(wait);
  }
}

inline std::vector<MinuteBar> fetch_candles(const CandleRequest& req, const FetchOptions& opt) {
  if (req.end < req.start) fail(Errc::EmptyRange, "candle range is empty");
  const std::int64_t step = granularity_ms(req.granularity);
  const std::int64_t first = req.start.epoch_ms();
  const std::int64_t last = (req.end + 1).epoch_ms() - 1;

  std::vector<MinuteBar> bars;
  std::int64_t cursor = first;
  while (cursor <= last) {
    const std::string url = opt.candle_base_url + "/v2/candles/trade:" + req.granularity + ":" + req.symbol +
                            "/hist?start=" + std::to_string(cursor) + "&end=" + std::to_string(last) +
                            "&limit=" + std::to_string(opt.page_limit) + "&sort=1";
    const auto page = nlohmann::json::parse(get_with_retry(url, opt), nullptr, false);
    if (page.is_discarded() || !page.is_array()) fail(Errc::HttpError, "unparseable candle page from " + url);
    if (page.empty()) break;
    std::int64_t page_last = cursor - step;
    for (const auto& row : page) {
      if (!row.is_array() || row.size() < 6) fail(Errc::HttpError, "unexpected candle row shape");
      MinuteBar b{row[0].get<std::int64_t>(), row[1].get<double>(), row[3].get<double>(),
                  row[4].get<double>(),       row[2].get<double>(), row[5].get<double>()};
      page_last = std::max(page_last, b.ts);
      if (b.ts < first || b.ts > last) continue;
      if (!bars.empty() && b.ts <= bars.back().ts) continue;  // overlap between pages
      bars.push_back(b);
    }
    if (page.size() < opt.page_limit) break;
    if (page_last < cursor) break;
    cursor = page_last + step;
  }

  std::set<Date> covered;
  for (const auto& b : bars) covered.insert(b.day());
  const auto wanted = inclusive_day_span(req.start, req.end);
  if (static_cast<std::int64_t>(covered.size()) < wanted)
    fail(Errc::TruncatedRange, "provider returned " + std::to_string(covered.size()) + " of " +
                                   std::to_string(wanted) + " requested days");
  return bars;
}

}  // namespace detail

/// Downloads `source` and writes it to `sink` in the local CSV schema. Returns bytes written.
inline std::size_t fetch_remote(const RemoteSource& source, std::ostream& sink, const FetchOptions& options) {
  if (!options.get) fail(Errc::InvalidArgument, "no HTTP transport configured");
  std::ostringstream buffer;
  if (const auto* candles = std::get_if<CandleRequest>(&source)) {
    const auto bars = detail::fetch_candles(*candles, options);
    write_minute_bars(buffer, bars);
  } else {
    const auto& epi = std::get<EpiCsvRequest>(source);
    std::string body = detail::get_with_retry(epi.url, options);
    std::erase(body, '\r');
    auto header_end = body.find('\n');
    std::string_view header(body.data(), header_end == std::string::npos ? body.size() : header_end);
    if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.remove_prefix(3);
    if (header != kEpiCsvHeader) fail(Errc::HttpError, "epi payload does not have the WHO daily header");
    buffer << body;
    if (!body.empty() && body.back() != '\n') buffer << '\n';
  }
  const std::string out = buffer.str();
  sink.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!sink) fail(Errc::IoError, "failed writing fetched data");
  return out.size();
}

}  // namespace exocast
