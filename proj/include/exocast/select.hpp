#pragma once

// Two-stage feature selection: forest-importance top-k unioned with Pearson screening.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "exocast/error.hpp"
#include "exocast/features.hpp"
#include "exocast/forest.hpp"
#include "exocast/log.hpp"
#include "exocast/stats.hpp"
#include "exocast/text.hpp"

namespace exocast {

struct SelectConfig {
  std::size_t rf_top_k = 7;
  double r_min = 0.6;
  double p_max = 0.05;
  bool signed_r = false;  // true: require r > r_min instead of |r| > r_min

  void validate() const {
    if (!(r_min > 0.0 && r_min < 1.0)) fail(Errc::InvalidArgument, "r_min must be in (0, 1)");
    if (!(p_max > 0.0 && p_max < 1.0)) fail(Errc::InvalidArgument, "p_max must be in (0, 1)");
  }
};

struct RankedFeature {
  std::string name;
  double importance = 0.0;
};

struct CorrelatedFeature {
  std::string name;
  double r = 0.0;
  double p = 1.0;
};

enum class Provenance { Forest, Pearson, Both };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Forest: return "rf";
    case Provenance::Pearson: return "pearson";
    case Provenance::Both: return "both";
  }
  return "";
}

struct SelectedFeature {
  std::string name;
  Provenance provenance = Provenance::Forest;
};

struct SelectionReport {
  std::vector<RankedFeature> rf_selected;
  std::vector<CorrelatedFeature> pearson_selected;
  std::vector<SelectedFeature> final_set;  // original column order

  [[nodiscard]] std::vector<std::string> final_names() const {
    std::vector<std::string> out;
    for (const auto& f : final_set) out.push_back(f.name);
    return out;
  }

  [[nodiscard]] std::size_t count(Provenance p) const {
    return static_cast<std::size_t>(
        std::count_if(final_set.begin(), final_set.end(), [p](auto& f) { return f.provenance == p; }));
  }
};

/// Top `rf_top_k` predictors by forest importance; ties keep column order.
inline std::vector<RankedFeature> rf_select(const FeatureFrame& frame, const SelectConfig& config,
                                            const ForestConfig& forest_config) {
  config.validate();
  if (config.rf_top_k == 0) return {};
  const auto names = frame.predictor_names();
  if (names.empty()) return {};
  Eigen::MatrixXd X(static_cast<Eigen::Index>(frame.rows()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j)
    X.col(static_cast<Eigen::Index>(j)) = frame.values.col(static_cast<Eigen::Index>(frame.column_index(names[j])));
  const auto y = frame.column(frame.target_index());
  const auto model = fit_forest(X, y, forest_config);
  const auto report = feature_importance(model);
  std::vector<RankedFeature> out;
  for (std::size_t k = 0; k < std::min(config.rf_top_k, names.size()); ++k)
    out.push_back({names[report.ranking[k]], report.importances[report.ranking[k]]});
  return out;
}

/// Predictors whose correlation with the target clears r_min with p below p_max.
/// Constant columns are skipped with a warning.
inline std::vector<CorrelatedFeature> pearson_select(const FeatureFrame& frame, const SelectConfig& config) {
  config.validate();
  const auto y = frame.column(frame.target_index());
  std::vector<CorrelatedFeature> out;
  for (const auto& name : frame.predictor_names()) {
    const auto x = frame.column(frame.column_index(name));
    double r = 0.0;
    try {
      r = stats::pearson_r(x, y);
    } catch (const Error& e) {
      if (e.code() != Errc::ZeroVariance) throw;
      log::warn("pearson screening skipped constant column " + name);
      continue;
    }
    const double p = stats::pearson_p_two_sided(r, frame.rows());
    const double strength = config.signed_r ? r : std::abs(r);
    if (strength > config.r_min && p < config.p_max) out.push_back({name, r, p});
  }
  return out;
}

/// Deduplicated union in the frame's column order.
inline SelectionReport final_feature_set(std::span<const std::string> column_order,
                                         std::vector<RankedFeature> rf_selected,
                                         std::vector<CorrelatedFeature> pearson_selected) {
  auto known = [&](const std::string& n) {
    if (std::find(column_order.begin(), column_order.end(), n) == column_order.end())
      fail(Errc::UnknownFeatureName, n);
  };
  for (const auto& f : rf_selected) known(f.name);
  for (const auto& f : pearson_selected) known(f.name);
  SelectionReport report;
  for (const auto& col : column_order) {
    const bool in_rf = std::any_of(rf_selected.begin(), rf_selected.end(), [&](auto& f) { return f.name == col; });
    const bool in_p =
        std::any_of(pearson_selected.begin(), pearson_selected.end(), [&](auto& f) { return f.name == col; });
    if (in_rf || in_p)
      report.final_set.push_back({col, in_rf && in_p ? Provenance::Both : in_rf ? Provenance::Forest : Provenance::Pearson});
  }
  report.rf_selected = std::move(rf_selected);
  report.pearson_selected = std::move(pearson_selected);
  return report;
}

inline SelectionReport select_features(const FeatureFrame& frame, const SelectConfig& config,
                                       const ForestConfig& forest_config) {
  return final_feature_set(frame.column_names, rf_select(frame, config, forest_config), pearson_select(frame, config));
}

inline nlohmann::json to_json(const SelectionReport& r) {
  nlohmann::json j;
  j["rf_selected"] = nlohmann::json::array();
  for (const auto& f : r.rf_selected) j["rf_selected"].push_back({{"name", f.name}, {"importance", f.importance}});
  j["pearson_selected"] = nlohmann::json::array();
  for (const auto& f : r.pearson_selected)
    j["pearson_selected"].push_back({{"name", f.name}, {"r", f.r}, {"p", f.p}});
  j["final_set"] = nlohmann::json::array();
  for (const auto& f : r.final_set)
    j["final_set"].push_back({{"name", f.name}, {"provenance", std::string(to_string(f.provenance))}});
  j["counts"] = {{"rf", r.count(Provenance::Forest)},
                 {"pearson", r.count(Provenance::Pearson)},
                 {"both", r.count(Provenance::Both)},
                 {"total", r.final_set.size()}};
  return j;
}

inline void print_table(std::ostream& out, const SelectionReport& r) {
  out << "feature                      source    importance        r          p\n";
  for (const auto& f : r.final_set) {
    std::string line = f.name;
    line.resize(std::max<std::size_t>(line.size() + 1, 29), ' ');
    std::string src(to_string(f.provenance));
    src.resize(10, ' ');
    line += src;
    auto rf = std::find_if(r.rf_selected.begin(), r.rf_selected.end(), [&](auto& x) { return x.name == f.name; });
    auto pc = std::find_if(r.pearson_selected.begin(), r.pearson_selected.end(), [&](auto& x) { return x.name == f.name; });
    std::string imp = rf != r.rf_selected.end() ? text::format_fixed(rf->importance, 4) : "-";
    imp.resize(12, ' ');
    line += imp;
    if (pc != r.pearson_selected.end()) {
      line += text::format_fixed(pc->r, 4) + "   ";
      line += pc->p < 1e-4 ? std::string("<1e-4") : text::format_fixed(pc->p, 4);
    } else {
      line += "-";
    }
    out << line << '\n';
  }
  out << "total " << r.final_set.size() << " (rf " << r.count(Provenance::Forest) << ", pearson "
      << r.count(Provenance::Pearson) << ", both " << r.count(Provenance::Both) << ")\n";
}

}  // namespace exocast
