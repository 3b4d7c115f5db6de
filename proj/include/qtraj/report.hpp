#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "json.hpp"
#include "qtraj/numerics.hpp"

namespace qtraj {

using Json = nlohmann::ordered_json;

struct ResidualReport {
  std::string name;
  double max = 0.0;
  double rms = 0.0;
  std::size_t nodes = 0;
  Json params = Json::object();

  ResidualReport() = default;
  ResidualReport(std::string n, const Residuals& r, Json p = Json::object())
      : name(std::move(n)), max(r.max), rms(r.rms), nodes(r.nodes), params(std::move(p)) {}

  Json to_json() const {
    Json j;
    j["name"] = name;
    j["max"] = finite_or_null(max);
    j["rms"] = finite_or_null(rms);
    j["nodes"] = nodes;
    j["params"] = params;
    return j;
  }

  static Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }
};

}  // namespace qtraj
