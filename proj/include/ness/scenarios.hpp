#pragma once

#include "ness/models.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace ness {

/// Reads an object of parameters with defaults and rejects keys nobody asked for.
class ParamReader {
 public:
  ParamReader(nlohmann::json obj, std::string where);

  double number(const std::string& key, double fallback);
  int integer(const std::string& key, int fallback);
  bool flag(const std::string& key, bool fallback);
  std::string text(const std::string& key, const std::string& fallback);
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback);
  bool has(const std::string& key) const { return obj_.contains(key); }
  /// Any JSON value, unchecked.
  std::optional<nlohmann::json> raw(const std::string& key);
  /// Sub-object; missing means empty.
  nlohmann::json object(const std::string& key);

  /// Throws InvalidInput naming the first unread key.
  void finish() const;

 private:
  nlohmann::json obj_;
  std::string where_;
  std::vector<std::string> seen_;
  const nlohmann::json* get(const std::string& key);
};

/// A named model with whatever pieces the experiments need.
struct Scenario {
  std::string name;
  std::optional<EllipticModel> elliptic;
  std::optional<KineticModel> kinetic;
  std::optional<CompetitionKernel> kernel;
  VectorField grad_V;  // confinement for the particle system
  nlohmann::json params;  // resolved parameters, defaults filled in
};

const std::vector<std::string>& scenario_names();

/// Builds a scenario; unknown names or parameters raise InvalidInput.
Scenario make_scenario(const std::string& name, const nlohmann::json& params = nlohmann::json::object());

}  // namespace ness
