#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "sole/errors.hpp"
#include "sole/pointcloud.hpp"

namespace sole {

enum class Scenario {
  PristineAN,
  PartialToe,
  PartialHeel,
  PartialInside,
  PartialOutside,
  PristineTime2,
  PristineTime3,
  Blurry02,
  Blurry04,
  Blurry06,
  Blurry08,
  Blurry10,
  Pristine150,
};

enum class Category { Pristine, Blurry, Partial };

inline constexpr std::array<Scenario, 13> kAllScenarios = {
    Scenario::PristineAN,    Scenario::PartialToe,    Scenario::PartialHeel,   Scenario::PartialInside,
    Scenario::PartialOutside, Scenario::PristineTime2, Scenario::PristineTime3, Scenario::Blurry02,
    Scenario::Blurry04,      Scenario::Blurry06,      Scenario::Blurry08,      Scenario::Blurry10,
    Scenario::Pristine150,
};

inline constexpr std::array<Category, 3> kAllCategories = {Category::Pristine, Category::Blurry, Category::Partial};

inline constexpr std::array<std::string_view, 13> kScenarioNames = {
    "PristineAN",    "PartialToe",    "PartialHeel", "PartialInside", "PartialOutside", "PristineTime2", "PristineTime3",
    "Blurry02",      "Blurry04",      "Blurry06",    "Blurry08",      "Blurry10",       "Pristine150",
};

inline std::string to_string(Scenario s) { return std::string(kScenarioNames[static_cast<std::size_t>(s)]); }

inline std::optional<Scenario> try_parse_scenario(std::string_view name) {
  for (std::size_t i = 0; i < kScenarioNames.size(); ++i)
    if (kScenarioNames[i] == name) return kAllScenarios[i];
  return std::nullopt;
}

inline Scenario parse_scenario(std::string_view name) {
  if (auto s = try_parse_scenario(name)) return *s;
  throw ConfigError("unknown scenario " + std::string(name));
}

inline std::string to_string(Category c) {
  switch (c) {
    case Category::Pristine: return "pristine";
    case Category::Blurry: return "blurry";
    case Category::Partial: return "partial";
  }
  return "";
}

inline Category parse_category(std::string_view name) {
  for (Category c : kAllCategories)
    if (to_string(c) == name) return c;
  throw ConfigError("unknown category " + std::string(name));
}

inline Category category_of(Scenario s) {
  switch (s) {
    case Scenario::PartialToe:
    case Scenario::PartialHeel:
    case Scenario::PartialInside:
    case Scenario::PartialOutside: return Category::Partial;
    case Scenario::Blurry02:
    case Scenario::Blurry04:
    case Scenario::Blurry06:
    case Scenario::Blurry08:
    case Scenario::Blurry10: return Category::Blurry;
    default: return Category::Pristine;
  }
}

/// Blur level of Q in a blur scenario, 0 otherwise.
inline int blur_level_of(Scenario s) {
  switch (s) {
    case Scenario::Blurry02: return 2;
    case Scenario::Blurry04: return 4;
    case Scenario::Blurry06: return 6;
    case Scenario::Blurry08: return 8;
    case Scenario::Blurry10: return 10;
    default: return 0;
  }
}

inline std::optional<Region> partial_region_of(Scenario s) {
  switch (s) {
    case Scenario::PartialToe: return Region::Toe;
    case Scenario::PartialHeel: return Region::Heel;
    case Scenario::PartialInside: return Region::Inside;
    case Scenario::PartialOutside: return Region::Outside;
    default: return std::nullopt;
  }
}

/// Visit of the K print in a temporal scenario (Q is always visit 1).
inline int k_visit_of(Scenario s) {
  switch (s) {
    case Scenario::PristineTime2: return 2;
    case Scenario::PristineTime3: return 3;
    default: return 1;
  }
}

inline constexpr std::array<std::string_view, 3> kIndicatorColumns = {"is_pristine", "is_blurry", "is_partial"};

}  // namespace sole
