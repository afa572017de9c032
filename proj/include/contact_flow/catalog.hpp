#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contact_flow/errors.hpp"
#include "contact_flow/field.hpp"
#include "contact_flow/systems.hpp"

namespace contact_flow {

using CatalogParams = std::map<std::string, double>;

struct BuiltinSystem {
  ContactSystem system;
  std::string spec;  // canonical "name(key=value,...)" with every parameter
  std::optional<LinearDampedOscillator> damped;  // set when a closed form exists
};

struct CatalogEntry {
  std::string name;
  std::string description;
  CatalogParams defaults;
  std::function<BuiltinSystem(const CatalogParams&)> make;
};

namespace detail {

inline std::size_t dof_param(const CatalogParams& p) {
  const double n = p.at("n");
  if (!(n >= 1.0) || n != std::floor(n) || n > 1e6) {
    throw CatalogError("parameter n must be a positive integer");
  }
  return static_cast<std::size_t>(n);
}

inline std::string format_params(const std::string& name, const CatalogParams& p) {
  std::string out = name + "(";
  bool first = true;
  for (const auto& [k, v] : p) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += (first ? "" : ",") + k + "=" + buf;
    first = false;
  }
  return out + ")";
}

}  // namespace detail

inline const std::vector<CatalogEntry>& builtin_catalog() {
  static const std::vector<CatalogEntry> catalog = [] {
    std::vector<CatalogEntry> c;
    c.push_back({"harmonic", "conservative oscillator h = sum p^2/2m + k q^2/2",
                 {{"n", 1}, {"m", 1}, {"k", 1}}, [](const CatalogParams& p) {
                   const std::size_t n = detail::dof_param(p);
                   return BuiltinSystem{harmonic_oscillator(n, p.at("m"), p.at("k")),
                                        detail::format_params("harmonic", p), std::nullopt};
                 }});
    c.push_back({"damped_oscillator", "h = sum p^2/2m + k q^2/2 - alpha S",
                 {{"n", 1}, {"m", 1}, {"k", 1}, {"alpha", 0.1}}, [](const CatalogParams& p) {
                   const std::size_t n = detail::dof_param(p);
                   LinearDampedOscillator osc(n, {p.at("m")}, {p.at("k")}, p.at("alpha"));
                   return BuiltinSystem{osc.system(), detail::format_params("damped_oscillator", p),
                                        osc};
                 }});
    c.push_back({"free_damped", "h = sum p^2/2m - alpha S",
                 {{"n", 1}, {"m", 1}, {"alpha", 0.1}}, [](const CatalogParams& p) {
                   const std::size_t n = detail::dof_param(p);
                   return BuiltinSystem{free_damped_particle(n, p.at("m"), p.at("alpha")),
                                        detail::format_params("free_damped", p), std::nullopt};
                 }});
    c.push_back({"constant", "h = c", {{"n", 1}, {"c", 1}}, [](const CatalogParams& p) {
                   const std::size_t n = detail::dof_param(p);
                   return BuiltinSystem{constant_hamiltonian(n, p.at("c")),
                                        detail::format_params("constant", p), std::nullopt};
                 }});
    return c;
  }();
  return catalog;
}

inline std::string catalog_names() {
  std::string out;
  for (const auto& e : builtin_catalog()) out += (out.empty() ? "" : ", ") + e.name;
  return out;
}

// Builds a catalog system from "name" or "name(key=value, ...)".
inline BuiltinSystem make_builtin(const std::string& spec) {
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  const std::string text = trim(spec);
  const auto open = text.find('(');
  const std::string name = trim(text.substr(0, open));
  const CatalogEntry* entry = nullptr;
  for (const auto& e : builtin_catalog()) {
    if (e.name == name) entry = &e;
  }
  if (!entry) {
    throw CatalogError("unknown system '" + name + "'; available: " + catalog_names());
  }
  CatalogParams params = entry->defaults;
  if (open != std::string::npos) {
    if (text.back() != ')') throw CatalogError("missing ')' in '" + text + "'");
    const std::string body = text.substr(open + 1, text.size() - open - 2);
    std::size_t start = 0;
    while (start <= body.size()) {
      const auto comma = body.find(',', start);
      const std::string item =
          trim(body.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!item.empty()) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw CatalogError("expected key=value, got '" + item + "'");
        const std::string key = trim(item.substr(0, eq));
        const std::string value = trim(item.substr(eq + 1));
        if (!params.count(key)) {
          throw CatalogError("system '" + name + "' has no parameter '" + key + "'");
        }
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (value.empty() || *end != '\0' || !std::isfinite(v)) {
          throw CatalogError("parameter '" + key + "' has invalid value '" + value + "'");
        }
        params[key] = v;
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  try {
    return entry->make(params);
  } catch (const ContractError& e) {
    throw CatalogError(std::string("invalid parameters for '") + name + "': " + e.what());
  }
}

}  // namespace contact_flow
