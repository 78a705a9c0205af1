// SPDX-License-Identifier: Apache-2.0

#include "psmpc/mmps.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "psmpc/errors.hpp"

namespace psmpc::mmps {

double AffineTerm::value(const std::vector<double>& x) const {
  double v = offset;
  for (std::size_t i = 0; i < coeffs.size(); ++i) v += coeffs[i] * x[i];
  return v;
}

bool Box::contains(const std::vector<double>& x, double tol) const {
  for (std::size_t d = 0; d < lo.size(); ++d) {
    if (x[d] < lo[d] - tol || x[d] > hi[d] + tol) return false;
  }
  return true;
}

double Box::coord(std::size_t d, std::size_t i, std::size_t n) const {
  if (n < 2) return 0.5 * (lo[d] + hi[d]);
  return lo[d] + (hi[d] - lo[d]) * (static_cast<double>(i) / static_cast<double>(n - 1));
}

void MmpsFunction::validate() const {
  if (dim == 0) throw std::invalid_argument("MmpsFunction: dim must be positive");
  if (groups.empty()) throw std::invalid_argument("MmpsFunction: no groups");
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("MmpsFunction: empty group");
    for (const auto& t : g) {
      if (t.coeffs.size() != dim)
        throw std::invalid_argument("MmpsFunction: term dimension mismatch");
    }
  }
  if (domain.lo.size() != dim || domain.hi.size() != dim)
    throw std::invalid_argument("MmpsFunction: domain dimension mismatch");
  for (std::size_t d = 0; d < dim; ++d) {
    if (!(domain.lo[d] < domain.hi[d]))
      throw std::invalid_argument("MmpsFunction: domain lower must be < upper");
  }
}

double evaluate(const MmpsFunction& f, const std::vector<double>& x) {
  if (x.size() != f.dim)
    throw std::invalid_argument("mmps::evaluate: input dimension mismatch");
  const bool conj = f.form == Form::Conjunctive;
  double outer = conj ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
  for (const auto& g : f.groups) {
    double inner = conj ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
    for (const auto& t : g) {
      const double v = t.value(x);
      inner = conj ? std::max(inner, v) : std::min(inner, v);
    }
    outer = conj ? std::min(outer, inner) : std::max(outer, inner);
  }
  return outer;
}

double lipschitz_bound(const MmpsFunction& f) {
  double L = 0.0;
  for (const auto& g : f.groups)
    for (const auto& t : g) {
      double l1 = 0.0;
      for (double c : t.coeffs) l1 += std::abs(c);
      L = std::max(L, l1);
    }
  return L;
}

MmpsFunction shifted(const MmpsFunction& f, double c) {
  MmpsFunction out = f;
  for (auto& g : out.groups)
    for (auto& t : g) t.offset += c;
  return out;
}

MmpsFunction scaled(const MmpsFunction& f, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("mmps::scaled: factor must be positive");
  MmpsFunction out = f;
  for (auto& g : out.groups)
    for (auto& t : g) {
      for (double& c : t.coeffs) c *= s;
      t.offset *= s;
    }
  return out;
}

nlohmann::json to_json(const MmpsFunction& f) {
  nlohmann::json j;
  j["form"] = f.form == Form::Conjunctive ? "conjunctive" : "disjunctive";
  j["dim"] = f.dim;
  j["domain"] = {{"lo", f.domain.lo}, {"hi", f.domain.hi}};
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : f.groups) {
    nlohmann::json grp = nlohmann::json::array();
    for (const auto& t : g) grp.push_back({{"coeffs", t.coeffs}, {"offset", t.offset}});
    groups.push_back(std::move(grp));
  }
  j["groups"] = std::move(groups);
  return j;
}

MmpsFunction from_json(const nlohmann::json& j) {
  MmpsFunction f;
  const std::string form = j.at("form").get<std::string>();
  if (form == "conjunctive")
    f.form = Form::Conjunctive;
  else if (form == "disjunctive")
    f.form = Form::Disjunctive;
  else
    throw std::invalid_argument("MmpsFunction json: unknown form '" + form + "'");
  f.dim = j.at("dim").get<std::size_t>();
  f.domain.lo = j.at("domain").at("lo").get<std::vector<double>>();
  f.domain.hi = j.at("domain").at("hi").get<std::vector<double>>();
  for (const auto& grp : j.at("groups")) {
    std::vector<AffineTerm> g;
    for (const auto& t : grp) {
      AffineTerm term;
      term.coeffs = t.at("coeffs").get<std::vector<double>>();
      term.offset = t.at("offset").get<double>();
      g.push_back(std::move(term));
    }
    f.groups.push_back(std::move(g));
  }
  f.validate();
  return f;
}

void save_json(const MmpsFunction& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for write: " + path);
  out << to_json(f).dump(2) << '\n';
}

MmpsFunction load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

}  // namespace psmpc::mmps
