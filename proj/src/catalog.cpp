#include "lbsim/catalog.hpp"

#include <cmath>

#include <fmt/format.h>

#include "lbsim/policies.hpp"

namespace lbsim {

nlohmann::json to_json(const PolicySpec& spec) {
  return {{"name", spec.name}, {"d", spec.d}, {"b", spec.b}, {"ping_rate", spec.ping_rate}, {"cuts", spec.cuts}};
}

PolicySpec policy_spec_from_json(const nlohmann::json& j) {
  PolicySpec spec;
  if (j.is_string()) {
    spec.name = j.get<std::string>();
    return spec;
  }
  if (!j.is_object()) throw ConfigError("policy must be a name or an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "name")
        spec.name = value.get<std::string>();
      else if (key == "d")
        spec.d = value.get<std::size_t>();
      else if (key == "b")
        spec.b = value.get<std::size_t>();
      else if (key == "ping_rate")
        spec.ping_rate = value.get<double>();
      else if (key == "cuts")
        spec.cuts = value.get<std::vector<double>>();
      else
        throw ConfigError(fmt::format("unknown policy key '{}'", key));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("policy key '{}': {}", key, e.what()));
    }
  }
  return spec;
}

const std::vector<std::string>& policy_names() {
  static const std::vector<std::string> names{"random", "round_robin", "sq",  "sq_d", "sq_dn",    "sq_d_b",
                                              "ll",     "ll_d",        "jiq", "sita", "idle_ping"};
  return names;
}

PolicyPtr make_policy(const PolicySpec& spec, std::size_t n, const SizeSpec& sizes) {
  const auto& s = spec.name;
  if (s == "random") return make_random(n);
  if (s == "round_robin") return make_round_robin(n);
  if (s == "sq") return make_sq(n);
  if (s == "sq_d") return make_sq_d(n, spec.d);
  if (s == "sq_dn") return make_sq_dn(n);
  if (s == "sq_d_b") return make_sq_d_b(n, spec.d, spec.b);
  if (s == "ll") return make_ll(n);
  if (s == "ll_d") return make_ll_d(n, spec.d);
  if (s == "jiq") return make_jiq(n);
  if (s == "idle_ping") return make_idle_ping(n, spec.ping_rate);
  if (s == "sita") {
    if (spec.cuts.empty()) return make_sita(n, sizes);
    if (spec.cuts.size() + 1 != n)
      throw ConfigError(fmt::format("sita needs n-1 = {} cut points, got {}", n - 1, spec.cuts.size()));
    return make_sita(spec.cuts);
  }
  throw ConfigError(fmt::format("unknown policy '{}'", s));
}

std::string delay_class_name(DelayClass c) {
  switch (c) {
    case DelayClass::kZero: return "0";
    case DelayClass::kPositive: return ">0";
    case DelayClass::kUnknown: break;
  }
  return "?";
}

CatalogEntry catalog_entry(const PolicySpec& spec, std::size_t n, double load, const SizeSpec& sizes) {
  CatalogEntry e;
  e.spec = spec;
  e.policy = make_policy(spec, n, sizes);
  // Declared from the formula, independent of the encoder, so the two can be compared.
  e.memory_bits = 0;
  const double ln = load * static_cast<double>(n);
  const auto& s = spec.name;
  e.memory_formula = "0";
  e.rate_formula = "0";
  e.limiting_delay = DelayClass::kPositive;
  if (s == "round_robin") {
    e.memory_formula = "ceil(log2 n)";
    e.memory_bits = ceil_log2(n);
  } else if (s == "sq" || s == "ll") {
    e.message_rate = 2.0 * ln * static_cast<double>(n);
    e.rate_formula = "2 lambda n^2";
    e.limiting_delay = DelayClass::kZero;
  } else if (s == "sq_d" || s == "ll_d") {
    e.message_rate = 2.0 * static_cast<double>(spec.d) * ln;
    e.rate_formula = "2 d lambda n";
  } else if (s == "sq_dn") {
    e.message_rate = 2.0 * static_cast<double>(default_dn_rule(n)) * ln;
    e.rate_formula = "2 d_n lambda n";
    e.limiting_delay = DelayClass::kZero;
  } else if (s == "sq_d_b") {
    e.memory_formula = "b (ceil(log2(n+1)) + 8)";
    e.memory_bits = static_cast<unsigned>(spec.b) * (ceil_log2(n + 1) + 8);
    e.message_rate = 2.0 * static_cast<double>(spec.d) * ln;
    e.rate_formula = "2 d lambda n";
  } else if (s == "jiq") {
    e.memory_formula = "n";
    e.memory_bits = static_cast<unsigned>(n);
    e.message_rate = ln;
    e.rate_is_bound = true;
    e.rate_formula = "<= lambda n";
    e.limiting_delay = DelayClass::kZero;
  } else if (s == "idle_ping") {
    e.memory_formula = "n";
    e.memory_bits = static_cast<unsigned>(n);
    e.message_rate = spec.ping_rate * static_cast<double>(n);
    e.rate_is_bound = true;
    e.rate_formula = "<= mu n";
    e.limiting_delay = DelayClass::kUnknown;
  }
  return e;
}

std::vector<ResourceRow> resource_table(const std::vector<CatalogEntry>& catalog, std::size_t n, double load,
                                        const std::vector<Measurement>& measured) {
  if (measured.size() != catalog.size()) throw ConfigError("one measurement per catalog entry is required");
  std::vector<ResourceRow> rows;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const auto& e = catalog[i];
    ResourceRow r;
    r.policy = e.policy->name();
    r.servers = n;
    r.load = load;
    r.memory_bits = e.memory_bits;
    r.measured_memory_bits = measured[i].memory_bits;
    r.declared_rate = e.message_rate;
    r.rate_is_bound = e.rate_is_bound;
    r.measured_rate = measured[i].message_rate;
    r.delay = measured[i].delay;
    r.limiting_delay = e.limiting_delay;
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace lbsim
