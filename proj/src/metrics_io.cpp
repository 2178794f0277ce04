#include <ostream>

#include <fmt/format.h>

#include "lbsim/engine.hpp"

namespace lbsim {

namespace {

nlohmann::json counts_json(const MessageCounts& m) {
  return {{"query", m.query},
          {"response", m.response},
          {"spontaneous", m.spontaneous},
          {"departure", m.departure},
          {"total", m.total()}};
}

MessageCounts counts_from(const nlohmann::json& j) {
  MessageCounts m;
  m.query = j.at("query").get<std::uint64_t>();
  m.response = j.at("response").get<std::uint64_t>();
  m.spontaneous = j.at("spontaneous").get<std::uint64_t>();
  m.departure = j.at("departure").get<std::uint64_t>();
  return m;
}

}  // namespace

nlohmann::json to_json(const MetricsLog& log) {
  nlohmann::json j;
  j["schema"] = "lbsim.metrics/1";
  j["policy"] = log.policy;
  j["servers"] = log.servers;
  j["load"] = log.load;
  j["seed"] = log.seed;
  j["memory_bits"] = log.memory_bits;
  j["warmup_jobs"] = log.warmup_jobs;
  j["arrivals"] = log.arrivals;
  j["departures"] = log.departures;
  j["steady_arrivals"] = log.steady_arrivals;
  j["steady_departures"] = log.steady_departures;
  j["sampled_total"] = log.sampled_total;
  j["dispatched_to_idle"] = log.dispatched_to_idle;
  j["spontaneous_ticks"] = log.spontaneous_ticks;
  j["busy_at_end"] = log.busy_at_end;
  j["messages"] = counts_json(log.messages);
  j["steady_messages"] = counts_json(log.steady_messages);
  j["end_time"] = log.end_time;
  j["steady_start"] = log.steady_start;
  j["tail_time"] = log.tail_time;
  j["census_gamma"] = log.census_gamma;
  auto& census = j["census"] = nlohmann::json::array();
  for (const auto& c : log.census) census.push_back({c.time, c.loaded, c.idle, c.draining});
  auto& jobs = j["jobs"] = nlohmann::json::array();
  for (const auto& r : log.jobs)
    jobs.push_back({r.index, r.arrival, r.size, r.sampled, r.destination, r.delay, r.server_messages});
  return j;
}

MetricsLog metrics_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "lbsim.metrics/1") throw ConfigError("unsupported metrics schema");
  MetricsLog log;
  log.policy = j.at("policy").get<std::string>();
  log.servers = j.at("servers").get<std::size_t>();
  log.load = j.at("load").get<double>();
  log.seed = j.at("seed").get<std::uint64_t>();
  log.memory_bits = j.at("memory_bits").get<unsigned>();
  log.warmup_jobs = j.at("warmup_jobs").get<std::uint64_t>();
  log.arrivals = j.at("arrivals").get<std::uint64_t>();
  log.departures = j.at("departures").get<std::uint64_t>();
  log.steady_arrivals = j.at("steady_arrivals").get<std::uint64_t>();
  log.steady_departures = j.at("steady_departures").get<std::uint64_t>();
  log.sampled_total = j.at("sampled_total").get<std::uint64_t>();
  log.dispatched_to_idle = j.at("dispatched_to_idle").get<std::uint64_t>();
  log.spontaneous_ticks = j.at("spontaneous_ticks").get<std::uint64_t>();
  log.busy_at_end = j.at("busy_at_end").get<std::uint64_t>();
  log.messages = counts_from(j.at("messages"));
  log.steady_messages = counts_from(j.at("steady_messages"));
  log.end_time = j.at("end_time").get<double>();
  log.steady_start = j.at("steady_start").get<double>();
  log.tail_time = j.at("tail_time").get<std::array<double, kTailDepth>>();
  log.census_gamma = j.at("census_gamma").get<double>();
  for (const auto& c : j.at("census"))
    log.census.push_back(Census{c.at(0).get<double>(), c.at(1).get<std::uint32_t>(),
                                c.at(2).get<std::uint32_t>(), c.at(3).get<std::uint32_t>()});
  for (const auto& r : j.at("jobs")) {
    JobRecord job;
    job.index = r.at(0).get<std::uint64_t>();
    job.arrival = r.at(1).get<double>();
    job.size = r.at(2).get<double>();
    job.sampled = r.at(3).get<std::uint32_t>();
    job.destination = r.at(4).get<ServerId>();
    job.delay = r.at(5).get<double>();
    job.server_messages = r.at(6).get<std::uint32_t>();
    log.jobs.push_back(job);
  }
  return log;
}

void write_jobs_csv(std::ostream& out, const MetricsLog& log) {
  out << "k,T_k,W_k,sampled,D_k,L_k\n";
  for (const auto& r : log.jobs)
    out << fmt::format("{},{:.17g},{:.17g},{},{},{:.17g}\n", r.index, r.arrival, r.size, r.sampled,
                       r.destination, r.delay);
}

}  // namespace lbsim
