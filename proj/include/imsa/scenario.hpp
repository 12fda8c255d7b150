#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "imsa/analysis.hpp"
#include "imsa/channel.hpp"
#include "imsa/engine.hpp"
#include "imsa/meanfield.hpp"
#include "imsa/rng.hpp"
#include "imsa/social_graph.hpp"

namespace imsa {

enum class GraphKind { complete, clusters, geometric, file };

// A full experiment description, written and read as sectioned key=value
// text.  Numeric defaults match the reference setup: five 10 MHz channels,
// -100 dBm noise, 100 mW transmitters, 100-slot periods.
struct Scenario {
  // [channels]
  int channel_count = 5;
  double bandwidth_mhz = 10.0;
  double noise_dbm = -100.0;
  IdleKind channel_model = IdleKind::iid;
  double mixing = 0.2;  // markov switching speed: p = mixing*theta, q = mixing*(1-theta)
  std::vector<double> theta = {2.0 / 3, 4.0 / 7, 5.0 / 9, 0.5, 0.8};
  std::vector<double> rate_mbps = {15, 70, 90, 40, 100};

  // [users]
  int user_count = 150;
  double tx_power_mw = 100.0;
  int heterogeneous_count = 0;  // trailing users with personal rate draws
  double heterogeneous_base_mbps = 100.0;
  double heterogeneous_spread_mbps = 100.0;

  // [graph]
  GraphKind graph_kind = GraphKind::complete;
  std::vector<int> cluster_sizes;
  std::vector<std::pair<int, int>> cluster_links;
  std::string graph_path;
  double side_m = 250.0;
  double radius_m = 0.0;  // geometric; 0 picks the smallest connecting radius

  // [engine]
  long periods = 500;
  int slots_per_period = 100;
  int fanout = 1;
  int delay = 0;
  int lambda_max = 50;
  EngineMode mode = EngineMode::homogeneous;
  EstimateSource estimates = EstimateSource::mle;
  double noise_half_width = -1.0;  // abstract estimates; <0 means 5% of max theta*rate
  int window = 100;
  double convergence_eps = 0.02;

  // [analysis]
  bool meanfield = false;
  double equilibrium_eps_fraction = 0.05;

  // [run]
  std::uint64_t seed = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct ScenarioParser {
  std::string name;
  int lineno = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": " + msg);
  }

  double number(const std::string& key, const std::string& v) const {
    // Accept plain decimals and fractions like 2/3.
    const auto slash = v.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
      }
      const std::string num = trim(v.substr(0, slash)), den = trim(v.substr(slash + 1));
      const double a = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument(v);
      const double b = std::stod(den, &used);
      if (used != den.size() || b == 0.0) throw std::invalid_argument(v);
      return a / b;
    } catch (const std::exception&) {
      fail(key + ": expected a number, got '" + v + "'");
    }
  }

  long integer(const std::string& key, const std::string& v) const {
    try {
      std::size_t used = 0;
      const long x = std::stol(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      fail(key + ": expected an integer, got '" + v + "'");
    }
  }

  std::uint64_t unsigned64(const std::string& key, const std::string& v) const {
    try {
      std::size_t used = 0;
      const std::uint64_t x = std::stoull(v, &used);
      if (used != v.size() || v[0] == '-') throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      fail(key + ": expected an unsigned integer, got '" + v + "'");
    }
  }

  bool boolean(const std::string& key, const std::string& v) const {
    if (v == "true") return true;
    if (v == "false") return false;
    fail(key + ": expected true or false, got '" + v + "'");
  }

  std::vector<std::string> split_list(const std::string& v) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::vector<double> numbers(const std::string& key, const std::string& v) const {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(number(key, item));
    return out;
  }

  std::vector<int> integers(const std::string& key, const std::string& v) const {
    std::vector<int> out;
    for (const auto& item : split_list(v)) out.push_back(static_cast<int>(integer(key, item)));
    return out;
  }

  std::vector<std::pair<int, int>> links(const std::string& key, const std::string& v) const {
    std::vector<std::pair<int, int>> out;
    for (const auto& item : split_list(v)) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) fail(key + ": expected pairs like 0-1, got '" + item + "'");
      out.push_back({static_cast<int>(integer(key, trim(item.substr(0, dash)))),
                     static_cast<int>(integer(key, trim(item.substr(dash + 1))))});
    }
    return out;
  }
};

}  // namespace detail

inline Scenario parse_scenario(std::istream& in, const std::string& name) {
  Scenario s;
  detail::ScenarioParser p{name, 0};
  std::string line, section;
  while (std::getline(in, line)) {
    ++p.lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') p.fail("unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "channels" && section != "users" && section != "graph" &&
          section != "engine" && section != "analysis" && section != "run")
        p.fail("unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) p.fail("key '" + key + "' appears before any section");
    if (value.empty()) p.fail(key + ": empty value");

    if (section == "channels") {
      if (key == "count") {
        s.channel_count = static_cast<int>(p.integer(key, value));
        if (s.channel_count < 1) p.fail("count: need at least one channel");
      } else if (key == "bandwidth_mhz") {
        s.bandwidth_mhz = p.number(key, value);
        if (!(s.bandwidth_mhz > 0)) p.fail("bandwidth_mhz: must be positive");
      } else if (key == "noise_dbm") {
        s.noise_dbm = p.number(key, value);
      } else if (key == "model") {
        if (value == "iid")
          s.channel_model = IdleKind::iid;
        else if (value == "markov")
          s.channel_model = IdleKind::markov;
        else
          p.fail("model: expected iid or markov, got '" + value + "'");
      } else if (key == "mixing") {
        s.mixing = p.number(key, value);
        if (!(s.mixing > 0 && s.mixing <= 1)) p.fail("mixing: must lie in (0,1]");
      } else if (key == "theta") {
        s.theta = p.numbers(key, value);
        for (const double t : s.theta)
          if (!(t > 0 && t < 1)) p.fail("theta: values must lie in (0,1)");
      } else if (key == "rate_mbps") {
        s.rate_mbps = p.numbers(key, value);
        for (const double r : s.rate_mbps)
          if (!(r > 0)) p.fail("rate_mbps: values must be positive");
      } else {
        p.fail("unknown key '" + key + "' in [channels]");
      }
    } else if (section == "users") {
      if (key == "count") {
        s.user_count = static_cast<int>(p.integer(key, value));
        if (s.user_count < 1) p.fail("count: need at least one user");
      } else if (key == "tx_power_mw") {
        s.tx_power_mw = p.number(key, value);
        if (!(s.tx_power_mw > 0)) p.fail("tx_power_mw: must be positive");
      } else if (key == "heterogeneous_count") {
        s.heterogeneous_count = static_cast<int>(p.integer(key, value));
        if (s.heterogeneous_count < 0) p.fail("heterogeneous_count: must be nonnegative");
      } else if (key == "heterogeneous_base_mbps") {
        s.heterogeneous_base_mbps = p.number(key, value);
        if (!(s.heterogeneous_base_mbps > 0)) p.fail("heterogeneous_base_mbps: must be positive");
      } else if (key == "heterogeneous_spread_mbps") {
        s.heterogeneous_spread_mbps = p.number(key, value);
        if (s.heterogeneous_spread_mbps < 0)
          p.fail("heterogeneous_spread_mbps: must be nonnegative");
      } else {
        p.fail("unknown key '" + key + "' in [users]");
      }
    } else if (section == "graph") {
      if (key == "kind") {
        if (value == "complete")
          s.graph_kind = GraphKind::complete;
        else if (value == "clusters")
          s.graph_kind = GraphKind::clusters;
        else if (value == "geometric")
          s.graph_kind = GraphKind::geometric;
        else if (value == "file")
          s.graph_kind = GraphKind::file;
        else
          p.fail("kind: expected complete, clusters, geometric, or file");
      } else if (key == "sizes") {
        s.cluster_sizes = p.integers(key, value);
        for (const int z : s.cluster_sizes)
          if (z < 1) p.fail("sizes: cluster sizes must be positive");
      } else if (key == "links") {
        s.cluster_links = p.links(key, value);
      } else if (key == "path") {
        s.graph_path = value;
      } else if (key == "side_m") {
        s.side_m = p.number(key, value);
        if (!(s.side_m > 0)) p.fail("side_m: must be positive");
      } else if (key == "radius_m") {
        s.radius_m = p.number(key, value);
        if (s.radius_m < 0) p.fail("radius_m: must be nonnegative");
      } else {
        p.fail("unknown key '" + key + "' in [graph]");
      }
    } else if (section == "engine") {
      if (key == "periods") {
        s.periods = p.integer(key, value);
        if (s.periods < 1) p.fail("periods: need at least one period");
      } else if (key == "slots_per_period") {
        s.slots_per_period = static_cast<int>(p.integer(key, value));
        if (s.slots_per_period < 1) p.fail("slots_per_period: need at least one slot");
      } else if (key == "fanout") {
        s.fanout = static_cast<int>(p.integer(key, value));
        if (s.fanout < 1) p.fail("fanout: must be at least 1");
      } else if (key == "delay") {
        s.delay = static_cast<int>(p.integer(key, value));
        if (s.delay < 0) p.fail("delay: must be nonnegative");
      } else if (key == "lambda_max") {
        s.lambda_max = static_cast<int>(p.integer(key, value));
        if (s.lambda_max < 1) p.fail("lambda_max: must be at least 1");
      } else if (key == "mode") {
        if (value == "homogeneous")
          s.mode = EngineMode::homogeneous;
        else if (value == "heterogeneous")
          s.mode = EngineMode::heterogeneous;
        else
          p.fail("mode: expected homogeneous or heterogeneous");
      } else if (key == "estimates") {
        if (value == "mle")
          s.estimates = EstimateSource::mle;
        else if (value == "abstract")
          s.estimates = EstimateSource::abstract_noise;
        else
          p.fail("estimates: expected mle or abstract");
      } else if (key == "noise_half_width") {
        s.noise_half_width = p.number(key, value);
      } else if (key == "window") {
        s.window = static_cast<int>(p.integer(key, value));
        if (s.window < 1) p.fail("window: must be positive");
      } else if (key == "convergence_eps") {
        s.convergence_eps = p.number(key, value);
        if (!(s.convergence_eps > 0)) p.fail("convergence_eps: must be positive");
      } else {
        p.fail("unknown key '" + key + "' in [engine]");
      }
    } else if (section == "analysis") {
      if (key == "meanfield") {
        s.meanfield = p.boolean(key, value);
      } else if (key == "equilibrium_eps_fraction") {
        s.equilibrium_eps_fraction = p.number(key, value);
        if (s.equilibrium_eps_fraction < 0) p.fail("equilibrium_eps_fraction: must be nonnegative");
      } else {
        p.fail("unknown key '" + key + "' in [analysis]");
      }
    } else {  // run
      if (key == "seed") {
        s.seed = p.unsigned64(key, value);
      } else {
        p.fail("unknown key '" + key + "' in [run]");
      }
    }
  }

  p.lineno = 0;
  if (s.theta.size() != static_cast<std::size_t>(s.channel_count))
    p.fail("channels: theta needs one value per channel");
  if (s.rate_mbps.size() != static_cast<std::size_t>(s.channel_count))
    p.fail("channels: rate_mbps needs one value per channel");
  if (s.heterogeneous_count > s.user_count)
    p.fail("users: heterogeneous_count cannot exceed count");
  if (s.graph_kind == GraphKind::clusters) {
    if (s.cluster_sizes.empty()) p.fail("graph: clusters kind needs sizes");
    int total = 0;
    for (const int z : s.cluster_sizes) total += z;
    if (total != s.user_count) p.fail("graph: cluster sizes must sum to the user count");
    for (const auto& [a, b] : s.cluster_links)
      if (a < 0 || b < 0 || a >= static_cast<int>(s.cluster_sizes.size()) ||
          b >= static_cast<int>(s.cluster_sizes.size()) || a == b)
        p.fail("graph: link endpoints must name distinct clusters");
  }
  if (s.graph_kind == GraphKind::file && s.graph_path.empty())
    p.fail("graph: file kind needs a path");
  if (s.mode == EngineMode::heterogeneous && s.estimates == EstimateSource::abstract_noise)
    p.fail("engine: abstract estimates require the homogeneous mode");
  if (s.meanfield && s.heterogeneous_count > 0)
    p.fail("analysis: the deterministic model needs homogeneous users");
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(path + ": cannot open scenario file");
  return parse_scenario(in, path);
}

namespace detail {

// Full precision so written values reparse to the identical double; %g keeps
// short values short.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out;
}

}  // namespace detail

inline void save_scenario(const Scenario& s, std::ostream& out) {
  using detail::fmt;
  out << "[channels]\n";
  out << "count = " << s.channel_count << "\n";
  out << "bandwidth_mhz = " << fmt(s.bandwidth_mhz) << "\n";
  out << "noise_dbm = " << fmt(s.noise_dbm) << "\n";
  out << "model = " << (s.channel_model == IdleKind::iid ? "iid" : "markov") << "\n";
  out << "mixing = " << fmt(s.mixing) << "\n";
  out << "theta = " << detail::fmt_list(s.theta) << "\n";
  out << "rate_mbps = " << detail::fmt_list(s.rate_mbps) << "\n";
  out << "\n[users]\n";
  out << "count = " << s.user_count << "\n";
  out << "tx_power_mw = " << fmt(s.tx_power_mw) << "\n";
  out << "heterogeneous_count = " << s.heterogeneous_count << "\n";
  out << "heterogeneous_base_mbps = " << fmt(s.heterogeneous_base_mbps) << "\n";
  out << "heterogeneous_spread_mbps = " << fmt(s.heterogeneous_spread_mbps) << "\n";
  out << "\n[graph]\n";
  const char* kind = s.graph_kind == GraphKind::complete    ? "complete"
                     : s.graph_kind == GraphKind::clusters  ? "clusters"
                     : s.graph_kind == GraphKind::geometric ? "geometric"
                                                            : "file";
  out << "kind = " << kind << "\n";
  if (!s.cluster_sizes.empty()) {
    out << "sizes = ";
    for (std::size_t i = 0; i < s.cluster_sizes.size(); ++i)
      out << (i ? ", " : "") << s.cluster_sizes[i];
    out << "\n";
  }
  if (!s.cluster_links.empty()) {
    out << "links = ";
    for (std::size_t i = 0; i < s.cluster_links.size(); ++i)
      out << (i ? ", " : "") << s.cluster_links[i].first << "-" << s.cluster_links[i].second;
    out << "\n";
  }
  if (!s.graph_path.empty()) out << "path = " << s.graph_path << "\n";
  out << "side_m = " << fmt(s.side_m) << "\n";
  out << "radius_m = " << fmt(s.radius_m) << "\n";
  out << "\n[engine]\n";
  out << "periods = " << s.periods << "\n";
  out << "slots_per_period = " << s.slots_per_period << "\n";
  out << "fanout = " << s.fanout << "\n";
  out << "delay = " << s.delay << "\n";
  out << "lambda_max = " << s.lambda_max << "\n";
  out << "mode = " << (s.mode == EngineMode::homogeneous ? "homogeneous" : "heterogeneous")
      << "\n";
  out << "estimates = " << (s.estimates == EstimateSource::mle ? "mle" : "abstract") << "\n";
  out << "noise_half_width = " << fmt(s.noise_half_width) << "\n";
  out << "window = " << s.window << "\n";
  out << "convergence_eps = " << fmt(s.convergence_eps) << "\n";
  out << "\n[analysis]\n";
  out << "meanfield = " << (s.meanfield ? "true" : "false") << "\n";
  out << "equilibrium_eps_fraction = " << fmt(s.equilibrium_eps_fraction) << "\n";
  out << "\n[run]\n";
  out << "seed = " << s.seed << "\n";
}

inline std::string scenario_text(const Scenario& s) {
  std::ostringstream out;
  save_scenario(s, out);
  return out.str();
}

// A scenario made concrete: channel gains calibrated to the target rates,
// heterogeneous users given their personal rate draws, the graph built, and
// its cluster structure extracted.
struct MaterializedScenario {
  SimulationInput input;
  EngineConfig engine;
  RateTable rates;
  ClusterGraph clusters;
  MeanFieldSpec field;  // meaningful only when field_ready
  bool field_ready = false;
  double geometric_radius = 0.0;
  std::uint64_t seed = 0;
};

inline MaterializedScenario materialize(const Scenario& s) {
  MaterializedScenario m;
  m.seed = s.seed;

  for (int c = 0; c < s.channel_count; ++c) {
    ChannelSpec spec;
    spec.id = c;
    spec.bandwidth_mhz = s.bandwidth_mhz;
    spec.noise_power_mw = dbm_to_mw(s.noise_dbm);
    if (s.channel_model == IdleKind::markov) {
      spec = make_markov_channel(c, s.bandwidth_mhz, s.theta[c], s.mixing, spec.noise_power_mw);
    } else {
      spec.theta = s.theta[c];
    }
    spec.mean_gain = calibrate_mean_gain(spec, s.tx_power_mw, s.rate_mbps[c]);
    m.input.channels.push_back(spec);
  }

  for (int u = 0; u < s.user_count; ++u) {
    UserRadioSpec radio{u, s.tx_power_mw, {}};
    if (u >= s.user_count - s.heterogeneous_count) {
      auto rng = make_stream(s.seed, stream::hetero_rates, static_cast<std::uint64_t>(u));
      std::uniform_real_distribution<double> extra(0.0, s.heterogeneous_spread_mbps);
      radio.mean_gain.resize(s.channel_count);
      for (int c = 0; c < s.channel_count; ++c)
        radio.mean_gain[c] = calibrate_mean_gain(
            m.input.channels[c], s.tx_power_mw, s.heterogeneous_base_mbps + extra(rng));
    }
    m.input.users.push_back(std::move(radio));
  }

  switch (s.graph_kind) {
    case GraphKind::complete:
      m.input.graph = make_complete(s.user_count);
      break;
    case GraphKind::clusters:
      m.input.graph = make_cluster_topology(s.cluster_sizes, s.cluster_links);
      break;
    case GraphKind::geometric: {
      auto rng = make_stream(s.seed, stream::graph);
      auto geo = make_geometric(s.user_count, s.side_m, s.radius_m, rng);
      m.input.graph = std::move(geo.graph);
      m.geometric_radius = geo.radius;
      break;
    }
    case GraphKind::file: {
      m.input.graph = load_graph(s.graph_path);
      if (m.input.graph.size() != s.user_count)
        throw std::invalid_argument(s.graph_path + ": graph has " +
                                    std::to_string(m.input.graph.size()) + " users, scenario has " +
                                    std::to_string(s.user_count));
      break;
    }
  }

  m.engine.periods = s.periods;
  m.engine.slots_per_period = s.slots_per_period;
  m.engine.enquiry_fanout = s.fanout;
  m.engine.delay = s.delay;
  m.engine.mode = s.mode;
  m.engine.source = s.estimates;
  m.engine.contention = ContentionConfig{s.lambda_max};
  m.engine.window = s.window;
  m.engine.convergence_eps = s.convergence_eps;
  if (s.estimates == EstimateSource::abstract_noise) {
    if (s.noise_half_width >= 0) {
      m.engine.noise = NoiseModel{s.noise_half_width};
    } else {
      std::vector<double> products(s.channel_count);
      for (int c = 0; c < s.channel_count; ++c) products[c] = s.theta[c] * s.rate_mbps[c];
      m.engine.noise = default_noise(products);
    }
  }
  m.input.validate();
  m.engine.validate();

  m.rates = make_rate_table(m.input.channels, m.input.users, m.engine.contention);

  auto cluster_rng = make_stream(s.seed, stream::clustering);
  m.clusters = build_cluster_graph(m.input.graph, cluster_rng);

  if (s.meanfield) {
    m.field.theta = s.theta;
    m.field.rate = s.rate_mbps;
    for (const int z : m.clusters.sizes()) m.field.z.push_back(z);
    m.field.comm = m.clusters.comm;
    m.field.contention = m.engine.contention;
    m.field.validate();
    m.field_ready = true;
  }
  return m;
}

}  // namespace imsa
