#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "imsa/analysis.hpp"
#include "imsa/engine.hpp"
#include "imsa/meanfield.hpp"
#include "imsa/scenario.hpp"

namespace imsa {

// Everything one run produces beyond the CSV files, for callers that want to
// inspect the outcome programmatically.
struct ExperimentResult {
  MaterializedScenario setup;
  SimulationTrace trace;
  std::vector<int> allocation;  // per-user modal channel over the final window
  MetricsReport metrics;
  double optimum_value = 0.0;
  bool optimum_exact = false;
  EquilibriumReport equilibrium;
  double equilibrium_epsilon = 0.0;
  std::optional<EquilibriumResult> field;
};

namespace detail {

// The channel a user occupied most often over periods [first, last); ties go
// to the lowest channel index.
inline std::vector<int> modal_channels(const SimulationTrace& tr, long first, long last) {
  std::vector<int> modal(static_cast<std::size_t>(tr.users), 0);
  std::vector<int> count(static_cast<std::size_t>(tr.channels));
  for (int u = 0; u < tr.users; ++u) {
    std::fill(count.begin(), count.end(), 0);
    for (long t = first; t < last; ++t)
      ++count[static_cast<std::size_t>(tr.channel_of[static_cast<std::size_t>(t)][u])];
    modal[static_cast<std::size_t>(u)] =
        static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
  }
  return modal;
}

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw std::runtime_error((dir / name).string() + ": cannot open for writing");
  return out;
}

inline std::string cell(std::optional<double> v) { return v ? fmt(*v) : std::string(); }

}  // namespace detail

// Run one scenario end to end and write its outputs under out_dir:
//   trace.csv       per period and user: channel, estimate, realized rate
//   occupancy.csv   per period: user count on each channel
//   user_summary.csv  per user: cluster, final and modal channel, mean rate
//   clusters.csv    per cluster: size, mean realized rate, fairness
//   metrics.csv     one flat row of run-level numbers
//   meanfield.csv   deterministic trajectory (only when the scenario asks)
//   resolved_scenario.cfg  the scenario with derived values filled in
// Identical scenario and seed give byte-identical files.
inline ExperimentResult run_experiment(const Scenario& s, const std::string& out_dir) {
  namespace fs = std::filesystem;
  using detail::fmt;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);

  // Open every stream before simulating so a bad output directory fails fast.
  auto trace_csv = detail::open_output(dir, "trace.csv");
  auto occupancy_csv = detail::open_output(dir, "occupancy.csv");
  auto users_csv = detail::open_output(dir, "user_summary.csv");
  auto clusters_csv = detail::open_output(dir, "clusters.csv");
  auto metrics_csv = detail::open_output(dir, "metrics.csv");
  auto resolved_cfg = detail::open_output(dir, "resolved_scenario.cfg");
  std::optional<std::ofstream> field_csv;
  if (s.meanfield) field_csv = detail::open_output(dir, "meanfield.csv");

  ExperimentResult r;
  r.setup = materialize(s);
  r.trace = run_simulation(r.setup.input, r.setup.engine, r.setup.seed);
  const SimulationTrace& tr = r.trace;

  trace_csv << "period,user,channel,estimate_mbps,realized_mbps\n";
  for (long t = 0; t < tr.periods; ++t)
    for (int u = 0; u < tr.users; ++u)
      trace_csv << (t + 1) << ',' << u << ',' << tr.channel_of[t][u] << ','
                << fmt(tr.estimate_of[t][u]) << ',' << fmt(tr.realized[t][u]) << '\n';

  occupancy_csv << "period";
  for (int m = 0; m < tr.channels; ++m) occupancy_csv << ",channel_" << m;
  occupancy_csv << '\n';
  for (long t = 0; t < tr.periods; ++t) {
    occupancy_csv << (t + 1);
    for (int m = 0; m < tr.channels; ++m) occupancy_csv << ',' << tr.occupancy[t][m];
    occupancy_csv << '\n';
  }

  const long window = std::min<long>(r.setup.engine.window, tr.periods);
  r.allocation = detail::modal_channels(tr, tr.periods - window, tr.periods);

  // Value the standing allocation and compare it with the best one found.
  if (s.heterogeneous_count == 0) {
    const auto opt =
        centralized_optimum(r.setup.rates.theta, r.setup.rates.rate.at(0),
                            s.user_count, r.setup.engine.contention);
    r.optimum_value = opt.value;
    r.optimum_exact = true;
  } else {
    OptimumOptions opts;
    opts.seed = s.seed;
    const auto opt = heterogeneous_optimum(r.setup.rates, opts);
    r.optimum_value = opt.value;
    r.optimum_exact = opt.exact;
  }
  r.metrics = make_metrics(r.setup.rates, r.allocation, r.optimum_value);

  double mean_own = 0.0;
  for (const double u : r.metrics.user_throughput) mean_own += u;
  mean_own /= r.metrics.user_throughput.empty() ? 1 : double(r.metrics.user_throughput.size());
  r.equilibrium_epsilon = s.equilibrium_eps_fraction * mean_own;
  r.equilibrium =
      check_imitation_equilibrium(r.allocation, r.setup.input.graph, r.setup.rates,
                                  r.equilibrium_epsilon);

  users_csv << "user,cluster,final_channel,modal_channel,mean_realized_mbps\n";
  for (int u = 0; u < tr.users; ++u)
    users_csv << u << ',' << r.setup.clusters.cluster_of[u] << ','
              << tr.channel_of[tr.periods - 1][u] << ',' << r.allocation[u] << ','
              << fmt(tr.mean_realized[u]) << '\n';

  clusters_csv << "cluster,size,mean_realized_mbps,jain_realized\n";
  for (int k = 0; k < r.setup.clusters.num_clusters(); ++k) {
    std::vector<double> rates;
    for (const int u : r.setup.clusters.members[k]) rates.push_back(tr.mean_realized[u]);
    double mean = 0.0;
    for (const double v : rates) mean += v;
    mean /= double(rates.size());
    clusters_csv << k << ',' << rates.size() << ',' << fmt(mean) << ','
                 << detail::cell(jain_index(rates)) << '\n';
  }

  if (s.meanfield && r.setup.field_ready) {
    // The deterministic map needs a smooth switching law, so resolve the
    // noise width the same way the abstract estimate mode does.
    double half_width = s.noise_half_width;
    if (!(half_width > 0)) {
      std::vector<double> products;
      for (int c = 0; c < s.channel_count; ++c) products.push_back(s.theta[c] * s.rate_mbps[c]);
      half_width = default_noise(products).half_width;
    }
    const MeanFieldModel model(r.setup.field, NoiseDiffCdf::for_uniform(half_width));
    auto state = PopulationState::uniform(r.setup.field.clusters(), r.setup.field.channels());
    *field_csv << "iteration,cluster";
    for (int m = 0; m < r.setup.field.channels(); ++m) *field_csv << ",share_" << m;
    *field_csv << ",delta,descent\n";
    IterateOptions opts;
    // Thin the trajectory so long runs stay reviewable: every iterate early
    // on, then every hundredth.
    opts.observer = [&](long it, const PopulationState& x, double delta, double descent) {
      if (it > 1000 && it % 100 != 0) return;
      for (int k = 0; k < r.setup.field.clusters(); ++k) {
        *field_csv << it << ',' << k;
        for (int m = 0; m < r.setup.field.channels(); ++m)
          *field_csv << ',' << fmt(x.x[k][m]);
        *field_csv << ',' << fmt(delta) << ',' << fmt(descent) << '\n';
      }
    };
    r.field = model.iterate_to_equilibrium(state, opts);
  }

  metrics_csv << "seed,users,channels,periods,converged_at,system_throughput_mbps,jain,"
                 "utilized,optimum_value_mbps,optimum_exact,poi,poi_lower_bound,"
                 "equilibrium_pass,equilibrium_epsilon,max_residual,clusters,geometric_radius,"
                 "mf_converged,mf_iterations,mf_spread\n";
  metrics_csv << s.seed << ',' << tr.users << ',' << tr.channels << ',' << tr.periods << ','
              << tr.converged_at << ',' << fmt(r.metrics.system_throughput) << ','
              << detail::cell(r.metrics.jain) << ',' << r.metrics.utilized << ','
              << fmt(r.optimum_value) << ',' << (r.optimum_exact ? 1 : 0) << ','
              << detail::cell(r.metrics.poi) << ',' << fmt(r.metrics.poi_bound) << ','
              << (r.equilibrium.passes ? 1 : 0) << ',' << fmt(r.equilibrium_epsilon) << ','
              << fmt(r.equilibrium.max_residual()) << ',' << r.setup.clusters.num_clusters()
              << ',' << fmt(r.setup.geometric_radius) << ',';
  if (r.field)
    metrics_csv << (r.field->converged ? 1 : 0) << ',' << r.field->iterations << ','
                << fmt(r.field->throughput_spread);
  else
    metrics_csv << ",,";
  metrics_csv << '\n';

  // Echo the scenario with derived values resolved, so the run is repeatable
  // from its own outputs.
  Scenario resolved = s;
  if (s.graph_kind == GraphKind::geometric) resolved.radius_m = r.setup.geometric_radius;
  if (s.estimates == EstimateSource::abstract_noise && s.noise_half_width < 0)
    resolved.noise_half_width = r.setup.engine.noise.half_width;
  save_scenario(resolved, resolved_cfg);

  return r;
}

}  // namespace imsa
