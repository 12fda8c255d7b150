// Command-line front end: run scenarios, inspect social graphs, and print
// contention tables.  See README.md for the file formats.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "imsa/experiment.hpp"

namespace {

struct RunArgs {
  std::string scenario_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  long periods = 0;
  int delay = -1;
  std::string mode;
  bool meanfield = false;
  int replicates = 1;
};

void print_summary(const imsa::Scenario& s, const imsa::ExperimentResult& r,
                   const std::string& dir) {
  std::printf("wrote %s (seed %llu)\n", dir.c_str(),
              static_cast<unsigned long long>(s.seed));
  std::printf("  users %d  channels %d  periods %ld  converged_at %ld\n", r.trace.users,
              r.trace.channels, r.trace.periods, r.trace.converged_at);
  std::printf("  system throughput %.6g Mbps  jain %.6g  utilized %d\n",
              r.metrics.system_throughput, r.metrics.jain.value_or(0.0), r.metrics.utilized);
  std::printf("  optimum %.6g Mbps (%s)  poi %.6g  bound %.6g\n", r.optimum_value,
              r.optimum_exact ? "exact" : "local search", r.metrics.poi.value_or(0.0),
              r.metrics.poi_bound);
  std::printf("  equilibrium %s at eps %.6g (max residual %.6g)\n",
              r.equilibrium.passes ? "holds" : "violated", r.equilibrium_epsilon,
              r.equilibrium.max_residual());
  if (r.field)
    std::printf("  deterministic model: %s after %ld iterations, spread %.3g\n",
                r.field->converged ? "converged" : "not converged", r.field->iterations,
                r.field->throughput_spread);
}

int run_command(const RunArgs& args) {
  imsa::Scenario base = imsa::load_scenario(args.scenario_path);
  if (args.seed_set) base.seed = args.seed;
  if (args.periods > 0) base.periods = args.periods;
  if (args.delay >= 0) base.delay = args.delay;
  if (args.mode == "hom") base.mode = imsa::EngineMode::homogeneous;
  if (args.mode == "het") base.mode = imsa::EngineMode::heterogeneous;
  if (args.meanfield) base.meanfield = true;

  if (args.replicates == 1) {
    const auto result = imsa::run_experiment(base, args.out_dir);
    print_summary(base, result, args.out_dir);
    return 0;
  }

  // Seed replicates run in parallel, each into its own subdirectory; the
  // aggregate table is written afterwards by this thread alone.
  std::vector<imsa::Scenario> runs(static_cast<std::size_t>(args.replicates), base);
  std::vector<imsa::ExperimentResult> results(runs.size());
  std::vector<std::string> dirs(runs.size());
  std::vector<std::exception_ptr> errors(runs.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    runs[i].seed = base.seed + i;
    dirs[i] = (std::filesystem::path(args.out_dir) /
               ("seed_" + std::to_string(runs[i].seed))).string();
    pool.emplace_back([&, i] {
      try {
        results[i] = imsa::run_experiment(runs[i], dirs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::ofstream agg(std::filesystem::path(args.out_dir) / "replicates.csv", std::ios::binary);
  if (!agg) throw std::runtime_error(args.out_dir + ": cannot write replicates.csv");
  agg << "seed,system_throughput_mbps,jain,utilized,poi,equilibrium_pass,converged_at\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = results[i];
    agg << runs[i].seed << ',' << imsa::detail::fmt(r.metrics.system_throughput) << ','
        << imsa::detail::cell(r.metrics.jain) << ',' << r.metrics.utilized << ','
        << imsa::detail::cell(r.metrics.poi) << ',' << (r.equilibrium.passes ? 1 : 0) << ','
        << r.trace.converged_at << '\n';
    print_summary(runs[i], results[i], dirs[i]);
  }
  return 0;
}

int cluster_command(const std::string& path, std::uint64_t seed) {
  const auto graph = imsa::load_graph(path);
  auto rng = imsa::make_stream(seed, imsa::stream::clustering);
  const auto cg = imsa::build_cluster_graph(graph, rng);
  std::printf("%d users, %d clusters, %s\n", graph.size(), cg.num_clusters(),
              imsa::is_connected(cg) ? "connected" : "disconnected");
  for (int k = 0; k < cg.num_clusters(); ++k) {
    std::printf("cluster %d (size %zu):", k, cg.members[k].size());
    for (const int u : cg.members[k]) std::printf(" %d", u);
    std::printf("\n  talks to:");
    const auto peers = cg.comm_neighbors(k);
    if (peers.empty()) std::printf(" nobody");
    for (const int h : peers) std::printf(" %d", h);
    std::printf("\n");
  }
  return 0;
}

int gtable_command(int lambda_max, int kmax) {
  const imsa::ContentionConfig cfg{lambda_max};
  const imsa::GrabTable table(cfg, std::max(kmax, 1));
  std::printf("k,g\n");
  for (int k = 1; k <= kmax; ++k) std::printf("%d,%.10g\n", k, table(k));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imitation-based spectrum sharing simulator"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "simulate a scenario file and write CSV outputs");
  run->add_option("scenario", run_args.scenario_path, "scenario file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", run_args.out_dir, "output directory")->required();
  auto* seed_opt = run->add_option("--seed", run_args.seed, "override the master seed");
  run->add_option("--periods", run_args.periods, "override the decision-period count");
  run->add_option("--delay", run_args.delay, "override the information delay");
  run->add_option("--mode", run_args.mode, "override the engine mode")
      ->check(CLI::IsMember({"hom", "het"}));
  run->add_flag("--meanfield", run_args.meanfield, "also run the deterministic model");
  run->add_option("--replicates", run_args.replicates,
                  "run this many consecutive seeds in parallel")
      ->check(CLI::PositiveNumber);

  std::string graph_path;
  std::uint64_t cluster_seed = 1;
  auto* cluster = app.add_subcommand("cluster", "print the cluster structure of a graph file");
  cluster->add_option("graph", graph_path, "graph file")->required()->check(CLI::ExistingFile);
  cluster->add_option("--seed", cluster_seed, "seed for the randomized grouping scan");

  int lambda_max = 50, kmax = 20;
  auto* gtable = app.add_subcommand("gtable", "print the channel-grab probability table");
  gtable->add_option("--lambda-max", lambda_max, "backoff window size")
      ->check(CLI::PositiveNumber);
  gtable->add_option("--kmax", kmax, "largest contender count to print")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) {
      run_args.seed_set = seed_opt->count() > 0;
      return run_command(run_args);
    }
    if (cluster->parsed()) return cluster_command(graph_path, cluster_seed);
    return gtable_command(lambda_max, kmax);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
