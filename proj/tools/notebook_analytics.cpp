// Teaching-strategy analysis over an interaction log.
//
//   notebook_analytics analyze --log events.ndjson --k 2 --out report.json
//   notebook_analytics simulate --profile c1c2 --n 40 --seed 7 > events.ndjson

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tutee/analytics.hpp"
#include "tutee/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Teaching-strategy clustering"};
  app.require_subcommand(1);

  auto* analyze = app.add_subcommand("analyze", "cluster tutors by button-click rates");
  std::string log_path, out_path, linkage = "ward", metric = "euclidean";
  tutee::ReportOptions opts;
  analyze->add_option("--log", log_path)->required()->check(CLI::ExistingFile);
  analyze->add_option("--k", opts.k);
  analyze->add_option("--linkage", linkage)->check(CLI::IsMember({"ward", "single", "complete", "average"}));
  analyze->add_option("--distance", metric)->check(CLI::IsMember({"euclidean", "manhattan"}));
  analyze->add_option("--min-conversations", opts.min_conversations);
  analyze->add_option("--out", out_path, "JSON report");

  auto* simulate = app.add_subcommand("simulate", "emit a synthetic two-strategy log");
  std::string profile = "c1c2", sim_out, truth_out;
  tutee::SimulationOptions sim;
  simulate->add_option("--profile", profile)->check(CLI::IsMember({"c1c2"}));
  simulate->add_option("--n", sim.n);
  simulate->add_option("--c2-users", sim.c2_users);
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--jitter", sim.jitter);
  simulate->add_option("--clicks", sim.clicks);
  simulate->add_option("--out", sim_out, "log file (default stdout)");
  simulate->add_option("--truth", truth_out, "write the generating partition as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      opts.linkage = tutee::parse_linkage(linkage);
      opts.metric = tutee::parse_distance(metric);
      const auto log = tutee::read_event_log(log_path);
      const auto report = tutee::strategy_report(log, opts);
      std::cout << tutee::to_text(report);
      if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << tutee::to_json(report).dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write " + out_path);
      }
    } else {
      const auto s = tutee::simulate_c1c2(sim);
      std::ofstream file;
      if (!sim_out.empty()) file.open(sim_out);
      std::ostream& out = sim_out.empty() ? std::cout : file;
      for (const auto& e : s.log) out << tutee::to_json(e).dump() << '\n';
      if (!truth_out.empty()) {
        std::ofstream t(truth_out);
        t << nlohmann::json(s.truth).dump(2) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
