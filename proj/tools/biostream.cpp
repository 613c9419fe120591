#include <atomic>
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "biostream/app/commands.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

void add_common(CLI::App* cmd, biostream::app::CommandOptions& o, bool with_input) {
  cmd->add_option("--config", o.config, "session config (JSON)");
  cmd->add_option("--out", o.out, "output file or directory");
  cmd->add_option("--seed", o.seed, "seed for simulated sources and scenarios");
  cmd->add_option("--speed", o.speed, "pacing factor; 0 = as fast as possible")->check(CLI::NonNegativeNumber);
  cmd->add_option("--port", o.port, "TCP/WebSocket port");
  cmd->add_flag("--plot", o.plot, "also write SVG plots");
  if (with_input) cmd->add_option("input", o.input, "recording (.mbr)");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace biostream;
  CLI::App app{"biostream: synchronized bio-sensing streams, processing and evaluation"};
  app.require_subcommand(1);
  app::CommandOptions o;
  o.stop = &g_stop;

  auto* record = app.add_subcommand("record", "record the configured sources to an .mbr file");
  add_common(record, o, false);
  auto* replay = app.add_subcommand("replay", "re-publish a recording");
  add_common(replay, o, true);
  replay->add_option("--wait", o.wait_for_client_s, "seconds to wait for a TCP subscriber when --port is set");
  auto* process = app.add_subcommand("process", "run the configured stage graph");
  add_common(process, o, true);
  auto* evaluate = app.add_subcommand("evaluate", "run an evaluation scenario and write reports");
  add_common(evaluate, o, false);
  evaluate->add_option("target", o.target, "ppg or gaze")->required();
  evaluate->add_option("--scenario", o.scenario, "ppg: rest, walk or both");
  evaluate->add_option("--anc", o.anc, "ppg: on, off or both");
  evaluate->add_option("--trials", o.trials, "gaze: number of trials");
  evaluate->add_option("--duration", o.duration_s, "ppg: seconds per scenario");
  auto* serve = app.add_subcommand("serve", "run the dashboard bridge");
  add_common(serve, o, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorCode::config);
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    if (record->parsed()) app::cmd_record(o);
    else if (replay->parsed()) app::cmd_replay(o);
    else if (process->parsed()) app::cmd_process(o);
    else if (evaluate->parsed()) app::cmd_evaluate(o);
    else if (serve->parsed()) app::cmd_serve(o);
  } catch (const Error& e) {
    std::cerr << "biostream: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "biostream: " << e.what() << '\n';
    return exit_code_for(ErrorCode::io);
  } catch (const std::exception& e) {
    std::cerr << "biostream: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
