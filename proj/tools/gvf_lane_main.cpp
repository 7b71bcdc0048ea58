// Command-line front end for the lane-following workbench.  Talks to the
// core exclusively through the public C API.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gvf_lane.h"

namespace {

struct ConfigDeleter {
  void operator()(gvfl_config* c) const { gvfl_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<gvfl_config, ConfigDeleter>;

struct CommonOpts {
  std::string config_file;
  long long seed = 0;
  bool seed_given = false;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required = true) {
  cmd->add_option("--config", o.config_file, "key=value config file");
  auto* seed = cmd->add_option("--seed", o.seed, "run seed (overrides config)");
  cmd->callback([&o, seed] { o.seed_given = seed->count() > 0; });
  auto* out = cmd->add_option("--out", o.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--set", o.overrides,
                  "extra key=value override (repeatable)");
}

int report_failure(gvfl_status st) {
  std::fprintf(stderr, "error: %s\n", gvfl_last_error());
  return static_cast<int>(st);
}

int build_config(const CommonOpts& o, ConfigPtr& cfg) {
  cfg.reset(gvfl_config_create());
  if (!cfg) {
    std::fprintf(stderr, "error: out of memory\n");
    return 1;
  }
  if (!o.config_file.empty()) {
    if (gvfl_status st = gvfl_config_load(cfg.get(), o.config_file.c_str()))
      return report_failure(st);
  }
  for (const std::string& kv : o.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return static_cast<int>(GVFL_INVALID_ARGUMENT);
    }
    if (gvfl_status st = gvfl_config_set(cfg.get(), kv.substr(0, eq).c_str(),
                                         kv.substr(eq + 1).c_str()))
      return report_failure(st);
  }
  if (o.seed_given) {
    if (gvfl_status st = gvfl_config_set(cfg.get(), "seed",
                                         std::to_string(o.seed).c_str()))
      return report_failure(st);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-following workbench: predictive representations for "
               "online and offline policy learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gvfl_version());

  CommonOpts collect_o, gvf_o, agent_o, eval_o;
  std::string gvf_data, agent_data, agent_method, eval_model;
  std::vector<std::string> report_dirs;
  std::string report_out, inspect_path;

  auto* collect = app.add_subcommand(
      "collect", "log exploration episodes on generated tracks");
  add_common(collect, collect_o);

  auto* train_gvf = app.add_subcommand(
      "train-gvf", "train the predictive bank from logged episodes");
  add_common(train_gvf, gvf_o);
  train_gvf->add_option("--data", gvf_data, "collected data directory")
      ->required();

  auto* train_agent =
      app.add_subcommand("train-agent", "train a control agent");
  add_common(train_agent, agent_o);
  train_agent->add_option("--data", agent_data,
                          "collected data directory (offline methods)");
  train_agent->add_option(
      "--method", agent_method,
      "gvf-ddpg | ddpg-image | gvf-bcq | e2e-bcq (overrides config)");

  auto* evaluate =
      app.add_subcommand("evaluate", "drive a trained model on eval tracks");
  add_common(evaluate, eval_o);
  evaluate->add_option("--model", eval_model,
                       "train-agent output directory (omit for classical)");

  auto* report = app.add_subcommand(
      "report", "aggregate evaluation metrics across run directories");
  report->add_option("dirs", report_dirs, "evaluation directories")
      ->required();
  report->add_option("--out", report_out, "output table file")->required();

  auto* inspect =
      app.add_subcommand("inspect", "describe an artifact file");
  inspect->add_option("path", inspect_path, "file to describe")->required();

  CLI11_PARSE(app, argc, argv);

  if (collect->parsed()) {
    ConfigPtr cfg;
    if (int rc = build_config(collect_o, cfg)) return rc;
    if (gvfl_status st = gvfl_collect(cfg.get(), collect_o.out.c_str()))
      return report_failure(st);
    std::printf("collected data written to %s\n", collect_o.out.c_str());
  } else if (train_gvf->parsed()) {
    ConfigPtr cfg;
    if (int rc = build_config(gvf_o, cfg)) return rc;
    if (gvfl_status st =
            gvfl_train_gvf(cfg.get(), gvf_data.c_str(), gvf_o.out.c_str()))
      return report_failure(st);
    std::printf("prediction bank written to %s\n", gvf_o.out.c_str());
  } else if (train_agent->parsed()) {
    if (!agent_method.empty())
      agent_o.overrides.push_back("method=" + agent_method);
    ConfigPtr cfg;
    if (int rc = build_config(agent_o, cfg)) return rc;
    if (gvfl_status st = gvfl_train_agent(
            cfg.get(), agent_data.empty() ? nullptr : agent_data.c_str(),
            agent_o.out.c_str()))
      return report_failure(st);
    std::printf("agent written to %s\n", agent_o.out.c_str());
  } else if (evaluate->parsed()) {
    ConfigPtr cfg;
    if (int rc = build_config(eval_o, cfg)) return rc;
    if (gvfl_status st = gvfl_evaluate(
            cfg.get(), eval_model.empty() ? nullptr : eval_model.c_str(),
            eval_o.out.c_str()))
      return report_failure(st);
    std::printf("evaluation written to %s\n", eval_o.out.c_str());
  } else if (report->parsed()) {
    std::vector<const char*> dirs;
    dirs.reserve(report_dirs.size());
    for (const std::string& d : report_dirs) dirs.push_back(d.c_str());
    if (gvfl_status st =
            gvfl_report(dirs.data(), dirs.size(), report_out.c_str()))
      return report_failure(st);
    std::printf("report written to %s\n", report_out.c_str());
  } else if (inspect->parsed()) {
    char* text = nullptr;
    if (gvfl_status st = gvfl_inspect(inspect_path.c_str(), &text))
      return report_failure(st);
    std::printf("%s", text);
    gvfl_string_free(text);
  }
  return 0;
}
