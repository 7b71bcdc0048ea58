#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agents.hpp"
#include "behavior.hpp"
#include "config.hpp"
#include "dataio.hpp"
#include "gvf.hpp"
#include "metrics.hpp"
#include "replay.hpp"
#include "simworld.hpp"

namespace gvfl {

SimConfig sim_config_from(const RunConfig& cfg);
GvfSpec gvf_spec_from(const RunConfig& cfg);

// One transition through the unknown-behavior prediction learner: estimate
// mu, compute the capped importance ratio, store with priority rho, then (past
// warmup) one resampled GVF step and one uniform discriminator step.
class GvfPipeline {
 public:
  GvfPipeline(const RunConfig& cfg, Rng& init_rng);
  GvfPipeline(const RunConfig& cfg, Net gvf_net, Net disc_net);

  void feed(Transition tr, Rng& rng);

  GvfLearner& gvf() { return *gvf_; }
  const GvfLearner& gvf() const { return *gvf_; }
  BehaviorLearner& behavior() { return *disc_; }
  SumTreeBuffer<Transition>& buffer() { return buffer_; }

  uint64_t gvf_updates() const { return gvf_updates_; }
  double last_msq() const { return last_msq_; }
  double last_bce() const { return last_bce_; }
  double last_rho_bar() const { return last_rho_bar_; }
  double last_mean_abs_pred() const { return last_mean_abs_pred_; }

 private:
  SimConfig sim_;
  std::unique_ptr<GvfLearner> gvf_;
  std::unique_ptr<BehaviorLearner> disc_;
  SumTreeBuffer<Transition> buffer_;
  size_t warmup_, gvf_batch_, disc_batch_;
  double sigma_tau_, rho_max_, divergence_guard_;
  uint64_t gvf_updates_ = 0;
  double last_msq_ = 0.0, last_bce_ = 0.0, last_rho_bar_ = 0.0;
  double last_mean_abs_pred_ = 0.0;
};

// Pipeline entry points behind the CLI/C API.
void cmd_collect(const RunConfig& cfg, const std::filesystem::path& out);
void cmd_train_gvf(const RunConfig& cfg, const std::filesystem::path& data_dir,
                   const std::filesystem::path& out);
void cmd_train_agent(const RunConfig& cfg,
                     const std::optional<std::filesystem::path>& data_dir,
                     const std::filesystem::path& out);
void cmd_evaluate(const RunConfig& cfg,
                  const std::optional<std::filesystem::path>& model_dir,
                  const std::filesystem::path& out);
void cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_file);
std::string cmd_inspect(const std::filesystem::path& path);

// Exposed for tests and the acceptance suite.
TrackSpec build_eval_track(const RunConfig& cfg, const std::string& name);
std::vector<TrackSpec> online_track_split(const RunConfig& cfg,
                                          std::vector<TrackSpec>* held_out);

struct EvalOutcome {
  std::string track;
  MetricSet metrics;
};

struct ModelBundle {
  RunConfig config;
  std::string kind;
  std::unique_ptr<GvfLearner> gvf;
  std::unique_ptr<DdpgAgent> ddpg;
  std::unique_ptr<BcqAgent> bcq;

  Action act(const World& world, double speed_cap, Rng& rng) const;
};

ModelBundle load_model(const std::filesystem::path& dir);

// Fixed-duration evaluation drive.  On lane departure the vehicle is placed
// back on the centerline at the nearest waypoint (speed zero) and the drive
// continues; `departures` (if given) counts those events.
std::vector<TraceRow> run_rollout(World& world, const ModelBundle& agent,
                                  double duration_s, double speed_cap,
                                  Rng& rng, int* departures = nullptr);

}  // namespace gvfl
