#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gvf.hpp"
#include "simworld.hpp"

namespace gvfl {

struct EpisodeHeader {
  int width = 0;
  int height = 0;
  double dt = 0.1;
  std::string track_id;
};

// Record 0 is the initial state (zero action); record t >= 1 carries the
// action executed at step t together with the post-step state signals.
struct EpisodeRecord {
  bool terminal = false;
  float steer = 0.0f;
  float speed_cmd = 0.0f;
  float speed = 0.0f;
  float alpha = 0.0f;
  float beta = 0.0f;
  std::vector<float> frame;
};

struct EpisodeData {
  EpisodeHeader header;
  std::vector<EpisodeRecord> records;
};

void save_episode(const EpisodeData& ep, const std::filesystem::path& path);
EpisodeData load_episode(const std::filesystem::path& path);

// Streaming writer so collection does not hold whole episodes in memory.
class EpisodeWriter {
 public:
  EpisodeWriter(const std::filesystem::path& path, const EpisodeHeader& header);
  void append(const EpisodeRecord& rec);
  ~EpisodeWriter();

 private:
  std::filesystem::path path_;
  void* os_;  // std::ofstream, kept out of the header
  size_t frame_len_;
};

// Horizontal flip: frames mirrored, steer/alpha/beta negated, speed kept.
// Applying it twice returns the original episode exactly.
EpisodeData mirror_episode(const EpisodeData& ep);

// Expands an episode into GVF transitions.  Rewards are recomputed from the
// logged signals with the given scale/sign; rho is left at 1 for the
// training pipeline to fill in.
std::vector<Transition> episode_transitions(const EpisodeData& ep,
                                            const GvfSpec& spec,
                                            double reward_scale,
                                            double reward_alpha_sign);

// Sorted list of *.epi files under a directory.
std::vector<std::filesystem::path> list_episode_files(
    const std::filesystem::path& dir);

std::string describe_file(const std::filesystem::path& path);

}  // namespace gvfl
