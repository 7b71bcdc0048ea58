// Exercises the shared-library boundary only: no internal headers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "gvf_lane.h"

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("gvfl_capi_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream os(p);
  os << body;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());
}

// Desk-sized configuration; mirrors the harness unit tests.
void make_tiny(gvfl_config* cfg) {
  const char* kv[][2] = {
      {"render_w", "8"},      {"render_h", "6"},
      {"max_steps", "50"},    {"collect_episodes", "3"},
      {"collect_tracks", "2"}, {"gvf_hidden", "16"},
      {"disc_hidden", "16"},  {"gvf_batch", "8"},
      {"disc_batch", "8"},    {"buffer_warmup", "32"},
      {"stats_interval", "20"}, {"offline_updates", "60"},
      {"eval_tracks", "oval"}, {"eval_duration_s", "5"},
      {"seed", "2"},
  };
  for (auto& pair : kv) REQUIRE(gvfl_config_set(cfg, pair[0], pair[1]) == GVFL_OK);
}

}  // namespace

TEST_CASE("version and error channel basics") {
  REQUIRE(gvfl_version() != nullptr);
  CHECK(std::string(gvfl_version()) == "1.0.0");
  CHECK(std::string(gvfl_last_error()).empty());
}

TEST_CASE("config handle: set, get, load and failure codes") {
  gvfl_config* cfg = gvfl_config_create();
  REQUIRE(cfg != nullptr);

  CHECK(gvfl_config_set(cfg, "seed", "7") == GVFL_OK);
  char buf[64];
  size_t len = 0;
  CHECK(gvfl_config_get(cfg, "seed", buf, sizeof buf, &len) == GVFL_OK);
  CHECK(std::string(buf) == "7");
  CHECK(len == 1);

  // Unknown key: invalid argument plus a message naming the key.
  CHECK(gvfl_config_set(cfg, "sneed", "7") == GVFL_INVALID_ARGUMENT);
  CHECK(std::string(gvfl_last_error()).find("sneed") != std::string::npos);

  // Tiny buffer: the length is still reported.
  char tiny[2];
  CHECK(gvfl_config_set(cfg, "method", "gvf-bcq") == GVFL_OK);
  CHECK(gvfl_config_get(cfg, "method", tiny, sizeof tiny, &len) ==
        GVFL_INVALID_ARGUMENT);
  CHECK(len == 7);

  CHECK(gvfl_config_load(cfg, "/definitely/not/here.cfg") != GVFL_OK);

  TempDir tmp("capi_cfg");
  write_file(tmp.path / "a.cfg", "seed=11\nmethod=classical\n");
  CHECK(gvfl_config_load(cfg, (tmp.path / "a.cfg").c_str()) == GVFL_OK);
  CHECK(gvfl_config_get(cfg, "seed", buf, sizeof buf, nullptr) == GVFL_OK);
  CHECK(std::string(buf) == "11");

  // Null buffer with an out_len is a length query.
  CHECK(gvfl_config_get(cfg, "seed", nullptr, 0, &len) == GVFL_OK);
  CHECK(len == 2);

  // Null-pointer contract.
  CHECK(gvfl_config_set(nullptr, "seed", "1") == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_config_set(cfg, nullptr, "1") == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_config_get(cfg, "seed", nullptr, 0, nullptr) ==
        GVFL_INVALID_ARGUMENT);
  gvfl_config_destroy(cfg);
  gvfl_config_destroy(nullptr);  // must be a harmless no-op
}

TEST_CASE("pipeline through the shared library") {
  TempDir tmp("capi_run");
  gvfl_config* cfg = gvfl_config_create();
  make_tiny(cfg);

  std::string data = (tmp.path / "data").string();
  REQUIRE(gvfl_collect(cfg, data.c_str()) == GVFL_OK);
  CHECK(std::string(gvfl_last_error()).empty());
  CHECK(fs::exists(tmp.path / "data" / "episodes"));

  std::string gvf_run = (tmp.path / "gvf").string();
  REQUIRE(gvfl_train_gvf(cfg, data.c_str(), gvf_run.c_str()) == GVFL_OK);
  CHECK(fs::exists(tmp.path / "gvf" / "gvf.ckpt"));

  // Evaluating a prediction-only directory is a caller error.
  std::string bad_eval = (tmp.path / "bad_eval").string();
  CHECK(gvfl_evaluate(cfg, gvf_run.c_str(), bad_eval.c_str()) ==
        GVFL_INVALID_ARGUMENT);

  // Classical evaluation requires the method to say so.
  std::string eval_dir = (tmp.path / "eval").string();
  CHECK(gvfl_evaluate(cfg, nullptr, eval_dir.c_str()) == GVFL_INVALID_ARGUMENT);
  REQUIRE(gvfl_config_set(cfg, "method", "classical") == GVFL_OK);
  REQUIRE(gvfl_evaluate(cfg, nullptr, eval_dir.c_str()) == GVFL_OK);
  CHECK(fs::exists(tmp.path / "eval" / "metrics_summary.csv"));

  const char* dirs[] = {eval_dir.c_str()};
  std::string report = (tmp.path / "report.txt").string();
  REQUIRE(gvfl_report(dirs, 1, report.c_str()) == GVFL_OK);
  CHECK(read_file(tmp.path / "report.txt").find("reward_per_second") !=
        std::string::npos);
  gvfl_config_destroy(cfg);
}

TEST_CASE("inspect returns an owned description") {
  TempDir tmp("capi_inspect");
  gvfl_config* cfg = gvfl_config_create();
  make_tiny(cfg);
  std::string data = (tmp.path / "data").string();
  REQUIRE(gvfl_collect(cfg, data.c_str()) == GVFL_OK);

  char* text = nullptr;
  std::string epi = (tmp.path / "data" / "episodes" / "ep_0000.epi").string();
  REQUIRE(gvfl_inspect(epi.c_str(), &text) == GVFL_OK);
  REQUIRE(text != nullptr);
  CHECK(std::strlen(text) > 0);
  gvfl_string_free(text);

  CHECK(gvfl_inspect("/nope/nothing.epi", &text) != GVFL_OK);
  CHECK(gvfl_inspect(nullptr, &text) == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_inspect(epi.c_str(), nullptr) == GVFL_INVALID_ARGUMENT);
  gvfl_config_destroy(cfg);
}

TEST_CASE("numeric failures surface as GVFL_NUMERIC_ERROR") {
  TempDir tmp("capi_diverge");
  gvfl_config* cfg = gvfl_config_create();
  make_tiny(cfg);
  std::string data = (tmp.path / "data").string();
  REQUIRE(gvfl_collect(cfg, data.c_str()) == GVFL_OK);

  // An absurd divergence guard trips on the first prediction update.
  REQUIRE(gvfl_config_set(cfg, "divergence_guard", "1e-12") == GVFL_OK);
  std::string run = (tmp.path / "gvf").string();
  CHECK(gvfl_train_gvf(cfg, data.c_str(), run.c_str()) == GVFL_NUMERIC_ERROR);
  CHECK(std::string(gvfl_last_error()).find("diverged") != std::string::npos);
  gvfl_config_destroy(cfg);
}

TEST_CASE("null arguments never crash the boundary") {
  gvfl_config* cfg = gvfl_config_create();
  CHECK(gvfl_collect(nullptr, "x") == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_collect(cfg, nullptr) == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_train_gvf(cfg, nullptr, "out") == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_train_agent(nullptr, nullptr, "out") == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_evaluate(cfg, "model", nullptr) == GVFL_INVALID_ARGUMENT);
  CHECK(gvfl_report(nullptr, 2, "out") == GVFL_INVALID_ARGUMENT);
  gvfl_config_destroy(cfg);
}
