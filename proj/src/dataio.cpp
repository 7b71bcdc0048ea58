#include "dataio.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gvfl {

namespace {

constexpr char kMagic[4] = {'G', 'V', 'F', 'L'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("episode log truncated");
  return v;
}

void write_header(std::ostream& os, const EpisodeHeader& h) {
  os.write(kMagic, 4);
  write_pod<uint32_t>(os, kVersion);
  write_pod<uint16_t>(os, static_cast<uint16_t>(h.width));
  write_pod<uint16_t>(os, static_cast<uint16_t>(h.height));
  write_pod<float>(os, static_cast<float>(h.dt));
  write_pod<uint32_t>(os, static_cast<uint32_t>(h.track_id.size()));
  os.write(h.track_id.data(), static_cast<std::streamsize>(h.track_id.size()));
}

EpisodeHeader read_header(std::istream& is, const std::string& name) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad episode magic: " + name);
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported episode version in " + name);
  EpisodeHeader h;
  h.width = read_pod<uint16_t>(is);
  h.height = read_pod<uint16_t>(is);
  h.dt = read_pod<float>(is);
  uint32_t idlen = read_pod<uint32_t>(is);
  if (idlen > 4096) throw std::runtime_error("implausible track id length");
  h.track_id.resize(idlen);
  is.read(h.track_id.data(), idlen);
  if (!is) throw std::runtime_error("episode log truncated: " + name);
  if (h.width <= 0 || h.height <= 0)
    throw std::runtime_error("bad frame size in " + name);
  return h;
}

void write_record(std::ostream& os, const EpisodeRecord& r, size_t frame_len) {
  if (r.frame.size() != frame_len)
    throw std::invalid_argument("episode record frame size mismatch");
  write_pod<uint8_t>(os, r.terminal ? 1 : 0);
  write_pod<float>(os, r.steer);
  write_pod<float>(os, r.speed_cmd);
  write_pod<float>(os, r.speed);
  write_pod<float>(os, r.alpha);
  write_pod<float>(os, r.beta);
  os.write(reinterpret_cast<const char*>(r.frame.data()),
           static_cast<std::streamsize>(frame_len * sizeof(float)));
}

}  // namespace

void save_episode(const EpisodeData& ep, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write episode: " + path.string());
  write_header(os, ep.header);
  size_t frame_len =
      static_cast<size_t>(ep.header.width) * ep.header.height;
  for (const auto& r : ep.records) write_record(os, r, frame_len);
  if (!os) throw std::runtime_error("episode write failed: " + path.string());
}

EpisodeData load_episode(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read episode: " + path.string());
  EpisodeData ep;
  ep.header = read_header(is, path.string());
  size_t frame_len =
      static_cast<size_t>(ep.header.width) * ep.header.height;
  while (true) {
    int c = is.peek();
    if (c == EOF) break;
    EpisodeRecord r;
    r.terminal = read_pod<uint8_t>(is) != 0;
    r.steer = read_pod<float>(is);
    r.speed_cmd = read_pod<float>(is);
    r.speed = read_pod<float>(is);
    r.alpha = read_pod<float>(is);
    r.beta = read_pod<float>(is);
    r.frame.resize(frame_len);
    is.read(reinterpret_cast<char*>(r.frame.data()),
            static_cast<std::streamsize>(frame_len * sizeof(float)));
    if (!is) throw std::runtime_error("episode log truncated: " + path.string());
    ep.records.push_back(std::move(r));
  }
  return ep;
}

EpisodeWriter::EpisodeWriter(const std::filesystem::path& path,
                             const EpisodeHeader& header)
    : path_(path),
      frame_len_(static_cast<size_t>(header.width) * header.height) {
  auto* os = new std::ofstream(path, std::ios::binary);
  if (!*os) {
    delete os;
    throw std::runtime_error("cannot write episode: " + path.string());
  }
  os_ = os;
  write_header(*os, header);
}

void EpisodeWriter::append(const EpisodeRecord& rec) {
  auto* os = static_cast<std::ofstream*>(os_);
  write_record(*os, rec, frame_len_);
  if (!*os) throw std::runtime_error("episode write failed: " + path_.string());
}

EpisodeWriter::~EpisodeWriter() {
  auto* os = static_cast<std::ofstream*>(os_);
  delete os;
}

EpisodeData mirror_episode(const EpisodeData& ep) {
  EpisodeData out;
  out.header = ep.header;
  const std::string suffix = "-mir";
  if (out.header.track_id.size() >= suffix.size() &&
      out.header.track_id.compare(out.header.track_id.size() - suffix.size(),
                                  suffix.size(), suffix) == 0)
    out.header.track_id.resize(out.header.track_id.size() - suffix.size());
  else
    out.header.track_id += suffix;
  out.records.reserve(ep.records.size());
  int w = ep.header.width, h = ep.header.height;
  for (const auto& r : ep.records) {
    EpisodeRecord m;
    m.terminal = r.terminal;
    m.steer = -r.steer;
    m.speed_cmd = r.speed_cmd;
    m.speed = r.speed;
    m.alpha = -r.alpha;
    m.beta = -r.beta;
    m.frame = mirror_frame(r.frame, w, h);
    out.records.push_back(std::move(m));
  }
  return out;
}

std::vector<Transition> episode_transitions(const EpisodeData& ep,
                                            const GvfSpec& spec,
                                            double reward_scale,
                                            double reward_alpha_sign) {
  std::vector<Transition> out;
  if (ep.records.size() < 2) return out;
  std::vector<FramePtr> frames;
  frames.reserve(ep.records.size());
  for (const auto& r : ep.records)
    frames.push_back(std::make_shared<const std::vector<float>>(r.frame));
  out.reserve(ep.records.size() - 1);
  for (size_t t = 1; t < ep.records.size(); ++t) {
    const EpisodeRecord& prev = ep.records[t - 1];
    const EpisodeRecord& cur = ep.records[t];
    Transition tr;
    tr.obs.frame_prev = frames[t >= 2 ? t - 2 : 0];
    tr.obs.frame_cur = frames[t - 1];
    tr.obs.speed = prev.speed;
    tr.obs.last_action = {prev.steer, prev.speed_cmd};
    tr.action = {cur.steer, cur.speed_cmd};
    tr.next_obs.frame_prev = frames[t - 1];
    tr.next_obs.frame_cur = frames[t];
    tr.next_obs.speed = cur.speed;
    tr.next_obs.last_action = tr.action;
    GroundTruth gt;
    gt.alpha = cur.alpha;
    gt.alpha_unclipped = cur.alpha;
    gt.beta = cur.beta;
    tr.cumulant = cumulants(gt, spec);
    tr.continuation = continuations(spec, cur.terminal);
    tr.reward = lane_reward(cur.speed, cur.alpha, cur.beta, reward_scale,
                            reward_alpha_sign);
    tr.terminal = cur.terminal;
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<std::filesystem::path> list_episode_files(
    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".epi")
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string describe_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  std::ostringstream out;
  if (is && std::memcmp(magic, "GVFL", 4) == 0) {
    EpisodeData ep = load_episode(path);
    out << "episode log " << path.filename().string() << "\n";
    out << "  track: " << ep.header.track_id << "\n";
    out << "  frame: " << ep.header.width << "x" << ep.header.height
        << "  dt: " << ep.header.dt << "\n";
    out << "  records: " << ep.records.size() << "\n";
    if (!ep.records.empty()) {
      float amin = 1e9f, amax = -1e9f, vmax = 0.0f;
      int terminals = 0;
      for (const auto& r : ep.records) {
        amin = std::min(amin, r.alpha);
        amax = std::max(amax, r.alpha);
        vmax = std::max(vmax, r.speed);
        terminals += r.terminal ? 1 : 0;
      }
      out << "  alpha range: [" << amin << ", " << amax << "]"
          << "  top speed: " << vmax << "  terminal flags: " << terminals
          << "\n";
    }
  } else if (is && std::memcmp(magic, "GVFN", 4) == 0) {
    Net net = Net::load(path);
    out << "network checkpoint " << path.filename().string() << "\n";
    out << "  layers:";
    for (const auto& l : net.layers())
      out << "  " << l.in << "->" << l.out << " " << activation_name(l.act);
    out << "\n  parameters: " << net.param_count()
        << "  adam steps: " << net.adam_t() << "\n";
  } else {
    is.close();
    std::ifstream text(path);
    std::string first;
    std::getline(text, first);
    if (first.rfind("H=", 0) == 0) {
      TrackSpec t = load_track(path);
      out << "track " << t.id << "\n";
      out << "  waypoints: " << t.centerline.size()
          << "  spacing: " << t.spacing
          << "  half lane width: " << t.half_lane_width << "\n";
      out << "  marking segments: " << t.markings.size() << "  damaged: "
          << std::count(t.damage_mask.begin(), t.damage_mask.end(), 1) << "\n";
    } else {
      out << "text file " << path.filename().string() << "\n";
      out << "  " << first << "\n";
      std::string line;
      int shown = 0;
      while (shown < 5 && std::getline(text, line)) {
        out << "  " << line << "\n";
        ++shown;
      }
    }
  }
  return out.str();
}

}  // namespace gvfl
