#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gvfl {

// Flat key=value run configuration.  Every key carries a documented default;
// unknown keys are rejected by name so typos fail loudly.
class RunConfig {
 public:
  struct KeyInfo {
    std::string def;
    std::string doc;
  };

  RunConfig();

  static const std::map<std::string, KeyInfo>& schema();

  void set(const std::string& key, const std::string& value);
  // Lines of "key=value"; '#' starts a comment; blank lines skipped.
  void load_file(const std::filesystem::path& path);

  const std::string& get_str(const std::string& key) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::string> get_str_list(const std::string& key) const;

  // Full sorted key=value dump (used to echo configs into run directories).
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gvfl
