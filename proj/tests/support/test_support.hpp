#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/types.hpp"

namespace forge::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(FORGE_FIXTURE_DIR) / name;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "forge-test-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!::mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Error code thrown by fn, or nullopt when it returns normally.
inline std::optional<ErrorCode> error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline std::optional<std::size_t> error_index_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.index();
  }
  return std::nullopt;
}

inline MultimodalInstance make_instance(const std::string& id, Label label,
                                        std::optional<std::vector<double>> features = std::nullopt) {
  MultimodalInstance inst;
  inst.id = id;
  inst.transcript = "utterance " + id;
  inst.features = std::move(features);
  inst.gold_label = label;
  return inst;
}

// n_s sarcastic then n_n non-sarcastic instances with ids "i0000", ...
inline std::vector<MultimodalInstance> balanced_instances(std::size_t n_s, std::size_t n_n) {
  std::vector<MultimodalInstance> out;
  char id[16];
  for (std::size_t i = 0; i < n_s + n_n; ++i) {
    std::snprintf(id, sizeof(id), "i%04zu", i);
    out.push_back(make_instance(id, i < n_s ? Label::kSarcastic : Label::kNonSarcastic));
  }
  return out;
}

// Runs a shell command, returns its exit status.
inline int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace forge::testing
