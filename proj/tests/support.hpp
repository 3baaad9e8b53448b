#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "octo/world.hpp"

namespace octo::testing {

inline std::filesystem::path source_dir() { return OCTO_SOURCE_DIR; }
inline std::filesystem::path tasks_dir() { return source_dir() / "tasks"; }
inline std::filesystem::path data_dir() { return source_dir() / "tests" / "data"; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TaskFile task(const std::string& name) { return load_scene(tasks_dir() / (name + ".json")); }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("octo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace octo::testing
