#pragma once

#include <cstdint>
#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace gsseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gsseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Writes a binary PLY with float properties; `rows` holds one value per property per vertex.
inline void write_float_ply(const std::filesystem::path& path, const std::vector<std::string>& properties,
                            const std::vector<std::vector<float>>& rows, const std::string& extra_header = "") {
  std::ofstream out(path, std::ios::binary);
  out << "ply\nformat binary_little_endian 1.0\n" << extra_header << "element vertex " << rows.size() << "\n";
  for (const std::string& p : properties) out << "property float " << p << "\n";
  out << "end_header\n";
  for (const auto& row : rows) out.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace gsseg::testing
