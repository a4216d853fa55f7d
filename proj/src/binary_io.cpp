#include "projood/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace projood::bin {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const char> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void Writer::save(const std::filesystem::path& path) const { write_file(path, buf_); }

Reader Reader::open(const std::filesystem::path& path) { return Reader(read_file(path), path.string()); }

}  // namespace projood::bin
