#include "serial.hpp"

#include <cstring>
#include <fstream>

namespace miso {

void ByteWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

double ByteReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void ByteWriter::write_file_with_checksum(const std::string& path) const {
  uint64_t sum = fnv1a64(buf_.data(), buf_.size());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf_.data()),
          std::streamsize(buf_.size()));
  uint8_t tail[8];
  for (int i = 0; i < 8; ++i) tail[i] = uint8_t(sum >> (8 * i));
  f.write(reinterpret_cast<const char*>(tail), 8);
  if (!f) throw IoError("write failed: " + path);
}

ByteReader ByteReader::from_file_checked(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> all((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (all.size() < 8) throw FormatError("file too short: " + path);
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= uint64_t(all[all.size() - 8 + i]) << (8 * i);
  all.resize(all.size() - 8);
  if (fnv1a64(all.data(), all.size()) != stored)
    throw FormatError("checksum mismatch: " + path);
  return ByteReader(std::move(all));
}

}  // namespace miso
