#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace miso {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Malformed or corrupted artifact contents (bad magic, version, checksum,
// truncated record). Distinct from IoError so callers can tell "file missing"
// from "file damaged".
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t fnv1a64(const uint8_t* p, size_t n,
                        uint64_t h = 0xcbf29ce484222325ull) {
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Little-endian byte packing for the dataset / checkpoint artifacts.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  void f64(double v);
  void str(const std::string& s) {
    u32(uint32_t(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  size_t size() const { return buf_.size(); }
  const std::vector<uint8_t>& bytes() const { return buf_; }
  // nested record helper: payload gets a u64 length prefix
  void record(const ByteWriter& body) {
    u64(body.size());
    buf_.insert(buf_.end(), body.buf_.begin(), body.buf_.end());
  }
  // appends fnv1a of everything written so far, then writes to disk
  void write_file_with_checksum(const std::string& path) const;

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<uint8_t> b) : buf_(std::move(b)) {}
  // loads a file and strips + verifies the trailing checksum
  static ByteReader from_file_checked(const std::string& path);

  uint8_t u8() { return buf_[need(1)]; }
  uint32_t u32() {
    size_t o = need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(buf_[o + i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    size_t o = need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(buf_[o + i]) << (8 * i);
    return v;
  }
  double f64();
  std::string str() {
    uint32_t n = u32();
    size_t o = need(n);
    return std::string(buf_.begin() + o, buf_.begin() + o + n);
  }
  size_t remaining() const { return buf_.size() - pos_; }

 private:
  size_t need(size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("truncated record");
    size_t o = pos_;
    pos_ += n;
    return o;
  }
  std::vector<uint8_t> buf_;
  size_t pos_ = 0;
};

}  // namespace miso
