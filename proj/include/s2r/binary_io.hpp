// Copyright 2026 The s2r Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian primitives of the "S2RD" container used by dataset frames and
// parameter checkpoints:
//
//   "S2RD" | u32 version | u32 kind | kind-specific payload
//
// Float arrays are u32 element count followed by IEEE-754 binary32 values.

#ifndef S2R_BINARY_IO_HPP_
#define S2R_BINARY_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace s2r::io {

inline constexpr char kMagic[4] = {'S', '2', 'R', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;

enum class RecordKind : std::uint32_t { kFrame = 1, kCheckpoint = 2 };

class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void bytes(std::span<const char> data);
  void str(const std::string& s);  // u32 length + bytes
  void f32_array(std::span<const float> values);
  void header(RecordKind kind);

  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

/// Bounds-checked reader; every failure is a FormatError with the offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const char> data) : data_(data) {}

  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string str(std::uint32_t max_len = 1u << 20);
  std::vector<float> f32_array();
  void expect_header(RecordKind kind);
  void expect_end() const;

  std::uint64_t offset() const { return pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const char> data_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> data);

}  // namespace s2r::io

#endif  // S2R_BINARY_IO_HPP_
