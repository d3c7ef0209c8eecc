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

#include "s2r/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "s2r/error.hpp"

namespace s2r::io {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::bytes(std::span<const char> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(std::span<const char>(s.data(), s.size()));
}

void ByteWriter::f32_array(std::span<const float> values) {
  u32(static_cast<std::uint32_t>(values.size()));
  for (float v : values) f32(v);
}

void ByteWriter::header(RecordKind kind) {
  bytes(std::span<const char>(kMagic, 4));
  u32(kFormatVersion);
  u32(static_cast<std::uint32_t>(kind));
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) {
    throw FormatError("truncated record: need " + std::to_string(n) + " bytes, have " +
                          std::to_string(data_.size() - pos_),
                      pos_);
  }
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::str(std::uint32_t max_len) {
  const std::uint64_t at = pos_;
  const std::uint32_t n = u32();
  if (n > max_len) throw FormatError("string length " + std::to_string(n) + " too large", at);
  need(n);
  std::string s(data_.data() + pos_, n);
  pos_ += n;
  return s;
}

std::vector<float> ByteReader::f32_array() {
  const std::uint64_t at = pos_;
  const std::uint32_t n = u32();
  if (static_cast<std::uint64_t>(n) * 4 > data_.size() - pos_) {
    throw FormatError("float array of " + std::to_string(n) + " elements exceeds record", at);
  }
  std::vector<float> out(n);
  for (auto& v : out) v = f32();
  return out;
}

void ByteReader::expect_header(RecordKind kind) {
  need(4);
  if (std::memcmp(data_.data() + pos_, kMagic, 4) != 0) throw FormatError("bad magic (expected S2RD)", pos_);
  pos_ += 4;
  const std::uint64_t at = pos_;
  const std::uint32_t version = u32();
  if (version != kFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version), at);
  }
  const std::uint64_t kat = pos_;
  const std::uint32_t k = u32();
  if (k != static_cast<std::uint32_t>(kind)) {
    throw FormatError("unexpected record kind " + std::to_string(k), kat);
  }
}

void ByteReader::expect_end() const {
  if (pos_ != data_.size()) throw FormatError("trailing bytes after record", pos_);
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path.string());
  return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const char> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("io", "short write to " + path.string());
}

}  // namespace s2r::io
