// Copyright 2026 The tacc Authors
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

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace tacc {

/// 32-byte SHA-256 digest. Used as the content address for spec hashes,
/// CAS objects and bundle ids.
struct Digest {
  std::array<unsigned char, 32> bytes{};

  std::string hex() const;
  static Digest from_hex(std::string_view hex);  // throws Error(schema_invalid)
  bool is_zero() const;

  auto operator<=>(const Digest&) const = default;
};

Digest sha256(std::string_view data);

/// Streaming SHA-256 (OpenSSL EVP behind the scenes).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, size_t len);
  void update(std::string_view data) { update(data.data(), data.size()); }
  Digest finish();

 private:
  void* ctx_;
};

uint32_t crc32_of(std::string_view data);

}  // namespace tacc
