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

#include "tacc/hash.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include "tacc/errors.hpp"

namespace tacc {

static const char kHexDigits[] = "0123456789abcdef";

std::string Digest::hex() const {
  std::string out;
  out.reserve(64);
  for (unsigned char b : bytes) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0xf]);
  }
  return out;
}

static int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Digest Digest::from_hex(std::string_view hex) {
  if (hex.size() != 64) fail(Errc::schema_invalid, "digest must be 64 hex chars");
  Digest d;
  for (size_t i = 0; i < 32; ++i) {
    int hi = hex_val(hex[2 * i]);
    int lo = hex_val(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(Errc::schema_invalid, "bad hex digit in digest");
    d.bytes[i] = static_cast<unsigned char>((hi << 4) | lo);
  }
  return d;
}

bool Digest::is_zero() const {
  for (unsigned char b : bytes)
    if (b != 0) return false;
  return true;
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1)
    fail(Errc::io_error, "sha256 init failed");
}

Sha256::~Sha256() {
  if (ctx_) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

void Sha256::update(const void* data, size_t len) {
  if (EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, len) != 1)
    fail(Errc::io_error, "sha256 update failed");
}

Digest Sha256::finish() {
  Digest d;
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), d.bytes.data(), &len) != 1 || len != 32)
    fail(Errc::io_error, "sha256 final failed");
  return d;
}

Digest sha256(std::string_view data) {
  Sha256 h;
  h.update(data);
  return h.finish();
}

uint32_t crc32_of(std::string_view data) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  c = ::crc32(c, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size()));
  return static_cast<uint32_t>(c);
}

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::schema_invalid: return "SCHEMA_INVALID";
    case Errc::unsatisfiable: return "UNSATISFIABLE";
    case Errc::quota_exceeded: return "QUOTA_EXCEEDED";
    case Errc::io_error: return "IO_ERROR";
    case Errc::missing_object: return "MISSING_OBJECT";
    case Errc::backend_unavailable: return "BACKEND_UNAVAILABLE";
    case Errc::provision_failed: return "PROVISION_FAILED";
    case Errc::not_found: return "NOT_FOUND";
    case Errc::state_conflict: return "STATE_CONFLICT";
    case Errc::sequence_gap: return "SEQUENCE_GAP";
    case Errc::log_corrupt: return "LOG_CORRUPT";
    case Errc::protocol_error: return "PROTOCOL_ERROR";
  }
  return "UNKNOWN";
}

Errc errc_from_name(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(Errc::protocol_error); ++i) {
    Errc c = static_cast<Errc>(i);
    if (name == errc_name(c)) return c;
  }
  return Errc::protocol_error;
}

}  // namespace tacc
