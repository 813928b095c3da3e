// Copyright 2026 The esplit Authors. All Rights Reserved.
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

#include "esplit/hashing.h"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>
#include <vector>

#include "esplit/error.h"

namespace esplit {
namespace {

class Digest {
 public:
  explicit Digest(const EVP_MD* md) : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), md, nullptr) != 1) {
      fail(ErrorKind::kIo, "digest initialization failed");
    }
  }
  void update(const void* data, size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), out, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
      s.push_back(kHex[out[i] >> 4]);
      s.push_back(kHex[out[i] & 15]);
    }
    return s;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::span<const uint8_t> bytes) {
  Digest d(EVP_sha256());
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_hex(std::string_view text) {
  Digest d(EVP_sha256());
  d.update(text.data(), text.size());
  return d.hex();
}

std::string git_blob_hash(std::span<const uint8_t> bytes) {
  Digest d(EVP_sha1());
  const std::string header = "blob " + std::to_string(bytes.size());
  d.update(header.data(), header.size() + 1);  // includes the NUL
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string git_blob_hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_hash(bytes);
}

std::string params_hash(const ParamStore& store, std::string_view prefix) {
  Digest d(EVP_sha256());
  for (const auto& [name, p] : store) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    d.update(name.data(), name.size() + 1);
    for (int64_t dim : p.value.shape()) d.update(&dim, sizeof(dim));
    d.update(p.value.data().data(), p.value.data().size() * sizeof(double));
  }
  return d.hex();
}

}  // namespace esplit
