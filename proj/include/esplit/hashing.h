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

#ifndef ESPLIT_HASHING_H_
#define ESPLIT_HASHING_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "esplit/autodiff.h"

namespace esplit {

std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// SHA-1 of "blob <size>\0<content>", i.e. what `git hash-object` prints.
std::string git_blob_hash(std::span<const uint8_t> bytes);
std::string git_blob_hash_file(const std::string& path);

// SHA-256 over names, shapes and raw float64 bytes of every parameter whose
// name starts with `prefix`. Used to assert freeze contracts.
std::string params_hash(const ParamStore& store, std::string_view prefix = "");

}  // namespace esplit

#endif  // ESPLIT_HASHING_H_
