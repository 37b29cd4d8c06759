// Copyright 2026 The zipnet Authors
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

#include "zipnet/hash.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <memory>
#include <vector>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

class Digest {
 public:
  explicit Digest(const EVP_MD* md) : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), md, nullptr) != 1) {
      throw std::runtime_error("digest init failed");
    }
  }
  void update(std::string_view bytes) {
    if (EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()) != 1) {
      throw std::runtime_error("digest update failed");
    }
  }
  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out, &len) != 1) {
      throw std::runtime_error("digest final failed");
    }
    std::string s;
    s.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) s += fmt::format("{:02x}", out[i]);
    return s;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_hex(std::string_view bytes) {
  Digest d(EVP_sha256());
  d.update(bytes);
  return d.hex();
}

std::string git_blob_hash(std::string_view bytes) {
  Digest d(EVP_sha1());
  const std::string header = fmt::format("blob {}", bytes.size());
  d.update(std::string_view(header.c_str(), header.size() + 1));
  d.update(bytes);
  return d.hex();
}

std::string git_blob_hash_file(const std::filesystem::path& path) {
  return git_blob_hash(read_file_bytes(path));
}

std::string tree_sha256(const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) {
      files.push_back(std::filesystem::relative(e.path(), dir).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  Digest d(EVP_sha256());
  for (const auto& rel : files) {
    d.update(std::string_view(rel.c_str(), rel.size() + 1));
    d.update(read_file_bytes(dir / rel));
  }
  return d.hex();
}

}  // namespace zipnet
