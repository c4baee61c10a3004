#pragma once

// Run provenance: git-style content hashes of every input and a manifest hash
// stamped into each artifact.

#include <openssl/evp.h>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "emla/common.hpp"

namespace emla::cli {

/// SHA-1 of "blob <size>\0<bytes>", the object id git assigns to file content.
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string head = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw NumericalError("sha1: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw NumericalError("sha1: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct InputFile {
  std::string role, path, blob;
};

struct RunManifest {
  std::string subcommand;
  std::vector<InputFile> inputs;
  std::uint64_t seed = 0;
  std::string mode;  // empty when the subcommand has none
  std::string out_dir;
  std::string hash;

  void add_input(const std::string& role, const std::string& path) {
    inputs.push_back({role, path, git_blob_sha1(read_bytes(path))});
  }

  /// Hash over subcommand, seed, mode and input contents. Paths are left out so
  /// the same inputs give the same hash from any working directory.
  void seal() {
    nlohmann::json c;
    c["subcommand"] = subcommand;
    c["seed"] = seed;
    c["mode"] = mode;
    c["inputs"] = nlohmann::json::array();
    for (const auto& f : inputs) c["inputs"].push_back({{"role", f.role}, {"blob", f.blob}});
    hash = git_blob_sha1(c.dump());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["hash"] = hash;
    j["seed"] = seed;
    if (!mode.empty()) j["mode"] = mode;
    j["out_dir"] = out_dir;
    j["inputs"] = nlohmann::json::array();
    for (const auto& f : inputs) j["inputs"].push_back({{"role", f.role}, {"path", f.path}, {"blob", f.blob}});
    return j;
  }

  /// Compact stamp embedded in JSON artifacts.
  nlohmann::json stamp() const {
    nlohmann::json j{{"hash", hash}, {"seed", seed}, {"subcommand", subcommand}};
    if (!mode.empty()) j["mode"] = mode;
    return j;
  }

  /// First line of every CSV artifact.
  std::string csv_comment() const {
    return "# manifest=" + hash + " seed=" + std::to_string(seed) + " subcommand=" + subcommand + "\n";
  }
};

}  // namespace emla::cli
