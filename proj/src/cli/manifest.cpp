#include "manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "rolealign/errors.hpp"

namespace rolealign::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open input file '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

Manifest::Manifest(std::string command) : command_(std::move(command)) {}

void Manifest::add_input(const std::filesystem::path& path) {
  inputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
}

nlohmann::ordered_json Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = command_;
  j["seed"] = seed_;
  j["config"] = config_;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  j["warnings"] = warnings_;
  j["timings_seconds"] = timings_;
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  return j;
}

void Manifest::write(const std::filesystem::path& dir) const {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw InputError("cannot write '" + (dir / "manifest.json").string() + "'");
  out << to_json().dump(2) << '\n';
}

}  // namespace rolealign::cli
