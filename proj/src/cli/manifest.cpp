#include "factr/cli/manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "factr/common/errors.hpp"

namespace factr::cli {

std::string git_blob_sha1(const std::string& bytes) {
  const std::string head = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), head.data(), head.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw IntegrityError("SHA-1 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string git_blob_sha1_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return git_blob_sha1(os.str());
}

std::string Manifest::render() const {
  nlohmann::json in = nlohmann::json::array();
  for (const auto& p : inputs) in.push_back({{"path", p}, {"sha1", git_blob_sha1_file(p)}});
  nlohmann::json j = {{"command", command}, {"config", config}, {"seed", seed},
                      {"inputs", in},       {"outputs", outputs}};
  return j.dump(2) + "\n";
}

void prepare_output_dir(const std::string& dir, bool force) {
  namespace fs = std::filesystem;
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path '" + dir + "' exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ConfigError("output directory '" + dir + "' is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << text;
  if (!f) throw DataError("failed writing '" + path + "'");
}

}  // namespace factr::cli
