#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace factr::cli {

/// SHA-1 of "blob <size>\0<bytes>", the object id git assigns a file.
std::string git_blob_sha1(const std::string& bytes);
std::string git_blob_sha1_file(const std::string& path);

struct Manifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;  // hashed in this order
  std::vector<std::string> outputs;  // names relative to the run directory

  /// Pretty JSON with sorted keys; identical runs give identical bytes.
  std::string render() const;
};

/// Refuses an existing non-empty directory unless `force`; creates it otherwise.
void prepare_output_dir(const std::string& dir, bool force);

void write_text(const std::string& path, const std::string& text);

}  // namespace factr::cli
