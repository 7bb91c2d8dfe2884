#pragma once

#include <filesystem>
#include <string>

#include "dmv/matrix.hpp"
#include "oracles.hpp"

namespace testutil {

inline dmv::FeatureMatrix to_matrix(const oracle::Dataset& ds) {
  dmv::FeatureMatrix X;
  for (std::size_t f = 0; f < ds.d; ++f) X.column_names.push_back("x" + std::to_string(f));
  X.rows = ds.n;
  for (const auto& row : ds.x) X.values.insert(X.values.end(), row.begin(), row.end());
  X.target = ds.y;
  return X;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dmv_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
