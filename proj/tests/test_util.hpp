#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oodknn/embedding_store.hpp"

namespace oodknn::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("oodknn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> make_ids(std::size_t n, const std::string& prefix = "s") {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = prefix + std::to_string(i);
  return ids;
}

// Rows drawn from N(0,1); zero rows are practically impossible.
inline EmbeddingSet random_embeddings(std::size_t n, std::size_t dim, std::mt19937_64& rng,
                                      const std::string& prefix = "s") {
  std::normal_distribution<float> nd;
  std::vector<float> v(n * dim);
  for (auto& x : v) x = nd(rng);
  return EmbeddingSet(dim, std::move(v), make_ids(n, prefix));
}

inline EmbeddingSet make_embeddings(std::size_t dim, std::vector<float> values,
                                    const std::string& prefix = "s") {
  const std::size_t n = values.size() / dim;
  return EmbeddingSet(dim, std::move(values), make_ids(n, prefix));
}

}  // namespace oodknn::testing
