#pragma once

// Seeded synthetic benchmarks: isotropic Gaussian ID embeddings around the
// all-ones mean, OOD sets shifted by `shift` sigma in every coordinate along
// +-1 patterns orthogonal to that mean. Cosine distance ignores scale, so an
// origin-centred ID cloud would be indistinguishable from any shifted one.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oodknn/embedding_store.hpp"
#include "oodknn/error.hpp"
#include "oodknn/manifest.hpp"

namespace oodknn {

struct SyntheticOptions {
  std::size_t dim = 64;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::size_t n_ood = 500;
  std::size_t n_ood_sets = 4;
  double shift = 6.0;   // in units of sigma, applied per coordinate
  double sigma = 1.0;
  std::size_t classes = 27;
  double logit_margin = 4.0;  // added to the true-class logit of ID samples
  bool with_logits = true;
  std::uint64_t seed = 0;
};

// +-1 pattern number `s` (s >= 0): sign flips every 2^s coordinates. Each
// pattern is orthogonal to the all-ones vector when dim is a multiple of
// 2^(s+1).
inline std::vector<double> shift_pattern(std::size_t dim, std::size_t s) {
  std::vector<double> p(dim);
  for (std::size_t d = 0; d < dim; ++d) p[d] = ((d >> s) & 1U) != 0 ? -1.0 : 1.0;
  return p;
}

inline EmbeddingSet gaussian_embeddings(std::size_t n, const std::vector<double>& mean, double sigma,
                                        std::mt19937_64& rng, const std::string& prefix) {
  std::normal_distribution<double> noise(0.0, sigma);
  const std::size_t dim = mean.size();
  std::vector<float> values(n * dim);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      values[i * dim + d] = static_cast<float>(mean[d] + noise(rng));
    }
    ids[i] = prefix + std::to_string(i);
  }
  return EmbeddingSet(dim, std::move(values), std::move(ids));
}

// Standard-normal logits; when `margin` > 0 the class i % classes of row i
// is raised by `margin`, mimicking a confident in-distribution classifier.
inline LogitSet synthetic_logits(const std::vector<std::string>& ids, std::size_t classes,
                                 double margin, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<float> values(ids.size() * classes);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      double v = noise(rng);
      if (c == i % classes) v += margin;
      values[i * classes + c] = static_cast<float>(v);
    }
  }
  return LogitSet(classes, std::move(values), ids);
}

struct SyntheticBenchmark {
  EmbeddingSet train;
  Dataset id_test;
  std::vector<Dataset> ood_sets;
};

inline SyntheticBenchmark make_synthetic(const SyntheticOptions& opt) {
  if (opt.dim == 0) throw ConfigError("synthetic: dim must be positive");
  std::mt19937_64 rng(opt.seed);
  const std::vector<double> id_mean(opt.dim, 1.0);

  SyntheticBenchmark b;
  b.train = gaussian_embeddings(opt.n_train, id_mean, opt.sigma, rng, "train_");
  b.id_test.name = "id_test";
  b.id_test.embeddings = gaussian_embeddings(opt.n_test, id_mean, opt.sigma, rng, "id_");
  if (opt.with_logits) {
    b.id_test.logits =
        synthetic_logits(b.id_test.embeddings.ids(), opt.classes, opt.logit_margin, rng);
  }
  for (std::size_t s = 0; s < opt.n_ood_sets; ++s) {
    auto mean = shift_pattern(opt.dim, s);
    for (std::size_t d = 0; d < opt.dim; ++d) mean[d] = id_mean[d] + opt.shift * opt.sigma * mean[d];
    Dataset ds;
    ds.name = "ood" + std::to_string(s + 1);
    ds.embeddings = gaussian_embeddings(opt.n_ood, mean, opt.sigma, rng, ds.name + "_");
    if (opt.with_logits) ds.logits = synthetic_logits(ds.embeddings.ids(), opt.classes, 0.0, rng);
    b.ood_sets.push_back(std::move(ds));
  }
  return b;
}

inline BenchmarkManifest to_manifest(SyntheticBenchmark b, std::map<std::string, std::string> meta = {}) {
  BenchmarkManifest m;
  m.spec.metadata = std::move(meta);
  m.id_train = std::move(b.train);
  m.id_test = std::move(b.id_test);
  m.ood_sets = std::move(b.ood_sets);
  return m;
}

// Writes all sets as binary files plus manifest.json into `dir`; returns
// the manifest path. Paths inside the manifest are relative to `dir`.
inline std::filesystem::path write_synthetic(const SyntheticBenchmark& b,
                                             const std::filesystem::path& dir,
                                             std::map<std::string, std::string> meta = {}) {
  std::filesystem::create_directories(dir);
  ManifestSpec spec;
  spec.metadata = std::move(meta);
  write_embedding_file(b.train, dir / "train.oodb");
  spec.id_train = "train.oodb";

  auto write_dataset = [&](const Dataset& ds) {
    DatasetEntry e;
    e.name = ds.name;
    e.embeddings = ds.name + ".oodb";
    write_embedding_file(ds.embeddings, dir / e.embeddings);
    if (ds.logits) {
      e.logits = ds.name + "_logits.oodb";
      write_logit_file(*ds.logits, dir / *e.logits);
    }
    return e;
  };
  spec.id_test = write_dataset(b.id_test);
  for (const auto& ds : b.ood_sets) spec.ood_sets.push_back(write_dataset(ds));
  const auto path = dir / "manifest.json";
  write_manifest(spec, path);
  return path;
}

}  // namespace oodknn
