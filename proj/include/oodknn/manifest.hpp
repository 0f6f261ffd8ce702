#pragma once

// Benchmark manifest: a JSON document naming the ID training embeddings, the
// ID test split and any number of OOD sets.
//
//   {
//     "id_train": "train.oodb",
//     "id_test":  {"embeddings": "test.oodb", "logits": "test_logits.oodb"},
//     "ood_sets": [
//       {"name": "Food5K", "embeddings": "food.oodb", "logits": "food_logits.oodb"}
//     ],
//     "metadata": {"variant": "augmentations+scheduler"}
//   }
//
// Relative paths are resolved against the manifest's own directory.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodknn/embedding_store.hpp"
#include "oodknn/error.hpp"

namespace oodknn {

struct DatasetEntry {
  std::string name;
  std::filesystem::path embeddings;
  std::optional<std::filesystem::path> logits;
};

struct ManifestSpec {
  std::filesystem::path id_train;
  DatasetEntry id_test;
  std::vector<DatasetEntry> ood_sets;
  std::map<std::string, std::string> metadata;
};

// A dataset with its logits (if any) reordered to follow the embedding ids.
struct Dataset {
  std::string name;
  EmbeddingSet embeddings;
  std::optional<LogitSet> logits;

  std::size_t count() const noexcept { return embeddings.count(); }
};

struct BenchmarkManifest {
  std::filesystem::path source;
  ManifestSpec spec;
  EmbeddingSet id_train;
  Dataset id_test;
  std::vector<Dataset> ood_sets;

  const std::map<std::string, std::string>& metadata() const noexcept {
    return spec.metadata;
  }
  std::size_t dim() const noexcept { return id_train.dim(); }
  bool has_all_logits() const noexcept {
    if (!id_test.logits) return false;
    for (const auto& s : ood_sets) {
      if (!s.logits) return false;
    }
    return true;
  }
};

// Reorders `logits` so row i carries ids[i]. The id sets must match exactly.
inline LogitSet align_logits(const LogitSet& logits, const std::vector<std::string>& ids,
                             const std::string& what) {
  if (logits.count() != ids.size()) {
    throw ConfigError(what + ": logit file has " + std::to_string(logits.count()) +
                      " rows but embedding file has " + std::to_string(ids.size()));
  }
  if (logits.ids() == ids) return logits;

  std::unordered_map<std::string_view, std::size_t> pos;
  pos.reserve(logits.count());
  for (std::size_t i = 0; i < logits.count(); ++i) pos.emplace(logits.id(i), i);

  std::vector<float> values;
  values.reserve(logits.values().size());
  for (const auto& id : ids) {
    const auto it = pos.find(id);
    if (it == pos.end()) {
      throw ConfigError(what + ": id '" + id + "' has an embedding but no logits");
    }
    const auto row = logits.row(it->second);
    values.insert(values.end(), row.begin(), row.end());
  }
  return LogitSet(logits.classes(), std::move(values), ids);
}

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_string()) {
    throw ConfigError("manifest " + where + ": missing string field '" + key + "'");
  }
  return obj.at(key).get<std::string>();
}

inline DatasetEntry parse_entry(const nlohmann::json& obj, const std::filesystem::path& base,
                                const std::string& where) {
  DatasetEntry entry;
  entry.embeddings = resolve(base, require_string(obj, "embeddings", where));
  if (obj.contains("logits") && !obj.at("logits").is_null()) {
    entry.logits = resolve(base, require_string(obj, "logits", where));
  }
  return entry;
}

inline void require_exists(const std::filesystem::path& p, const std::string& entry) {
  if (!std::filesystem::exists(p)) {
    throw ConfigError("manifest entry " + entry + ": file '" + p.string() + "' does not exist");
  }
}

}  // namespace detail

inline ManifestSpec parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base) {
  if (!doc.is_object()) throw ConfigError("manifest: top level must be an object");
  ManifestSpec spec;
  spec.id_train = detail::resolve(base, detail::require_string(doc, "id_train", "top level"));

  if (!doc.contains("id_test")) throw ConfigError("manifest: missing 'id_test'");
  const auto& test = doc.at("id_test");
  if (test.is_string()) {
    spec.id_test.embeddings = detail::resolve(base, test.get<std::string>());
  } else {
    spec.id_test = detail::parse_entry(test, base, "id_test");
  }
  spec.id_test.name = "id_test";

  if (doc.contains("ood_sets")) {
    const auto& sets = doc.at("ood_sets");
    if (!sets.is_array()) throw ConfigError("manifest: 'ood_sets' must be an array");
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const std::string where = "ood_sets[" + std::to_string(i) + "]";
      DatasetEntry entry = detail::parse_entry(sets[i], base, where);
      entry.name = detail::require_string(sets[i], "name", where);
      for (const auto& prior : spec.ood_sets) {
        if (prior.name == entry.name) {
          throw ConfigError("manifest: duplicate OOD set name '" + entry.name + "'");
        }
      }
      spec.ood_sets.push_back(std::move(entry));
    }
  }

  if (doc.contains("metadata")) {
    const auto& meta = doc.at("metadata");
    if (!meta.is_object()) throw ConfigError("manifest: 'metadata' must be an object");
    for (const auto& [key, value] : meta.items()) {
      spec.metadata[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
  }
  return spec;
}

inline nlohmann::json manifest_to_json(const ManifestSpec& spec) {
  auto entry_json = [](const DatasetEntry& e) {
    nlohmann::json j;
    if (!e.name.empty() && e.name != "id_test") j["name"] = e.name;
    j["embeddings"] = e.embeddings.generic_string();
    if (e.logits) j["logits"] = e.logits->generic_string();
    return j;
  };
  nlohmann::json doc;
  doc["id_train"] = spec.id_train.generic_string();
  doc["id_test"] = entry_json(spec.id_test);
  doc["ood_sets"] = nlohmann::json::array();
  for (const auto& s : spec.ood_sets) doc["ood_sets"].push_back(entry_json(s));
  doc["metadata"] = spec.metadata;
  return doc;
}

// Opens and validates every referenced file, cross-checks embedding dims
// and logit class counts, and joins logits to embeddings by id.
inline BenchmarkManifest load_manifest(const ManifestSpec& spec,
                                       std::filesystem::path source = {}) {
  BenchmarkManifest m;
  m.source = std::move(source);
  m.spec = spec;

  detail::require_exists(spec.id_train, "id_train");
  m.id_train = read_embedding_file(spec.id_train);
  const std::size_t dim = m.id_train.dim();

  std::optional<std::pair<std::filesystem::path, std::size_t>> classes_ref;

  auto load = [&](const DatasetEntry& entry, const std::string& label) {
    detail::require_exists(entry.embeddings, label + ".embeddings");
    Dataset ds;
    ds.name = entry.name;
    ds.embeddings = read_embedding_file(entry.embeddings);
    if (ds.embeddings.dim() != dim) {
      throw ConfigError("manifest dim mismatch: '" + spec.id_train.string() + "' has dim " +
                        std::to_string(dim) + " but '" + entry.embeddings.string() +
                        "' has dim " + std::to_string(ds.embeddings.dim()));
    }
    if (entry.logits) {
      detail::require_exists(*entry.logits, label + ".logits");
      LogitSet logits = read_logit_file(*entry.logits);
      if (!classes_ref) {
        classes_ref.emplace(*entry.logits, logits.classes());
      } else if (classes_ref->second != logits.classes()) {
        throw ConfigError("manifest class-count mismatch: '" + classes_ref->first.string() +
                          "' has " + std::to_string(classes_ref->second) + " classes but '" +
                          entry.logits->string() + "' has " +
                          std::to_string(logits.classes()));
      }
      ds.logits = align_logits(logits, ds.embeddings.ids(), label);
    }
    return ds;
  };

  m.id_test = load(spec.id_test, "id_test");
  for (std::size_t i = 0; i < spec.ood_sets.size(); ++i) {
    m.ood_sets.push_back(load(spec.ood_sets[i], "ood_sets[" + std::to_string(i) + "] (" +
                                                    spec.ood_sets[i].name + ")"));
  }
  return m;
}

inline BenchmarkManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("manifest '" + path.string() + "' does not exist");
  }
  std::ifstream in(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + path.string() + "': " + e.what());
  }
  return load_manifest(parse_manifest(doc, path.parent_path()), path);
}

inline void write_manifest(const ManifestSpec& spec, const std::filesystem::path& path) {
  detail::write_bytes(path, manifest_to_json(spec).dump(2) + "\n");
}

}  // namespace oodknn
