// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcpt/augment.hpp"
#include "mcpt/synth.hpp"

namespace mcpt {

using json = nlohmann::json;

struct PairEntry {
  std::string pair_id, eo_path, sar_path;
};

struct ClassifiedEntry {
  std::string image_path;
  int class_id = 0;
  std::string split;  // "train" | "test"
};

struct Sample {
  std::string id;
  Image image;
  int class_id = -1;
};

struct GCDSplit {
  std::vector<Sample> labeled;    // D_l, old classes only
  std::vector<Sample> unlabeled;  // D_u, class_id kept as hidden ground truth
  std::vector<Sample> test;       // D_test
  std::set<int> old_classes, new_classes;
};

// ---- manifests ----

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write " + path);
  os << j.dump(2) << "\n";
}

inline std::vector<PairEntry> load_pair_manifest(const std::string& path) {
  const json j = read_json_file(path);
  require(j.is_array(), "pair manifest must be a JSON array: " + path);
  std::vector<PairEntry> out;
  for (const auto& e : j)
    out.push_back({e.at("pair_id").get<std::string>(), e.at("eo_path").get<std::string>(),
                   e.at("sar_path").get<std::string>()});
  return out;
}

inline void save_pair_manifest(const std::string& path, const std::vector<PairEntry>& entries) {
  json j = json::array();
  for (const auto& e : entries)
    j.push_back({{"pair_id", e.pair_id}, {"eo_path", e.eo_path}, {"sar_path", e.sar_path}});
  write_json_file(path, j);
}

inline std::vector<ClassifiedEntry> load_class_manifest(const std::string& path) {
  const json j = read_json_file(path);
  require(j.is_array(), "classification manifest must be a JSON array: " + path);
  std::vector<ClassifiedEntry> out;
  for (const auto& e : j) {
    ClassifiedEntry c{e.at("image_path").get<std::string>(), e.at("class_id").get<int>(),
                      e.at("split").get<std::string>()};
    require(c.split == "train" || c.split == "test", "split must be train|test in " + path);
    out.push_back(std::move(c));
  }
  return out;
}

inline void save_class_manifest(const std::string& path,
                                const std::vector<ClassifiedEntry>& entries) {
  json j = json::array();
  for (const auto& e : entries)
    j.push_back({{"image_path", e.image_path}, {"class_id", e.class_id}, {"split", e.split}});
  write_json_file(path, j);
}

// Resolves a manifest-relative path against the manifest's directory.
inline std::string resolve_relative(const std::string& manifest_path, const std::string& p) {
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(manifest_path).parent_path() / fp).string();
}

inline ImagePair load_pair(const std::string& manifest_path, const PairEntry& e) {
  ImagePair pair;
  pair.eo = load_png(resolve_relative(manifest_path, e.eo_path));
  pair.sar = load_png(resolve_relative(manifest_path, e.sar_path));
  pair.pair_id = e.pair_id;
  require(pair.eo.extent(0) == pair.sar.extent(0) && pair.eo.extent(1) == pair.sar.extent(1),
          "pair " + e.pair_id + " is not registered (extent mismatch)");
  require(image_c(pair.eo) == 3, "pair " + e.pair_id + ": eo must be RGB");
  require(image_c(pair.sar) == 1, "pair " + e.pair_id + ": sar must be grayscale");
  return pair;
}

// ---- GCD split construction ----

struct SplitIndices {
  std::vector<std::size_t> labeled, unlabeled;
};

// Per old class: floor(label_fraction * n) seeded-random training instances go
// to D_l; every remaining training instance (old remainder plus all new-class
// samples) goes to D_u.
inline SplitIndices make_split_indices(const std::vector<int>& train_class_ids,
                                       const std::set<int>& old_classes, double label_fraction,
                                       std::uint64_t seed) {
  require(label_fraction > 0.0 && label_fraction <= 1.0, "label_fraction must be in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train_class_ids.size(); ++i)
    by_class[train_class_ids[i]].push_back(i);
  for (int c : old_classes) {
    auto it = by_class.find(c);
    require(it != by_class.end(), "old class " + std::to_string(c) + " not present in dataset");
    require(it->second.size() >= 2,
            "old class " + std::to_string(c) + " has fewer than 2 instances");
  }
  SplitIndices out;
  std::vector<char> is_labeled(train_class_ids.size(), 0);
  Rng rng(mix_seed(seed, 0x53504c54ull));
  for (auto& [cls, idxs] : by_class) {
    if (!old_classes.count(cls)) continue;
    std::vector<std::size_t> pool = idxs;
    rng.shuffle(pool);
    const std::size_t take =
        static_cast<std::size_t>(std::floor(label_fraction * static_cast<double>(pool.size())));
    for (std::size_t k = 0; k < take; ++k) is_labeled[pool[k]] = 1;
  }
  for (std::size_t i = 0; i < train_class_ids.size(); ++i)
    (is_labeled[i] ? out.labeled : out.unlabeled).push_back(i);
  return out;
}

inline GCDSplit make_splits(const std::vector<Sample>& train, const std::vector<Sample>& test,
                            const std::set<int>& old_classes, double label_fraction,
                            std::uint64_t seed) {
  std::vector<int> ids;
  ids.reserve(train.size());
  std::set<int> all_classes;
  for (const auto& s : train) {
    ids.push_back(s.class_id);
    all_classes.insert(s.class_id);
  }
  for (const auto& s : test) all_classes.insert(s.class_id);
  const SplitIndices idx = make_split_indices(ids, old_classes, label_fraction, seed);
  GCDSplit split;
  split.old_classes = old_classes;
  for (int c : all_classes)
    if (!old_classes.count(c)) split.new_classes.insert(c);
  for (std::size_t i : idx.labeled) split.labeled.push_back(train[i]);
  for (std::size_t i : idx.unlabeled) split.unlabeled.push_back(train[i]);
  split.test = test;
  return split;
}

// ---- synthetic corpus writer ----

struct SynthCorpusConfig {
  std::size_t n_pairs = 200;
  int n_classes = 5;
  std::size_t image_size = 64;
  NoiseParams noise;
  double texture_scale = 1.0;
  bool separable = false;
  int train_per_class = 40;
  int test_per_class = 16;
  std::uint64_t seed = 0;
};

struct SynthCorpusPaths {
  std::string pair_manifest;
  std::string class_manifest;
};

inline SynthCorpusPaths write_synth_corpus(const std::string& dir, const SynthCorpusConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "pairs");
  fs::create_directories(fs::path(dir) / "single");
  std::vector<PairEntry> pairs;
  for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
    SceneSpec spec;
    spec.class_id = static_cast<int>(i) % cfg.n_classes;
    spec.family = shape_family_for_class(spec.class_id);
    spec.texture_scale = cfg.texture_scale;
    spec.seed = mix_seed(cfg.seed, 1000 + i);
    const ImagePair pair =
        synth_pair(spec, cfg.noise, mix_seed(cfg.seed, 2000 + i), cfg.image_size, cfg.separable);
    char name[64];
    std::snprintf(name, sizeof(name), "pair_%04zu", i);
    const std::string eo_rel = "pairs/" + std::string(name) + "_eo.png";
    const std::string sar_rel = "pairs/" + std::string(name) + "_sar.png";
    save_png((fs::path(dir) / eo_rel).string(), pair.eo);
    save_png((fs::path(dir) / sar_rel).string(), pair.sar);
    pairs.push_back({pair.pair_id, eo_rel, sar_rel});
  }
  SynthCorpusPaths out;
  out.pair_manifest = (fs::path(dir) / "pairs.json").string();
  save_pair_manifest(out.pair_manifest, pairs);

  std::vector<ClassifiedEntry> cls;
  std::size_t counter = 0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    for (int k = 0; k < cfg.train_per_class + cfg.test_per_class; ++k, ++counter) {
      SceneSpec spec;
      spec.class_id = c;
      spec.family = shape_family_for_class(c);
      spec.texture_scale = cfg.texture_scale;
      spec.seed = mix_seed(cfg.seed, 50000 + counter);
      const ImagePair pair =
          synth_pair(spec, cfg.noise, mix_seed(cfg.seed, 90000 + counter), cfg.image_size,
                     cfg.separable);
      char name[64];
      std::snprintf(name, sizeof(name), "img_%04zu", counter);
      const std::string rel = "single/" + std::string(name) + ".png";
      save_png((fs::path(dir) / rel).string(), pair.sar);
      cls.push_back({rel, c, k < cfg.train_per_class ? "train" : "test"});
    }
  }
  out.class_manifest = (fs::path(dir) / "classification.json").string();
  save_class_manifest(out.class_manifest, cls);
  return out;
}

inline void load_class_corpus(const std::string& manifest_path, std::vector<Sample>& train,
                              std::vector<Sample>& test) {
  const auto entries = load_class_manifest(manifest_path);
  for (const auto& e : entries) {
    Sample s;
    s.id = e.image_path;
    s.class_id = e.class_id;
    s.image = load_png(resolve_relative(manifest_path, e.image_path));
    (e.split == "train" ? train : test).push_back(std::move(s));
  }
}

}  // namespace mcpt
