// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "mcpt/augment.hpp"
#include "mcpt/data.hpp"
#include "mcpt/mdc.hpp"
#include "mcpt/synth.hpp"
#include "testutil.hpp"

using namespace mcpt;

TEST_CASE("grayscale conversion uses ITU-601 weights") {
  Image px({1, 1, 3});
  px[0] = 1;
  px[1] = 1;
  px[2] = 1;
  CHECK(to_grayscale(px)[0] == Catch::Approx(1.0).margin(1e-7));
  px[1] = 0;
  px[2] = 0;
  CHECK(to_grayscale(px)[0] == Catch::Approx(0.299).margin(1e-7));
  px[0] = 0.42f;
  px[1] = 0.42f;
  px[2] = 0.42f;
  CHECK(to_grayscale(px)[0] == Catch::Approx(0.42).margin(1e-6));
  Image wrong({2, 2, 1});
  CHECK_THROWS_AS(to_grayscale(wrong), ValidationError);
}

TEST_CASE("noiseless synth pair: sar equals gray(eo) exactly") {
  SceneSpec spec{2, ShapeFamily::grid, 1.0, 77};
  NoiseParams noise{0.0, 0.0, 1.0};
  const ImagePair pair = synth_pair(spec, noise, 5);
  const Image gray = to_grayscale(pair.eo);
  CHECK(max_abs_diff(pair.sar, gray) == 0.0f);
}

TEST_CASE("synth pair is deterministic per (spec, noise, seed)") {
  SceneSpec spec{1, ShapeFamily::stripe, 0.8, 123};
  NoiseParams noise{0.3, 1.0, 1.2};
  const ImagePair a = synth_pair(spec, noise, 9);
  const ImagePair b = synth_pair(spec, noise, 9);
  CHECK(max_abs_diff(a.eo, b.eo) == 0.0f);
  CHECK(max_abs_diff(a.sar, b.sar) == 0.0f);
  const ImagePair c = synth_pair(spec, noise, 10);
  CHECK(max_abs_diff(a.sar, c.sar) > 0.0f);
}

TEST_CASE("speckle raises the mean MDC ratio") {
  SceneSpec spec{0, ShapeFamily::blob, 1.0, 3};
  const auto masks = build_mdc_masks(25, 64, 64);
  const ImagePair clean = synth_pair(spec, {0.0, 0.0, 1.0}, 1);
  const ImagePair noisy = synth_pair(spec, {0.3, 0.0, 1.0}, 1);
  const auto c0 = compute_mdc(clean, masks);
  const auto c1 = compute_mdc(noisy, masks);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < 25; ++i) {
    m0 += c0.ratios[i];
    m1 += c1.ratios[i];
  }
  CHECK(m1 / 25 > m0 / 25);
}

TEST_CASE("optical power is radially decreasing for every shape family") {
  const auto d = radial_freq_grid<double>(64, 64, true);
  for (int cls = 0; cls < 5; ++cls) {
    for (std::uint64_t seed : {11ull, 29ull}) {
      SceneSpec spec{cls, shape_family_for_class(cls), 1.0, seed};
      const ImagePair pair = synth_pair(spec, {0.0, 0.0, 1.0}, 1);
      const auto power = power_spectrum(image_plane_to_grid(to_grayscale(pair.eo)));
      double low = 0, high = 0;
      std::size_t nlow = 0, nhigh = 0;
      for (std::size_t i = 0; i < power.numel(); ++i) {
        if (d[i] <= 0.125) {
          low += power[i];
          ++nlow;
        } else if (d[i] >= 0.375) {
          high += power[i];
          ++nhigh;
        }
      }
      INFO("family " << shape_family_name(spec.family) << " seed " << seed);
      CHECK(low / static_cast<double>(nlow) > high / static_cast<double>(nhigh));
    }
  }
}

TEST_CASE("augment determinism, range, and disabled identity") {
  SceneSpec spec{3, ShapeFamily::ring, 1.0, 5};
  const ImagePair pair = synth_pair(spec, {0.2, 1.0, 1.0}, 2);
  AugmentParams ap;
  const Image a = augment(pair.eo, ap, 31);
  const Image b = augment(pair.eo, ap, 31);
  CHECK(max_abs_diff(a, b) == 0.0f);
  const Image c = augment(pair.eo, ap, 32);
  CHECK(max_abs_diff(a, c) > 0.0f);
  for (float v : a.vec()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  AugmentParams off{1.0, 1.0, 0.0, 0.0};
  const Image id = augment(pair.eo, off, 31);
  CHECK(max_abs_diff(id, pair.eo) == 0.0f);
}

TEST_CASE("png round-trip preserves 8-bit values") {
  const auto dir = std::filesystem::temp_directory_path();
  Image gray({5, 7, 1});
  for (std::size_t i = 0; i < gray.numel(); ++i)
    gray[i] = static_cast<float>((i * 13) % 256) / 255.0f;
  const auto gpath = (dir / "mcpt_gray.png").string();
  save_png(gpath, gray);
  const Image gback = load_png(gpath);
  REQUIRE(gback.shape() == gray.shape());
  CHECK(max_abs_diff(gback, gray) == 0.0f);

  Image rgb({4, 4, 3});
  for (std::size_t i = 0; i < rgb.numel(); ++i)
    rgb[i] = static_cast<float>((i * 31) % 256) / 255.0f;
  const auto cpath = (dir / "mcpt_rgb.png").string();
  save_png(cpath, rgb);
  const Image cback = load_png(cpath);
  REQUIRE(cback.shape() == rgb.shape());
  CHECK(max_abs_diff(cback, rgb) == 0.0f);
  std::filesystem::remove(gpath);
  std::filesystem::remove(cpath);
}

namespace {
std::vector<int> class_vector(const std::vector<std::pair<int, int>>& class_counts) {
  std::vector<int> ids;
  for (const auto& [cls, count] : class_counts)
    for (int k = 0; k < count; ++k) ids.push_back(cls);
  return ids;
}
}  // namespace

TEST_CASE("MSTAR-shaped split reproduces the published aggregate counts") {
  // 6 old classes with 1616 training samples, 4 new with 1131: per-class
  // floor(n/2) labeling gives |D_l| = 808 and |D_u| = 2747 - 808 = 1939.
  const auto ids = class_vector({{0, 270},
                                 {1, 270},
                                 {2, 270},
                                 {3, 270},
                                 {4, 270},
                                 {5, 266},
                                 {6, 283},
                                 {7, 283},
                                 {8, 283},
                                 {9, 282}});
  REQUIRE(ids.size() == 2747);
  const auto split = make_split_indices(ids, {0, 1, 2, 3, 4, 5}, 0.5, 17);
  CHECK(split.labeled.size() == 808);
  CHECK(split.unlabeled.size() == 1939);
}

TEST_CASE("degenerate and tiny splits follow the stated rule") {
  // label_fraction = 1 and no new classes: D_u empty
  const auto all = make_split_indices(class_vector({{0, 4}, {1, 6}}), {0, 1}, 1.0, 5);
  CHECK(all.unlabeled.empty());
  // 2 classes x 4 train instances, 1 old, fraction 0.5: |D_l| = 2, |D_u| = 6
  const auto tiny = make_split_indices(class_vector({{0, 4}, {1, 4}}), {0}, 0.5, 5);
  CHECK(tiny.labeled.size() == 2);
  CHECK(tiny.unlabeled.size() == 6);
}

TEST_CASE("old class with fewer than 2 instances is rejected") {
  CHECK_THROWS_AS(make_split_indices(class_vector({{0, 1}, {1, 8}}), {0}, 0.5, 1),
                  ValidationError);
  CHECK_THROWS_AS(make_split_indices(class_vector({{1, 8}}), {0}, 0.5, 1), ValidationError);
}

TEST_CASE("split invariants hold over random corpora") {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_classes = 3 + static_cast<int>(rng.below(5));
    const int n_old = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
    std::vector<int> ids;
    for (int c = 0; c < n_classes; ++c) {
      const int n = 2 + static_cast<int>(rng.below(20));
      for (int k = 0; k < n; ++k) ids.push_back(c);
    }
    std::set<int> old;
    for (int c = 0; c < n_old; ++c) old.insert(c);
    const auto split = make_split_indices(ids, old, 0.5, rng.next_u64());

    std::set<std::size_t> seen;
    for (auto i : split.labeled) {
      CHECK(seen.insert(i).second);
      CHECK(old.count(ids[i]) == 1);
    }
    for (auto i : split.unlabeled) CHECK(seen.insert(i).second);
    CHECK(seen.size() == ids.size());
    if (n_old < n_classes) {
      bool has_new = false;
      for (auto i : split.unlabeled) has_new |= (old.count(ids[i]) == 0);
      CHECK(has_new);
    }
  }
}

TEST_CASE("manifest round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "mcpt_manifest_test";
  std::filesystem::create_directories(dir);
  const std::vector<PairEntry> pairs{{"p0", "a_eo.png", "a_sar.png"},
                                     {"p1", "b_eo.png", "b_sar.png"}};
  const auto ppath = (dir / "pairs.json").string();
  save_pair_manifest(ppath, pairs);
  const auto ploaded = load_pair_manifest(ppath);
  REQUIRE(ploaded.size() == 2);
  CHECK(ploaded[1].pair_id == "p1");
  CHECK(ploaded[1].sar_path == "b_sar.png");

  const std::vector<ClassifiedEntry> cls{{"x.png", 3, "train"}, {"y.png", 1, "test"}};
  const auto cpath = (dir / "cls.json").string();
  save_class_manifest(cpath, cls);
  const auto cloaded = load_class_manifest(cpath);
  REQUIRE(cloaded.size() == 2);
  CHECK(cloaded[0].class_id == 3);
  CHECK(cloaded[1].split == "test");
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic corpus writer emits loadable manifests and PNGs") {
  const auto dir = std::filesystem::temp_directory_path() / "mcpt_synth_corpus";
  std::filesystem::remove_all(dir);
  SynthCorpusConfig cfg;
  cfg.n_pairs = 4;
  cfg.n_classes = 2;
  cfg.image_size = 32;
  cfg.train_per_class = 3;
  cfg.test_per_class = 1;
  cfg.seed = 7;
  const auto paths = write_synth_corpus(dir.string(), cfg);
  const auto pairs = load_pair_manifest(paths.pair_manifest);
  REQUIRE(pairs.size() == 4);
  const ImagePair p0 = load_pair(paths.pair_manifest, pairs[0]);
  CHECK(p0.eo.extent(0) == 32);
  CHECK(image_c(p0.sar) == 1);
  std::vector<Sample> train, test;
  load_class_corpus(paths.class_manifest, train, test);
  CHECK(train.size() == 6);
  CHECK(test.size() == 2);
  std::filesystem::remove_all(dir);
}
