// Unit tests for the embedding library: exact top-k cosine retrieval with
// averaging, k resolution, fingerprints, and the binary file format.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "vip/errors.hpp"
#include "vip/library.hpp"
#include "vip/rng.hpp"
#include "vip/world.hpp"

using namespace vip;
using namespace vip::library;
using namespace vip::encoder;

namespace {

Embedding unit2(double x, double y) {
  Embedding e;
  e.v = {x, y};
  return e;
}

Embedding random_unit(std::uint64_t seed, std::size_t width = kEmbeddingWidth) {
  Rng rng(seed);
  Embedding e;
  e.v.resize(width);
  double n2 = 0.0;
  for (auto& v : e.v) {
    v = rng.normal();
    n2 += v * v;
  }
  for (auto& v : e.v) v /= std::sqrt(n2);
  return e;
}

EmbeddingLibrary random_library(std::size_t n, std::uint64_t seed) {
  EmbeddingLibrary lib;
  for (std::size_t i = 0; i < n; ++i)
    lib.entries.push_back({random_unit(derive_seed(seed, "lib", i)), i});
  return lib;
}

// The worked 3-entry retrieval example.
EmbeddingLibrary example_library() {
  EmbeddingLibrary lib;
  lib.entries.push_back({unit2(1.0, 0.0), 0});
  lib.entries.push_back({unit2(0.0, 1.0), 1});
  lib.entries.push_back({unit2(std::sqrt(0.5), std::sqrt(0.5)), 2});
  return lib;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("resolved_k: explicit k wins, fractions round, bounds enforced") {
  InferenceConfig cfg;
  cfg.k = 7;
  CHECK(cfg.resolved_k(100) == 7);

  cfg.k = 0;
  cfg.k_fraction = 0.01;
  CHECK(cfg.resolved_k(500) == 5);
  cfg.k_fraction = 0.0001;
  CHECK(cfg.resolved_k(500) == 1);  // max(1, round)
  cfg.k_fraction = 1.0;
  CHECK(cfg.resolved_k(500) == 500);

  cfg.k = 501;
  CHECK_THROWS_AS(cfg.resolved_k(500), KTooLarge);
}

TEST_CASE("resolved_k: the ablation grid against library size 500") {
  const std::vector<double> fractions = {0.005, 0.01, 0.02, 0.05,
                                         0.1,   0.25, 0.5,  1.0};
  const std::vector<std::size_t> expected = {3, 5, 10, 25, 50, 125, 250, 500};
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    InferenceConfig cfg;
    cfg.k = 0;
    cfg.k_fraction = fractions[i];
    CHECK(cfg.resolved_k(500) == expected[i]);
  }
}

TEST_CASE("topk_average: hand-computed 3-entry example") {
  const EmbeddingLibrary lib = example_library();
  InferenceConfig cfg;
  cfg.k = 2;
  cfg.renormalize_average = false;
  const Selection sel = topk_average(unit2(1.0, 0.0), lib, cfg);
  REQUIRE(sel.neighbor_ids.size() == 2);
  CHECK(sel.neighbor_ids[0] == 0);
  CHECK(sel.neighbor_ids[1] == 2);
  CHECK(sel.selected.v[0] == doctest::Approx(0.8535533905932737).epsilon(1e-6));
  CHECK(sel.selected.v[1] == doctest::Approx(0.3535533905932738).epsilon(1e-6));
}

TEST_CASE("topk_average: k = 1 returns exactly the nearest entry") {
  const EmbeddingLibrary lib = random_library(50, 4);
  InferenceConfig cfg;
  cfg.k = 1;
  const Embedding q = random_unit(999);
  const Selection sel = topk_average(q, lib, cfg);
  REQUIRE(sel.neighbor_ids.size() == 1);
  // Exact match to some stored entry.
  const Entry* best = lib.find(sel.neighbor_ids[0]);
  REQUIRE(best != nullptr);
  CHECK(sel.selected.v == best->embedding.v);
  // And it is the argmax by direct scan.
  double best_sim = -2.0;
  std::uint64_t best_id = 0;
  for (const auto& e : lib.entries) {
    const double s = dot(q.v, e.embedding.v);
    if (s > best_sim) {
      best_sim = s;
      best_id = e.traj_id;
    }
  }
  CHECK(sel.neighbor_ids[0] == best_id);
}

TEST_CASE("topk_average: self-retrieval at k = 1") {
  const EmbeddingLibrary lib = random_library(50, 4);
  InferenceConfig cfg;
  cfg.k = 1;
  const Selection sel = topk_average(lib.entries[17].embedding, lib, cfg);
  CHECK(sel.neighbor_ids[0] == lib.entries[17].traj_id);
}

TEST_CASE("topk_average: k = |library| equals the (re-normalized) global "
          "mean") {
  const EmbeddingLibrary lib = random_library(20, 6);
  InferenceConfig cfg;
  cfg.k = 20;
  cfg.renormalize_average = true;
  const Selection sel = topk_average(random_unit(5), lib, cfg);
  std::vector<double> mean(kEmbeddingWidth, 0.0);
  for (const auto& e : lib.entries)
    for (std::size_t c = 0; c < mean.size(); ++c)
      mean[c] += e.embedding.v[c] / 20.0;
  double n2 = 0.0;
  for (double v : mean) n2 += v * v;
  for (auto& v : mean) v /= std::sqrt(n2);
  for (std::size_t c = 0; c < mean.size(); ++c)
    CHECK(sel.selected.v[c] == doctest::Approx(mean[c]).epsilon(1e-12));
}

TEST_CASE("topk_average: monotonicity of the selected set") {
  const EmbeddingLibrary lib = random_library(80, 12);
  const Embedding q = random_unit(1234);
  for (std::size_t k : {1UL, 5UL, 33UL, 80UL}) {
    InferenceConfig cfg;
    cfg.k = k;
    const Selection sel = topk_average(q, lib, cfg);
    REQUIRE(sel.neighbor_ids.size() == k);
    double min_selected = 2.0;
    double max_rest = -2.0;
    for (const auto& e : lib.entries) {
      const double s = dot(q.v, e.embedding.v);
      const bool selected =
          std::find(sel.neighbor_ids.begin(), sel.neighbor_ids.end(),
                    e.traj_id) != sel.neighbor_ids.end();
      if (selected)
        min_selected = std::min(min_selected, s);
      else
        max_rest = std::max(max_rest, s);
    }
    if (k < lib.size()) CHECK(min_selected >= max_rest);
  }
}

TEST_CASE("topk_average: insertion-order permutation does not change the "
          "output") {
  const EmbeddingLibrary lib = random_library(30, 8);
  EmbeddingLibrary shuffled = lib;
  Rng rng(3);
  for (std::size_t i = shuffled.entries.size(); i > 1; --i)
    std::swap(shuffled.entries[i - 1], shuffled.entries[rng.uniform_int(i)]);

  const Embedding q = random_unit(55);
  InferenceConfig cfg;
  cfg.k = 7;
  const Selection a = topk_average(q, lib, cfg);
  const Selection b = topk_average(q, shuffled, cfg);
  CHECK(a.neighbor_ids == b.neighbor_ids);
  CHECK(a.selected.v == b.selected.v);
}

TEST_CASE("topk_average: exact ties break toward ascending traj_id") {
  EmbeddingLibrary lib;
  lib.entries.push_back({unit2(0.0, 1.0), 3});
  lib.entries.push_back({unit2(1.0, 0.0), 7});
  lib.entries.push_back({unit2(1.0, 0.0), 5});  // same vector as id 7
  InferenceConfig cfg;
  cfg.k = 1;
  const Selection sel = topk_average(unit2(1.0, 0.0), lib, cfg);
  CHECK(sel.neighbor_ids[0] == 5);
}

TEST_CASE("topk_average: degenerate mean is rejected when renormalizing") {
  EmbeddingLibrary lib;
  lib.entries.push_back({unit2(1.0, 0.0), 0});
  lib.entries.push_back({unit2(-1.0, 0.0), 1});
  InferenceConfig cfg;
  cfg.k = 2;
  cfg.renormalize_average = true;
  CHECK_THROWS_AS(topk_average(unit2(0.0, 1.0), lib, cfg), DegenerateMean);
  cfg.renormalize_average = false;
  const Selection sel = topk_average(unit2(0.0, 1.0), lib, cfg);
  CHECK(sel.selected.v[0] == 0.0);

  CHECK_THROWS_AS(topk_average(unit2(1.0, 0.0), EmbeddingLibrary{}, cfg),
                  EmptyDataset);
}

TEST_CASE("topk_average_by_keys: ranks by keys but averages stored "
          "embeddings") {
  const EmbeddingLibrary lib = example_library();
  // Keys deliberately reverse the ranking: entry 1's key matches the query.
  const std::vector<std::vector<double>> keys = {{0.0, 1.0}, {1.0, 0.0},
                                                 {-1.0, 0.0}};
  InferenceConfig cfg;
  cfg.k = 1;
  const Selection sel = topk_average_by_keys({1.0, 0.0}, keys, lib, cfg);
  CHECK(sel.neighbor_ids[0] == 1);
  CHECK(sel.selected.v == lib.entries[1].embedding.v);

  CHECK_THROWS_AS(
      topk_average_by_keys({1.0, 0.0}, {{1.0, 0.0}}, lib, cfg),
      DimensionMismatch);
}

TEST_CASE("build_library: one entry per trajectory, unit norms, id-sorted") {
  const world::WorldLayout lay = world::make_layout(3, 0);
  std::vector<world::Trajectory> dataset;
  for (std::uint64_t i = 0; i < 40; ++i) {
    world::Trajectory t = world::gen_random_robot_trajectory(lay, i);
    t.id = 1000 + (39 - i);  // insertion order deliberately reversed
    dataset.push_back(std::move(t));
  }
  const nn::ParamVector params = nn::init_params(projection_spec(), 2);
  const EmbeddingLibrary lib = build_library(dataset, params);
  REQUIRE(lib.size() == 40);
  for (std::size_t i = 1; i < lib.size(); ++i)
    CHECK(lib.entries[i - 1].traj_id < lib.entries[i].traj_id);
  for (const auto& e : lib.entries) {
    double n2 = 0.0;
    for (double v : e.embedding.v) n2 += v * v;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(lib.encoder_fingerprint == params_fingerprint(params));

  // Single-trajectory dataset: the entry equals direct encoding.
  const EmbeddingLibrary one = build_library({dataset[0]}, params);
  REQUIRE(one.size() == 1);
  const Embedding direct = project(
      backbone(world::render_features(dataset[0], world::Domain::Robot)),
      params);
  CHECK(one.entries[0].embedding.v == direct.v);

  // Domain and emptiness guards.
  std::vector<world::Trajectory> wrong = {dataset[0]};
  wrong[0].domain = world::Domain::Demonstrator;
  CHECK_THROWS_AS(build_library(wrong, params), WrongDomain);
  CHECK_THROWS_AS(build_library({}, params), EmptyDataset);
}

TEST_CASE("library file: save/load round-trip within f32 precision") {
  const EmbeddingLibrary lib = random_library(25, 99);
  const std::string path = temp_path("lib_roundtrip.vipl");
  save_library(lib, path);
  const EmbeddingLibrary loaded = load_library(path);
  REQUIRE(loaded.size() == lib.size());
  CHECK(loaded.encoder_fingerprint == lib.encoder_fingerprint);
  for (std::size_t i = 0; i < lib.size(); ++i) {
    CHECK(loaded.entries[i].traj_id == lib.entries[i].traj_id);
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < kEmbeddingWidth; ++c) {
      d += loaded.entries[i].embedding.v[c] * lib.entries[i].embedding.v[c];
      na += loaded.entries[i].embedding.v[c] * loaded.entries[i].embedding.v[c];
      nb += lib.entries[i].embedding.v[c] * lib.entries[i].embedding.v[c];
    }
    CHECK(d / std::sqrt(na * nb) > 1.0 - 1e-6);
  }

  // Rebuild determinism: identical bytes.
  const std::string path2 = temp_path("lib_roundtrip2.vipl");
  save_library(lib, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  std::filesystem::remove(path2);

  // Truncation and garbage detection.
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  CHECK_THROWS_AS(load_library(path), CorruptFile);
  std::ofstream os(path, std::ios::binary);
  os << "JUNKJUNK";
  os.close();
  CHECK_THROWS_AS(load_library(path), CorruptFile);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_library(path), IoError);
}

TEST_CASE("library file: empty library round-trips") {
  EmbeddingLibrary lib;
  lib.encoder_fingerprint =
      params_fingerprint(nn::init_params(projection_spec(), 77));
  const std::string path = temp_path("lib_empty.vipl");
  save_library(lib, path);
  const EmbeddingLibrary loaded = load_library(path);
  CHECK(loaded.size() == 0);
  CHECK(loaded.encoder_fingerprint == lib.encoder_fingerprint);
  std::filesystem::remove(path);
}

TEST_CASE("library_fingerprint: sensitive to entries and encoder identity") {
  const EmbeddingLibrary lib = random_library(10, 1);
  EmbeddingLibrary other = lib;
  CHECK(library_fingerprint(lib) == library_fingerprint(other));
  other.entries[3].traj_id += 1;
  CHECK(library_fingerprint(lib) != library_fingerprint(other));
  other = lib;
  other.encoder_fingerprint[0] ^= 0xff;
  CHECK(library_fingerprint(lib) != library_fingerprint(other));
}
