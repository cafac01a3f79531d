// Library of robot embeddings with exact brute-force top-k cosine retrieval
// and averaging: the human-to-robot embedding translation step.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vip/encoder.hpp"
#include "vip/hash.hpp"
#include "vip/world.hpp"

namespace vip::library {

struct Entry {
  encoder::Embedding embedding;
  std::uint64_t traj_id;
};

struct EmbeddingLibrary {
  std::vector<Entry> entries;  // insertion order = ascending traj_id
  Fingerprint encoder_fingerprint{};

  std::size_t size() const { return entries.size(); }
  const Entry* find(std::uint64_t traj_id) const;
};

struct InferenceConfig {
  // Explicit k wins when positive; otherwise k_fraction is resolved as
  // max(1, round(fraction * |library|)).
  std::size_t k = 0;
  double k_fraction = 0.01;
  bool renormalize_average = true;

  std::size_t resolved_k(std::size_t library_size) const;
};

// One entry per trajectory: project(backbone(render_features(traj, Robot))).
EmbeddingLibrary build_library(const std::vector<world::Trajectory>& robot_dataset,
                               const nn::ParamVector& encoder_params);

struct Selection {
  encoder::Embedding selected;
  std::vector<std::uint64_t> neighbor_ids;
};

// Exact top-k by cosine similarity, ties broken by ascending traj_id, then
// the arithmetic mean of the selected embeddings (re-normalized when
// configured).
Selection topk_average(const encoder::Embedding& query,
                       const EmbeddingLibrary& library,
                       const InferenceConfig& config);

// Generic variant used by the repr-space retrieval baseline: ranks by
// similarity against `keys` (one unit vector per entry, same order) but
// still averages the stored embeddings.
Selection topk_average_by_keys(const std::vector<double>& query_key,
                               const std::vector<std::vector<double>>& keys,
                               const EmbeddingLibrary& library,
                               const InferenceConfig& config);

// Content identity over entries + encoder fingerprint; chains the policy
// checkpoint to the library it was trained against.
Fingerprint library_fingerprint(const EmbeddingLibrary& library);

// Binary format: magic "VIPL", version u16, E u32, entry count u32,
// fingerprint 32 bytes, then per entry traj_id u64 + E LE f32 values.
void save_library(const EmbeddingLibrary& library, const std::string& path);
EmbeddingLibrary load_library(const std::string& path);

}  // namespace vip::library
