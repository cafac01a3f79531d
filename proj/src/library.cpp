#include "vip/library.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vip/errors.hpp"

namespace vip::library {

const Entry* EmbeddingLibrary::find(std::uint64_t traj_id) const {
  for (const auto& e : entries)
    if (e.traj_id == traj_id) return &e;
  return nullptr;
}

std::size_t InferenceConfig::resolved_k(std::size_t library_size) const {
  std::size_t resolved;
  if (k > 0) {
    resolved = k;
  } else {
    resolved = static_cast<std::size_t>(
        std::llround(k_fraction * static_cast<double>(library_size)));
    resolved = std::max<std::size_t>(resolved, 1);
  }
  if (resolved > library_size)
    throw KTooLarge("k = " + std::to_string(resolved) + " > library size " +
                    std::to_string(library_size));
  return resolved;
}

EmbeddingLibrary build_library(const std::vector<world::Trajectory>& robot_dataset,
                               const nn::ParamVector& encoder_params) {
  if (robot_dataset.empty()) throw EmptyDataset("no robot trajectories");
  EmbeddingLibrary lib;
  lib.encoder_fingerprint = encoder::params_fingerprint(encoder_params);
  lib.entries.reserve(robot_dataset.size());
  for (const auto& traj : robot_dataset) {
    if (traj.domain != world::Domain::Robot)
      throw WrongDomain("build_library expects robot-domain trajectories");
    lib.entries.push_back(
        {encoder::project(
             encoder::backbone(world::render_features(traj, world::Domain::Robot)),
             encoder_params),
         traj.id});
  }
  std::sort(lib.entries.begin(), lib.entries.end(),
            [](const Entry& a, const Entry& b) { return a.traj_id < b.traj_id; });
  return lib;
}

namespace {

Selection select_topk(const std::vector<double>& sims,
                      const EmbeddingLibrary& library,
                      const InferenceConfig& config) {
  const std::size_t k = config.resolved_k(library.size());
  std::vector<std::size_t> order(library.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&sims, &library](std::size_t a, std::size_t b) {
              if (sims[a] != sims[b]) return sims[a] > sims[b];
              return library.entries[a].traj_id < library.entries[b].traj_id;
            });
  order.resize(k);
  // Accumulate in ascending-id order so the mean is insertion-order invariant.
  std::sort(order.begin(), order.end(),
            [&library](std::size_t a, std::size_t b) {
              return library.entries[a].traj_id < library.entries[b].traj_id;
            });

  const std::size_t e = library.entries.front().embedding.v.size();
  Selection sel;
  sel.selected.v.assign(e, 0.0);
  sel.neighbor_ids.reserve(k);
  for (std::size_t idx : order) {
    const Entry& entry = library.entries[idx];
    sel.neighbor_ids.push_back(entry.traj_id);
    for (std::size_t c = 0; c < e; ++c)
      sel.selected.v[c] += entry.embedding.v[c];
  }
  for (auto& v : sel.selected.v) v /= static_cast<double>(k);

  if (config.renormalize_average) {
    double n2 = 0.0;
    for (double v : sel.selected.v) n2 += v * v;
    const double n = std::sqrt(n2);
    if (n < 1e-9) throw DegenerateMean("mean embedding norm " + std::to_string(n));
    for (auto& v : sel.selected.v) v /= n;
  }
  return sel;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Selection topk_average(const encoder::Embedding& query,
                       const EmbeddingLibrary& library,
                       const InferenceConfig& config) {
  if (library.entries.empty()) throw EmptyDataset("empty library");
  std::vector<double> sims(library.size());
  for (std::size_t i = 0; i < library.size(); ++i)
    sims[i] = dot(query.v, library.entries[i].embedding.v);
  return select_topk(sims, library, config);
}

Selection topk_average_by_keys(const std::vector<double>& query_key,
                               const std::vector<std::vector<double>>& keys,
                               const EmbeddingLibrary& library,
                               const InferenceConfig& config) {
  if (keys.size() != library.size())
    throw DimensionMismatch("one retrieval key per library entry required");
  std::vector<double> sims(library.size());
  for (std::size_t i = 0; i < library.size(); ++i)
    sims[i] = dot(query_key, keys[i]);
  return select_topk(sims, library, config);
}

Fingerprint library_fingerprint(const EmbeddingLibrary& library) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(library.size() * (8 + encoder::kEmbeddingWidth * 4) + 32);
  bytes.insert(bytes.end(), library.encoder_fingerprint.begin(),
               library.encoder_fingerprint.end());
  for (const auto& entry : library.entries) {
    for (int i = 0; i < 8; ++i)
      bytes.push_back(static_cast<std::uint8_t>(entry.traj_id >> (8 * i)));
    for (double v : entry.embedding.v) {
      const auto f = static_cast<float>(v);
      std::uint8_t buf[sizeof(float)];
      std::memcpy(buf, &f, sizeof(float));
      bytes.insert(bytes.end(), buf, buf + sizeof(float));
    }
  }
  return fingerprint_bytes(bytes);
}

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw CorruptFile("unexpected end of file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

constexpr std::uint16_t kLibraryFormatVersion = 1;

}  // namespace

void save_library(const EmbeddingLibrary& library, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("VIPL", 4);
  write_le<std::uint16_t>(os, kLibraryFormatVersion);
  write_le<std::uint32_t>(os, encoder::kEmbeddingWidth);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(library.size()));
  os.write(reinterpret_cast<const char*>(library.encoder_fingerprint.data()),
           static_cast<std::streamsize>(library.encoder_fingerprint.size()));
  for (const auto& entry : library.entries) {
    write_le<std::uint64_t>(os, entry.traj_id);
    for (double v : entry.embedding.v)
      write_le<float>(os, static_cast<float>(v));
  }
  if (!os) throw IoError("write failed for " + path);
}

EmbeddingLibrary load_library(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VIPL", 4) != 0)
    throw CorruptFile(path + ": bad magic");
  const auto version = read_le<std::uint16_t>(is);
  if (version != kLibraryFormatVersion)
    throw VersionMismatch(path + ": version " + std::to_string(version));
  const auto e = read_le<std::uint32_t>(is);
  const auto count = read_le<std::uint32_t>(is);
  EmbeddingLibrary lib;
  is.read(reinterpret_cast<char*>(lib.encoder_fingerprint.data()),
          static_cast<std::streamsize>(lib.encoder_fingerprint.size()));
  if (!is) throw CorruptFile(path + ": truncated fingerprint");
  lib.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry entry;
    entry.traj_id = read_le<std::uint64_t>(is);
    entry.embedding.v.resize(e);
    for (std::uint32_t c = 0; c < e; ++c)
      entry.embedding.v[c] = static_cast<double>(read_le<float>(is));
    lib.entries.push_back(std::move(entry));
  }
  return lib;
}

}  // namespace vip::library
