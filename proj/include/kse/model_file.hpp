#pragma once

// Binary model format, little-endian throughout:
//   "EKSM", u32 version
//   u64 length + run config JSON
//   features: u64 frame_len, u64 hop, u32 window, u64 context, f64 sample_rate
//   u32 mask kind
//   standardizer: u64 dim, f64 mean[dim], f64 scale[dim]
//   partition: u64 channels, u64 b, (u64 start, u64 end)[b]
//   supports: u64 count, then per matrix u64 rows, u64 cols, f64 data (column-major)
//   per subband: f64 gamma, f64 sigma, u64 support index,
//                tune result (f64 gamma_opt, f64 sigma_opt, evaluations, candidates),
//                u64 rows, u64 cols, f64 alpha (column-major)
//   u64 FNV-1a hash of every preceding byte

#include <cstdint>
#include <string>

#include "kse/config.hpp"
#include "kse/subband.hpp"

namespace kse {

inline constexpr std::uint32_t kModelVersion = 1;

struct ModelFile {
  RunConfig config;
  FeatureParams features;
  MaskKind mask = MaskKind::irm;
  Standardizer standardizer;
  SubbandModel model;
};

std::uint64_t fnv1a(const std::string& bytes);

std::string serialize(const ModelFile& m);
/// Throws DataError on a bad magic, version, checksum or layout.
ModelFile deserialize(const std::string& bytes);

void save_model(const std::string& path, const ModelFile& m);
ModelFile load_model(const std::string& path);

}  // namespace kse
