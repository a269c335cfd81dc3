#pragma once

#include "sfs/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace sfs {

#ifdef SFS_VERSION
inline constexpr const char* kVersion = SFS_VERSION;
#else
inline constexpr const char* kVersion = "0.0.0";
#endif

/// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

struct SampleHeader {
  std::string version = kVersion;
  std::uint64_t seed = 0;
  std::string target;
};

/// CSV: `# sf-sampler v<semver> seed=<s> target=<name>`, then `y1,...,yd`,
/// then one row per path.
void write_samples_csv(std::ostream& os, const RowMatrix& samples, const SampleHeader& header);
RowMatrix read_samples_csv(std::istream& is, SampleHeader* header = nullptr);

/// Binary: one JSON header line (rows, cols, dtype, byte order, provenance)
/// followed by rows*cols little-endian float64 values, row-major.
void write_samples_binary(std::ostream& os, const RowMatrix& samples, const SampleHeader& header);
RowMatrix read_samples_binary(std::istream& is, SampleHeader* header = nullptr);

}  // namespace sfs
