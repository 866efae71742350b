#pragma once

// Metrics CSV and line-delimited episode logs. Every artifact opens with the
// config hash, the seed and the format version.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "iatrpo/rollout.hpp"
#include "iatrpo/trainer.hpp"

namespace iatrpo {

inline constexpr int kRecordFormatVersion = 1;

struct ArtifactStamp {
  std::string config_hash;
  std::uint64_t seed = 0;
};

// "# config_hash=... seed=... format_version=1" then a fixed header row.
void emit_metrics(const std::vector<IterationMetrics>& rows, const ArtifactStamp& stamp,
                  std::ostream& out);

extern const char* const kMetricsColumns;

// One JSON header record, then one record per recorded step.
void log_episode(const EpisodeTrace& trace, const ArtifactStamp& stamp, std::ostream& out);

// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

}  // namespace iatrpo
