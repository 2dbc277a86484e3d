#pragma once

#define APR_VERSION_MAJOR 0
#define APR_VERSION_MINOR 1
#define APR_VERSION_PATCH 0

namespace apr {

inline constexpr const char* version_string = "0.1.0";

// Schema version stamped into packed-sequence files and trace records.
// Bump when the on-disk layout changes incompatibly.
inline constexpr int packed_sequence_schema_version = 1;

}  // namespace apr
