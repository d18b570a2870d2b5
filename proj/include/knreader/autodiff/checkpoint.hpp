#pragma once

#include <iosfwd>
#include <string>

#include "knreader/autodiff/parameters.hpp"

namespace knreader::autodiff {

// Binary checkpoint, little-endian:
//   "KNRCKPT\0" | u32 version | u32 bytes-per-value | u32 count |
//   count x { u32 name-length | name | u64 rows | u64 cols | u8 trainable | values }
// Values are stored in the set's own precision, so a round trip is exact.
inline constexpr unsigned kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ParameterSet<T>& params, std::ostream& out);
template <typename T>
void save_checkpoint(const ParameterSet<T>& params, const std::string& path);

template <typename T>
ParameterSet<T> load_checkpoint(std::istream& in);
template <typename T>
ParameterSet<T> load_checkpoint(const std::string& path);

}  // namespace knreader::autodiff
