#pragma once

#include <map>
#include <string>

#include "tensor.hpp"

namespace dveslt {

// Self-describing binary container: format version, then name -> shape ->
// raw little-endian float64 entries. Round-trips bit-exactly.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

} // namespace dveslt
