#pragma once

#include <string>
#include <string_view>

#include "tar/model.hpp"

namespace tar {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// TARCKPT1: parameters in registration order, then "text.embeddings" when a
// library is attached, then the model configuration as "config.<key>"
// one-element tensors.
std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace tar
