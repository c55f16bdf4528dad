#pragma once

#include <string>

#include "tar/config.hpp"
#include "tar/params.hpp"

namespace tar {

struct FeaturePyramid {
  Tensor fine;    // [d_f x H/2 x W/2]
  Tensor coarse;  // [d_c x H/8 x W/8]
};

// Stem conv (stride 2), two residual conv blocks (stride 2 each) and a
// lateral 1x1 merge of the stride-2 and stride-4 stages for the fine map.
void init_backbone(ParamStore& params, const std::string& prefix, const ModelConfig& cfg,
                   Rng& rng);

// image: [1 x H x W], H and W divisible by 8 (GeometryError otherwise).
FeaturePyramid extract(const Tensor& image, const ParamStore& params, const std::string& prefix);

}  // namespace tar
