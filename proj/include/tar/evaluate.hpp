#pragma once

#include <string>
#include <vector>

#include "tar/config.hpp"
#include "tar/data_synth.hpp"
#include "tar/metrics.hpp"
#include "tar/model.hpp"

namespace tar {

// Correspondences from fine matches (optical -> SAR).
std::vector<Correspondence> to_correspondences(const std::vector<FineMatch>& matches);

// Match, estimate the affine, and score it on the check grid. Fewer than 3
// matches or a failed estimate count as +inf.
PairResult evaluate_pair(const Model& model, const PairSample& pair, const EvalConfig& cfg);

// Pairs are processed by up to `threads` workers; the report is independent
// of the thread count.
EvalReport evaluate(const Model& model, const std::vector<PairSample>& pairs,
                    const EvalConfig& cfg, Precision precision, std::size_t threads = 1);

// "xo,yo,xs,ys,conf,weight" with 6 decimals.
std::string match_csv(const std::vector<FineMatch>& matches);

}  // namespace tar
