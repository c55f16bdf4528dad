#include "tar/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <limits>
#include <thread>

#include "tar/errors.hpp"
#include "tar/estimate.hpp"

namespace tar {

std::vector<Correspondence> to_correspondences(const std::vector<FineMatch>& matches) {
  std::vector<Correspondence> c;
  c.reserve(matches.size());
  for (const auto& m : matches) c.push_back({m.optical, m.sar});
  return c;
}

PairResult evaluate_pair(const Model& model, const PairSample& pair, const EvalConfig& cfg) {
  PairResult r;
  r.id = pair.id;
  const MatchResult m = model.match(pair.optical, pair.sar);
  r.n_matches = m.fine.size();
  r.rmse = std::numeric_limits<double>::infinity();
  if (m.fine.size() < 3) return r;
  const auto corr = to_correspondences(m.fine);
  RansacConfig rc;
  rc.iterations = cfg.ransac_iters;
  rc.inlier_radius = cfg.ransac_radius;
  rc.seed = cfg.ransac_seed;
  try {
    const AffineTransform est = estimate_affine(corr, cfg.estimator, rc);
    r.rmse = grid_rmse(est, pair.gt, pair.optical.width, pair.optical.height);
  } catch (const EstimationError&) {
  }
  return r;
}

EvalReport evaluate(const Model& model, const std::vector<PairSample>& pairs,
                    const EvalConfig& cfg, Precision precision, std::size_t threads) {
  std::vector<PairResult> results(pairs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    PrecisionScope scope(precision);
    for (std::size_t k; (k = next.fetch_add(1)) < pairs.size();) {
      if (failed) return;
      try {
        results[k] = evaluate_pair(model, pairs[k], cfg);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, pairs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return summarize(std::move(results));
}

std::string match_csv(const std::vector<FineMatch>& matches) {
  std::string out = "xo,yo,xs,ys,conf,weight\n";
  char buf[160];
  for (const auto& m : matches) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.optical.x, m.optical.y,
                  m.sar.x, m.sar.y, m.confidence, m.weight);
    out += buf;
  }
  return out;
}

}  // namespace tar
