#pragma once

#include "cfaa/matrix.hpp"

#include <cstdint>
#include <vector>

namespace cfaa::eval {

/// One held-out positive with its sampled negative candidates and scores.
struct RankedCase {
    nd::Index user = 0;
    nd::Index positive_item = 0;
    std::vector<nd::Index> candidates;  // contains the positive exactly once
    std::vector<double> scores;         // aligned with candidates
};

struct RankMetrics {
    double hit_rate = 0.0;
    double recall = 0.0;
    double ndcg = 0.0;
};

/// Top-k ranking metrics averaged over users. Per user: hit rate is 1 if
/// any of the user's positives ranks inside the top k of its case, recall
/// is the fraction of the user's positives that do, and NDCG uses the
/// 1/log2(rank+1) gain of the single positive. Score ties break by item
/// index.
RankMetrics rank_metrics(const std::vector<RankedCase>& cases, int k = 10);

struct DiscrepancyReport {
    double accuracy = 0.0;  // held-out probe accuracy
    double epsilon = 0.0;   // held-out error rate
    double d_a = 0.0;       // 2 * (1 - 2 * epsilon)
};

/// Proxy A-distance between two embedding populations: a logistic probe
/// trained under k-fold cross-validation with classes balanced by
/// subsampling the larger side. Rows are samples.
DiscrepancyReport proxy_a_distance(const Eigen::MatrixXd& side_a,
                                   const Eigen::MatrixXd& side_b, int folds = 5,
                                   std::uint64_t seed = 0);

} // namespace cfaa::eval
