#include "cfaa/eval.hpp"

#include "cfaa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_set>

namespace cfaa::eval {

namespace {

// 1-based rank of the positive candidate; ties break toward the smaller
// item index.
int positive_rank(const RankedCase& c) {
    std::size_t pos_at = c.candidates.size();
    std::unordered_set<nd::Index> seen;
    for (std::size_t i = 0; i < c.candidates.size(); ++i) {
        if (!seen.insert(c.candidates[i]).second) {
            throw std::invalid_argument("rank_metrics: duplicate candidate item " +
                                        std::to_string(c.candidates[i]));
        }
        if (c.candidates[i] == c.positive_item) {
            pos_at = i;
        }
    }
    if (pos_at == c.candidates.size()) {
        throw std::invalid_argument("rank_metrics: positive item missing from candidates");
    }
    if (c.scores.size() != c.candidates.size()) {
        throw std::invalid_argument("rank_metrics: scores do not match candidates");
    }
    const double pos_score = c.scores[pos_at];
    int rank = 1;
    for (std::size_t i = 0; i < c.candidates.size(); ++i) {
        if (i == pos_at) {
            continue;
        }
        if (c.scores[i] > pos_score ||
            (c.scores[i] == pos_score && c.candidates[i] < c.positive_item)) {
            ++rank;
        }
    }
    return rank;
}

} // namespace

RankMetrics rank_metrics(const std::vector<RankedCase>& cases, int k) {
    if (k < 1) {
        throw std::invalid_argument("rank_metrics: k must be positive");
    }
    if (cases.empty()) {
        throw std::invalid_argument("rank_metrics: no cases");
    }
    struct UserAgg {
        int cases = 0;
        int hits = 0;
        double ndcg = 0.0;
    };
    std::map<nd::Index, UserAgg> users;
    for (const RankedCase& c : cases) {
        if (static_cast<int>(c.candidates.size()) < k) {
            throw std::invalid_argument("rank_metrics: case has fewer than k candidates");
        }
        const int rank = positive_rank(c);
        UserAgg& agg = users[c.user];
        ++agg.cases;
        if (rank <= k) {
            ++agg.hits;
            agg.ndcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        }
    }
    RankMetrics out;
    for (const auto& [user, agg] : users) {
        out.hit_rate += agg.hits > 0 ? 1.0 : 0.0;
        out.recall += static_cast<double>(agg.hits) / static_cast<double>(agg.cases);
        out.ndcg += agg.ndcg / static_cast<double>(agg.cases);
    }
    const double n_users = static_cast<double>(users.size());
    out.hit_rate /= n_users;
    out.recall /= n_users;
    out.ndcg /= n_users;
    return out;
}

namespace {

double sigmoid_stable(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

DiscrepancyReport proxy_a_distance(const Eigen::MatrixXd& side_a,
                                   const Eigen::MatrixXd& side_b, int folds,
                                   std::uint64_t seed) {
    if (side_a.rows() == 0 || side_b.rows() == 0) {
        throw std::invalid_argument("proxy_a_distance: empty side");
    }
    if (side_a.cols() != side_b.cols()) {
        throw std::invalid_argument("proxy_a_distance: embedding widths differ");
    }
    if (folds < 2) {
        throw std::invalid_argument("proxy_a_distance: need at least 2 folds");
    }
    const nd::Index n = std::min(side_a.rows(), side_b.rows());
    if (n < folds) {
        throw std::invalid_argument("proxy_a_distance: too few samples for the folds");
    }

    // balance classes by subsampling the larger side; the choice depends
    // only on the larger count, so swapping the arguments keeps it fixed
    auto subsample = [&](nd::Index from) {
        std::vector<nd::Index> idx(static_cast<std::size_t>(from));
        for (nd::Index i = 0; i < from; ++i) {
            idx[static_cast<std::size_t>(i)] = i;
        }
        if (from > n) {
            Rng rng(mix_seed(seed, 0xba1a));
            rng.shuffle(idx);
            idx.resize(static_cast<std::size_t>(n));
            std::sort(idx.begin(), idx.end());
        }
        return idx;
    };
    const std::vector<nd::Index> rows_a = subsample(side_a.rows());
    const std::vector<nd::Index> rows_b = subsample(side_b.rows());

    const nd::Index dim = side_a.cols();
    const int iters = 400;

    long test_total = 0;
    long test_errors = 0;
    for (int fold = 0; fold < folds; ++fold) {
        // fixed fold pattern by position within each side
        std::vector<std::pair<nd::Index, int>> train;  // (row-within-side, label)
        std::vector<std::pair<nd::Index, int>> test;
        for (std::size_t i = 0; i < rows_a.size(); ++i) {
            (static_cast<int>(i % static_cast<std::size_t>(folds)) == fold ? test : train)
                .emplace_back(rows_a[i], 0);
        }
        for (std::size_t i = 0; i < rows_b.size(); ++i) {
            (static_cast<int>(i % static_cast<std::size_t>(folds)) == fold ? test : train)
                .emplace_back(rows_b[i], 1);
        }
        auto feature_row = [&](const std::pair<nd::Index, int>& s) {
            return s.second == 0 ? side_a.row(s.first) : side_b.row(s.first);
        };

        Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
        for (const auto& s : train) {
            mean += feature_row(s).transpose();
        }
        mean /= static_cast<double>(train.size());
        Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
        for (const auto& s : train) {
            var += (feature_row(s).transpose() - mean).cwiseAbs2();
        }
        var /= static_cast<double>(train.size());
        Eigen::VectorXd inv_std = (var.array() + 1e-12).sqrt().inverse();

        // Lipschitz-safe step for the mean logistic loss
        double mean_sq_norm = 0.0;
        std::vector<Eigen::VectorXd> feats;
        feats.reserve(train.size());
        for (const auto& s : train) {
            Eigen::VectorXd x = (feature_row(s).transpose() - mean).cwiseProduct(inv_std);
            mean_sq_norm += x.squaredNorm();
            feats.push_back(std::move(x));
        }
        mean_sq_norm /= static_cast<double>(train.size());
        const double lr = 1.0 / (0.25 * (mean_sq_norm + 1.0) + 1e-12);

        Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
        double b = 0.0;
        for (int it = 0; it < iters; ++it) {
            Eigen::VectorXd gw = Eigen::VectorXd::Zero(dim);
            double gb = 0.0;
            for (std::size_t i = 0; i < train.size(); ++i) {
                const double z = w.dot(feats[i]) + b;
                // written so that flipping all labels negates the gradient
                // bitwise (sign-symmetric probe)
                const double s = train[i].second == 1 ? -sigmoid_stable(-z)
                                                      : sigmoid_stable(z);
                gw += s * feats[i];
                gb += s;
            }
            const double inv_n = 1.0 / static_cast<double>(train.size());
            w -= (lr * inv_n) * gw;
            b -= lr * inv_n * gb;
        }

        for (const auto& s : test) {
            Eigen::VectorXd x = (feature_row(s).transpose() - mean).cwiseProduct(inv_std);
            const double z = w.dot(x) + b;
            const int pred = z > 0.0 ? 1 : 0;
            ++test_total;
            if (pred != s.second) {
                ++test_errors;
            }
        }
    }

    DiscrepancyReport report;
    report.epsilon = static_cast<double>(test_errors) / static_cast<double>(test_total);
    report.accuracy = 1.0 - report.epsilon;
    report.d_a = 2.0 * (1.0 - 2.0 * report.epsilon);
    return report;
}

} // namespace cfaa::eval
