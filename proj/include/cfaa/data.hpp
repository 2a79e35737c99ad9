#pragma once

#include "cfaa/matrix.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace cfaa::data {

using EntityId = std::string;

enum class Domain : std::uint8_t { Source, Target };
enum class Split : std::uint8_t { Train, Valid, Test };

struct Interaction {
    nd::Index user = 0;
    nd::Index item = 0;
    int label = 0;  // binarized rating
    Split split = Split::Train;
};

struct RatingDataset {
    Domain domain = Domain::Source;
    std::vector<EntityId> user_ids;
    std::vector<EntityId> item_ids;
    std::unordered_map<EntityId, nd::Index> user_index;
    std::unordered_map<EntityId, nd::Index> item_index;
    std::vector<Interaction> interactions;
    std::vector<std::string> user_review_text;  // per user, all review text
    std::vector<std::string> item_review_text;

    nd::Index user_count() const { return static_cast<nd::Index>(user_ids.size()); }
    nd::Index item_count() const { return static_cast<nd::Index>(item_ids.size()); }

    /// Indices into `interactions` used for training batches. The target
    /// domain trains on positives only.
    std::vector<std::size_t> train_stream() const;
};

/// Tab-separated `user<TAB>item<TAB>rating[<TAB>review]` with `#` comments.
/// Ratings at or above `threshold` become label 1. For the source domain,
/// users and items with fewer than `min_records` interactions are removed
/// iteratively until stable.
RatingDataset load_ratings(const std::string& path, Domain domain, double threshold = 4.0,
                           int min_records = 30);

/// Uniform random split by the given ratios; partitions are disjoint and
/// exhaustive. Requires at least 10 interactions.
void split_dataset(RatingDataset& ds, std::array<int, 3> ratios, std::uint64_t seed);

/// Keep a uniformly random fraction of interactions (target sparsification).
void drop_interactions(RatingDataset& ds, double keep_fraction, std::uint64_t seed);

/// Write interactions back to the ratings format (positive -> 5, negative
/// -> 1, no review text).
void write_ratings_tsv(const RatingDataset& ds, const std::string& path);

// ---- review features ---------------------------------------------------

struct ReviewFeatures {
    nd::Index dim = 0;
    std::map<EntityId, Eigen::VectorXd> vectors;  // ordered for stable IO
};

/// Deterministic hashed featurizer: sentences split on terminal
/// punctuation, unigrams signed-hashed into d_rev buckets, TF-IDF weighted
/// (document frequency counted over sentences), L2-normalized per sentence,
/// averaged per entity. Entities without text map to the zero vector.
ReviewFeatures featurize_reviews(const std::vector<std::pair<EntityId, std::string>>& docs,
                                 nd::Index d_rev, std::uint64_t seed);

/// Binary container: magic "CFAE", u32 version, u32 count, u32 dim, then
/// per record u32 id length, id bytes, dim little-endian f32 values.
void save_review_embeddings(const ReviewFeatures& features, const std::string& path);
ReviewFeatures load_review_embeddings(const std::string& path);

/// Dense per-entity matrix in id order. Feature ids that are not dataset
/// entities raise an error listing them; entities without features get
/// zero rows.
Eigen::MatrixXd bind_features(const ReviewFeatures& features,
                              const std::vector<EntityId>& ids);

// ---- synthetic two-domain benchmark -------------------------------------

struct SyntheticSpec {
    nd::Index users_per_domain = 2000;
    nd::Index items_per_domain = 500;
    nd::Index latent_dim = 16;
    double rotation_angle = 0.0;  // [0, pi], applied to target latents
    double translation = 0.0;     // along the normalized all-ones direction
    double positivity_threshold = 0.55;
    double sparsity = 0.02;  // observed fraction of the user-item grid
    double review_noise = 0.1;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    RatingDataset source;
    RatingDataset target;
    ReviewFeatures source_user_reviews;
    ReviewFeatures source_item_reviews;
    ReviewFeatures target_user_reviews;
    ReviewFeatures target_item_reviews;
    Eigen::MatrixXd source_user_latents;
    Eigen::MatrixXd source_item_latents;
    Eigen::MatrixXd target_user_latents;  // after rotation and translation
    Eigen::MatrixXd target_item_latents;
};

/// Latents are drawn per domain, labels thresholded on squashed inner
/// products, then target latents are rotated and translated before the
/// review vectors (noisy latent copies) are emitted.
SyntheticData gen_synthetic(const SyntheticSpec& spec);

// ---- batching ------------------------------------------------------------

/// Dataset plus bound review features and precomputed training-history
/// adjacency (train-split positives only).
struct DatasetView {
    const RatingDataset* ds = nullptr;
    Eigen::MatrixXd user_reviews;  // user_count x d_rev
    Eigen::MatrixXd item_reviews;
    std::vector<std::vector<nd::Index>> user_hist;  // item indices per user
    std::vector<std::vector<nd::Index>> item_hist;  // user indices per item
    std::vector<std::size_t> train_stream;
};

DatasetView make_view(const RatingDataset& ds, const ReviewFeatures& user_features,
                      const ReviewFeatures& item_features);

struct Batch {
    std::vector<nd::Index> users;
    std::vector<nd::Index> items;
    Eigen::VectorXd labels;
    std::shared_ptr<const std::vector<std::vector<nd::Index>>> user_histories;
    std::shared_ptr<const std::vector<std::vector<nd::Index>>> item_histories;
    Eigen::MatrixXd user_reviews;  // batch x d_rev
    Eigen::MatrixXd item_reviews;
};

/// Uniform without replacement within an epoch; a pure function of
/// (view, batch_size, seed, step).
Batch sample_batch(const DatasetView& view, nd::Index batch_size, std::uint64_t seed,
                   long step);

/// Items each user has interacted with in any split (candidate exclusion).
std::vector<std::vector<nd::Index>> observed_items_per_user(const RatingDataset& ds);

} // namespace cfaa::data
