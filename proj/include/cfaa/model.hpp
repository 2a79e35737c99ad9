#pragma once

#include "cfaa/autodiff.hpp"
#include "cfaa/data.hpp"
#include "cfaa/matrix.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cfaa::model {

// Rating prediction towers plus the combined training objective. Each of
// the four towers (source/target x user/item) fuses an ID lookup, a
// history-encoder affine layer, and a fixed review vector through two
// affine layers with a tanh in between. A single head shared across
// domains maps concatenated user/item embeddings to a probability.

struct ModelDims {
    nd::Index embed_dim = 16;     // D, shared output width of all towers
    nd::Index id_dim = 16;
    nd::Index hist_dim = 16;
    nd::Index review_dim = 16;    // must match the bound review features
    nd::Index fusion_hidden = 16;
    nd::Index head_hidden = 16;
    nd::Index source_users = 0;
    nd::Index source_items = 0;
    nd::Index target_users = 0;
    nd::Index target_items = 0;
};

// Parameters are persistent leaf nodes; every training step builds a fresh
// graph around them and the optimizer updates their values in place.
struct TowerParams {
    nd::Var id_table;     // entity count x id_dim
    nd::Var hist_weight;  // opposite entity count x hist_dim
    nd::Var hist_bias;    // 1 x hist_dim
    nd::Var fusion_w1;    // (id+hist+review) x hidden
    nd::Var fusion_b1;
    nd::Var fusion_w2;    // hidden x D
    nd::Var fusion_b2;
};

struct PredictorParams {
    nd::Var w1;  // 2D x hidden
    nd::Var b1;
    nd::Var w2;  // hidden x 1
    nd::Var b2;
};

struct ModelParams {
    ModelDims dims;
    TowerParams source_user;
    TowerParams source_item;
    TowerParams target_user;
    TowerParams target_item;
    PredictorParams head;
    std::vector<std::pair<std::string, nd::Var>> named;  // fixed order
};

/// Xavier-uniform weights, zero biases, seeded draw in `named` order.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

struct LossWeights {
    double vertical = 0.5;    // weight of the transport alignment loss
    double horizontal = 0.8;  // weight of the graph alignment loss
};

struct AlignConfig {
    double alpha = 0.1;          // typical-selection entropy strength
    nd::Index proxy_count = 0;   // K; 0 selects batch/2
    double nu = 0.1;             // self-expression regularization
    double epsilon = 0.0;        // sinkhorn regularization; 0 = per-call default
    double select_tol = 1e-6;
    int select_max_iter = 50;
    double sinkhorn_tol = 1e-6;
    int sinkhorn_max_iter = 200;
    double se_delta = 1e-6;
    double se_tol = 1e-6;
    int se_max_iter = 30;
    double pinv_tol = 1e-8;
};

struct LossReport {
    double rating = 0.0;      // cross-entropy term
    double vertical = 0.0;    // transport alignment term
    double horizontal = 0.0;  // graph alignment term
    double total = 0.0;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<Eigen::MatrixXd> m;  // aligned with ModelParams::named
    std::vector<Eigen::MatrixXd> v;
};

AdamState init_adam(const ModelParams& params, double lr = 1e-3, double beta1 = 0.9,
                    double beta2 = 0.999, double eps = 1e-8);

/// One Adam update from the gradients of the last backward pass.
void adam_step(ModelParams& params, AdamState& adam);

// ---- graph builders ----------------------------------------------------

/// Tower embedding for a batch described by index lists.
nd::Var embed_graph(const TowerParams& tower, const std::vector<nd::Index>& ids,
                    std::shared_ptr<const std::vector<std::vector<nd::Index>>> histories,
                    const Eigen::MatrixXd& reviews);

/// Shared prediction head on concatenated embeddings; output in (0, 1).
nd::Var predict_graph(const PredictorParams& head, const nd::Var& users, const nd::Var& items);

/// Cross-entropy: full source term plus the positive-only target term.
nd::Var rating_loss_graph(const nd::Var& pred_src, const Eigen::VectorXd& truth_src,
                          const nd::Var& pred_tgt);

struct LossGraph {
    nd::Var total;
    nd::Var rating;
    nd::Var vertical;    // null when the arm omits the term
    nd::Var horizontal;  // null when the arm omits the term
    nd::Var source_users;
    nd::Var source_items;
    nd::Var target_users;
    nd::Var target_items;
};

LossGraph build_loss_graph(const ModelParams& params, const LossWeights& weights,
                           const AlignConfig& align, const data::Batch& source,
                           const data::Batch& target);

// ---- value-level operations ---------------------------------------------

/// Embedding of explicit batch data; multi-hot history rows are matched
/// against the tower's opposite-entity count.
nd::Matrix embed_entities(const std::vector<nd::Index>& ids, const nd::Matrix& histories,
                          const nd::Matrix& reviews, const TowerParams& tower);

nd::Matrix predict_ratings(const nd::Matrix& users, const nd::Matrix& items,
                           const PredictorParams& head);

double rating_loss(const Eigen::VectorXd& pred_src, const Eigen::VectorXd& truth_src,
                   const Eigen::VectorXd& pred_tgt);

double total_loss(double rating, double vertical, double horizontal, const LossWeights& w);

/// One forward/backward/Adam update. Throws (leaving parameters untouched)
/// if the loss or a gradient is non-finite; the report carries the loss
/// components.
LossReport train_step(ModelParams& params, AdamState& adam, const LossWeights& weights,
                      const AlignConfig& align, const data::Batch& source,
                      const data::Batch& target);

// ---- checkpoint container -------------------------------------------------

struct Checkpoint {
    std::string config_text;
    std::vector<std::pair<std::string, nd::Matrix>> values;
    bool has_adam = false;
    long adam_step_count = 0;
    double adam_lr = 0.0, adam_beta1 = 0.0, adam_beta2 = 0.0, adam_eps = 0.0;
    std::vector<Eigen::MatrixXd> adam_m;
    std::vector<Eigen::MatrixXd> adam_v;
};

/// Versioned binary container, magic "CFAA".
void save_checkpoint(const ModelParams& params, const AdamState* adam,
                     const std::string& config_text, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Copy checkpoint values (and Adam state when present) into live
/// parameters; names and shapes must match.
void restore_checkpoint(const Checkpoint& ck, ModelParams& params, AdamState* adam);

} // namespace cfaa::model
