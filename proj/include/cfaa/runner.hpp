#pragma once

#include "cfaa/config.hpp"
#include "cfaa/data.hpp"
#include "cfaa/eval.hpp"
#include "cfaa/model.hpp"

#include <memory>
#include <string>
#include <vector>

namespace cfaa::runner {

// Experiment assembly shared by the command-line tool and the acceptance
// suite: datasets, bound review features, model construction, training,
// ranking evaluation, and alignment diagnostics.

struct Prepared {
    data::RatingDataset source;
    data::RatingDataset target;
    data::ReviewFeatures source_user_reviews;
    data::ReviewFeatures source_item_reviews;
    data::ReviewFeatures target_user_reviews;
    data::ReviewFeatures target_item_reviews;
    data::DatasetView source_view;  // points into the datasets above
    data::DatasetView target_view;

    Prepared() = default;
    Prepared(const Prepared&) = delete;
    Prepared& operator=(const Prepared&) = delete;
};

/// Load ratings and review features per the config, thin the target,
/// and split both domains.
std::unique_ptr<Prepared> prepare_from_files(const config::RunConfig& cfg);

/// Same pipeline for generated data (used by the synthetic benchmark).
std::unique_ptr<Prepared> prepare_from_synthetic(data::SyntheticData&& syn,
                                                 const config::RunConfig& cfg);

model::LossWeights weights_for_arm(const std::string& arm, double lambda_vertical,
                                   double lambda_horizontal);
model::AlignConfig align_from_config(const config::RunConfig& cfg);
model::ModelDims dims_from(const Prepared& prep, const config::RunConfig& cfg);

struct TrainResult {
    model::ModelParams params;
    model::AdamState adam;
    std::vector<model::LossReport> step_log;
    nd::Index effective_batch = 0;
    long steps_per_epoch = 0;
};

TrainResult train_model(const Prepared& prep, const config::RunConfig& cfg);

Eigen::MatrixXd embed_all_users(const Prepared& prep, const model::ModelParams& params,
                                data::Domain domain);
Eigen::MatrixXd embed_all_items(const Prepared& prep, const model::ModelParams& params,
                                data::Domain domain);

/// One case per held-out target positive: the positive plus seeded
/// unobserved negatives, scored by the model.
std::vector<eval::RankedCase> build_eval_cases(const Prepared& prep,
                                               const model::ModelParams& params,
                                               const config::RunConfig& cfg);

struct Diagnostics {
    double vertical = 0.0;
    double horizontal = 0.0;
    eval::DiscrepancyReport user_probe;
    eval::DiscrepancyReport item_probe;
};

/// Alignment losses on the step-0 training batches plus domain probes on
/// the full entity populations.
Diagnostics align_diagnostics(const Prepared& prep, const model::ModelParams& params,
                              const config::RunConfig& cfg);

/// Checkpoint snapshot as the base config with the caller's explicit keys
/// applied on top.
config::RunConfig merge_with_checkpoint(const config::RunConfig& user,
                                        const std::string& snapshot_text);

// Command entry points; outputs go under the configured out_dir and every
// command writes its fully resolved config next to them.
void run_synth_data(const config::RunConfig& cfg);
void run_featurize(const config::RunConfig& cfg);
void run_train(const config::RunConfig& cfg);
void run_evaluate(const config::RunConfig& cfg);
void run_align_diagnostics(const config::RunConfig& cfg);

} // namespace cfaa::runner
