#include "cfaa/runner.hpp"

#include "cfaa/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace cfaa::runner {

namespace {

using nlohmann::json;

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out << content;
    if (!out) {
        throw std::runtime_error("write failed for " + path);
    }
}

std::string out_path(const config::RunConfig& cfg, const std::string& name) {
    std::filesystem::path dir(cfg.get_text("out_dir"));
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

data::ReviewFeatures features_for(const data::RatingDataset& ds, bool users,
                                  const std::string& path, nd::Index d_rev,
                                  std::uint64_t seed) {
    if (!path.empty()) {
        return data::load_review_embeddings(path);
    }
    std::vector<std::pair<data::EntityId, std::string>> docs;
    const auto& ids = users ? ds.user_ids : ds.item_ids;
    const auto& texts = users ? ds.user_review_text : ds.item_review_text;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        docs.emplace_back(ids[i], texts[i]);
    }
    return data::featurize_reviews(docs, d_rev, seed);
}

void finish_prepare(Prepared& prep, const config::RunConfig& cfg) {
    const std::uint64_t seed = cfg.seed();
    data::drop_interactions(prep.target, cfg.get_real("target_keep_fraction"),
                            mix_seed(seed, 0x7ced));
    data::split_dataset(prep.source, {8, 1, 1}, mix_seed(seed, 0x51a));
    data::split_dataset(prep.target, {8, 1, 1}, mix_seed(seed, 0x51b));

    const nd::Index dim = prep.source_user_reviews.dim;
    for (const data::ReviewFeatures* f :
         {&prep.source_item_reviews, &prep.target_user_reviews, &prep.target_item_reviews}) {
        if (f->dim != dim) {
            throw std::runtime_error("review feature widths differ across the four sides");
        }
    }
    const long cfg_dim = cfg.get_int("review_dim");
    if (cfg_dim > 0 && cfg_dim != dim) {
        throw std::runtime_error("config review_dim " + std::to_string(cfg_dim) +
                                 " does not match feature width " + std::to_string(dim));
    }
    prep.source_view = data::make_view(prep.source, prep.source_user_reviews,
                                       prep.source_item_reviews);
    prep.target_view = data::make_view(prep.target, prep.target_user_reviews,
                                       prep.target_item_reviews);
}

} // namespace

std::unique_ptr<Prepared> prepare_from_files(const config::RunConfig& cfg) {
    const std::string src_path = cfg.get_text("source_ratings");
    const std::string tgt_path = cfg.get_text("target_ratings");
    if (src_path.empty() || tgt_path.empty()) {
        throw std::runtime_error("source_ratings and target_ratings must be set");
    }
    auto prep = std::make_unique<Prepared>();
    prep->source = data::load_ratings(src_path, data::Domain::Source,
                                      cfg.get_real("rating_threshold"),
                                      static_cast<int>(cfg.get_int("min_records")));
    prep->target = data::load_ratings(tgt_path, data::Domain::Target,
                                      cfg.get_real("rating_threshold"),
                                      static_cast<int>(cfg.get_int("min_records")));
    const long cfg_dim = cfg.get_int("review_dim");
    const nd::Index d_rev = cfg_dim > 0 ? static_cast<nd::Index>(cfg_dim) : 16;
    const std::uint64_t seed = cfg.seed();
    prep->source_user_reviews = features_for(prep->source, true,
                                             cfg.get_text("source_user_reviews"), d_rev,
                                             mix_seed(seed, 0xf1));
    prep->source_item_reviews = features_for(prep->source, false,
                                             cfg.get_text("source_item_reviews"), d_rev,
                                             mix_seed(seed, 0xf2));
    prep->target_user_reviews = features_for(prep->target, true,
                                             cfg.get_text("target_user_reviews"), d_rev,
                                             mix_seed(seed, 0xf3));
    prep->target_item_reviews = features_for(prep->target, false,
                                             cfg.get_text("target_item_reviews"), d_rev,
                                             mix_seed(seed, 0xf4));
    finish_prepare(*prep, cfg);
    return prep;
}

std::unique_ptr<Prepared> prepare_from_synthetic(data::SyntheticData&& syn,
                                                 const config::RunConfig& cfg) {
    auto prep = std::make_unique<Prepared>();
    prep->source = std::move(syn.source);
    prep->target = std::move(syn.target);
    prep->source_user_reviews = std::move(syn.source_user_reviews);
    prep->source_item_reviews = std::move(syn.source_item_reviews);
    prep->target_user_reviews = std::move(syn.target_user_reviews);
    prep->target_item_reviews = std::move(syn.target_item_reviews);
    finish_prepare(*prep, cfg);
    return prep;
}

model::LossWeights weights_for_arm(const std::string& arm, double lambda_vertical,
                                   double lambda_horizontal) {
    model::LossWeights w;
    if (arm == "base") {
        w.vertical = 0.0;
        w.horizontal = 0.0;
    } else if (arm == "v") {
        w.vertical = lambda_vertical;
        w.horizontal = 0.0;
    } else if (arm == "h") {
        w.vertical = 0.0;
        w.horizontal = lambda_horizontal;
    } else if (arm == "full") {
        w.vertical = lambda_vertical;
        w.horizontal = lambda_horizontal;
    } else {
        throw std::invalid_argument("unknown ablation arm '" + arm + "'");
    }
    return w;
}

model::AlignConfig align_from_config(const config::RunConfig& cfg) {
    model::AlignConfig a;
    a.alpha = cfg.get_real("alpha");
    a.nu = cfg.get_real("nu");
    a.epsilon = cfg.get_real("epsilon");
    a.proxy_count = static_cast<nd::Index>(cfg.get_int("K"));
    return a;
}

model::ModelDims dims_from(const Prepared& prep, const config::RunConfig& cfg) {
    model::ModelDims d;
    d.embed_dim = static_cast<nd::Index>(cfg.get_int("embed_dim"));
    d.id_dim = static_cast<nd::Index>(cfg.get_int("id_dim"));
    d.hist_dim = static_cast<nd::Index>(cfg.get_int("hist_dim"));
    d.review_dim = prep.source_user_reviews.dim;
    d.fusion_hidden = static_cast<nd::Index>(cfg.get_int("fusion_hidden"));
    d.head_hidden = static_cast<nd::Index>(cfg.get_int("head_hidden"));
    d.source_users = prep.source.user_count();
    d.source_items = prep.source.item_count();
    d.target_users = prep.target.user_count();
    d.target_items = prep.target.item_count();
    return d;
}

TrainResult train_model(const Prepared& prep, const config::RunConfig& cfg) {
    const std::uint64_t seed = cfg.seed();
    TrainResult result;
    result.params = model::init_params(dims_from(prep, cfg), mix_seed(seed, 0x1d17));
    result.adam =
        model::init_adam(result.params, cfg.get_real("learning_rate"),
                         cfg.get_real("adam_beta1"), cfg.get_real("adam_beta2"),
                         cfg.get_real("adam_eps"));
    model::LossWeights weights =
        weights_for_arm(cfg.get_text("arm"), cfg.get_real("lambda_O"), cfg.get_real("lambda_A"));
    model::AlignConfig align = align_from_config(cfg);

    const std::size_t src_n = prep.source_view.train_stream.size();
    const std::size_t tgt_n = prep.target_view.train_stream.size();
    if (src_n == 0 || tgt_n == 0) {
        throw std::runtime_error("train_model: empty training stream");
    }
    nd::Index batch = static_cast<nd::Index>(cfg.get_int("batch_size"));
    batch = std::min<nd::Index>(batch, static_cast<nd::Index>(src_n));
    batch = std::min<nd::Index>(batch, static_cast<nd::Index>(tgt_n));
    result.effective_batch = batch;
    result.steps_per_epoch = static_cast<long>(src_n / static_cast<std::size_t>(batch));

    const long total_steps = cfg.get_int("epochs") * result.steps_per_epoch;
    const std::uint64_t src_seed = mix_seed(seed, 0xb5);
    const std::uint64_t tgt_seed = mix_seed(seed, 0x7b);
    for (long step = 0; step < total_steps; ++step) {
        data::Batch src = data::sample_batch(prep.source_view, batch, src_seed, step);
        data::Batch tgt = data::sample_batch(prep.target_view, batch, tgt_seed, step);
        result.step_log.push_back(
            model::train_step(result.params, result.adam, weights, align, src, tgt));
    }
    return result;
}

namespace {

Eigen::MatrixXd embed_population(const data::DatasetView& view,
                                 const model::TowerParams& tower, bool users) {
    const nd::Index n = users ? view.ds->user_count() : view.ds->item_count();
    std::vector<nd::Index> ids(static_cast<std::size_t>(n));
    for (nd::Index i = 0; i < n; ++i) {
        ids[static_cast<std::size_t>(i)] = i;
    }
    auto hist = std::make_shared<const std::vector<std::vector<nd::Index>>>(
        users ? view.user_hist : view.item_hist);
    const Eigen::MatrixXd& reviews = users ? view.user_reviews : view.item_reviews;
    return model::embed_graph(tower, ids, hist, reviews)->value;
}

} // namespace

Eigen::MatrixXd embed_all_users(const Prepared& prep, const model::ModelParams& params,
                                data::Domain domain) {
    return domain == data::Domain::Source
               ? embed_population(prep.source_view, params.source_user, true)
               : embed_population(prep.target_view, params.target_user, true);
}

Eigen::MatrixXd embed_all_items(const Prepared& prep, const model::ModelParams& params,
                                data::Domain domain) {
    return domain == data::Domain::Source
               ? embed_population(prep.source_view, params.source_item, false)
               : embed_population(prep.target_view, params.target_item, false);
}

std::vector<eval::RankedCase> build_eval_cases(const Prepared& prep,
                                               const model::ModelParams& params,
                                               const config::RunConfig& cfg) {
    const Eigen::MatrixXd user_emb = embed_all_users(prep, params, data::Domain::Target);
    const Eigen::MatrixXd item_emb = embed_all_items(prep, params, data::Domain::Target);
    const std::vector<std::vector<nd::Index>> observed =
        data::observed_items_per_user(prep.target);
    const nd::Index n_items = prep.target.item_count();
    const long negatives = cfg.get_int("eval_negatives");
    const std::uint64_t seed = mix_seed(cfg.seed(), 0xeba1);

    std::vector<eval::RankedCase> cases;
    for (const data::Interaction& x : prep.target.interactions) {
        if (x.split != data::Split::Test || x.label != 1) {
            continue;
        }
        const std::vector<nd::Index>& seen = observed[static_cast<std::size_t>(x.user)];
        std::vector<nd::Index> pool;
        pool.reserve(static_cast<std::size_t>(n_items));
        for (nd::Index item = 0; item < n_items; ++item) {
            if (!std::binary_search(seen.begin(), seen.end(), item)) {
                pool.push_back(item);
            }
        }
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(x.user) *
                                   static_cast<std::uint64_t>(n_items) +
                               static_cast<std::uint64_t>(x.item)));
        rng.shuffle(pool);
        if (static_cast<long>(pool.size()) > negatives) {
            pool.resize(static_cast<std::size_t>(negatives));
        }

        eval::RankedCase c;
        c.user = x.user;
        c.positive_item = x.item;
        c.candidates.push_back(x.item);
        for (nd::Index neg : pool) {
            c.candidates.push_back(neg);
        }
        const nd::Index m = static_cast<nd::Index>(c.candidates.size());
        Eigen::MatrixXd u(m, user_emb.cols());
        Eigen::MatrixXd v(m, item_emb.cols());
        for (nd::Index r = 0; r < m; ++r) {
            u.row(r) = user_emb.row(x.user);
            v.row(r) = item_emb.row(c.candidates[static_cast<std::size_t>(r)]);
        }
        nd::Matrix scores = model::predict_ratings(nd::Matrix::from_eigen(std::move(u)),
                                                   nd::Matrix::from_eigen(std::move(v)),
                                                   params.head);
        for (nd::Index r = 0; r < m; ++r) {
            c.scores.push_back(scores(r, 0));
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

Diagnostics align_diagnostics(const Prepared& prep, const model::ModelParams& params,
                              const config::RunConfig& cfg) {
    const std::uint64_t seed = cfg.seed();
    model::AlignConfig align = align_from_config(cfg);
    nd::Index batch = static_cast<nd::Index>(cfg.get_int("batch_size"));
    batch = std::min<nd::Index>(batch,
                                static_cast<nd::Index>(prep.source_view.train_stream.size()));
    batch = std::min<nd::Index>(batch,
                                static_cast<nd::Index>(prep.target_view.train_stream.size()));
    data::Batch src = data::sample_batch(prep.source_view, batch, mix_seed(seed, 0xb5), 0);
    data::Batch tgt = data::sample_batch(prep.target_view, batch, mix_seed(seed, 0x7b), 0);
    model::LossGraph g =
        model::build_loss_graph(params, model::LossWeights{1.0, 1.0}, align, src, tgt);

    Diagnostics d;
    d.vertical = g.vertical->value(0, 0);
    d.horizontal = g.horizontal->value(0, 0);
    const int folds = static_cast<int>(cfg.get_int("probe_folds"));
    d.user_probe = eval::proxy_a_distance(embed_all_users(prep, params, data::Domain::Source),
                                          embed_all_users(prep, params, data::Domain::Target),
                                          folds, mix_seed(seed, 0xda));
    d.item_probe = eval::proxy_a_distance(embed_all_items(prep, params, data::Domain::Source),
                                          embed_all_items(prep, params, data::Domain::Target),
                                          folds, mix_seed(seed, 0xdb));
    return d;
}

config::RunConfig merge_with_checkpoint(const config::RunConfig& user,
                                        const std::string& snapshot_text) {
    config::RunConfig merged = config::RunConfig::defaults();
    merged.apply_text(snapshot_text, "checkpoint config");
    for (const std::string& key : user.explicit_keys()) {
        merged.set(key, user.raw_value(key));
    }
    return merged;
}

// ---- command entry points ---------------------------------------------------

void run_synth_data(const config::RunConfig& cfg) {
    cfg.validate();
    data::SyntheticSpec spec;
    spec.users_per_domain = static_cast<nd::Index>(cfg.get_int("synth_users"));
    spec.items_per_domain = static_cast<nd::Index>(cfg.get_int("synth_items"));
    spec.latent_dim = static_cast<nd::Index>(cfg.get_int("synth_latent_dim"));
    spec.rotation_angle = cfg.get_real("synth_angle");
    spec.translation = cfg.get_real("synth_translation");
    spec.positivity_threshold = cfg.get_real("synth_threshold");
    spec.sparsity = cfg.get_real("synth_sparsity");
    spec.review_noise = cfg.get_real("synth_review_noise");
    spec.seed = cfg.seed();
    data::SyntheticData syn = data::gen_synthetic(spec);

    data::write_ratings_tsv(syn.source, out_path(cfg, "source_ratings.tsv"));
    data::write_ratings_tsv(syn.target, out_path(cfg, "target_ratings.tsv"));
    data::save_review_embeddings(syn.source_user_reviews,
                                 out_path(cfg, "source_user_reviews.cfae"));
    data::save_review_embeddings(syn.source_item_reviews,
                                 out_path(cfg, "source_item_reviews.cfae"));
    data::save_review_embeddings(syn.target_user_reviews,
                                 out_path(cfg, "target_user_reviews.cfae"));
    data::save_review_embeddings(syn.target_item_reviews,
                                 out_path(cfg, "target_item_reviews.cfae"));

    // ready-to-train config pointing at the emitted files
    config::RunConfig train_cfg = cfg;
    train_cfg.set("source_ratings", out_path(cfg, "source_ratings.tsv"));
    train_cfg.set("target_ratings", out_path(cfg, "target_ratings.tsv"));
    train_cfg.set("source_user_reviews", out_path(cfg, "source_user_reviews.cfae"));
    train_cfg.set("source_item_reviews", out_path(cfg, "source_item_reviews.cfae"));
    train_cfg.set("target_user_reviews", out_path(cfg, "target_user_reviews.cfae"));
    train_cfg.set("target_item_reviews", out_path(cfg, "target_item_reviews.cfae"));
    train_cfg.set("min_records", "0");  // synthetic domains are thin by design
    write_text(out_path(cfg, "train_config.txt"), train_cfg.resolved_text());
    write_text(out_path(cfg, "resolved_config.txt"), cfg.resolved_text());
}

void run_featurize(const config::RunConfig& cfg) {
    cfg.validate();
    const std::string input = cfg.get_text("featurize_input");
    if (input.empty()) {
        throw std::runtime_error("featurize_input must name a ratings file");
    }
    const long cfg_dim = cfg.get_int("review_dim");
    const nd::Index d_rev = cfg_dim > 0 ? static_cast<nd::Index>(cfg_dim) : 16;
    data::RatingDataset ds =
        data::load_ratings(input, data::Domain::Target, cfg.get_real("rating_threshold"), 0);
    data::ReviewFeatures user_f =
        features_for(ds, true, "", d_rev, mix_seed(cfg.seed(), 0xf1));
    data::ReviewFeatures item_f =
        features_for(ds, false, "", d_rev, mix_seed(cfg.seed(), 0xf2));
    data::save_review_embeddings(user_f, out_path(cfg, "user_reviews.cfae"));
    data::save_review_embeddings(item_f, out_path(cfg, "item_reviews.cfae"));
    write_text(out_path(cfg, "resolved_config.txt"), cfg.resolved_text());
}

void run_train(const config::RunConfig& cfg) {
    cfg.validate();
    std::unique_ptr<Prepared> prep = prepare_from_files(cfg);
    TrainResult result = train_model(*prep, cfg);

    std::string log;
    const long spe = result.steps_per_epoch;
    for (std::size_t i = 0; i < result.step_log.size(); ++i) {
        const model::LossReport& r = result.step_log[i];
        json rec = {{"step", i},
                    {"epoch", static_cast<long>(i) / spe},
                    {"loss_rating", r.rating},
                    {"loss_vertical", r.vertical},
                    {"loss_horizontal", r.horizontal},
                    {"loss_total", r.total}};
        log += rec.dump();
        log += '\n';
    }
    write_text(out_path(cfg, "train_log.jsonl"), log);

    std::string summary = "batch_size = " + std::to_string(result.effective_batch) +
                          "\nsteps_per_epoch = " + std::to_string(spe) + "\n";
    for (long e = 0; e * spe < static_cast<long>(result.step_log.size()); ++e) {
        double rating = 0.0, vertical = 0.0, horizontal = 0.0, total = 0.0;
        for (long s = e * spe; s < (e + 1) * spe; ++s) {
            const model::LossReport& r = result.step_log[static_cast<std::size_t>(s)];
            rating += r.rating;
            vertical += r.vertical;
            horizontal += r.horizontal;
            total += r.total;
        }
        const double n = static_cast<double>(spe);
        summary += "epoch " + std::to_string(e) + " loss_rating=" + fmt_real(rating / n) +
                   " loss_vertical=" + fmt_real(vertical / n) +
                   " loss_horizontal=" + fmt_real(horizontal / n) +
                   " loss_total=" + fmt_real(total / n) + "\n";
    }
    write_text(out_path(cfg, "train_summary.txt"), summary);
    model::save_checkpoint(result.params, &result.adam, cfg.resolved_text(),
                           out_path(cfg, "checkpoint.cfaa"));
    write_text(out_path(cfg, "resolved_config.txt"), cfg.resolved_text());
}

namespace {

struct Restored {
    config::RunConfig cfg = config::RunConfig::defaults();
    std::unique_ptr<Prepared> prep;
    model::ModelParams params;
};

Restored restore_for(const config::RunConfig& user_cfg) {
    const std::string ck_path = user_cfg.get_text("checkpoint");
    if (ck_path.empty()) {
        throw std::runtime_error("checkpoint must name a trained model file");
    }
    model::Checkpoint ck = model::load_checkpoint(ck_path);
    Restored r;
    r.cfg = merge_with_checkpoint(user_cfg, ck.config_text);
    r.cfg.validate();
    r.prep = prepare_from_files(r.cfg);
    r.params = model::init_params(dims_from(*r.prep, r.cfg), mix_seed(r.cfg.seed(), 0x1d17));
    model::restore_checkpoint(ck, r.params, nullptr);
    return r;
}

} // namespace

void run_evaluate(const config::RunConfig& user_cfg) {
    Restored r = restore_for(user_cfg);
    std::vector<eval::RankedCase> cases = build_eval_cases(*r.prep, r.params, r.cfg);
    if (cases.empty()) {
        throw std::runtime_error("evaluate: no held-out target positives to rank");
    }
    const int k = static_cast<int>(r.cfg.get_int("top_k"));
    eval::RankMetrics m = eval::rank_metrics(cases, k);

    std::string txt;
    txt += "arm = " + r.cfg.get_text("arm") + "\n";
    txt += "seed = " + std::to_string(r.cfg.seed()) + "\n";
    txt += "cases = " + std::to_string(cases.size()) + "\n";
    txt += "k = " + std::to_string(k) + "\n";
    txt += "hit_rate = " + fmt_real(m.hit_rate) + "\n";
    txt += "recall = " + fmt_real(m.recall) + "\n";
    txt += "ndcg = " + fmt_real(m.ndcg) + "\n";
    write_text(out_path(r.cfg, "metrics.txt"), txt);

    json rec = {{"arm", r.cfg.get_text("arm")}, {"seed", r.cfg.seed()},
                {"cases", cases.size()},       {"k", k},
                {"hit_rate", m.hit_rate},      {"recall", m.recall},
                {"ndcg", m.ndcg}};
    write_text(out_path(r.cfg, "metrics.jsonl"), rec.dump() + "\n");
    write_text(out_path(r.cfg, "resolved_config.txt"), r.cfg.resolved_text());
}

void run_align_diagnostics(const config::RunConfig& user_cfg) {
    Restored r = restore_for(user_cfg);
    Diagnostics d = align_diagnostics(*r.prep, r.params, r.cfg);

    std::string txt;
    txt += "loss_vertical = " + fmt_real(d.vertical) + "\n";
    txt += "loss_horizontal = " + fmt_real(d.horizontal) + "\n";
    txt += "d_a_user = " + fmt_real(d.user_probe.d_a) + "\n";
    txt += "d_a_item = " + fmt_real(d.item_probe.d_a) + "\n";
    txt += "probe_accuracy_user = " + fmt_real(d.user_probe.accuracy) + "\n";
    txt += "probe_accuracy_item = " + fmt_real(d.item_probe.accuracy) + "\n";
    write_text(out_path(r.cfg, "diagnostics.txt"), txt);

    json rec = {{"arm", r.cfg.get_text("arm")},
                {"seed", r.cfg.seed()},
                {"loss_vertical", d.vertical},
                {"loss_horizontal", d.horizontal},
                {"d_a_user", d.user_probe.d_a},
                {"d_a_item", d.item_probe.d_a}};
    write_text(out_path(r.cfg, "diagnostics.jsonl"), rec.dump() + "\n");

    // embedding dumps for external visualization
    auto dump = [&](const Eigen::MatrixXd& emb, const std::vector<data::EntityId>& ids,
                    const std::string& name) {
        data::ReviewFeatures f;
        f.dim = emb.cols();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            f.vectors[ids[i]] = emb.row(static_cast<nd::Index>(i)).transpose();
        }
        data::save_review_embeddings(f, out_path(r.cfg, name));
    };
    dump(embed_all_users(*r.prep, r.params, data::Domain::Source), r.prep->source.user_ids,
         "embeddings_source_users.cfae");
    dump(embed_all_users(*r.prep, r.params, data::Domain::Target), r.prep->target.user_ids,
         "embeddings_target_users.cfae");
    dump(embed_all_items(*r.prep, r.params, data::Domain::Source), r.prep->source.item_ids,
         "embeddings_source_items.cfae");
    dump(embed_all_items(*r.prep, r.params, data::Domain::Target), r.prep->target.item_ids,
         "embeddings_target_items.cfae");
    write_text(out_path(r.cfg, "resolved_config.txt"), r.cfg.resolved_text());
}

} // namespace cfaa::runner
