#include "cfaa/model.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace cfaa;

namespace {

model::ModelDims tiny_dims() {
    model::ModelDims d;
    d.embed_dim = 4;
    d.id_dim = 3;
    d.hist_dim = 3;
    d.review_dim = 2;
    d.fusion_hidden = 4;
    d.head_hidden = 3;
    d.source_users = 6;
    d.source_items = 5;
    d.target_users = 6;
    d.target_items = 5;
    return d;
}

// Random but structurally valid batch against the tiny dimensions.
data::Batch tiny_batch(nd::Index n, nd::Index users, nd::Index items, bool positives_only,
                       Rng& rng) {
    data::Batch b;
    auto uh = std::make_shared<std::vector<std::vector<nd::Index>>>();
    auto ih = std::make_shared<std::vector<std::vector<nd::Index>>>();
    b.labels.resize(n);
    b.user_reviews = testutil::random_matrix(n, 2, rng);
    b.item_reviews = testutil::random_matrix(n, 2, rng);
    for (nd::Index i = 0; i < n; ++i) {
        b.users.push_back(static_cast<nd::Index>(rng.integer(static_cast<std::uint64_t>(users))));
        b.items.push_back(static_cast<nd::Index>(rng.integer(static_cast<std::uint64_t>(items))));
        b.labels(i) = positives_only ? 1.0 : static_cast<double>(rng.integer(2));
        uh->push_back({static_cast<nd::Index>(rng.integer(static_cast<std::uint64_t>(items)))});
        ih->push_back({static_cast<nd::Index>(rng.integer(static_cast<std::uint64_t>(users)))});
    }
    b.user_histories = std::move(uh);
    b.item_histories = std::move(ih);
    return b;
}

} // namespace

TEST_CASE("zero fusion weights give zero embeddings") {
    model::ModelParams p = model::init_params(tiny_dims(), 1);
    p.source_user.fusion_w2->value.setZero();
    p.source_user.fusion_b2->value.setZero();
    nd::Matrix hist(2, 5);
    hist(0, 1) = 1.0;
    nd::Matrix reviews(2, 2);
    nd::Matrix emb = model::embed_entities({0, 3}, hist, reviews, p.source_user);
    CHECK(emb.rows() == 2);
    CHECK(emb.cols() == 4);
    CHECK(emb.mat().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("embedding matches a hand-computed forward pass") {
    model::ModelDims d;
    d.embed_dim = 1;
    d.id_dim = 1;
    d.hist_dim = 1;
    d.review_dim = 1;
    d.fusion_hidden = 1;
    d.head_hidden = 1;
    d.source_users = 1;
    d.source_items = 2;
    d.target_users = 1;
    d.target_items = 1;
    model::ModelParams p = model::init_params(d, 1);
    p.source_user.id_table->value << 0.5;
    p.source_user.hist_weight->value << 0.3, 0.2;
    p.source_user.hist_bias->value << 0.1;
    p.source_user.fusion_w1->value << 1.0, 2.0, 3.0;
    p.source_user.fusion_b1->value << 0.05;
    p.source_user.fusion_w2->value << 2.0;
    p.source_user.fusion_b2->value << -0.1;

    nd::Matrix hist(1, 2, {1.0, 1.0});
    nd::Matrix reviews(1, 1, {0.25});
    nd::Matrix emb = model::embed_entities({0}, hist, reviews, p.source_user);
    // id 0.5, history 0.3+0.2+0.1 = 0.6, review 0.25;
    // fused dot w1 = 0.5 + 1.2 + 0.75 = 2.45; +b1 = 2.5; tanh; *2 - 0.1
    const double expect = 2.0 * std::tanh(2.5) - 0.1;
    CHECK(emb(0, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("embedding rejects out-of-range entity indices") {
    model::ModelParams p = model::init_params(tiny_dims(), 1);
    nd::Matrix hist(1, 5);
    nd::Matrix reviews(1, 2);
    CHECK_THROWS_WITH_AS(model::embed_entities({42}, hist, reviews, p.source_user),
                         doctest::Contains("42"), std::invalid_argument);
}

TEST_CASE("zero head weights predict one half and outputs stay inside (0,1)") {
    model::ModelParams p = model::init_params(tiny_dims(), 2);
    Rng rng(3);
    nd::Matrix u = nd::Matrix::from_eigen(testutil::random_matrix(4, 4, rng));
    nd::Matrix v = nd::Matrix::from_eigen(testutil::random_matrix(4, 4, rng));

    model::ModelParams zeroed = model::init_params(tiny_dims(), 2);
    zeroed.head.w1->value.setZero();
    zeroed.head.w2->value.setZero();
    nd::Matrix half = model::predict_ratings(u, v, zeroed.head);
    for (nd::Index i = 0; i < 4; ++i) {
        CHECK(half(i, 0) == doctest::Approx(0.5).epsilon(1e-14));
    }

    nd::Matrix preds = model::predict_ratings(u, v, p.head);
    for (nd::Index i = 0; i < 4; ++i) {
        CHECK(preds(i, 0) > 0.0);
        CHECK(preds(i, 0) < 1.0);
    }
}

TEST_CASE("prediction matches a hand-computed single-hidden-unit head") {
    model::ModelDims d = tiny_dims();
    d.embed_dim = 1;
    d.head_hidden = 1;
    model::ModelParams p = model::init_params(d, 4);
    p.head.w1->value << 1.0, -2.0;
    p.head.b1->value << 0.1;
    p.head.w2->value << 1.5;
    p.head.b2->value << -0.2;
    nd::Matrix u(1, 1, {0.3});
    nd::Matrix v(1, 1, {-0.2});
    const double h = std::tanh(0.3 * 1.0 + (-0.2) * (-2.0) + 0.1);
    const double expect = 1.0 / (1.0 + std::exp(-(1.5 * h - 0.2)));
    nd::Matrix got = model::predict_ratings(u, v, p.head);
    CHECK(got(0, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("rating loss evaluates the cross entropy by hand") {
    Eigen::VectorXd pred(1), truth(1), none(0);
    pred << 0.5;
    truth << 1.0;
    CHECK(model::rating_loss(pred, truth, none) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // perfect fit saturates at the clamp floor
    Eigen::VectorXd hit(2), labels(2), tgt(1);
    hit << 1.0, 0.0;
    labels << 1.0, 0.0;
    tgt << 1.0;
    CHECK(model::rating_loss(hit, labels, tgt) <= 3.1e-7);

    Eigen::VectorXd bad(1);
    bad << 0.5;
    Eigen::VectorXd notbinary(1);
    notbinary << 0.25;
    CHECK_THROWS_AS(model::rating_loss(bad, notbinary, none), std::invalid_argument);
}

TEST_CASE("total loss is the weighted affine form") {
    model::LossWeights w;  // defaults 0.5 and 0.8
    CHECK(w.vertical == 0.5);
    CHECK(w.horizontal == 0.8);
    CHECK(model::total_loss(1.25, 0.0, 0.0, model::LossWeights{0.0, 0.0}) == 1.25);
    const double base = model::total_loss(1.0, 0.5, 0.25, w);
    const double doubled = model::total_loss(1.0, 1.0, 0.25, w);
    CHECK(doubled - base == doctest::Approx(0.5 * 0.5).epsilon(1e-12));
}

TEST_CASE("full objective gradient matches central differences") {
    Rng rng(7);
    model::ModelDims d = tiny_dims();
    model::ModelParams p = model::init_params(d, 5);
    model::AlignConfig align;
    align.proxy_count = 4;
    data::Batch src = tiny_batch(8, d.source_users, d.source_items, false, rng);
    data::Batch tgt = tiny_batch(8, d.target_users, d.target_items, true, rng);
    model::LossGraph g =
        model::build_loss_graph(p, model::LossWeights{0.5, 0.8}, align, src, tgt);
    std::vector<nd::Var> params;
    for (const auto& [name, var] : p.named) {
        params.push_back(var);
    }
    CHECK(nd::grad_check(g.total, params, 1e-5) <= 1e-4);
}

TEST_CASE("loss report total equals the affine combination bitwise") {
    Rng rng(11);
    model::ModelDims d = tiny_dims();
    for (model::LossWeights w : {model::LossWeights{0.0, 0.0}, model::LossWeights{0.5, 0.0},
                                 model::LossWeights{0.0, 0.8}, model::LossWeights{0.5, 0.8}}) {
        model::ModelParams p = model::init_params(d, 6);
        model::AdamState adam = model::init_adam(p);
        model::AlignConfig align;
        align.proxy_count = 4;
        data::Batch src = tiny_batch(8, d.source_users, d.source_items, false, rng);
        data::Batch tgt = tiny_batch(8, d.target_users, d.target_items, true, rng);
        model::LossReport r = model::train_step(p, adam, w, align, src, tgt);
        CHECK(r.total == model::total_loss(r.rating, r.vertical, r.horizontal, w));
        if (w.vertical == 0.0) {
            CHECK(r.vertical == 0.0);
        }
        if (w.horizontal == 0.0) {
            CHECK(r.horizontal == 0.0);
        }
    }
}

TEST_CASE("training decreases the rating loss on a separable fixture") {
    Rng rng(13);
    model::ModelDims d = tiny_dims();
    model::ModelParams p = model::init_params(d, 7);
    model::AdamState adam = model::init_adam(p, 5e-3);
    model::AlignConfig align;
    align.proxy_count = 4;
    data::Batch src = tiny_batch(8, d.source_users, d.source_items, false, rng);
    data::Batch tgt = tiny_batch(8, d.target_users, d.target_items, true, rng);
    // make the source labels a linear function of the review signal
    for (nd::Index i = 0; i < 8; ++i) {
        src.labels(i) = src.user_reviews(i, 0) + src.item_reviews(i, 0) > 0.0 ? 1.0 : 0.0;
    }
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
        model::LossReport r =
            model::train_step(p, adam, model::LossWeights{0.0, 0.0}, align, src, tgt);
        if (step == 0) {
            first = r.rating;
        }
        last = r.rating;
    }
    CHECK(last < first);
}

TEST_CASE("identical seeds give bitwise identical trajectories") {
    model::ModelDims d = tiny_dims();
    auto run = [&]() {
        Rng rng(17);
        model::ModelParams p = model::init_params(d, 8);
        model::AdamState adam = model::init_adam(p);
        model::AlignConfig align;
        align.proxy_count = 4;
        for (int step = 0; step < 5; ++step) {
            data::Batch src = tiny_batch(8, d.source_users, d.source_items, false, rng);
            data::Batch tgt = tiny_batch(8, d.target_users, d.target_items, true, rng);
            model::train_step(p, adam, model::LossWeights{0.5, 0.8}, align, src, tgt);
        }
        return p;
    };
    model::ModelParams a = run();
    model::ModelParams b = run();
    for (std::size_t i = 0; i < a.named.size(); ++i) {
        CHECK(a.named[i].second->value == b.named[i].second->value);
    }
}

TEST_CASE("checkpoint round trip restores parameters and optimizer state") {
    Rng rng(19);
    model::ModelDims d = tiny_dims();
    model::ModelParams p = model::init_params(d, 9);
    model::AdamState adam = model::init_adam(p, 2e-3, 0.85, 0.95, 1e-9);
    model::AlignConfig align;
    align.proxy_count = 4;
    data::Batch src = tiny_batch(8, d.source_users, d.source_items, false, rng);
    data::Batch tgt = tiny_batch(8, d.target_users, d.target_items, true, rng);
    model::train_step(p, adam, model::LossWeights{0.5, 0.8}, align, src, tgt);

    const std::string path =
        (std::filesystem::temp_directory_path() / "cfaa_ckpt_test.cfaa").string();
    model::save_checkpoint(p, &adam, "seed = 9\n", path);

    model::Checkpoint ck = model::load_checkpoint(path);
    CHECK(ck.config_text == "seed = 9\n");
    CHECK(ck.has_adam);
    model::ModelParams fresh = model::init_params(d, 1234);
    model::AdamState fresh_adam = model::init_adam(fresh);
    model::restore_checkpoint(ck, fresh, &fresh_adam);
    for (std::size_t i = 0; i < p.named.size(); ++i) {
        CHECK(fresh.named[i].second->value == p.named[i].second->value);
    }
    CHECK(fresh_adam.step_count == adam.step_count);
    CHECK(fresh_adam.lr == adam.lr);
    CHECK(fresh_adam.m[0] == adam.m[0]);
    CHECK(fresh_adam.v[3] == adam.v[3]);

    // truncated payload is rejected
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        const std::string cut_path =
            (std::filesystem::temp_directory_path() / "cfaa_ckpt_cut.cfaa").string();
        std::ofstream out(cut_path, std::ios::binary);
        out << bytes.substr(0, bytes.size() / 2);
        out.close();
        CHECK_THROWS_AS(model::load_checkpoint(cut_path), std::runtime_error);
        std::remove(cut_path.c_str());
    }
    std::remove(path.c_str());
}
