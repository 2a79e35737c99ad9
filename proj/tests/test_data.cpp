#include "cfaa/data.hpp"

#include "cfaa/eval.hpp"
#include "cfaa/rng.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace cfaa;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& content) {
        static int counter = 0;
        path = (std::filesystem::temp_directory_path() /
                ("cfaa_test_" + std::to_string(++counter) + ".tsv"))
                   .string();
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("ratings binarize at the threshold") {
    TempFile f("# comment line\n"
               "u1\ti1\t4\tgreat stuff\n"
               "u1\ti2\t3\n"
               "u2\ti1\t5\n"
               "u2\ti2\t4.5\n");
    data::RatingDataset ds = data::load_ratings(f.path, data::Domain::Target, 4.0, 0);
    REQUIRE(ds.interactions.size() == 4);
    CHECK(ds.interactions[0].label == 1);  // rating 4 -> 1
    CHECK(ds.interactions[1].label == 0);  // rating 3 -> 0
    CHECK(ds.interactions[2].label == 1);
    CHECK(ds.interactions[3].label == 1);
    CHECK(ds.user_count() == 2);
    CHECK(ds.item_count() == 2);
    CHECK(ds.user_review_text[0] == "great stuff");
}

TEST_CASE("parse errors name the file and line") {
    TempFile bad("u1\ti1\tfour\n");
    CHECK_THROWS_WITH_AS(data::load_ratings(bad.path, data::Domain::Source),
                         doctest::Contains(":1: non-numeric rating"), std::runtime_error);
    TempFile dup("u1\ti1\t4\nu1\ti1\t2\n");
    CHECK_THROWS_WITH_AS(data::load_ratings(dup.path, data::Domain::Source),
                         doctest::Contains(":2: duplicate"), std::runtime_error);
    TempFile fields("u1\n");
    CHECK_THROWS_WITH_AS(data::load_ratings(fields.path, data::Domain::Source),
                         doctest::Contains(":1: expected 3 or 4"), std::runtime_error);
}

TEST_CASE("source filtering removes thin users and keeps full ones") {
    // complete 30x30 grid keeps every count at 30; one extra user with 29
    // interactions is dropped and the grid survives the second pass
    std::string content;
    for (int u = 0; u < 30; ++u) {
        for (int i = 0; i < 30; ++i) {
            content += "u" + std::to_string(u) + "\ti" + std::to_string(i) + "\t5\n";
        }
    }
    for (int i = 0; i < 29; ++i) {
        content += "extra\ti" + std::to_string(i) + "\t5\n";
    }
    TempFile f(content);
    data::RatingDataset ds = data::load_ratings(f.path, data::Domain::Source, 4.0, 30);
    CHECK(ds.user_count() == 30);  // "extra" removed
    CHECK(ds.item_count() == 30);
    CHECK(ds.interactions.size() == 900);
    CHECK(!ds.user_index.count("extra"));

    // the target domain is never filtered
    data::RatingDataset tgt = data::load_ratings(f.path, data::Domain::Target, 4.0, 30);
    CHECK(tgt.user_count() == 31);
}

TEST_CASE("source filtering iterates to a fixed point") {
    // removing i1 (single record) drops uA to one record, which then drops
    // i2, which finally drops uB: the whole chain collapses
    TempFile f("uA\ti1\t5\n"
               "uA\ti2\t5\n"
               "uB\ti2\t5\n"
               "uB\ti3\t5\n"
               "uC\ti4\t5\n"
               "uC\ti5\t5\n"
               "uD\ti4\t1\n"
               "uD\ti5\t1\n");
    data::RatingDataset ds = data::load_ratings(f.path, data::Domain::Source, 4.0, 2);
    CHECK(ds.user_count() == 2);  // uC and uD survive via the shared items
    CHECK(ds.item_count() == 2);
    CHECK(ds.interactions.size() == 4);
}

TEST_CASE("splits have exact sizes and partition the data") {
    std::string content;
    for (int i = 0; i < 100; ++i) {
        content += "u" + std::to_string(i % 10) + "\ti" + std::to_string(i) + "\t5\n";
    }
    TempFile f(content);
    data::RatingDataset ds = data::load_ratings(f.path, data::Domain::Target, 4.0, 0);
    data::split_dataset(ds, {8, 1, 1}, 99);
    int train = 0, valid = 0, test = 0;
    for (const data::Interaction& x : ds.interactions) {
        if (x.split == data::Split::Train) ++train;
        if (x.split == data::Split::Valid) ++valid;
        if (x.split == data::Split::Test) ++test;
    }
    CHECK(train == 80);
    CHECK(valid == 10);
    CHECK(test == 10);

    data::RatingDataset again = data::load_ratings(f.path, data::Domain::Target, 4.0, 0);
    data::split_dataset(again, {8, 1, 1}, 99);
    for (std::size_t i = 0; i < ds.interactions.size(); ++i) {
        CHECK(ds.interactions[i].split == again.interactions[i].split);  // same seed
    }

    data::RatingDataset small = ds;
    small.interactions.resize(9);
    CHECK_THROWS_AS(data::split_dataset(small, {8, 1, 1}, 1), std::invalid_argument);
}

TEST_CASE("target training stream keeps positives only") {
    TempFile f("u1\ti1\t5\nu1\ti2\t1\nu2\ti1\t5\nu2\ti2\t1\nu3\ti1\t5\n"
               "u3\ti2\t1\nu4\ti1\t5\nu4\ti2\t1\nu5\ti1\t5\nu5\ti2\t1\n");
    data::RatingDataset ds = data::load_ratings(f.path, data::Domain::Target, 4.0, 0);
    data::split_dataset(ds, {8, 1, 1}, 5);
    for (std::size_t idx : ds.train_stream()) {
        CHECK(ds.interactions[idx].label == 1);
        CHECK(ds.interactions[idx].split == data::Split::Train);
    }
}

TEST_CASE("featurizer determinism and fallbacks") {
    std::vector<std::pair<data::EntityId, std::string>> docs = {
        {"a", "the plot was fun. music was great!"},
        {"b", ""},
        {"c", "the plot was fun. music was great!"},
    };
    data::ReviewFeatures f1 = data::featurize_reviews(docs, 8, 7);
    data::ReviewFeatures f2 = data::featurize_reviews(docs, 8, 7);
    CHECK(f1.vectors.at("a") == f2.vectors.at("a"));         // deterministic
    CHECK(f1.vectors.at("a") == f1.vectors.at("c"));         // identical texts
    CHECK(f1.vectors.at("b").cwiseAbs().maxCoeff() == 0.0);  // empty -> zero
    CHECK(f1.vectors.at("a").size() == 8);

    data::ReviewFeatures other_seed = data::featurize_reviews(docs, 8, 8);
    CHECK(f1.vectors.at("a") != other_seed.vectors.at("a"));
}

TEST_CASE("two-sentence document is the mean of its sentence vectors") {
    // same sentence multiset, so the document frequencies agree and the
    // split corpus computes the same sentence vectors independently
    std::vector<std::pair<data::EntityId, std::string>> joint = {
        {"x", "good value for money. battery dies too fast."},
    };
    std::vector<std::pair<data::EntityId, std::string>> split = {
        {"s1", "good value for money."},
        {"s2", "battery dies too fast."},
    };
    data::ReviewFeatures fj = data::featurize_reviews(joint, 16, 3);
    data::ReviewFeatures fs = data::featurize_reviews(split, 16, 3);
    Eigen::VectorXd mean = 0.5 * (fs.vectors.at("s1") + fs.vectors.at("s2"));
    CHECK((fj.vectors.at("x") - mean).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("embedding container round trip is bit exact") {
    Rng rng(211);
    data::ReviewFeatures f;
    f.dim = 4;
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd v(4);
        for (int j = 0; j < 4; ++j) {
            v(j) = static_cast<double>(static_cast<float>(rng.uniform(-2.0, 2.0)));
        }
        f.vectors["entity_" + std::to_string(i)] = v;
    }
    TempFile holder("");
    data::save_review_embeddings(f, holder.path);
    data::ReviewFeatures back = data::load_review_embeddings(holder.path);
    CHECK(back.dim == 4);
    REQUIRE(back.vectors.size() == 3);
    for (const auto& [id, vec] : f.vectors) {
        CHECK(back.vectors.at(id) == vec);
    }

    // second write produces identical bytes
    TempFile holder2("");
    data::save_review_embeddings(back, holder2.path);
    std::ifstream a(holder.path, std::ios::binary), b(holder2.path, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("embedding container rejects malformed payloads") {
    data::ReviewFeatures f;
    f.dim = 2;
    f.vectors["e"] = Eigen::Vector2d(1.0, 2.0);
    TempFile holder("");
    data::save_review_embeddings(f, holder.path);

    std::ifstream in(holder.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    TempFile truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_WITH_AS(data::load_review_embeddings(truncated.path),
                         doctest::Contains("truncated"), std::runtime_error);

    std::string wrong = bytes;
    wrong[0] = 'X';
    TempFile magic(wrong);
    CHECK_THROWS_WITH_AS(data::load_review_embeddings(magic.path), doctest::Contains("magic"),
                         std::runtime_error);
}

TEST_CASE("binding features rejects unknown entities and fills missing ones") {
    data::ReviewFeatures f;
    f.dim = 2;
    f.vectors["known"] = Eigen::Vector2d(1.0, 2.0);
    f.vectors["stranger"] = Eigen::Vector2d(3.0, 4.0);
    CHECK_THROWS_WITH_AS(data::bind_features(f, {"known", "other"}),
                         doctest::Contains("stranger"), std::runtime_error);

    data::ReviewFeatures ok;
    ok.dim = 2;
    ok.vectors["known"] = Eigen::Vector2d(1.0, 2.0);
    Eigen::MatrixXd m = data::bind_features(ok, {"missing", "known"});
    CHECK(m.row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m(1, 0) == 1.0);
}

TEST_CASE("synthetic generation is deterministic") {
    data::SyntheticSpec spec;
    spec.users_per_domain = 40;
    spec.items_per_domain = 20;
    spec.latent_dim = 6;
    spec.sparsity = 0.2;
    spec.seed = 17;
    data::SyntheticData a = data::gen_synthetic(spec);
    data::SyntheticData b = data::gen_synthetic(spec);
    REQUIRE(a.source.interactions.size() == b.source.interactions.size());
    CHECK(a.source.interactions.size() > 100);
    for (std::size_t i = 0; i < a.source.interactions.size(); ++i) {
        CHECK(a.source.interactions[i].user == b.source.interactions[i].user);
        CHECK(a.source.interactions[i].item == b.source.interactions[i].item);
        CHECK(a.source.interactions[i].label == b.source.interactions[i].label);
    }
    CHECK(a.target_user_latents == b.target_user_latents);
    CHECK(a.source_user_reviews.vectors.at("su0") == b.source_user_reviews.vectors.at("su0"));
}

TEST_CASE("domain shift controls the review-feature probe") {
    data::SyntheticSpec spec;
    spec.users_per_domain = 400;
    spec.items_per_domain = 60;
    spec.latent_dim = 12;
    spec.sparsity = 0.05;
    spec.rotation_angle = 0.0;
    spec.translation = 0.0;
    spec.seed = 23;
    data::SyntheticData aligned = data::gen_synthetic(spec);
    Eigen::MatrixXd src =
        data::bind_features(aligned.source_user_reviews, aligned.source.user_ids);
    Eigen::MatrixXd tgt =
        data::bind_features(aligned.target_user_reviews, aligned.target.user_ids);
    eval::DiscrepancyReport same = eval::proxy_a_distance(src, tgt, 5, 11);
    CHECK(same.accuracy > 0.45);
    CHECK(same.accuracy < 0.55);

    spec.rotation_angle = 1.5707963267948966;  // quarter turn
    data::SyntheticData shifted = data::gen_synthetic(spec);
    Eigen::MatrixXd src2 =
        data::bind_features(shifted.source_user_reviews, shifted.source.user_ids);
    Eigen::MatrixXd tgt2 =
        data::bind_features(shifted.target_user_reviews, shifted.target.user_ids);
    eval::DiscrepancyReport apart = eval::proxy_a_distance(src2, tgt2, 5, 11);
    CHECK(apart.accuracy > same.accuracy);
}

TEST_CASE("batches are deterministic and leak nothing from held-out splits") {
    data::SyntheticSpec spec;
    spec.users_per_domain = 25;
    spec.items_per_domain = 10;
    spec.latent_dim = 4;
    spec.sparsity = 0.2;  // 50 interactions
    spec.seed = 5;
    data::SyntheticData syn = data::gen_synthetic(spec);
    data::split_dataset(syn.target, {8, 1, 1}, 3);

    data::DatasetView view =
        data::make_view(syn.target, syn.target_user_reviews, syn.target_item_reviews);

    // training positives per user, for the leakage check
    std::set<std::pair<nd::Index, nd::Index>> train_pos;
    for (const data::Interaction& x : syn.target.interactions) {
        if (x.split == data::Split::Train && x.label == 1) {
            train_pos.emplace(x.user, x.item);
        }
    }

    const nd::Index batch = static_cast<nd::Index>(view.train_stream.size());
    data::Batch b1 = data::sample_batch(view, batch, 77, 0);
    data::Batch b2 = data::sample_batch(view, batch, 77, 0);
    CHECK(b1.users == b2.users);
    CHECK(b1.items == b2.items);

    // full-epoch batch covers the whole stream
    std::set<std::pair<nd::Index, nd::Index>> seen;
    for (std::size_t i = 0; i < b1.users.size(); ++i) {
        seen.emplace(b1.users[i], b1.items[i]);
    }
    CHECK(seen.size() == view.train_stream.size());

    for (std::size_t r = 0; r < b1.users.size(); ++r) {
        for (nd::Index item : (*b1.user_histories)[r]) {
            CHECK(train_pos.count({b1.users[r], item}) == 1);
        }
        for (nd::Index user : (*b1.item_histories)[r]) {
            CHECK(train_pos.count({user, b1.items[r]}) == 1);
        }
        CHECK(b1.labels(static_cast<nd::Index>(r)) == 1.0);  // target positives only
    }

    CHECK_THROWS_AS(data::sample_batch(view, batch + 1, 77, 0), std::invalid_argument);
}

TEST_CASE("drop_interactions is a seeded filter") {
    data::RatingDataset ds;
    ds.domain = data::Domain::Target;
    for (int i = 0; i < 200; ++i) {
        ds.interactions.push_back(data::Interaction{i, i, 1, data::Split::Train});
    }
    data::RatingDataset half = ds;
    data::drop_interactions(half, 0.5, 9);
    CHECK(half.interactions.size() > 60);
    CHECK(half.interactions.size() < 140);
    data::RatingDataset again = ds;
    data::drop_interactions(again, 0.5, 9);
    CHECK(again.interactions.size() == half.interactions.size());
    data::RatingDataset all = ds;
    data::drop_interactions(all, 1.0, 9);
    CHECK(all.interactions.size() == 200);
}
