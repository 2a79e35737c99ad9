#include "cfaa/data.hpp"

#include "cfaa/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace cfaa::data {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no,
                             const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

} // namespace

std::vector<std::size_t> RatingDataset::train_stream() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < interactions.size(); ++i) {
        const Interaction& x = interactions[i];
        if (x.split != Split::Train) {
            continue;
        }
        if (domain == Domain::Target && x.label != 1) {
            continue;
        }
        out.push_back(i);
    }
    return out;
}

RatingDataset load_ratings(const std::string& path, Domain domain, double threshold,
                           int min_records) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_ratings: cannot open " + path);
    }

    struct Row {
        EntityId user;
        EntityId item;
        int label;
        std::string review;
    };
    std::vector<Row> rows;
    std::set<std::pair<EntityId, EntityId>> seen_pairs;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<std::string> fields = split_tabs(line);
        if (fields.size() < 3 || fields.size() > 4) {
            parse_fail(path, line_no, "expected 3 or 4 tab-separated fields, got " +
                                          std::to_string(fields.size()));
        }
        if (fields[0].empty() || fields[1].empty()) {
            parse_fail(path, line_no, "empty user or item id");
        }
        char* end = nullptr;
        const double rating = std::strtod(fields[2].c_str(), &end);
        if (end == fields[2].c_str() || *end != '\0' || !std::isfinite(rating)) {
            parse_fail(path, line_no, "non-numeric rating '" + fields[2] + "'");
        }
        if (!seen_pairs.emplace(fields[0], fields[1]).second) {
            parse_fail(path, line_no,
                       "duplicate interaction (" + fields[0] + ", " + fields[1] + ")");
        }
        rows.push_back(Row{fields[0], fields[1], rating >= threshold ? 1 : 0,
                           fields.size() == 4 ? fields[3] : std::string()});
    }

    // Iterative sparsity filter for the source domain: removing a thin user
    // can push items below the record floor, so repeat until stable.
    std::vector<char> keep(rows.size(), 1);
    if (domain == Domain::Source && min_records > 0) {
        bool changed = true;
        while (changed) {
            changed = false;
            std::unordered_map<EntityId, int> user_n;
            std::unordered_map<EntityId, int> item_n;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (keep[i]) {
                    ++user_n[rows[i].user];
                    ++item_n[rows[i].item];
                }
            }
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (keep[i] && (user_n[rows[i].user] < min_records ||
                                item_n[rows[i].item] < min_records)) {
                    keep[i] = 0;
                    changed = true;
                }
            }
        }
    }

    RatingDataset ds;
    ds.domain = domain;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!keep[i]) {
            continue;
        }
        const Row& r = rows[i];
        auto [uit, unew] = ds.user_index.try_emplace(r.user, ds.user_count());
        if (unew) {
            ds.user_ids.push_back(r.user);
            ds.user_review_text.emplace_back();
        }
        auto [iit, inew] = ds.item_index.try_emplace(r.item, ds.item_count());
        if (inew) {
            ds.item_ids.push_back(r.item);
            ds.item_review_text.emplace_back();
        }
        ds.interactions.push_back(Interaction{uit->second, iit->second, r.label, Split::Train});
        if (!r.review.empty()) {
            auto append = [&](std::string& doc) {
                if (!doc.empty()) {
                    doc += '\n';
                }
                doc += r.review;
            };
            append(ds.user_review_text[static_cast<std::size_t>(uit->second)]);
            append(ds.item_review_text[static_cast<std::size_t>(iit->second)]);
        }
    }
    return ds;
}

void split_dataset(RatingDataset& ds, std::array<int, 3> ratios, std::uint64_t seed) {
    const std::size_t n = ds.interactions.size();
    if (n < 10) {
        throw std::invalid_argument("split_dataset: need at least 10 interactions");
    }
    const long total = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] <= 0 || ratios[1] < 0 || ratios[2] < 0 || total <= 0) {
        throw std::invalid_argument("split_dataset: bad ratios");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    Rng rng(mix_seed(seed, 0x5b115));
    rng.shuffle(order);
    const std::size_t n_train = n * static_cast<std::size_t>(ratios[0]) /
                                static_cast<std::size_t>(total);
    const std::size_t n_valid = n * static_cast<std::size_t>(ratios[1]) /
                                static_cast<std::size_t>(total);
    for (std::size_t pos = 0; pos < n; ++pos) {
        Split s = Split::Test;
        if (pos < n_train) {
            s = Split::Train;
        } else if (pos < n_train + n_valid) {
            s = Split::Valid;
        }
        ds.interactions[order[pos]].split = s;
    }
}

void drop_interactions(RatingDataset& ds, double keep_fraction, std::uint64_t seed) {
    if (keep_fraction < 0.0 || keep_fraction > 1.0) {
        throw std::invalid_argument("drop_interactions: keep fraction must be in [0, 1]");
    }
    if (keep_fraction >= 1.0) {
        return;
    }
    Rng rng(mix_seed(seed, 0xd409));
    std::vector<Interaction> kept;
    kept.reserve(ds.interactions.size());
    for (const Interaction& x : ds.interactions) {
        if (rng.uniform() < keep_fraction) {
            kept.push_back(x);
        }
    }
    ds.interactions = std::move(kept);
}

void write_ratings_tsv(const RatingDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("write_ratings_tsv: cannot open " + path);
    }
    for (const Interaction& x : ds.interactions) {
        out << ds.user_ids[static_cast<std::size_t>(x.user)] << '\t'
            << ds.item_ids[static_cast<std::size_t>(x.item)] << '\t'
            << (x.label == 1 ? 5 : 1) << '\n';
    }
    if (!out) {
        throw std::runtime_error("write_ratings_tsv: write failed for " + path);
    }
}

// ---- featurizer ----------------------------------------------------------

namespace {

std::vector<std::string> split_sentences(const std::string& doc) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : doc) {
        if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& sentence) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : sentence) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur += static_cast<char>(std::tolower(u));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

std::uint64_t token_hash(const std::string& token, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL ^ splitmix64(seed);
    for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return splitmix64(h);
}

} // namespace

ReviewFeatures featurize_reviews(const std::vector<std::pair<EntityId, std::string>>& docs,
                                 nd::Index d_rev, std::uint64_t seed) {
    if (d_rev < 1) {
        throw std::invalid_argument("featurize_reviews: d_rev must be at least 1");
    }

    // document frequency over sentences, so an entity's vector only depends
    // on its own sentences and the corpus-wide token statistics
    std::unordered_map<std::string, long> df;
    long sentence_count = 0;
    for (const auto& [id, doc] : docs) {
        for (const std::string& sentence : split_sentences(doc)) {
            std::unordered_set<std::string> uniq;
            for (std::string& tok : tokenize(sentence)) {
                uniq.insert(std::move(tok));
            }
            if (!uniq.empty()) {
                ++sentence_count;
                for (const std::string& tok : uniq) {
                    ++df[tok];
                }
            }
        }
    }

    ReviewFeatures out;
    out.dim = d_rev;
    for (const auto& [id, doc] : docs) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d_rev);
        long used = 0;
        for (const std::string& sentence : split_sentences(doc)) {
            std::vector<std::string> toks = tokenize(sentence);
            if (toks.empty()) {
                continue;
            }
            Eigen::VectorXd vec = Eigen::VectorXd::Zero(d_rev);
            for (const std::string& tok : toks) {
                const std::uint64_t h = token_hash(tok, seed);
                const nd::Index bucket =
                    static_cast<nd::Index>(h % static_cast<std::uint64_t>(d_rev));
                const double sign = ((h >> 32) & 1ULL) ? 1.0 : -1.0;
                const double idf = std::log((1.0 + static_cast<double>(sentence_count)) /
                                            (1.0 + static_cast<double>(df[tok]))) +
                                   1.0;
                vec(bucket) += sign * idf;
            }
            const double norm = vec.norm();
            if (norm > 0.0) {
                vec /= norm;
            }
            acc += vec;
            ++used;
        }
        if (used > 0) {
            acc /= static_cast<double>(used);
        }
        out.vectors[id] = acc;
    }
    return out;
}

// ---- embedding container ---------------------------------------------------

namespace {

constexpr char kEmbeddingMagic[4] = {'C', 'F', 'A', 'E'};
constexpr std::uint32_t kEmbeddingVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    std::string data;
    std::size_t at = 0;
    std::string path;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path + ": " + what);
    }
    void need(std::size_t n) const {
        if (at + n > data.size()) {
            fail("truncated payload");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[at + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        at += 4;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data.substr(at, n);
        at += n;
        return s;
    }
};

} // namespace

void save_review_embeddings(const ReviewFeatures& features, const std::string& path) {
    std::string buf;
    buf.append(kEmbeddingMagic, 4);
    put_u32(buf, kEmbeddingVersion);
    put_u32(buf, static_cast<std::uint32_t>(features.vectors.size()));
    put_u32(buf, static_cast<std::uint32_t>(features.dim));
    for (const auto& [id, vec] : features.vectors) {
        if (vec.size() != features.dim) {
            throw std::invalid_argument("save_review_embeddings: vector width mismatch for '" +
                                        id + "'");
        }
        put_u32(buf, static_cast<std::uint32_t>(id.size()));
        buf += id;
        for (nd::Index i = 0; i < vec.size(); ++i) {
            put_f32(buf, static_cast<float>(vec(i)));
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_review_embeddings: cannot open " + path);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw std::runtime_error("save_review_embeddings: write failed for " + path);
    }
}

ReviewFeatures load_review_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_review_embeddings: cannot open " + path);
    }
    Reader r;
    r.path = path;
    {
        std::ostringstream ss;
        ss << in.rdbuf();
        r.data = ss.str();
    }
    if (r.data.size() < 4 || std::memcmp(r.data.data(), kEmbeddingMagic, 4) != 0) {
        r.fail("bad magic, not an embedding container");
    }
    r.at = 4;
    const std::uint32_t version = r.u32();
    if (version != kEmbeddingVersion) {
        r.fail("unsupported container version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    if (dim == 0) {
        r.fail("zero embedding width");
    }
    ReviewFeatures out;
    out.dim = static_cast<nd::Index>(dim);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t id_len = r.u32();
        const std::string id = r.bytes(id_len);
        Eigen::VectorXd vec(out.dim);
        for (nd::Index i = 0; i < out.dim; ++i) {
            vec(i) = static_cast<double>(r.f32());
        }
        if (!vec.allFinite()) {
            r.fail("non-finite embedding for '" + id + "'");
        }
        if (!out.vectors.emplace(id, std::move(vec)).second) {
            r.fail("duplicate entity id '" + id + "'");
        }
    }
    if (r.at != r.data.size()) {
        r.fail("trailing bytes after last record");
    }
    return out;
}

Eigen::MatrixXd bind_features(const ReviewFeatures& features,
                              const std::vector<EntityId>& ids) {
    std::unordered_map<EntityId, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        pos.emplace(ids[i], i);
    }
    std::string unknown;
    for (const auto& [id, vec] : features.vectors) {
        if (!pos.count(id)) {
            if (!unknown.empty()) {
                unknown += ", ";
            }
            unknown += id;
        }
    }
    if (!unknown.empty()) {
        throw std::runtime_error("bind_features: unknown entity ids: " + unknown);
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<nd::Index>(ids.size()),
                                                features.dim);
    for (const auto& [id, vec] : features.vectors) {
        out.row(static_cast<nd::Index>(pos[id])) = vec.transpose();
    }
    return out;
}

// ---- synthetic benchmark ---------------------------------------------------

namespace {

Eigen::MatrixXd gaussian_matrix(nd::Index rows, nd::Index cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (nd::Index i = 0; i < rows; ++i) {
        for (nd::Index j = 0; j < cols; ++j) {
            m(i, j) = rng.gaussian();
        }
    }
    return m;
}

// Rotation by the same angle in each consecutive coordinate plane.
Eigen::MatrixXd plane_rotation(nd::Index dim, double angle) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(dim, dim);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (nd::Index p = 0; p + 1 < dim; p += 2) {
        r(p, p) = c;
        r(p, p + 1) = -s;
        r(p + 1, p) = s;
        r(p + 1, p + 1) = c;
    }
    return r;
}

double squash(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void fill_domain(RatingDataset& ds, Domain domain, const SyntheticSpec& spec,
                 const Eigen::MatrixXd& user_lat, const Eigen::MatrixXd& item_lat, Rng& rng) {
    ds.domain = domain;
    const nd::Index n_u = spec.users_per_domain;
    const nd::Index n_v = spec.items_per_domain;
    const char* up = domain == Domain::Source ? "su" : "tu";
    const char* ip = domain == Domain::Source ? "si" : "ti";
    for (nd::Index u = 0; u < n_u; ++u) {
        ds.user_ids.push_back(up + std::to_string(u));
        ds.user_index.emplace(ds.user_ids.back(), u);
    }
    for (nd::Index v = 0; v < n_v; ++v) {
        ds.item_ids.push_back(ip + std::to_string(v));
        ds.item_index.emplace(ds.item_ids.back(), v);
    }
    ds.user_review_text.assign(static_cast<std::size_t>(n_u), "");
    ds.item_review_text.assign(static_cast<std::size_t>(n_v), "");

    const std::uint64_t grid = static_cast<std::uint64_t>(n_u) * static_cast<std::uint64_t>(n_v);
    const std::uint64_t want = static_cast<std::uint64_t>(
        std::llround(spec.sparsity * static_cast<double>(grid)));
    std::unordered_set<std::uint64_t> chosen;
    std::vector<std::uint64_t> order;
    while (order.size() < want && order.size() < grid) {
        const std::uint64_t code = rng.integer(grid);
        if (chosen.insert(code).second) {
            order.push_back(code);
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    for (std::uint64_t code : order) {
        const nd::Index u = static_cast<nd::Index>(code / static_cast<std::uint64_t>(n_v));
        const nd::Index v = static_cast<nd::Index>(code % static_cast<std::uint64_t>(n_v));
        const double score = squash(user_lat.row(u).dot(item_lat.row(v)) * scale);
        ds.interactions.push_back(
            Interaction{u, v, score >= spec.positivity_threshold ? 1 : 0, Split::Train});
    }
}

ReviewFeatures noisy_reviews(const std::vector<EntityId>& ids, const Eigen::MatrixXd& latents,
                             double noise, Rng& rng) {
    ReviewFeatures out;
    out.dim = latents.cols();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        Eigen::VectorXd v = latents.row(static_cast<nd::Index>(i)).transpose();
        for (nd::Index j = 0; j < v.size(); ++j) {
            v(j) += noise * rng.gaussian();
        }
        out.vectors[ids[i]] = v;
    }
    return out;
}

} // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    if (spec.users_per_domain < 1 || spec.items_per_domain < 1 || spec.latent_dim < 1) {
        throw std::invalid_argument("gen_synthetic: counts must be positive");
    }
    if (spec.rotation_angle < 0.0 || spec.rotation_angle > 3.14159265358979323846 + 1e-12) {
        throw std::invalid_argument("gen_synthetic: rotation angle must lie in [0, pi]");
    }
    if (spec.sparsity <= 0.0 || spec.sparsity > 1.0) {
        throw std::invalid_argument("gen_synthetic: sparsity must lie in (0, 1]");
    }

    SyntheticData out;
    Rng lat_rng(mix_seed(spec.seed, 0x1a7e47));
    out.source_user_latents = gaussian_matrix(spec.users_per_domain, spec.latent_dim, lat_rng);
    out.source_item_latents = gaussian_matrix(spec.items_per_domain, spec.latent_dim, lat_rng);
    out.target_user_latents = gaussian_matrix(spec.users_per_domain, spec.latent_dim, lat_rng);
    out.target_item_latents = gaussian_matrix(spec.items_per_domain, spec.latent_dim, lat_rng);

    Rng src_rng(mix_seed(spec.seed, 0x50a2c));
    fill_domain(out.source, Domain::Source, spec, out.source_user_latents,
                out.source_item_latents, src_rng);
    Rng tgt_rng(mix_seed(spec.seed, 0x7a26e7));
    fill_domain(out.target, Domain::Target, spec, out.target_user_latents,
                out.target_item_latents, tgt_rng);

    // domain shift applied after the ratings are fixed
    const Eigen::MatrixXd rot = plane_rotation(spec.latent_dim, spec.rotation_angle);
    Eigen::RowVectorXd shift = Eigen::RowVectorXd::Constant(
        spec.latent_dim, spec.translation / std::sqrt(static_cast<double>(spec.latent_dim)));
    out.target_user_latents = (out.target_user_latents * rot.transpose()).rowwise() + shift;
    out.target_item_latents = (out.target_item_latents * rot.transpose()).rowwise() + shift;

    Rng review_rng(mix_seed(spec.seed, 0x9ec1e));
    out.source_user_reviews = noisy_reviews(out.source.user_ids, out.source_user_latents,
                                            spec.review_noise, review_rng);
    out.source_item_reviews = noisy_reviews(out.source.item_ids, out.source_item_latents,
                                            spec.review_noise, review_rng);
    out.target_user_reviews = noisy_reviews(out.target.user_ids, out.target_user_latents,
                                            spec.review_noise, review_rng);
    out.target_item_reviews = noisy_reviews(out.target.item_ids, out.target_item_latents,
                                            spec.review_noise, review_rng);
    return out;
}

// ---- batching ---------------------------------------------------------------

DatasetView make_view(const RatingDataset& ds, const ReviewFeatures& user_features,
                      const ReviewFeatures& item_features) {
    if (user_features.dim != item_features.dim) {
        throw std::invalid_argument("make_view: user/item review widths differ");
    }
    DatasetView view;
    view.ds = &ds;
    view.user_reviews = bind_features(user_features, ds.user_ids);
    view.item_reviews = bind_features(item_features, ds.item_ids);
    view.user_hist.resize(static_cast<std::size_t>(ds.user_count()));
    view.item_hist.resize(static_cast<std::size_t>(ds.item_count()));
    for (const Interaction& x : ds.interactions) {
        if (x.split == Split::Train && x.label == 1) {
            view.user_hist[static_cast<std::size_t>(x.user)].push_back(x.item);
            view.item_hist[static_cast<std::size_t>(x.item)].push_back(x.user);
        }
    }
    view.train_stream = ds.train_stream();
    return view;
}

Batch sample_batch(const DatasetView& view, nd::Index batch_size, std::uint64_t seed,
                   long step) {
    const std::size_t n = view.train_stream.size();
    if (batch_size < 1 || static_cast<std::size_t>(batch_size) > n) {
        throw std::invalid_argument("sample_batch: batch size must lie in [1, train size]");
    }
    const long per_epoch = static_cast<long>(n / static_cast<std::size_t>(batch_size));
    const long epoch = step / per_epoch;
    const std::size_t offset =
        static_cast<std::size_t>(step % per_epoch) * static_cast<std::size_t>(batch_size);

    std::vector<std::size_t> order = view.train_stream;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch) * 2654435761ULL + 17));
    rng.shuffle(order);

    Batch b;
    auto uh = std::make_shared<std::vector<std::vector<nd::Index>>>();
    auto ih = std::make_shared<std::vector<std::vector<nd::Index>>>();
    b.labels.resize(batch_size);
    b.user_reviews.resize(batch_size, view.user_reviews.cols());
    b.item_reviews.resize(batch_size, view.item_reviews.cols());
    for (nd::Index r = 0; r < batch_size; ++r) {
        const Interaction& x =
            view.ds->interactions[order[offset + static_cast<std::size_t>(r)]];
        b.users.push_back(x.user);
        b.items.push_back(x.item);
        b.labels(r) = static_cast<double>(x.label);
        uh->push_back(view.user_hist[static_cast<std::size_t>(x.user)]);
        ih->push_back(view.item_hist[static_cast<std::size_t>(x.item)]);
        b.user_reviews.row(r) = view.user_reviews.row(x.user);
        b.item_reviews.row(r) = view.item_reviews.row(x.item);
    }
    b.user_histories = std::move(uh);
    b.item_histories = std::move(ih);
    return b;
}

std::vector<std::vector<nd::Index>> observed_items_per_user(const RatingDataset& ds) {
    std::vector<std::vector<nd::Index>> out(static_cast<std::size_t>(ds.user_count()));
    for (const Interaction& x : ds.interactions) {
        out[static_cast<std::size_t>(x.user)].push_back(x.item);
    }
    for (auto& v : out) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return out;
}

} // namespace cfaa::data
