#include "cfaa/model.hpp"

#include "cfaa/ot.hpp"
#include "cfaa/rng.hpp"
#include "cfaa/subspace.hpp"
#include "cfaa/typical.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfaa::model {

namespace {

constexpr double kPredFloor = 1e-12;       // keeps head output strictly inside (0, 1)
constexpr double kLossClamp = 1e-7;        // prediction clamp before logs

Eigen::MatrixXd xavier(nd::Index rows, nd::Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (nd::Index i = 0; i < rows; ++i) {
        for (nd::Index j = 0; j < cols; ++j) {
            m(i, j) = rng.uniform(-limit, limit);
        }
    }
    return m;
}

TowerParams init_tower(const std::string& prefix, nd::Index entities, nd::Index opposite,
                       const ModelDims& d, Rng& rng,
                       std::vector<std::pair<std::string, nd::Var>>& named) {
    auto reg = [&](const std::string& name, Eigen::MatrixXd value) {
        nd::Var v = nd::leaf(nd::Matrix::from_eigen(std::move(value)));
        named.emplace_back(prefix + "." + name, v);
        return v;
    };
    const nd::Index fused_in = d.id_dim + d.hist_dim + d.review_dim;
    TowerParams t;
    t.id_table = reg("id", xavier(entities, d.id_dim, rng));
    t.hist_weight = reg("hist_w", xavier(opposite, d.hist_dim, rng));
    t.hist_bias = reg("hist_b", Eigen::MatrixXd::Zero(1, d.hist_dim));
    t.fusion_w1 = reg("fusion_w1", xavier(fused_in, d.fusion_hidden, rng));
    t.fusion_b1 = reg("fusion_b1", Eigen::MatrixXd::Zero(1, d.fusion_hidden));
    t.fusion_w2 = reg("fusion_w2", xavier(d.fusion_hidden, d.embed_dim, rng));
    t.fusion_b2 = reg("fusion_b2", Eigen::MatrixXd::Zero(1, d.embed_dim));
    return t;
}

} // namespace

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
    if (dims.embed_dim < 1 || dims.id_dim < 1 || dims.hist_dim < 1 || dims.review_dim < 1 ||
        dims.fusion_hidden < 1 || dims.head_hidden < 1) {
        throw std::invalid_argument("init_params: widths must be positive");
    }
    if (dims.source_users < 1 || dims.source_items < 1 || dims.target_users < 1 ||
        dims.target_items < 1) {
        throw std::invalid_argument("init_params: entity counts must be positive");
    }
    ModelParams p;
    p.dims = dims;
    Rng rng(mix_seed(seed, 0x1417));
    p.source_user = init_tower("source_user", dims.source_users, dims.source_items, dims, rng,
                               p.named);
    p.source_item = init_tower("source_item", dims.source_items, dims.source_users, dims, rng,
                               p.named);
    p.target_user = init_tower("target_user", dims.target_users, dims.target_items, dims, rng,
                               p.named);
    p.target_item = init_tower("target_item", dims.target_items, dims.target_users, dims, rng,
                               p.named);
    auto reg = [&](const std::string& name, Eigen::MatrixXd value) {
        nd::Var v = nd::leaf(nd::Matrix::from_eigen(std::move(value)));
        p.named.emplace_back(name, v);
        return v;
    };
    p.head.w1 = reg("head.w1", xavier(2 * dims.embed_dim, dims.head_hidden, rng));
    p.head.b1 = reg("head.b1", Eigen::MatrixXd::Zero(1, dims.head_hidden));
    p.head.w2 = reg("head.w2", xavier(dims.head_hidden, 1, rng));
    p.head.b2 = reg("head.b2", Eigen::MatrixXd::Zero(1, 1));
    return p;
}

AdamState init_adam(const ModelParams& params, double lr, double beta1, double beta2,
                    double eps) {
    AdamState a;
    a.lr = lr;
    a.beta1 = beta1;
    a.beta2 = beta2;
    a.eps = eps;
    for (const auto& [name, var] : params.named) {
        a.m.emplace_back(Eigen::MatrixXd::Zero(var->value.rows(), var->value.cols()));
        a.v.emplace_back(Eigen::MatrixXd::Zero(var->value.rows(), var->value.cols()));
    }
    return a;
}

void adam_step(ModelParams& params, AdamState& adam) {
    if (adam.m.size() != params.named.size()) {
        throw std::invalid_argument("adam_step: state does not match parameter list");
    }
    ++adam.step_count;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step_count));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step_count));
    for (std::size_t i = 0; i < params.named.size(); ++i) {
        nd::Var& var = params.named[i].second;
        const Eigen::MatrixXd g = nd::grad_valid(var)
                                      ? var->grad
                                      : Eigen::MatrixXd::Zero(var->value.rows(),
                                                              var->value.cols());
        adam.m[i] = adam.beta1 * adam.m[i] + (1.0 - adam.beta1) * g;
        adam.v[i] = adam.beta2 * adam.v[i] + (1.0 - adam.beta2) * g.cwiseAbs2();
        Eigen::MatrixXd mhat = adam.m[i] / bc1;
        Eigen::MatrixXd denom = ((adam.v[i] / bc2).cwiseSqrt().array() + adam.eps).matrix();
        var->value -= adam.lr * mhat.cwiseQuotient(denom);
    }
}

nd::Var embed_graph(const TowerParams& tower, const std::vector<nd::Index>& ids,
                    std::shared_ptr<const std::vector<std::vector<nd::Index>>> histories,
                    const Eigen::MatrixXd& reviews) {
    const nd::Index n = static_cast<nd::Index>(ids.size());
    if (static_cast<nd::Index>(histories->size()) != n || reviews.rows() != n) {
        throw std::invalid_argument("embed_graph: batch component sizes differ");
    }
    const nd::Index entities = tower.id_table->value.rows();
    for (nd::Index id : ids) {
        if (id < 0 || id >= entities) {
            throw std::invalid_argument("embed_graph: entity index " + std::to_string(id) +
                                        " out of range [0, " + std::to_string(entities) + ")");
        }
    }
    if (reviews.cols() != tower.fusion_w1->value.rows() - tower.id_table->value.cols() -
                              tower.hist_weight->value.cols()) {
        throw std::invalid_argument("embed_graph: review width does not match fusion input");
    }
    nd::Var id_emb = nd::gather_rows(tower.id_table, ids);
    nd::Var hist_emb = nd::add_row_broadcast(nd::sum_rows_gather(tower.hist_weight, histories),
                                             tower.hist_bias);
    nd::Var fused = nd::concat_cols({id_emb, hist_emb, nd::constant(reviews)});
    nd::Var h = nd::vtanh(nd::add_row_broadcast(nd::matmul(fused, tower.fusion_w1),
                                                tower.fusion_b1));
    return nd::add_row_broadcast(nd::matmul(h, tower.fusion_w2), tower.fusion_b2);
}

nd::Var predict_graph(const PredictorParams& head, const nd::Var& users, const nd::Var& items) {
    if (users->value.rows() != items->value.rows() ||
        users->value.cols() != items->value.cols()) {
        throw std::invalid_argument("predict_graph: embedding shapes differ");
    }
    nd::Var x = nd::concat_cols({users, items});
    nd::Var h = nd::vtanh(nd::add_row_broadcast(nd::matmul(x, head.w1), head.b1));
    nd::Var z = nd::add_row_broadcast(nd::matmul(h, head.w2), head.b2);
    return nd::clamp(nd::sigmoid(z), kPredFloor, 1.0 - kPredFloor);
}

nd::Var rating_loss_graph(const nd::Var& pred_src, const Eigen::VectorXd& truth_src,
                          const nd::Var& pred_tgt) {
    if (pred_src->value.cols() != 1 || pred_tgt->value.cols() != 1) {
        throw std::invalid_argument("rating_loss_graph: predictions must be column vectors");
    }
    if (pred_src->value.rows() != truth_src.size()) {
        throw std::invalid_argument("rating_loss_graph: label count mismatch");
    }
    for (nd::Index i = 0; i < truth_src.size(); ++i) {
        if (truth_src(i) != 0.0 && truth_src(i) != 1.0) {
            throw std::invalid_argument("rating_loss_graph: labels must be binary");
        }
    }
    const nd::Index n = pred_src->value.rows();
    nd::Var ps = nd::clamp(pred_src, kLossClamp, 1.0 - kLossClamp);
    nd::Var pt = nd::clamp(pred_tgt, kLossClamp, 1.0 - kLossClamp);
    nd::Var r = nd::constant(Eigen::MatrixXd(truth_src));
    nd::Var ones = nd::constant(Eigen::MatrixXd::Ones(n, 1));
    nd::Var pos = nd::hadamard(r, nd::vlog(ps));
    nd::Var neg = nd::hadamard(nd::sub(ones, r), nd::vlog(nd::sub(ones, ps)));
    nd::Var src_term = nd::sum(nd::add(pos, neg));
    nd::Var tgt_term = nd::sum(nd::vlog(pt));  // positives only in the target stream
    return nd::scale(nd::add(src_term, tgt_term), -1.0);
}

LossGraph build_loss_graph(const ModelParams& params, const LossWeights& weights,
                           const AlignConfig& align, const data::Batch& source,
                           const data::Batch& target) {
    if (weights.vertical < 0.0 || weights.horizontal < 0.0) {
        throw std::invalid_argument("build_loss_graph: loss weights must be nonnegative");
    }
    LossGraph g;
    g.source_users = embed_graph(params.source_user, source.users, source.user_histories,
                                 source.user_reviews);
    g.source_items = embed_graph(params.source_item, source.items, source.item_histories,
                                 source.item_reviews);
    g.target_users = embed_graph(params.target_user, target.users, target.user_histories,
                                 target.user_reviews);
    g.target_items = embed_graph(params.target_item, target.items, target.item_histories,
                                 target.item_reviews);

    nd::Var pred_src = predict_graph(params.head, g.source_users, g.source_items);
    nd::Var pred_tgt = predict_graph(params.head, g.target_users, g.target_items);
    g.rating = rating_loss_graph(pred_src, source.labels, pred_tgt);
    g.total = g.rating;

    if (weights.vertical > 0.0) {
        auto proxies_for = [&](const nd::Var& z) {
            typical::SelectionProblem problem;
            problem.embeddings = nd::value_of(z);
            const nd::Index n = z->value.rows();
            problem.proxy_count =
                align.proxy_count > 0 ? align.proxy_count : std::max<nd::Index>(n / 2, 1);
            problem.alpha = align.alpha;
            problem.tol = align.select_tol;
            problem.max_iter = align.select_max_iter;
            return typical::proxies_graph(z, typical::select_typical_samples(problem));
        };
        g.vertical = ot::vertical_loss_graph(
            proxies_for(g.source_users), proxies_for(g.target_users),
            proxies_for(g.source_items), proxies_for(g.target_items), align.epsilon,
            align.sinkhorn_tol, align.sinkhorn_max_iter);
        g.total = nd::add(g.total, nd::scale(g.vertical, weights.vertical));
    }
    if (weights.horizontal > 0.0) {
        g.horizontal = subspace::horizontal_loss_graph(
            g.source_users, g.target_users, g.source_items, g.target_items, align.nu,
            align.se_delta, align.se_tol, align.se_max_iter, align.pinv_tol);
        g.total = nd::add(g.total, nd::scale(g.horizontal, weights.horizontal));
    }
    return g;
}

nd::Matrix embed_entities(const std::vector<nd::Index>& ids, const nd::Matrix& histories,
                          const nd::Matrix& reviews, const TowerParams& tower) {
    const nd::Index n = static_cast<nd::Index>(ids.size());
    if (histories.rows() != n || reviews.rows() != n) {
        throw std::invalid_argument("embed_entities: batch component sizes differ");
    }
    if (histories.cols() != tower.hist_weight->value.rows()) {
        throw std::invalid_argument("embed_entities: history width does not match encoder");
    }
    auto lists = std::make_shared<std::vector<std::vector<nd::Index>>>(
        static_cast<std::size_t>(n));
    for (nd::Index i = 0; i < n; ++i) {
        for (nd::Index j = 0; j < histories.cols(); ++j) {
            if (histories(i, j) != 0.0) {
                (*lists)[static_cast<std::size_t>(i)].push_back(j);
            }
        }
    }
    return nd::value_of(embed_graph(tower, ids, std::move(lists), reviews.mat()));
}

nd::Matrix predict_ratings(const nd::Matrix& users, const nd::Matrix& items,
                           const PredictorParams& head) {
    return nd::value_of(
        predict_graph(head, nd::constant(users), nd::constant(items)));
}

double rating_loss(const Eigen::VectorXd& pred_src, const Eigen::VectorXd& truth_src,
                   const Eigen::VectorXd& pred_tgt) {
    nd::Var ps = nd::constant(Eigen::MatrixXd(pred_src));
    nd::Var pt = nd::constant(Eigen::MatrixXd(pred_tgt));
    return nd::value_of(rating_loss_graph(ps, truth_src, pt))(0, 0);
}

double total_loss(double rating, double vertical, double horizontal, const LossWeights& w) {
    if (!std::isfinite(rating) || !std::isfinite(vertical) || !std::isfinite(horizontal)) {
        throw std::invalid_argument("total_loss: components must be finite");
    }
    // mirrors the graph association: (rating + wv*v) + wh*h
    const double partial = rating + w.vertical * vertical;
    return partial + w.horizontal * horizontal;
}

LossReport train_step(ModelParams& params, AdamState& adam, const LossWeights& weights,
                      const AlignConfig& align, const data::Batch& source,
                      const data::Batch& target) {
    LossGraph g = build_loss_graph(params, weights, align, source, target);
    LossReport report;
    report.rating = g.rating->value(0, 0);
    report.vertical = g.vertical ? g.vertical->value(0, 0) : 0.0;
    report.horizontal = g.horizontal ? g.horizontal->value(0, 0) : 0.0;
    report.total = g.total->value(0, 0);
    if (!std::isfinite(report.total)) {
        std::ostringstream msg;
        msg << "train_step: non-finite loss (rating=" << report.rating
            << ", vertical=" << report.vertical << ", horizontal=" << report.horizontal << ")";
        throw std::runtime_error(msg.str());
    }
    nd::backward(g.total);
    for (const auto& [name, var] : params.named) {
        if (nd::grad_valid(var) && !var->grad.allFinite()) {
            throw std::runtime_error("train_step: non-finite gradient for " + name);
        }
    }
    adam_step(params, adam);
    return report;
}

// ---- checkpoint -----------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'F', 'A', 'A'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

void put_matrix(std::string& buf, const Eigen::MatrixXd& m) {
    put_u32(buf, static_cast<std::uint32_t>(m.rows()));
    put_u32(buf, static_cast<std::uint32_t>(m.cols()));
    for (nd::Index i = 0; i < m.rows(); ++i) {
        for (nd::Index j = 0; j < m.cols(); ++j) {
            put_f64(buf, m(i, j));
        }
    }
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
            fail("truncated checkpoint");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(
                     data[at + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        at += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(
                     data[at + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        at += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data.substr(at, n);
        at += n;
        return s;
    }
    Eigen::MatrixXd matrix() {
        const std::uint32_t rows = u32();
        const std::uint32_t cols = u32();
        Eigen::MatrixXd m(static_cast<nd::Index>(rows), static_cast<nd::Index>(cols));
        for (nd::Index i = 0; i < m.rows(); ++i) {
            for (nd::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = f64();
            }
        }
        return m;
    }
};

} // namespace

void save_checkpoint(const ModelParams& params, const AdamState* adam,
                     const std::string& config_text, const std::string& path) {
    std::string buf;
    buf.append(kCheckpointMagic, 4);
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(config_text.size()));
    buf += config_text;
    put_u32(buf, static_cast<std::uint32_t>(params.named.size()));
    for (const auto& [name, var] : params.named) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        put_matrix(buf, var->value);
    }
    buf.push_back(adam ? 1 : 0);
    if (adam) {
        put_u64(buf, static_cast<std::uint64_t>(adam->step_count));
        put_f64(buf, adam->lr);
        put_f64(buf, adam->beta1);
        put_f64(buf, adam->beta2);
        put_f64(buf, adam->eps);
        for (std::size_t i = 0; i < params.named.size(); ++i) {
            put_matrix(buf, adam->m[i]);
            put_matrix(buf, adam->v[i]);
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_checkpoint: cannot open " + path);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw std::runtime_error("save_checkpoint: write failed for " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_checkpoint: cannot open " + path);
    }
    Reader r;
    r.path = path;
    {
        std::ostringstream ss;
        ss << in.rdbuf();
        r.data = ss.str();
    }
    if (r.data.size() < 4 || std::memcmp(r.data.data(), kCheckpointMagic, 4) != 0) {
        r.fail("bad magic, not a checkpoint");
    }
    r.at = 4;
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        r.fail("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    const std::uint32_t cfg_len = r.u32();
    ck.config_text = r.bytes(cfg_len);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        ck.values.emplace_back(std::move(name), nd::Matrix::from_eigen(r.matrix()));
    }
    r.need(1);
    ck.has_adam = r.data[r.at++] != 0;
    if (ck.has_adam) {
        ck.adam_step_count = static_cast<long>(r.u64());
        ck.adam_lr = r.f64();
        ck.adam_beta1 = r.f64();
        ck.adam_beta2 = r.f64();
        ck.adam_eps = r.f64();
        for (std::uint32_t i = 0; i < count; ++i) {
            ck.adam_m.push_back(r.matrix());
            ck.adam_v.push_back(r.matrix());
        }
    }
    if (r.at != r.data.size()) {
        r.fail("trailing bytes after checkpoint payload");
    }
    return ck;
}

void restore_checkpoint(const Checkpoint& ck, ModelParams& params, AdamState* adam) {
    if (ck.values.size() != params.named.size()) {
        throw std::runtime_error("restore_checkpoint: parameter count mismatch");
    }
    for (std::size_t i = 0; i < ck.values.size(); ++i) {
        const auto& [name, value] = ck.values[i];
        auto& [expect_name, var] = params.named[i];
        if (name != expect_name) {
            throw std::runtime_error("restore_checkpoint: expected parameter '" + expect_name +
                                     "', found '" + name + "'");
        }
        if (value.rows() != var->value.rows() || value.cols() != var->value.cols()) {
            throw std::runtime_error("restore_checkpoint: shape mismatch for '" + name + "'");
        }
        var->value = value.mat();
    }
    if (adam) {
        if (!ck.has_adam) {
            throw std::runtime_error("restore_checkpoint: checkpoint carries no optimizer state");
        }
        adam->step_count = ck.adam_step_count;
        adam->lr = ck.adam_lr;
        adam->beta1 = ck.adam_beta1;
        adam->beta2 = ck.adam_beta2;
        adam->eps = ck.adam_eps;
        adam->m = ck.adam_m;
        adam->v = ck.adam_v;
    }
}

} // namespace cfaa::model
