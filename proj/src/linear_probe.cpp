#include "oscope/linear_probe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "oscope/errors.hpp"
#include "oscope/parallel.hpp"
#include "oscope/rng.hpp"

namespace oscope {

namespace {

constexpr double kFiniteDifferenceStep = 1e-4;
constexpr std::size_t kMinCheckedParams = 100;
// Central differences carry O(h^2) ~ 1e-8 truncation error, so gradients
// smaller than this are compared on an absolute scale.
constexpr double kRelativeErrorFloor = 1e-5;

// Four interleaved partial sums so the compiler can vectorize without
// reassociation flags; the summation order is fixed, so results stay bitwise
// reproducible.
double dot4(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) s0 += a[k] * b[k];
    return (s0 + s1) + (s2 + s3);
}

void softmax_inplace(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (auto& v : z) s += (v = std::exp(v - m));
    for (auto& v : z) v /= s;
}

void init_params(LinearProbe& p, InitScheme init, std::uint64_t seed) {
    p.weights.assign(p.classes() * p.dim, 0.0);
    p.bias.assign(p.classes(), 0.0);
    if (init == InitScheme::Zero) return;
    Xoshiro256 rng(stream_seed(seed, 0x1417));
    const double a = std::sqrt(6.0 / static_cast<double>(p.dim + p.classes()));
    for (auto& w : p.weights) w = (2.0 * rng.uniform() - 1.0) * a;
}

struct Dataset {
    std::vector<double> x;  // n x dim
    std::vector<std::size_t> y;
    std::size_t dim = 0;
    std::size_t size() const { return y.size(); }
    std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
};

void append_row(Dataset& d, std::span<const float> v, std::size_t label) {
    d.x.insert(d.x.end(), v.begin(), v.end());
    d.y.push_back(label);
}

// Objective and gradient over a subset of rows of `data`.
double batch_objective(const LinearProbe& p, const Dataset& data, std::span<const std::size_t> rows, double l2,
                       std::vector<double>* grad) {
    const std::size_t C = p.classes(), D = p.dim;
    if (grad) grad->assign(C * D + C, 0.0);
    double loss = 0.0;
    for (std::size_t r : rows) {
        auto x = data.row(r);
        auto prob = p.logits(x);
        softmax_inplace(prob);
        loss -= std::log(std::max(prob[data.y[r]], 1e-300));
        if (!grad) continue;
        prob[data.y[r]] -= 1.0;
        for (std::size_t c = 0; c < C; ++c) {
            double* gw = grad->data() + c * D;
            for (std::size_t k = 0; k < D; ++k) gw[k] += prob[c] * x[k];
            (*grad)[C * D + c] += prob[c];
        }
    }
    const double n = static_cast<double>(rows.size());
    loss /= n;
    double sq = 0.0;
    for (double w : p.weights) sq += w * w;
    loss += l2 * sq;
    if (grad) {
        for (auto& g : *grad) g /= n;
        for (std::size_t i = 0; i < C * D; ++i) (*grad)[i] += 2.0 * l2 * p.weights[i];
    }
    return loss;
}

double accuracy_on(const LinearProbe& p, const Dataset& data) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < data.size(); ++i) ok += p.predict(data.row(i)) == data.y[i];
    return data.size() ? static_cast<double>(ok) / static_cast<double>(data.size()) : 0.0;
}

std::string_view init_name(InitScheme s) { return s == InitScheme::Zero ? "zero" : "xavier_uniform"; }

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValueError("learning_rate must be > 0");
    if (epochs < 0) throw ValueError("epochs must be >= 0");
    if (batch_size < 1) throw ValueError("batch_size must be >= 1");
    if (!(l2 >= 0.0)) throw ValueError("l2 must be >= 0");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ValueError("split_fraction must be in (0, 1)");
}

Json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"lr_schedule", "cosine"}, {"epochs", c.epochs},
            {"batch_size", c.batch_size},       {"l2", c.l2},              {"split_fraction", c.split_fraction},
            {"seed", c.seed},                   {"init", init_name(c.init)}};
}

TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.l2 = j.value("l2", c.l2);
    c.split_fraction = j.value("split_fraction", c.split_fraction);
    c.seed = j.value("seed", c.seed);
    const auto init = j.value("init", std::string("xavier_uniform"));
    if (init == "zero")
        c.init = InitScheme::Zero;
    else if (init != "xavier_uniform")
        throw ValueError("unknown init scheme '" + init + "'");
    c.validate();
    return c;
}

std::vector<double> LinearProbe::logits(std::span<const double> x) const {
    if (x.size() != dim) throw DimError("probe dim " + std::to_string(dim) + " != input dim " + std::to_string(x.size()));
    std::vector<double> z(bias);
    for (std::size_t c = 0; c < classes(); ++c) z[c] += dot4(weights.data() + c * dim, x.data(), dim);
    return z;
}

std::vector<double> LinearProbe::probabilities(std::span<const double> x) const {
    auto z = logits(x);
    softmax_inplace(z);
    return z;
}

std::size_t LinearProbe::predict(std::span<const double> x) const {
    auto z = logits(x);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

Json to_json(const LinearProbe& p) {
    return {{"dim", p.dim},         {"class_names", p.class_names}, {"weights", p.weights},
            {"bias", p.bias},       {"trained_on", p.trained_on},   {"target_group", p.target_group}};
}

LinearProbe linear_probe_from_json(const Json& j) {
    LinearProbe p;
    p.dim = j.at("dim").get<std::size_t>();
    p.class_names = j.at("class_names").get<std::vector<std::string>>();
    p.weights = j.at("weights").get<std::vector<double>>();
    p.bias = j.at("bias").get<std::vector<double>>();
    p.trained_on = j.value("trained_on", "");
    p.target_group = j.value("target_group", "");
    if (p.classes() < 2 || p.weights.size() != p.classes() * p.dim || p.bias.size() != p.classes())
        throw FormatError("probe JSON has inconsistent shapes");
    return p;
}

std::string history_csv(std::span<const EpochRecord> history) {
    std::string out = "epoch,learning_rate,train_loss,train_accuracy\n";
    for (const auto& h : history)
        out += std::to_string(h.epoch) + "," + fixed(h.learning_rate, 8) + "," + fixed(h.train_loss, 8) + "," +
               fixed(h.train_accuracy, 6) + "\n";
    return out;
}

TrainResult train_probe(const EmbeddingStore& embeddings, const Labels& labels, const TrainConfig& cfg,
                        const std::string& target_group) {
    cfg.validate();
    std::map<std::string, std::vector<std::string>> by_class;
    for (const auto& [id, cls] : labels) {
        if (!embeddings.contains(id)) throw KeyError("labeled id '" + id + "' is not in the store");
        by_class[cls].push_back(id);
    }
    if (by_class.size() < 2) throw ValueError("probe training needs at least 2 classes, got " + std::to_string(by_class.size()));
    for (const auto& [cls, ids] : by_class)
        if (ids.size() < 2) throw ValueError("class '" + cls + "' has fewer than 2 examples");

    LinearProbe probe;
    probe.dim = embeddings.dim();
    probe.trained_on = embeddings.model_id();
    probe.target_group = target_group;
    for (const auto& [cls, ids] : by_class) probe.class_names.push_back(cls);

    // Stratified split: every class keeps at least one example on each side.
    Dataset train, heldout;
    train.dim = heldout.dim = probe.dim;
    Xoshiro256 split_rng(stream_seed(cfg.seed, 0x5b117));
    std::size_t cls_index = 0;
    for (auto& [cls, ids] : by_class) {
        std::sort(ids.begin(), ids.end(), [&](const auto& a, const auto& b) {
            return *embeddings.find(a) < *embeddings.find(b);
        });
        for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[split_rng.below(i)]);
        auto n_train = static_cast<std::size_t>(std::llround(cfg.split_fraction * static_cast<double>(ids.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
        for (std::size_t i = 0; i < ids.size(); ++i)
            append_row(i < n_train ? train : heldout, embeddings.at(ids[i]), cls_index);
        ++cls_index;
    }

    init_params(probe, cfg.init, cfg.seed);
    const std::size_t batches_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const double total_steps = static_cast<double>(batches_per_epoch) * cfg.epochs;
    std::vector<std::size_t> order(train.size());
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> grad;

    TrainResult result;
    std::size_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Xoshiro256 rng(stream_seed(cfg.seed, 0x10000 + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double lr = cfg.learning_rate;
        for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            batch_objective(probe, train, std::span(order).subspan(begin, end - begin), cfg.l2, &grad);
            lr = cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
            const std::size_t nw = probe.weights.size();
            for (std::size_t i = 0; i < nw; ++i) probe.weights[i] -= lr * grad[i];
            for (std::size_t c = 0; c < probe.classes(); ++c) probe.bias[c] -= lr * grad[nw + c];
        }
        const double loss = batch_objective(probe, train, all, cfg.l2, nullptr);
        if (!std::isfinite(loss)) throw TrainingError("probe loss diverged at epoch " + std::to_string(epoch + 1));
        result.history.push_back({epoch + 1, lr, loss, accuracy_on(probe, train)});
    }
    result.heldout_accuracy = accuracy_on(probe, heldout);
    result.train_size = train.size();
    result.heldout_size = heldout.size();
    result.probe = std::move(probe);
    return result;
}

std::map<std::string, TrainResult> train_group_probes(const EmbeddingStore& embeddings,
                                                      const std::map<std::string, Labels>& labels_by_group,
                                                      const TrainConfig& cfg) {
    std::vector<const std::pair<const std::string, Labels>*> groups;
    for (const auto& g : labels_by_group) groups.push_back(&g);
    std::vector<TrainResult> results(groups.size());
    parallel_for(groups.size(), 1, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            results[i] = train_probe(embeddings, groups[i]->second, cfg, groups[i]->first);
    });
    std::map<std::string, TrainResult> out;
    for (std::size_t i = 0; i < groups.size(); ++i) out.emplace(groups[i]->first, std::move(results[i]));
    return out;
}

double eval_probe(const LinearProbe& probe, const EmbeddingStore& embeddings, const Labels& labels) {
    if (probe.dim != embeddings.dim())
        throw DimError("probe dim " + std::to_string(probe.dim) + " != store dim " + std::to_string(embeddings.dim()));
    if (labels.empty()) throw ValueError("cannot evaluate a probe on an empty label set");
    std::size_t ok = 0;
    std::vector<double> x(probe.dim);
    for (const auto& [id, cls] : labels) {
        auto v = embeddings.at(id);
        auto it = std::find(probe.class_names.begin(), probe.class_names.end(), cls);
        if (it == probe.class_names.end()) throw KeyError("class '" + cls + "' is unknown to the probe");
        x.assign(v.begin(), v.end());
        ok += probe.predict(x) == static_cast<std::size_t>(it - probe.class_names.begin());
    }
    return static_cast<double>(ok) / static_cast<double>(labels.size());
}

double probe_loss(const LinearProbe& probe, const SampleBatch& batch, double l2, std::vector<double>* grad) {
    Dataset d{batch.features, batch.labels, batch.dim};
    std::vector<std::size_t> rows(batch.size());
    std::iota(rows.begin(), rows.end(), 0);
    return batch_objective(probe, d, rows, l2, grad);
}

double grad_check(const TrainConfig& cfg, const SampleBatch& batch) {
    if (batch.size() == 0 || batch.classes < 2 || batch.features.size() != batch.size() * batch.dim)
        throw ValueError("gradient check needs a non-empty batch with >= 2 classes");
    LinearProbe probe;
    probe.dim = batch.dim;
    for (std::size_t c = 0; c < batch.classes; ++c) probe.class_names.push_back(std::to_string(c));
    init_params(probe, cfg.init, cfg.seed);

    std::vector<double> analytic;
    probe_loss(probe, batch, cfg.l2, &analytic);
    const std::size_t nw = probe.weights.size();
    const std::size_t total = nw + probe.bias.size();

    std::vector<std::size_t> params(total);
    std::iota(params.begin(), params.end(), 0);
    if (total > kMinCheckedParams) {
        Xoshiro256 rng(stream_seed(cfg.seed, 0x9c));
        for (std::size_t i = 0; i < kMinCheckedParams; ++i) std::swap(params[i], params[i + rng.below(total - i)]);
        params.resize(kMinCheckedParams);
    }

    double worst = 0.0;
    for (std::size_t p : params) {
        double& theta = p < nw ? probe.weights[p] : probe.bias[p - nw];
        const double saved = theta;
        theta = saved + kFiniteDifferenceStep;
        const double up = probe_loss(probe, batch, cfg.l2);
        theta = saved - kFiniteDifferenceStep;
        const double down = probe_loss(probe, batch, cfg.l2);
        theta = saved;
        const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
        const double denom = std::max({std::abs(analytic[p]), std::abs(numeric), kRelativeErrorFloor});
        worst = std::max(worst, std::abs(analytic[p] - numeric) / denom);
    }
    return worst;
}

}  // namespace oscope
