#include "oscope/contrastive_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/random/chi_squared_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include "oscope/errors.hpp"
#include "oscope/parallel.hpp"
#include "oscope/rng.hpp"

namespace oscope {

namespace {

constexpr double kE = std::numbers::e;

// Draws one latent vector in place.
template <typename Normal>
void draw_latent(std::span<double> out, LatentDistribution dist, Xoshiro256& rng, Normal& normal) {
    if (dist == LatentDistribution::Gaussian) {
        for (auto& x : out) x = normal(rng);
        return;
    }
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (i % 64 == 0) bits = rng();
        out[i] = (bits & 1) ? 1.0 : -1.0;
        bits >>= 1;
    }
}

struct TrialValue {
    double ideal;
    double truncated;
};

// Chi-square draw that accepts 0 degrees of freedom.
double chi_squared(std::size_t dof, Xoshiro256& rng) {
    if (dof == 0) return 0.0;
    return boost::random::chi_squared_distribution<double>(static_cast<double>(dof))(rng);
}

TrialValue objective_from(double zz_head, double zz_tail, std::span<const double> dot_head,
                          std::span<const double> xx_head, std::span<const double> dot_tail,
                          std::span<const double> xx_tail) {
    // The positive pair is the same latent on both sides, so its cosine is 1 for
    // either encoder; only the negatives differ.
    const double zz = zz_head + zz_tail;
    double neg_ideal = 0.0, neg_trunc = 0.0;
    for (std::size_t j = 0; j < dot_head.size(); ++j) {
        const double denom_ideal = std::sqrt(zz * (xx_head[j] + xx_tail[j]));
        const double denom_trunc = std::sqrt(zz_head * xx_head[j]);
        neg_ideal += std::exp(denom_ideal > 0.0 ? (dot_head[j] + dot_tail[j]) / denom_ideal : 0.0);
        neg_trunc += std::exp(denom_trunc > 0.0 ? dot_head[j] / denom_trunc : 0.0);
    }
    return {kE / (kE + neg_ideal), kE / (kE + neg_trunc)};
}

TrialValue run_trial(const SimConfig& cfg, std::uint64_t trial, std::vector<double>& z, std::vector<double>& x) {
    Xoshiro256 rng(stream_seed(cfg.seed, trial));
    boost::random::normal_distribution<double> normal;
    const std::size_t head = cfg.d - cfg.k;
    std::vector<double> dot_head(cfg.b), xx_head(cfg.b), dot_tail(cfg.b), xx_tail(cfg.b);

    if (cfg.distribution == LatentDistribution::Gaussian && !cfg.direct_sampling) {
        const double zz_head = chi_squared(head, rng), zz_tail = chi_squared(cfg.k, rng);
        const double z_head = std::sqrt(zz_head), z_tail = std::sqrt(zz_tail);
        for (std::size_t j = 0; j < cfg.b; ++j) {
            const double g_head = normal(rng);
            const double g_tail = cfg.k ? normal(rng) : 0.0;
            dot_head[j] = z_head * g_head;
            xx_head[j] = g_head * g_head + chi_squared(head - 1, rng);
            dot_tail[j] = z_tail * g_tail;
            xx_tail[j] = cfg.k ? g_tail * g_tail + chi_squared(cfg.k - 1, rng) : 0.0;
        }
        return objective_from(zz_head, zz_tail, dot_head, xx_head, dot_tail, xx_tail);
    }

    draw_latent(z, cfg.distribution, rng, normal);
    double zz_head = 0.0, zz_tail = 0.0;
    for (std::size_t i = 0; i < head; ++i) zz_head += z[i] * z[i];
    for (std::size_t i = head; i < cfg.d; ++i) zz_tail += z[i] * z[i];
    for (std::size_t j = 0; j < cfg.b; ++j) {
        draw_latent(x, cfg.distribution, rng, normal);
        double dh = 0.0, xh = 0.0, dt = 0.0, xt = 0.0;
        for (std::size_t i = 0; i < head; ++i) {
            dh += z[i] * x[i];
            xh += x[i] * x[i];
        }
        for (std::size_t i = head; i < cfg.d; ++i) {
            dt += z[i] * x[i];
            xt += x[i] * x[i];
        }
        dot_head[j] = dh;
        xx_head[j] = xh;
        dot_tail[j] = dt;
        xx_tail[j] = xt;
    }
    return objective_from(zz_head, zz_tail, dot_head, xx_head, dot_tail, xx_tail);
}

}  // namespace

void SimConfig::validate() const {
    if (d < 1) throw ValueError("latent dimension d must be >= 1");
    if (k >= d) throw ValueError("truncation k=" + std::to_string(k) + " must be < d=" + std::to_string(d));
    if (b < 1) throw ValueError("number of negatives b must be >= 1");
    if (trials < 1) throw ValueError("trials must be >= 1");
}

double analytic_limit(std::size_t b) { return kE / (kE + static_cast<double>(b)); }

ObjectiveSamples objective_samples(const SimConfig& cfg) {
    cfg.validate();
    ObjectiveSamples out{std::vector<double>(cfg.trials), std::vector<double>(cfg.trials)};
    const bool direct = cfg.direct_sampling || cfg.distribution != LatentDistribution::Gaussian;
    const std::size_t work = (direct ? cfg.d : 4) * (cfg.b + 1);
    const std::size_t grain = std::max<std::size_t>(1, (1u << 22) / work);
    parallel_for(cfg.trials, grain, [&](std::size_t begin, std::size_t end) {
        std::vector<double> z(direct ? cfg.d : 0), x(direct ? cfg.d : 0);
        for (std::size_t t = begin; t < end; ++t) {
            auto v = run_trial(cfg, t, z, x);
            out.ideal[t] = v.ideal;
            out.truncated[t] = v.truncated;
        }
    });
    return out;
}

SimEstimate summarize(std::span<const double> values, std::size_t b) {
    if (values.empty()) throw ValueError("no samples to summarize");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n), analytic_limit(b)};
}

SimEstimate estimate_objective(const SimConfig& cfg, EncoderKind encoder) {
    auto s = objective_samples(cfg);
    return summarize(encoder == EncoderKind::Ideal ? s.ideal : s.truncated, cfg.b);
}

std::vector<SweepPoint> convergence_sweep(std::size_t b, std::size_t k, std::span<const std::size_t> dims,
                                          std::size_t trials, std::uint64_t seed, LatentDistribution distribution) {
    if (dims.empty()) throw ValueError("convergence sweep needs at least one dimension");
    for (std::size_t i = 1; i < dims.size(); ++i)
        if (dims[i] <= dims[i - 1]) throw ValueError("sweep dimensions must be strictly increasing");
    std::vector<SweepPoint> out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        SimConfig cfg{dims[i], k, b, trials, stream_seed(seed, dims[i]), distribution};
        auto s = objective_samples(cfg);
        out.push_back({dims[i], summarize(s.ideal, b), summarize(s.truncated, b)});
    }
    return out;
}

Json to_json(const SimEstimate& e) {
    return {{"mean", e.mean}, {"std_error", e.std_error}, {"analytic_limit", e.analytic_limit}};
}

Json to_json(const SweepPoint& p) {
    return {{"d", p.d}, {"ideal", to_json(p.ideal)}, {"truncated", to_json(p.truncated)}};
}

// ---------------------------------------------------------------------------------

void ToyTrainerConfig::validate() const {
    if (d < 2 || vocab_size < positions || positions < 2)
        throw ValueError("toy trainer needs d >= 2, positions >= 2 and vocab_size >= positions");
    if (!(size_order_correlation >= 0.5 && size_order_correlation <= 1.0))
        throw ValueError("size_order_correlation must be in [0.5, 1]");
    if (batch < 2) throw ValueError("batch must be >= 2");
    if (!(learning_rate > 0.0)) throw ValueError("learning_rate must be > 0");
    if (!(large_scale > 1.0)) throw ValueError("large_scale must be > 1");
    if (eval_captions < 1 || checkpoints < 1) throw ValueError("eval_captions and checkpoints must be >= 1");
    if (!(eval_jitter >= 0.0)) throw ValueError("eval_jitter must be >= 0");
}

double large_first_probability(double corr, std::size_t positions) {
    const double chance = 1.0 / static_cast<double>(positions);
    return chance + (2.0 * corr - 1.0) * (1.0 - chance);
}

namespace {

struct ToySample {
    std::vector<std::size_t> caption;  // object indices in mention order
    std::vector<double> image;         // unit vector
};

class ToyWorld {
public:
    explicit ToyWorld(const ToyTrainerConfig& cfg) : cfg_(cfg), basis_(cfg.vocab_size * cfg.d) {
        Xoshiro256 rng(stream_seed(cfg.seed, 0xba5e));
        boost::random::normal_distribution<double> normal;
        for (std::size_t o = 0; o < cfg.vocab_size; ++o) {
            std::vector<double> v(cfg.d);
            for (auto& x : v) x = normal(rng);
            v = normalized_copy_local(v);
            std::copy(v.begin(), v.end(), basis_.begin() + static_cast<std::ptrdiff_t>(o * cfg.d));
        }
    }

    std::span<const double> basis(std::size_t o) const { return {basis_.data() + o * cfg_.d, cfg_.d}; }

    std::vector<std::size_t> draw_objects(Xoshiro256& rng) const {
        std::vector<std::size_t> idx(cfg_.vocab_size);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < cfg_.positions; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        idx.resize(cfg_.positions);
        return idx;
    }

    ToySample draw_training(Xoshiro256& rng, double p_first) const {
        auto objs = draw_objects(rng);  // objs[0] is the large object
        ToySample s;
        std::vector<double> img(cfg_.d, 0.0);
        for (std::size_t i = 0; i < objs.size(); ++i) {
            const double w = i == 0 ? cfg_.large_scale : 1.0;
            auto b = basis(objs[i]);
            for (std::size_t k = 0; k < cfg_.d; ++k) img[k] += w * b[k];
        }
        s.image = normalized_copy_local(img);

        std::size_t large_pos = rng.uniform() < p_first ? 0 : 1 + rng.below(cfg_.positions - 1);
        std::vector<std::size_t> smalls(objs.begin() + 1, objs.end());
        for (std::size_t i = smalls.size(); i > 1; --i) std::swap(smalls[i - 1], smalls[rng.below(i)]);
        s.caption.reserve(cfg_.positions);
        for (std::size_t p = 0, si = 0; p < cfg_.positions; ++p)
            s.caption.push_back(p == large_pos ? objs[0] : smalls[si++]);
        return s;
    }

    std::vector<double> pooled(std::span<const std::size_t> caption, std::span<const double> w) const {
        std::vector<double> u(cfg_.d, 0.0);
        for (std::size_t p = 0; p < caption.size(); ++p) {
            auto b = basis(caption[p]);
            for (std::size_t k = 0; k < cfg_.d; ++k) u[k] += w[p] * b[k];
        }
        return u;
    }

    static std::vector<double> normalized_copy_local(std::vector<double> v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        s = std::sqrt(s);
        if (!(s > 0.0) || !std::isfinite(s)) throw TrainingError("degenerate embedding in toy trainer");
        for (auto& x : v) x /= s;
        return v;
    }

private:
    const ToyTrainerConfig& cfg_;
    std::vector<double> basis_;
};

struct EvalCaption {
    std::vector<std::size_t> objects;
    std::vector<double> jitter;  // per-position weight factors, fixed across checkpoints
};

double first_position_rate(const ToyWorld& world, const ToyTrainerConfig& cfg, const std::vector<EvalCaption>& eval,
                           std::span<const double> w) {
    std::size_t hits = 0, first = 0;
    std::vector<double> wj(cfg.positions);
    for (const auto& [caption, jitter] : eval) {
        for (std::size_t p = 0; p < cfg.positions; ++p) wj[p] = w[p] * jitter[p];
        auto t = world.pooled(caption, wj);
        std::size_t best = 0;
        double best_sim = -2.0;
        for (std::size_t o = 0; o < cfg.vocab_size; ++o) {
            auto b = world.basis(o);
            double s = 0.0;
            for (std::size_t k = 0; k < cfg.d; ++k) s += t[k] * b[k];
            if (s > best_sim) {
                best_sim = s;
                best = o;
            }
        }
        auto it = std::find(caption.begin(), caption.end(), best);
        if (it == caption.end()) continue;
        ++hits;
        first += it == caption.begin();
    }
    return hits ? 100.0 * static_cast<double>(first) / static_cast<double>(hits) : 0.0;
}

}  // namespace

std::vector<ToyCheckpoint> toy_bias_trainer(const ToyTrainerConfig& cfg) {
    cfg.validate();
    ToyWorld world(cfg);
    const double p_first = large_first_probability(cfg.size_order_correlation, cfg.positions);

    // Evaluation captions: uniformly ordered, fixed across checkpoints.
    std::vector<EvalCaption> eval;
    {
        Xoshiro256 rng(stream_seed(cfg.seed, 0xe7a1));
        boost::random::normal_distribution<double> normal;
        for (std::size_t i = 0; i < cfg.eval_captions; ++i) {
            EvalCaption e{world.draw_objects(rng), std::vector<double>(cfg.positions)};
            for (auto& j : e.jitter) j = std::exp(cfg.eval_jitter * normal(rng));
            eval.push_back(std::move(e));
        }
    }

    std::vector<std::size_t> marks;
    for (std::size_t c = 0; c <= cfg.checkpoints; ++c)
        marks.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(c) * static_cast<double>(cfg.steps) /
                                                              static_cast<double>(cfg.checkpoints))));

    std::vector<double> w(cfg.positions, 1.0);
    std::vector<ToyCheckpoint> out;
    double last_objective = 0.0;
    std::size_t next_mark = 0;
    auto record = [&](std::size_t step) {
        while (next_mark < marks.size() && marks[next_mark] == step) {
            out.push_back({step, first_position_rate(world, cfg, eval, w), last_objective, w});
            ++next_mark;
        }
    };
    record(0);

    const std::size_t B = cfg.batch, D = cfg.d;
    std::vector<double> t(B * D), v(B * D), unorm(B), sims(B * B), grad_t(B * D);
    std::vector<std::vector<std::size_t>> captions(B);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        Xoshiro256 rng(stream_seed(cfg.seed, 0x100000 + step));
        for (std::size_t i = 0; i < B; ++i) {
            auto s = world.draw_training(rng, p_first);
            auto u = world.pooled(s.caption, w);
            double n = 0.0;
            for (double x : u) n += x * x;
            n = std::sqrt(n);
            if (!(n > 0.0) || !std::isfinite(n)) throw TrainingError("pooled text embedding degenerated at step " + std::to_string(step));
            unorm[i] = n;
            for (std::size_t k = 0; k < D; ++k) t[i * D + k] = u[k] / n;
            std::copy(s.image.begin(), s.image.end(), v.begin() + static_cast<std::ptrdiff_t>(i * D));
            captions[i] = std::move(s.caption);
        }
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < B; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < D; ++k) s += t[i * D + k] * v[j * D + k];
                sims[i * B + j] = s;
            }

        // Objective: mean over i of exp(s_ii) / sum_j exp(s_ij); gradient ascent on w.
        double objective = 0.0;
        std::fill(grad_t.begin(), grad_t.end(), 0.0);
        for (std::size_t i = 0; i < B; ++i) {
            double denom = 0.0;
            for (std::size_t j = 0; j < B; ++j) denom += std::exp(sims[i * B + j]);
            const double p_ii = std::exp(sims[i * B + i]) / denom;
            objective += p_ii;
            for (std::size_t j = 0; j < B; ++j) {
                const double q_ij = std::exp(sims[i * B + j]) / denom;
                const double ds = p_ii * ((i == j ? 1.0 : 0.0) - q_ij) / static_cast<double>(B);
                for (std::size_t k = 0; k < D; ++k) grad_t[i * D + k] += ds * v[j * D + k];
            }
        }
        last_objective = objective / static_cast<double>(B);
        if (!std::isfinite(last_objective)) throw TrainingError("objective is not finite at step " + std::to_string(step));

        std::vector<double> grad_w(cfg.positions, 0.0);
        for (std::size_t i = 0; i < B; ++i) {
            const double* ti = t.data() + i * D;
            const double* gi = grad_t.data() + i * D;
            double tg = 0.0;
            for (std::size_t k = 0; k < D; ++k) tg += ti[k] * gi[k];
            for (std::size_t p = 0; p < cfg.positions; ++p) {
                auto b = world.basis(captions[i][p]);
                double s = 0.0;
                for (std::size_t k = 0; k < D; ++k) s += (gi[k] - ti[k] * tg) * b[k];
                grad_w[p] += s / unorm[i];
            }
        }
        for (std::size_t p = 0; p < cfg.positions; ++p) {
            w[p] += cfg.learning_rate * grad_w[p];
            if (!std::isfinite(w[p])) throw TrainingError("pooling weights diverged at step " + std::to_string(step));
        }
        record(step);
    }
    return out;
}

Json to_json(const ToyCheckpoint& c) {
    return {{"step", c.step},
            {"first_position_rate", c.first_position_rate},
            {"objective", c.objective},
            {"pooling_weights", c.pooling_weights}};
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValueError("spearman needs equal-length series");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t m = i; m <= j; ++m) r[idx[m]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace oscope
