#include "xbias/tcav/tcav.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "xbias/core/seed.hpp"

namespace xbias::tcav {

Vector layer_activation(const nn::Network& net, std::size_t layer_index, const nn::Tensor& input) {
    return net.trace(input).at(layer_index).values;
}

CAV train_cav_on_activations(std::span<const Vector> positives, std::span<const Vector> negatives,
                             const std::string& layer, const std::string& concept_name, std::uint64_t seed,
                             const CavOptions& options) {
    if (positives.size() < 2 || negatives.size() < 2) {
        throw Error(fmt::format("cset '{}' needs at least two examples per side", concept_name));
    }
    const std::size_t dim = positives.front().size();
    for (auto side : {positives, negatives}) {
        for (const auto& v : side) {
            if (v.size() != dim) throw Error("activation sizes differ within a cset");
        }
    }

    std::mt19937_64 rng(seed);
    auto split = [&](std::span<const Vector> side, std::vector<const Vector*>& train, std::vector<const Vector*>& held) {
        std::vector<std::size_t> idx(side.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_held = static_cast<std::size_t>(std::ceil(options.holdout_fraction * static_cast<double>(side.size())));
        n_held = std::clamp<std::size_t>(n_held, 1, side.size() - 1);
        for (std::size_t k = 0; k < n_held; ++k) held.push_back(&side[idx[k]]);
        std::vector<const Vector*> rest;
        for (std::size_t k = n_held; k < idx.size(); ++k) rest.push_back(&side[idx[k]]);
        if (options.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
            for (std::size_t k = 0; k < rest.size(); ++k) train.push_back(rest[pick(rng)]);
        } else {
            train = rest;
        }
    };
    std::vector<const Vector*> pos_train, pos_held, neg_train, neg_held;
    split(positives, pos_train, pos_held);
    split(negatives, neg_train, neg_held);

    const auto n = static_cast<Eigen::Index>(pos_train.size() + neg_train.size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim));
    Eigen::VectorXd y(n);
    Eigen::Index row = 0;
    for (const auto* v : pos_train) { x.row(row) = Eigen::Map<const Eigen::RowVectorXd>(v->data(), dim); y(row++) = 1; }
    for (const auto* v : neg_train) { x.row(row) = Eigen::Map<const Eigen::RowVectorXd>(v->data(), dim); y(row++) = 0; }

    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::RowVectorXd spread = x.cwiseAbs().colwise().maxCoeff();
    if (spread.maxCoeff() <= 1e-12) {
        throw Error(fmt::format("degenerate activations for cset '{}' at layer '{}'", concept_name, layer));
    }
    const double scale = std::sqrt(x.squaredNorm() / static_cast<double>(n));

    // Adam on the mean logistic loss plus an L2 penalty; the problem is
    // rescaled so the step size does not depend on the activation magnitude.
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    double b = 0;
    Eigen::VectorXd m = w, v = w;
    double mb = 0, vb = 0;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const Eigen::MatrixXd xs = x / scale;
    for (int it = 1; it <= options.iterations; ++it) {
        Eigen::VectorXd z = (xs * w).array() + b;
        Eigen::VectorXd r = z.unaryExpr([](double t) { return 1.0 / (1.0 + std::exp(-t)); }) - y;
        Eigen::VectorXd gw = xs.transpose() * r / static_cast<double>(n) + options.l2 * w;
        const double gb = r.mean();
        m = beta1 * m + (1 - beta1) * gw;
        v = beta2 * v + (1 - beta2) * gw.cwiseAbs2();
        mb = beta1 * mb + (1 - beta1) * gb;
        vb = beta2 * vb + (1 - beta2) * gb * gb;
        const double c1 = 1 - std::pow(beta1, it), c2 = 1 - std::pow(beta2, it);
        w -= (options.learning_rate * (m / c1).array() / ((v / c2).cwiseSqrt().array() + eps)).matrix();
        b -= options.learning_rate * (mb / c1) / (std::sqrt(vb / c2) + eps);
    }
    const double norm = w.norm();
    if (!(norm > 0) || !std::isfinite(norm)) {
        throw Error(fmt::format("could not separate cset '{}' at layer '{}'", concept_name, layer));
    }

    CAV cav;
    cav.concept_name = concept_name;
    cav.layer = layer;
    cav.seed = seed;
    cav.direction.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) cav.direction[i] = w(static_cast<Eigen::Index>(i)) / norm;

    std::size_t right = 0;
    auto classify = [&](const Vector* a) {
        double z = b;
        for (std::size_t i = 0; i < dim; ++i) z += w(static_cast<Eigen::Index>(i)) * ((*a)[i] - mean(static_cast<Eigen::Index>(i))) / scale;
        return z > 0;
    };
    for (const auto* a : pos_held) right += classify(a);
    for (const auto* a : neg_held) right += !classify(a);
    cav.accuracy = static_cast<double>(right) / static_cast<double>(pos_held.size() + neg_held.size());
    return cav;
}

ConceptActivations concept_activations(const nn::Network& net, std::size_t layer_index,
                                       const dataset::ConceptSet& cset) {
    ConceptActivations acts;
    acts.name = cset.name;
    for (const auto& img : cset.positives) acts.positives.push_back(layer_activation(net, layer_index, nn::to_tensor(img)));
    for (const auto& img : cset.negatives) acts.negatives.push_back(layer_activation(net, layer_index, nn::to_tensor(img)));
    return acts;
}

CAV train_cav(const nn::Network& net, const std::string& layer, const dataset::ConceptSet& cset,
              std::uint64_t seed, const CavOptions& options) {
    cset.validate();
    const auto acts = concept_activations(net, net.index_of(layer), cset);
    return train_cav_on_activations(acts.positives, acts.negatives, layer, cset.name, seed, options);
}

Vector class_gradient(const nn::Network& net, std::size_t layer_index, const nn::Tensor& input, int target_class) {
    const auto outs = net.trace(input);
    nn::Tensor onehot(outs.back().shape);
    onehot.values.at(static_cast<std::size_t>(target_class)) = 1.0;
    return net.gradient_wrt_output(layer_index, outs.at(layer_index), onehot).values;
}

double directional_derivative(const nn::Network& net, const std::string& layer, const nn::Tensor& input,
                              int target_class, const CAV& cav) {
    if (cav.layer != layer) throw Error(fmt::format("CAV was trained at '{}', not '{}'", cav.layer, layer));
    const auto g = class_gradient(net, net.index_of(layer), input, target_class);
    if (g.size() != cav.direction.size()) throw Error("CAV and activation sizes differ");
    return std::inner_product(g.begin(), g.end(), cav.direction.begin(), 0.0);
}

double score_from_gradients(std::span<const Vector> gradients, const CAV& cav) {
    if (gradients.empty()) throw Error("no class images to score");
    std::size_t positive = 0;
    for (const auto& g : gradients) {
        if (g.size() != cav.direction.size()) throw Error("CAV and activation sizes differ");
        positive += std::inner_product(g.begin(), g.end(), cav.direction.begin(), 0.0) > 0;
    }
    return 100.0 * static_cast<double>(positive) / static_cast<double>(gradients.size());
}

Significance significance_test(std::span<const double> a, std::span<const double> b, double alpha) {
    if (a.size() < 2 || b.size() < 2) throw Error("significance test needs at least two runs per side");
    auto moments = [](std::span<const double> s) {
        const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
        double ss = 0;
        for (double v : s) ss += (v - mean) * (v - mean);
        return std::pair{mean, ss / static_cast<double>(s.size() - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    Significance s;
    const double se2 = va / na + vb / nb;
    if (se2 <= 0) {
        s.p_value = ma == mb ? 1.0 : 0.0;
        s.t_statistic = ma == mb ? 0.0 : std::copysign(INFINITY, ma - mb);
    } else {
        s.t_statistic = (ma - mb) / std::sqrt(se2);
        s.degrees_of_freedom = se2 * se2 / ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
        const boost::math::students_t dist(s.degrees_of_freedom);
        s.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(s.t_statistic))));
    }
    s.significant = s.p_value < alpha;
    return s;
}

std::vector<CAV> train_cav_runs(const ConceptActivations& acts, const std::string& layer, int n_runs,
                                std::uint64_t seed, const CavOptions& options) {
    if (n_runs < 1) throw ConfigError("n_runs must be positive");
    CavOptions opts = options;
    opts.bootstrap = true;
    std::vector<CAV> out;
    for (int r = 0; r < n_runs; ++r) {
        out.push_back(train_cav_on_activations(acts.positives, acts.negatives, layer, acts.name,
                                               derive_seed(seed, acts.name, fmt::format("run-{}", r)), opts));
    }
    return out;
}

std::vector<CAV> train_random_runs(std::span<const Vector> pool, std::size_t cardinality, const std::string& layer,
                                   int n_runs, std::uint64_t seed, const CavOptions& options) {
    if (n_runs < 1) throw ConfigError("n_runs must be positive");
    cardinality = std::min(cardinality, pool.size() / 2);
    if (cardinality < 2) throw Error("random cset pool is too small");
    std::vector<CAV> out;
    for (int r = 0; r < n_runs; ++r) {
        const auto run_seed = derive_seed(seed, "random", fmt::format("run-{}", r));
        std::mt19937_64 rng(run_seed);
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<Vector> pos, neg;
        for (std::size_t k = 0; k < cardinality; ++k) {
            pos.push_back(pool[idx[k]]);
            neg.push_back(pool[idx[cardinality + k]]);
        }
        out.push_back(train_cav_on_activations(pos, neg, layer, fmt::format("random-{}", r), run_seed, options));
    }
    return out;
}

TCAVResult tcav_from_runs(std::span<const Vector> class_gradients, int target_class, std::span<const CAV> runs,
                          std::span<const CAV> random_runs, double alpha) {
    if (runs.empty()) throw Error("no CAV runs");
    TCAVResult r;
    r.target_class = target_class;
    r.concept_name = runs.front().concept_name;
    r.layer = runs.front().layer;
    r.alpha = alpha;
    for (const auto& cav : runs) r.run_scores.push_back(score_from_gradients(class_gradients, cav));
    for (const auto& cav : random_runs) r.random_scores.push_back(score_from_gradients(class_gradients, cav));
    r.score = std::accumulate(r.run_scores.begin(), r.run_scores.end(), 0.0) / static_cast<double>(r.run_scores.size());
    if (r.run_scores.size() >= 2 && r.random_scores.size() >= 2) {
        const auto s = significance_test(r.run_scores, r.random_scores, alpha);
        r.p_value = s.p_value;
        r.significant = s.significant;
    }
    return r;
}

TCAVResult tcav_score(const nn::Network& net, const std::string& layer, const dataset::ConceptSet& cset,
                      std::span<const nn::Tensor> class_inputs, int target_class, int n_runs, std::uint64_t seed,
                      const CavOptions& options) {
    if (class_inputs.empty()) throw Error("no class images to score");
    cset.validate();
    const auto li = net.index_of(layer);
    const auto acts = concept_activations(net, li, cset);
    const auto runs = train_cav_runs(acts, layer, n_runs, seed, options);
    const auto random = train_random_runs(acts.negatives, acts.positives.size(), layer, n_runs, seed, options);
    std::vector<Vector> grads;
    for (const auto& x : class_inputs) grads.push_back(class_gradient(net, li, x, target_class));
    return tcav_from_runs(grads, target_class, runs, random);
}

nlohmann::json TCAVResult::to_json() const {
    return {{"class", target_class}, {"cset", concept_name}, {"layer", layer},
            {"score", score},        {"run_scores", run_scores}, {"random_scores", random_scores},
            {"p_value", p_value},    {"significant", significant}, {"alpha", alpha},
            {"test", "welch"}};
}

} // namespace xbias::tcav
