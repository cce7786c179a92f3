#pragma once

// End-to-end training: linear scores -> pre-Sinkhorn matrix -> incomplete
// Sinkhorn normalization -> expected gain, with the gradient chained back
// through every stage to the weight matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sinkprop/data.hpp"
#include "sinkprop/decode.hpp"
#include "sinkprop/dsm.hpp"
#include "sinkprop/objectives.hpp"
#include "sinkprop/optimize.hpp"
#include "sinkprop/param.hpp"
#include "sinkprop/types.hpp"

namespace sinkprop {

struct Model {
    ParamKind param = ParamKind::SmoothedIndicator;
    Matrix weights; // M x D
    double sigma = 1.0;
    int sinkhorn_iters = kDefaultSinkhornIterations;
    double epsilon = kDefaultEpsilon;
    GainSpec gain = GainSpec::ndcg(10);

    Index num_features() const { return weights.rows(); }

    void validate() const {
        if (weights.cols() != score_dim(param)) {
            throw Error(ErrorCode::DimensionMismatch, "weight columns do not match parameterization");
        }
        if (!(sigma > 0.0)) throw Error(ErrorCode::NonPositiveSigma, "model sigma must be positive");
        if (sinkhorn_iters < 0) throw Error(ErrorCode::InvalidArgument, "sinkhorn_iters must be >= 0");
    }
};

/// Features and labels of one query, unpacked once for repeated evaluation.
struct PreparedQuery {
    Matrix features;
    RelevanceVector relevance;
};

inline std::vector<PreparedQuery> prepare(const std::vector<Query>& queries) {
    std::vector<PreparedQuery> out;
    out.reserve(queries.size());
    for (const Query& q : queries) {
        if (q.documents.empty()) continue;
        out.push_back({q.feature_matrix(), q.relevance()});
    }
    return out;
}

inline Index largest_query(const std::vector<Query>& queries) {
    Index k = 0;
    for (const Query& q : queries) k = std::max(k, q.size());
    return k;
}

/// Rank marginals Pi for one query under `model`.
inline Matrix predict_marginals(const Model& model, const Matrix& features) {
    const Matrix scores = linear_phi(model.weights, features);
    const PreSinkhornPass pre = presinkhorn_forward(model.param, scores, model.sigma);
    return sinkhorn_forward(pre.matrix, model.sinkhorn_iters, model.epsilon).output;
}

inline Permutation rank_query(const Model& model, const Matrix& features,
                              Index cap = kDefaultDecodeCap) {
    return shortcut_decode(predict_marginals(model, features), cap);
}

// ---------------------------------------------------------------------------
// Initialization

inline constexpr double kMleRidge = 1e-8;

/// Least-squares regression of relevance on features (no intercept), with a
/// 1e-8 ridge. For the logit-logistic map the fit fills the location head,
/// negated so that high predicted relevance puts mass in the top bins, and
/// the log-scale head starts at zero.
inline Matrix mle_init(const std::vector<Query>& queries, ParamKind kind) {
    const Index m = max_feature_dim(queries);
    Matrix gram = Matrix::Zero(m, m);
    Vector rhs = Vector::Zero(m);
    Index docs = 0;
    for (const Query& q : queries) {
        for (const Document& d : q.documents) {
            Vector x = Vector::Zero(m);
            x.head(d.features.size()) = d.features;
            gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
            rhs += d.relevance * x;
            ++docs;
        }
    }
    if (docs == 0) throw Error(ErrorCode::EmptyInput, "no documents to initialize from");
    gram.diagonal().array() += kMleRidge;
    const Vector w = gram.ldlt().solve(rhs);

    Matrix weights = Matrix::Zero(m, score_dim(kind));
    weights.col(0) = kind == ParamKind::LogitLogistic ? Vector(-w) : w;
    return weights;
}

// ---------------------------------------------------------------------------
// Objective

/// Penalty lambda * ||W - anchor||^2; an empty anchor means zero.
struct Regularizer {
    double lambda = 0.0;
    Matrix anchor;
};

struct ObjectiveValue {
    double value = 0.0;
    Matrix gradient; // dvalue/dW, M x D
};

/// Contribution of one query: expected gain under Pi and its W-gradient.
inline ObjectiveValue query_objective(const Model& model, const PreparedQuery& q) {
    ObjectiveValue out{0.0, Matrix::Zero(model.weights.rows(), model.weights.cols())};
    const GainTable table = gain_table(q.relevance, model.gain);
    if (table.isZero(0.0)) return out;

    const Matrix scores = linear_phi(model.weights, q.features);
    const PreSinkhornPass pre = presinkhorn_forward(model.param, scores, model.sigma);
    const SinkhornResult sk = sinkhorn_forward(pre.matrix, model.sinkhorn_iters, model.epsilon);
    out.value = table.cwiseProduct(sk.output).sum();

    const Matrix grad_a = sinkhorn_backward(sk.tape, table);
    out.gradient = linear_phi_backward(q.features, presinkhorn_backward(pre, grad_a));
    return out;
}

/// Mean expected gain over queries minus the regularizer. Queries whose gain
/// table is identically zero (e.g. all-zero relevance under NDCG) add 0.
inline ObjectiveValue objective_and_grad(const Model& model, const std::vector<PreparedQuery>& queries,
                                         const Regularizer& reg = {}) {
    model.validate();
    ObjectiveValue total{0.0, Matrix::Zero(model.weights.rows(), model.weights.cols())};
    for (const PreparedQuery& q : queries) {
        const ObjectiveValue v = query_objective(model, q);
        total.value += v.value;
        total.gradient += v.gradient;
    }
    if (!queries.empty()) {
        const double inv_n = 1.0 / static_cast<double>(queries.size());
        total.value *= inv_n;
        total.gradient *= inv_n;
    }
    if (reg.lambda != 0.0) {
        const Matrix diff = reg.anchor.size() == 0 ? model.weights : Matrix(model.weights - reg.anchor);
        total.value -= reg.lambda * diff.squaredNorm();
        total.gradient -= 2.0 * reg.lambda * diff;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
    Index max_k = 10;
    bool precision = false;
    bool rbp = false;
    double rbp_alpha = kDefaultRbpAlpha;
    Index decode_cap = kDefaultDecodeCap;
    bool exclude_zero_queries = false;
};

struct EvalReport {
    std::vector<double> ndcg;      // ndcg[k-1] = mean NDCG@k
    std::vector<double> precision; // empty unless requested
    std::optional<double> rbp;
    std::vector<std::string> qids;
    std::vector<std::vector<double>> per_query_ndcg;
    Index num_queries = 0;
};

namespace detail {

// Relevant means label > 0 when scoring precision on graded data.
inline RelevanceVector binarize(const RelevanceVector& r) {
    std::vector<int> b(r.labels().begin(), r.labels().end());
    for (int& x : b) x = x > 0 ? 1 : 0;
    return RelevanceVector(std::move(b));
}

} // namespace detail

/// Decodes every query with the short-cut matcher and averages the exact
/// gains. All-zero-relevance queries score 0 and count unless excluded.
inline EvalReport evaluate(const Model& model, const std::vector<Query>& queries,
                           const EvalOptions& opt = {}) {
    model.validate();
    if (opt.max_k < 1) throw Error(ErrorCode::InvalidArgument, "max_k must be >= 1");
    EvalReport report;
    report.ndcg.assign(static_cast<std::size_t>(opt.max_k), 0.0);
    if (opt.precision) report.precision.assign(static_cast<std::size_t>(opt.max_k), 0.0);
    double rbp_sum = 0.0;

    for (const Query& q : queries) {
        if (q.documents.empty()) continue;
        const RelevanceVector rel = q.relevance();
        if (opt.exclude_zero_queries && rel.all_zero()) continue;
        const Permutation s = rank_query(model, q.feature_matrix(), opt.decode_cap);

        std::vector<double> row(static_cast<std::size_t>(opt.max_k));
        for (Index k = 1; k <= opt.max_k; ++k) {
            row[k - 1] = exact_gain(s, rel, GainSpec::ndcg(k));
            report.ndcg[k - 1] += row[k - 1];
        }
        if (opt.precision) {
            const RelevanceVector bin = detail::binarize(rel);
            for (Index k = 1; k <= opt.max_k; ++k) {
                report.precision[k - 1] += exact_gain(s, bin, GainSpec::precision(k));
            }
        }
        if (opt.rbp) rbp_sum += exact_gain(s, rel, GainSpec::rbp(opt.rbp_alpha));
        report.qids.push_back(q.qid);
        report.per_query_ndcg.push_back(std::move(row));
        ++report.num_queries;
    }

    if (report.num_queries > 0) {
        const double inv = 1.0 / static_cast<double>(report.num_queries);
        for (double& v : report.ndcg) v *= inv;
        for (double& v : report.precision) v *= inv;
        rbp_sum *= inv;
    }
    if (opt.rbp) report.rbp = rbp_sum;
    return report;
}

// ---------------------------------------------------------------------------
// Fitting

struct TrainConfig {
    ParamKind param = ParamKind::SmoothedIndicator;
    std::vector<double> lambdas{0.0, 1e-3, 1e-2, 1e-1, 1.0};
    std::vector<double> sigma_schedule{1.0, 0.5, 0.25, 0.125, 0.0625};
    OptimizerOptions optimizer{};
    /// Consecutive sigma levels without a validation improvement before
    /// stopping; 0 disables.
    int patience = 0;
    int sinkhorn_iters = kDefaultSinkhornIterations;
    double epsilon = kDefaultEpsilon;
    GainKind gain = GainKind::NDCG;
    double rbp_alpha = kDefaultRbpAlpha;
    Index train_k = 0; // 0: size of the largest training query
    Index validation_k = 10;
    Index decode_cap = kDefaultDecodeCap;
    int resample_per_query = kDefaultResamplePerQuery; // 0 disables resampling
    Index max_docs = kDefaultMaxDocs;
    std::uint64_t seed = 0;

    void validate() const {
        if (lambdas.empty()) throw Error(ErrorCode::InvalidArgument, "lambda grid is empty");
        for (double l : lambdas) {
            if (!(l >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
        }
        if (sigma_schedule.empty()) throw Error(ErrorCode::InvalidArgument, "sigma schedule is empty");
        for (std::size_t i = 0; i < sigma_schedule.size(); ++i) {
            if (!(sigma_schedule[i] > 0.0)) {
                throw Error(ErrorCode::NonPositiveSigma, "sigma schedule entries must be positive");
            }
            if (i > 0 && !(sigma_schedule[i] < sigma_schedule[i - 1])) {
                throw Error(ErrorCode::InvalidArgument, "sigma schedule must be strictly decreasing");
            }
        }
        if (sinkhorn_iters < 0) throw Error(ErrorCode::InvalidArgument, "sinkhorn_iters must be >= 0");
        if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
        if (validation_k < 1 || decode_cap < 1) {
            throw Error(ErrorCode::InvalidArgument, "validation_k and decode_cap must be >= 1");
        }
        if (resample_per_query < 0) throw Error(ErrorCode::InvalidArgument, "resample must be >= 0");
    }
};

struct LevelRecord {
    double lambda;
    double sigma;
    double objective;
    double validation_ndcg;
    int iterations;
    StopReason reason;
};

struct FitResult {
    Model model;
    double lambda = 0.0;
    double validation_ndcg = 0.0;
    double initial_validation_ndcg = 0.0;
    std::vector<LevelRecord> history;
};

/// Mean NDCG@k of decoded rankings; the model-selection score.
inline double mean_ndcg(const Model& model, const std::vector<Query>& queries, Index k, Index cap) {
    EvalOptions opt;
    opt.max_k = k;
    opt.decode_cap = cap;
    const EvalReport report = evaluate(model, queries, opt);
    return report.ndcg.back();
}

/// For every lambda: start from the regression weights, optimize the
/// regularized expected gain at each sigma of the annealing schedule
/// (warm-starting each level), and keep the snapshot with the best
/// validation NDCG. The regression model itself is the first candidate, so
/// the result never scores below it on the validation split. Without
/// validation queries, selection falls back to the training queries.
inline FitResult fit(const TrainConfig& config, const DataSplit& split) {
    config.validate();
    if (split.train.empty()) throw Error(ErrorCode::EmptyInput, "no training queries");

    const std::vector<Query>& select_on = split.validation.empty() ? split.train : split.validation;
    const std::vector<Query> train_queries =
        config.resample_per_query > 0
            ? resample_queries(split.train, config.resample_per_query, config.max_docs, config.seed)
            : split.train;
    const std::vector<PreparedQuery> prepared = prepare(train_queries);
    const Index m = std::max(max_feature_dim(split.train), max_feature_dim(select_on));

    Model base;
    base.param = config.param;
    base.weights = mle_init(split.train, config.param);
    if (base.weights.rows() < m) base.weights.conservativeResizeLike(Matrix::Zero(m, base.weights.cols()));
    base.sigma = config.sigma_schedule.front();
    base.sinkhorn_iters = config.sinkhorn_iters;
    base.epsilon = config.epsilon;
    const Index k = config.train_k > 0 ? config.train_k : std::max<Index>(1, largest_query(train_queries));
    base.gain = config.gain == GainKind::RBP ? GainSpec::rbp(config.rbp_alpha)
                                             : GainSpec{config.gain, k, config.rbp_alpha};

    const Matrix anchor = base.weights;
    FitResult best;
    best.model = base;
    best.validation_ndcg = mean_ndcg(base, select_on, config.validation_k, config.decode_cap);
    best.initial_validation_ndcg = best.validation_ndcg;

    const Index rows = base.weights.rows();
    const Index cols = base.weights.cols();
    for (double lambda : config.lambdas) {
        Model model = base;
        const Regularizer reg{lambda, anchor};
        double run_best = best.initial_validation_ndcg;
        int stale = 0;
        for (double sigma : config.sigma_schedule) {
            model.sigma = sigma;
            const ObjectiveFn negated = [&](const Vector& x, Vector& grad) {
                Model trial = model;
                trial.weights = Eigen::Map<const Matrix>(x.data(), rows, cols);
                const ObjectiveValue v = objective_and_grad(trial, prepared, reg);
                grad = -Eigen::Map<const Vector>(v.gradient.data(), v.gradient.size());
                return std::isfinite(v.value) ? -v.value : std::numeric_limits<double>::quiet_NaN();
            };
            const Vector x0 = Eigen::Map<const Vector>(model.weights.data(), model.weights.size());
            const OptimizeResult opt = minimize(negated, x0, config.optimizer);
            model.weights = Eigen::Map<const Matrix>(opt.x.data(), rows, cols);
            if (!model.weights.allFinite()) throw Error(ErrorCode::Divergence, "weights became non-finite");

            const double score = mean_ndcg(model, select_on, config.validation_k, config.decode_cap);
            best.history.push_back({lambda, sigma, -opt.value, score, opt.iterations, opt.reason});
            if (score > best.validation_ndcg) {
                best.validation_ndcg = score;
                best.model = model;
                best.lambda = lambda;
            }
            if (score > run_best) {
                run_best = score;
                stale = 0;
            } else if (config.patience > 0 && ++stale >= config.patience) {
                break;
            }
        }
    }
    return best;
}

} // namespace sinkprop
