#pragma once

// Command-line frontend. Everything lives here so tests can drive the same
// entry point in-process; main.cpp only forwards argv.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sinkprop/oracle.hpp"
#include "sinkprop/sinkprop.hpp"

#ifndef SINKPROP_VERSION
#define SINKPROP_VERSION "0.0.0-unknown"
#endif

namespace sinkprop::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitError = 2;

/// Replaceable pieces for `check`, so a deliberately broken implementation
/// can be shown to fail.
struct CheckHooks {
    std::function<Matrix(const SinkhornTape&, const Matrix&)> sinkhorn_backward =
        [](const SinkhornTape& t, const Matrix& g) { return sinkprop::sinkhorn_backward(t, g); };
};

namespace detail {

using nlohmann::ordered_json;

/// Shortest round-trip text, always with a decimal point or exponent.
inline std::string csv_number(double v) {
    std::string s = format_shortest(v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline void write_manifest(const std::filesystem::path& path, const std::string& command,
                           ordered_json config, ordered_json inputs, ordered_json outputs) {
    ordered_json m;
    m["tool"] = "sinkprop";
    m["version"] = SINKPROP_VERSION;
    m["command"] = command;
    m["config"] = std::move(config);
    m["inputs"] = std::move(inputs);
    m["outputs"] = std::move(outputs);
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << m.dump(2) << '\n';
}

inline std::filesystem::path manifest_path(const std::string& explicit_path, const std::string& out) {
    if (!explicit_path.empty()) return explicit_path;
    if (!out.empty()) return out + ".manifest.json";
    return {};
}

inline std::vector<Query> load_queries(const std::string& path, bool normalize) {
    std::vector<Query> qs = load_letor(path);
    if (normalize) normalize_query_minmax(qs);
    return qs;
}

/// Pads to the model width; wider data than the model is an error.
inline void fit_to_model(std::vector<Query>& qs, const Model& model) {
    const Index m = max_feature_dim(qs);
    if (m > model.num_features()) {
        throw Error(ErrorCode::DimensionMismatch, "data has " + std::to_string(m) +
                                                      " features but the model has " +
                                                      std::to_string(model.num_features()));
    }
    pad_features(qs, model.num_features());
}

/// Routes to a file when a path is given, stdout otherwise.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : use_file_(!path.empty()) {
        if (use_file_) {
            file_.open(path);
            if (!file_) throw Error(ErrorCode::Io, "cannot write " + path);
        }
        out_ = use_file_ ? static_cast<std::ostream*>(&file_) : &fallback;
    }
    std::ostream& stream() { return *out_; }
    void finish(const std::string& path) {
        out_->flush();
        if (!*out_) throw Error(ErrorCode::Io, "write failed for " + (path.empty() ? "stdout" : path));
    }

private:
    bool use_file_;
    std::ofstream file_;
    std::ostream* out_;
};

// ----------------------------------------------------------------------------

struct TrainArgs {
    std::string train, vali, out, manifest;
    std::string param = "smooth";
    std::string k = "auto";
    int sinkhorn_iters = kDefaultSinkhornIterations;
    double epsilon = kDefaultEpsilon;
    Index cap = kDefaultDecodeCap;
    int resample = kDefaultResamplePerQuery;
    Index max_docs = kDefaultMaxDocs;
    std::uint64_t seed = 0;
    int max_iters = 100;
    bool normalize = false;
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
    TrainConfig cfg;
    cfg.param = parse_param_kind(a.param);
    if (a.k == "auto") {
        cfg.train_k = 0;
    } else if (!parse_int(a.k, cfg.train_k) || cfg.train_k < 1) {
        throw Error(ErrorCode::InvalidArgument, "--k must be 'auto' or a positive integer");
    }
    cfg.sinkhorn_iters = a.sinkhorn_iters;
    cfg.epsilon = a.epsilon;
    cfg.decode_cap = a.cap;
    cfg.resample_per_query = a.resample;
    cfg.max_docs = a.max_docs;
    cfg.seed = a.seed;
    if (a.max_iters < 0) throw Error(ErrorCode::InvalidArgument, "--max-iters must be >= 0");
    cfg.optimizer.max_iterations = a.max_iters;
    if (a.max_docs < 1) throw Error(ErrorCode::InvalidArgument, "--max-docs must be >= 1");

    DataSplit split;
    split.train = load_queries(a.train, a.normalize);
    if (!a.vali.empty()) split.validation = load_queries(a.vali, a.normalize);
    const Index m = std::max(max_feature_dim(split.train), max_feature_dim(split.validation));
    pad_features(split.train, m);
    pad_features(split.validation, m);

    const FitResult r = fit(cfg, split);
    save_model(a.out, r.model);

    ordered_json config;
    config["param"] = to_string(cfg.param);
    config["k"] = a.k;
    config["resolved_k"] = r.model.gain.k;
    config["sinkhorn_iters"] = cfg.sinkhorn_iters;
    config["epsilon"] = cfg.epsilon;
    config["cap"] = cfg.decode_cap;
    config["resample"] = cfg.resample_per_query;
    config["max_docs"] = cfg.max_docs;
    config["max_iters"] = cfg.optimizer.max_iterations;
    config["normalize"] = a.normalize;
    config["lambdas"] = cfg.lambdas;
    config["sigma_schedule"] = cfg.sigma_schedule;
    config["seed"] = cfg.seed;
    ordered_json result;
    result["model"] = a.out;
    result["lambda"] = r.lambda;
    result["sigma"] = r.model.sigma;
    result["selection_ndcg@10"] = r.validation_ndcg;
    result["initial_selection_ndcg@10"] = r.initial_validation_ndcg;
    write_manifest(manifest_path(a.manifest, a.out), "train", std::move(config),
                   {{"train", a.train}, {"vali", a.vali}}, std::move(result));

    out << "model written to " << a.out << " (lambda=" << format_shortest(r.lambda)
        << " sigma=" << format_shortest(r.model.sigma)
        << " selection NDCG@10=" << format_shortest(r.validation_ndcg) << ")\n";
    return kExitOk;
}

// ----------------------------------------------------------------------------

struct EvalArgs {
    std::string model, test, out, manifest;
    std::string metrics = "ndcg";
    double rbp_alpha = kDefaultRbpAlpha;
    Index max_k = 10;
    Index cap = kDefaultDecodeCap;
    bool normalize = false;
    bool exclude_zero = false;
};

inline int run_eval(const EvalArgs& a, std::ostream& stdout_stream) {
    EvalOptions opt;
    bool want_ndcg = false;
    std::stringstream list(a.metrics);
    for (std::string name; std::getline(list, name, ',');) {
        name = std::string(trim(name));
        if (name == "ndcg") want_ndcg = true;
        else if (name == "p") opt.precision = true;
        else if (name == "rbp") opt.rbp = true;
        else throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "' (ndcg, p, rbp)");
    }
    if (a.max_k < 1) throw Error(ErrorCode::InvalidArgument, "--max-k must be >= 1");
    opt.max_k = a.max_k;
    opt.rbp_alpha = a.rbp_alpha;
    opt.decode_cap = a.cap;
    opt.exclude_zero_queries = a.exclude_zero;

    const Model model = load_model(a.model);
    std::vector<Query> qs = load_queries(a.test, a.normalize);
    fit_to_model(qs, model);
    const EvalReport r = evaluate(model, qs, opt);

    Sink sink(a.out, stdout_stream);
    std::ostream& out = sink.stream();
    out << "metric,k,value\n";
    if (want_ndcg) {
        for (std::size_t k = 0; k < r.ndcg.size(); ++k) out << "NDCG," << k + 1 << ',' << csv_number(r.ndcg[k]) << '\n';
    }
    for (std::size_t k = 0; k < r.precision.size(); ++k) {
        out << "P," << k + 1 << ',' << csv_number(r.precision[k]) << '\n';
    }
    if (r.rbp) out << "RBP,all," << csv_number(*r.rbp) << '\n';
    sink.finish(a.out);

    const auto manifest = manifest_path(a.manifest, a.out);
    if (!manifest.empty()) {
        ordered_json config;
        config["metrics"] = a.metrics;
        config["rbp_alpha"] = a.rbp_alpha;
        config["max_k"] = a.max_k;
        config["cap"] = a.cap;
        config["normalize"] = a.normalize;
        config["exclude_zero"] = a.exclude_zero;
        write_manifest(manifest, "eval", std::move(config), {{"model", a.model}, {"test", a.test}},
                       {{"csv", a.out.empty() ? "-" : a.out}, {"queries", r.num_queries}});
    }
    return kExitOk;
}

// ----------------------------------------------------------------------------

struct RankArgs {
    std::string model, input, out, manifest;
    Index cap = kDefaultDecodeCap;
    bool normalize = false;
};

/// One line per document: qid, 1-based rank, 0-based index within the
/// query in file order, and ln P(doc, rank) from the model's marginals.
inline int run_rank(const RankArgs& a, std::ostream& stdout_stream) {
    if (a.cap < 1) throw Error(ErrorCode::InvalidArgument, "--cap must be >= 1");
    const Model model = load_model(a.model);
    std::vector<Query> qs = load_queries(a.input, a.normalize);
    fit_to_model(qs, model);

    Sink sink(a.out, stdout_stream);
    std::ostream& out = sink.stream();
    for (const Query& q : qs) {
        const Matrix p = predict_marginals(model, q.feature_matrix());
        const Permutation s = shortcut_decode(p, a.cap);
        for (Index k = 0; k < s.size(); ++k) {
            out << q.qid << '\t' << k + 1 << '\t' << s[k] << '\t' << format_shortest(log_marginal(p(s[k], k)))
                << '\n';
        }
    }
    sink.finish(a.out);

    const auto manifest = manifest_path(a.manifest, a.out);
    if (!manifest.empty()) {
        write_manifest(manifest, "rank", {{"cap", a.cap}, {"normalize", a.normalize}},
                       {{"model", a.model}, {"input", a.input}},
                       {{"ranking", a.out.empty() ? "-" : a.out}, {"queries", qs.size()}});
    }
    return kExitOk;
}

// ----------------------------------------------------------------------------

struct CheckArgs {
    std::string manifest;
    int sinkhorn_iters = kDefaultSinkhornIterations;
    double epsilon = kDefaultEpsilon;
    std::uint64_t seed = 0;
    int trials = 20;
};

struct CheckOutcome {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed() const { return max_error <= tolerance; }
};

inline Matrix random_uniform(std::mt19937_64& rng, Index r, Index c, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

inline std::vector<int> random_grades(std::mt19937_64& rng, Index n, int max_label) {
    std::uniform_int_distribution<int> d(0, max_label);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int& l : out) l = d(rng);
    return out;
}

inline Vector as_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline std::vector<CheckOutcome> run_checks(const CheckArgs& a, const CheckHooks& hooks) {
    std::mt19937_64 rng(a.seed);
    auto size = [&](Index lo, Index hi) { return lo + static_cast<Index>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };

    CheckOutcome sink{"sinkhorn-gradient", 0.0, 1e-5};
    for (int t = 0; t < a.trials; ++t) {
        const Index n = size(1, 8);
        const Matrix x = random_uniform(rng, n, n, 0.1, 2.0);
        const Matrix g = random_uniform(rng, n, n, -1.0, 1.0);
        auto f = [&](const Vector& v) {
            const Matrix z = sinkhorn_forward(Eigen::Map<const Matrix>(v.data(), n, n), a.sinkhorn_iters,
                                              a.epsilon).output;
            return (z.array() * g.array()).sum();
        };
        const SinkhornResult fwd = sinkhorn_forward(x, a.sinkhorn_iters, a.epsilon);
        const Matrix analytic = hooks.sinkhorn_backward(fwd.tape, g);
        const Vector numeric = oracle::finite_diff(f, as_vector(x), 1e-6);
        sink.max_error = std::max(sink.max_error, oracle::relative_error(as_vector(analytic), numeric));
    }

    std::vector<CheckOutcome> out{sink};
    for (ParamKind kind : {ParamKind::SmoothedIndicator, ParamKind::LogitLogistic}) {
        CheckOutcome c{"objective-gradient/" + std::string(to_string(kind)), 0.0, 1e-4};
        for (int t = 0; t < a.trials; ++t) {
            const Index n = size(1, 8);
            const Index m = size(1, 4);
            Model model;
            model.param = kind;
            model.sinkhorn_iters = a.sinkhorn_iters;
            model.epsilon = a.epsilon;
            model.sigma = 0.7;
            model.gain = GainSpec::ndcg(size(1, n));
            model.weights = random_uniform(rng, m, score_dim(kind), -1.0, 1.0);
            Matrix x = random_uniform(rng, n, m, 0.0, 1.0);
            if (kind == ParamKind::SmoothedIndicator) {
                // Pairwise-distinct scores keep the sort locally constant.
                Vector s = linear_phi(model.weights, x).col(0);
                std::vector<double> sorted(s.data(), s.data() + s.size());
                std::sort(sorted.begin(), sorted.end());
                bool close = false;
                for (std::size_t i = 1; i < sorted.size(); ++i) close |= sorted[i] - sorted[i - 1] < 1e-3;
                if (close) continue;
            }
            const std::vector<PreparedQuery> q{{x, RelevanceVector(random_grades(rng, n, 3))}};
            auto f = [&](const Vector& v) {
                Model probe = model;
                probe.weights = Eigen::Map<const Matrix>(v.data(), model.weights.rows(), model.weights.cols());
                return objective_and_grad(probe, q).value;
            };
            const Vector analytic = as_vector(objective_and_grad(model, q).gradient);
            const Vector numeric = oracle::finite_diff(f, as_vector(model.weights), 1e-6);
            c.max_error = std::max(c.max_error, oracle::relative_error(analytic, numeric));
        }
        out.push_back(c);
    }

    CheckOutcome linear{"expected-gain-vs-enumeration", 0.0, 1e-10};
    CheckOutcome decode{"hungarian-vs-enumeration", 0.0, 1e-9};
    for (int t = 0; t < a.trials; ++t) {
        const Index n = size(2, 6);
        std::vector<std::pair<double, Permutation>> comps;
        const auto all = oracle::enumerate_permutations(n);
        std::exponential_distribution<double> e(1.0);
        double total = 0.0;
        for (int c = 0; c < 4; ++c) {
            const double w = e(rng);
            total += w;
            comps.emplace_back(w, all[rng() % all.size()]);
        }
        double rest = 1.0;
        for (std::size_t c = 0; c < comps.size(); ++c) {
            comps[c].first = c + 1 < comps.size() ? comps[c].first / total : rest;
            rest -= comps[c].first;
        }
        const oracle::PermutationMixture mix(std::move(comps));
        const Matrix p = oracle::mixture_marginals(mix);
        const RelevanceVector r(random_grades(rng, n, 1));
        for (const GainSpec& g : {GainSpec::ndcg(size(1, n)), GainSpec::precision(size(1, n)), GainSpec::rbp(0.8)}) {
            linear.max_error = std::max(linear.max_error, std::abs(oracle::brute_force_expected_gain(mix, r, g) -
                                                                   expected_gain(p, r, g)));
        }

        const Matrix q = sinkhorn_forward(random_uniform(rng, n, n, 0.01, 1.0), 5).output;
        decode.max_error = std::max(decode.max_error, std::abs(oracle::brute_force_best_log_likelihood(q) -
                                                               log_likelihood(q, hungarian_decode(q))));
    }
    out.push_back(linear);
    out.push_back(decode);
    return out;
}

inline int run_check(const CheckArgs& a, const CheckHooks& hooks, std::ostream& out) {
    if (a.trials < 1) throw Error(ErrorCode::InvalidArgument, "--trials must be >= 1");
    if (a.sinkhorn_iters < 0) throw Error(ErrorCode::InvalidArgument, "--sinkhorn-iters must be >= 0");
    const std::vector<CheckOutcome> results = run_checks(a, hooks);
    bool ok = true;
    ordered_json report = ordered_json::array();
    for (const CheckOutcome& c : results) {
        out << (c.passed() ? "PASS " : "FAIL ") << c.name << " max_error=" << format_shortest(c.max_error)
            << " tolerance=" << format_shortest(c.tolerance) << '\n';
        ok = ok && c.passed();
        report.push_back({{"name", c.name}, {"max_error", c.max_error}, {"tolerance", c.tolerance},
                          {"passed", c.passed()}});
    }
    if (!a.manifest.empty()) {
        write_manifest(a.manifest, "check",
                       {{"sinkhorn_iters", a.sinkhorn_iters}, {"epsilon", a.epsilon}, {"seed", a.seed},
                        {"trials", a.trials}},
                       ordered_json::object(), {{"checks", report}, {"passed", ok}});
    }
    return ok ? kExitOk : kExitCheckFailed;
}

} // namespace detail

/// Parses `args` (program name excluded) and runs one subcommand.
/// Returns 0 on success, 1 when `check` finds a failure, 2 on any error.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
               const CheckHooks& hooks = {}) {
    CLI::App app{"Learning to rank by expected gain over Sinkhorn-normalized rankings", "sinkprop"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SINKPROP_VERSION);

    detail::TrainArgs ta;
    auto* train = app.add_subcommand("train", "Fit a model and write it with a manifest");
    train->add_option("--train", ta.train, "Training queries (LETOR format)")->required()->check(CLI::ExistingFile);
    train->add_option("--vali", ta.vali, "Validation queries for model selection")->check(CLI::ExistingFile);
    train->add_option("--out", ta.out, "Model output path")->required();
    train->add_option("--manifest", ta.manifest, "Manifest path (default <out>.manifest.json)");
    train->add_option("--param", ta.param, "smooth or ll")->capture_default_str();
    train->add_option("--k", ta.k, "Training NDCG truncation, or 'auto' for the largest query")->capture_default_str();
    train->add_option("--sinkhorn-iters", ta.sinkhorn_iters)->capture_default_str();
    train->add_option("--epsilon", ta.epsilon)->capture_default_str();
    train->add_option("--cap", ta.cap, "Decode cap used for validation")->capture_default_str();
    train->add_option("--resample", ta.resample, "Derived queries per source query (0: off)")->capture_default_str();
    train->add_option("--max-docs", ta.max_docs)->capture_default_str();
    train->add_option("--seed", ta.seed)->capture_default_str();
    train->add_option("--max-iters", ta.max_iters, "Optimizer iterations per sigma level")->capture_default_str();
    train->add_flag("--normalize", ta.normalize, "Per-query min-max feature scaling");

    detail::EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Write a metric,k,value CSV for a model on a query file");
    eval->add_option("--model", ea.model)->required()->check(CLI::ExistingFile);
    eval->add_option("--test", ea.test)->required()->check(CLI::ExistingFile);
    eval->add_option("--out", ea.out, "CSV path (default stdout)");
    eval->add_option("--manifest", ea.manifest, "Manifest path (default <out>.manifest.json)");
    eval->add_option("--metrics", ea.metrics, "Comma list of ndcg, p, rbp")->capture_default_str();
    eval->add_option("--rbp-alpha", ea.rbp_alpha)->capture_default_str();
    eval->add_option("--max-k", ea.max_k, "Largest truncation reported")->capture_default_str();
    eval->add_option("--cap", ea.cap)->capture_default_str();
    eval->add_flag("--normalize", ea.normalize);
    eval->add_flag("--exclude-zero", ea.exclude_zero, "Drop queries with no relevant documents");

    detail::RankArgs ra;
    auto* rank = app.add_subcommand("rank", "Decode a ranking for every query");
    rank->add_option("--model", ra.model)->required()->check(CLI::ExistingFile);
    rank->add_option("--input", ra.input)->required()->check(CLI::ExistingFile);
    rank->add_option("--out", ra.out, "Output path (default stdout)");
    rank->add_option("--manifest", ra.manifest, "Manifest path (default <out>.manifest.json)");
    rank->add_option("--cap", ra.cap)->capture_default_str();
    rank->add_flag("--normalize", ra.normalize);

    detail::CheckArgs ca;
    auto* check = app.add_subcommand("check", "Compare gradients and decoders with brute-force references");
    check->add_option("--sinkhorn-iters", ca.sinkhorn_iters)->capture_default_str();
    check->add_option("--epsilon", ca.epsilon)->capture_default_str();
    check->add_option("--seed", ca.seed)->capture_default_str();
    check->add_option("--trials", ca.trials)->capture_default_str();
    check->add_option("--manifest", ca.manifest);

    std::vector<const char*> argv{"sinkprop"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitError;
    }

    try {
        if (*train) return detail::run_train(ta, out);
        if (*eval) return detail::run_eval(ea, out);
        if (*rank) return detail::run_rank(ra, out);
        return detail::run_check(ca, hooks, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
}

} // namespace sinkprop::cli
