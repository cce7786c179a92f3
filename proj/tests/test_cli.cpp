#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sinkprop_cli.hpp"
#include "support/synthetic.hpp"

using namespace sinkprop;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args, const cli::CheckHooks& hooks = {}) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err, hooks);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Scratch directory with a small synthetic fold.
struct Workspace {
    fs::path dir;

    Workspace() {
        dir = fs::temp_directory_path() / ("sinkprop_cli_" + std::to_string(counter()++));
        fs::remove_all(dir);
        fs::create_directories(dir);
        testing::SyntheticSpec spec{.queries = 6, .docs = 8, .seed = 3};
        write(dir / "train.txt", testing::make_synthetic(spec));
        spec.seed = 4;
        write(dir / "vali.txt", testing::make_synthetic(spec));
        std::ofstream(dir / "empty.txt");
    }
    ~Workspace() { fs::remove_all(dir); }

    std::string operator/(const std::string& name) const { return (dir / name).string(); }

    static void write(const fs::path& p, const std::vector<Query>& qs) {
        std::ofstream out(p);
        write_letor(out, qs);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

std::vector<std::string> quick_train(const Workspace& ws, const std::string& out, const std::string& seed = "7") {
    return {"train", "--train", ws / "train.txt", "--vali", ws / "vali.txt", "--param", "smooth", "--k", "auto",
            "--out", out, "--resample", "2", "--max-iters", "5", "--seed", seed};
}

} // namespace

TEST_CASE("train writes a model and a manifest", "[cli]") {
    Workspace ws;
    const Run r = run(quick_train(ws, ws / "model.txt"));
    INFO(r.err);
    REQUIRE(r.code == 0);
    const Model m = load_model(ws / "model.txt");
    CHECK(m.param == ParamKind::SmoothedIndicator);
    CHECK(m.num_features() == 5);

    const auto manifest = nlohmann::json::parse(slurp(ws / "model.txt.manifest.json"));
    CHECK(manifest["command"] == "train");
    CHECK(manifest["config"]["seed"] == 7);
    CHECK(manifest["config"]["sinkhorn_iters"] == 5);
    CHECK(manifest["config"]["cap"] == 200);
    CHECK(manifest["config"]["max_docs"] == 200);
    CHECK(manifest["config"]["k"] == "auto");
    CHECK(manifest["inputs"]["train"] == ws / "train.txt");

    SECTION("same seed, identical files") {
        REQUIRE(run(quick_train(ws, ws / "again.txt")).code == 0);
        CHECK(slurp(ws / "model.txt") == slurp(ws / "again.txt"));
        CHECK(slurp(ws / "model.txt.manifest.json").size() > 0);
    }
}

TEST_CASE("train rejects bad input with exit 2", "[cli]") {
    Workspace ws;
    auto args = quick_train(ws, ws / "m.txt");
    args[2] = ws / "missing.txt";
    CHECK(run(args).code == 2);

    CHECK(run({"train", "--train", ws / "empty.txt", "--out", ws / "m.txt"}).code == 2);
    CHECK(run({"train", "--train", ws / "train.txt", "--out", ws / "m.txt", "--param", "tree"}).code == 2);
    CHECK(run({"train", "--train", ws / "train.txt", "--out", ws / "m.txt", "--k", "zero"}).code == 2);
    CHECK(run({"train", "--train", ws / "train.txt", "--out", ws / "m.txt", "--epsilon", "-1"}).code == 2);
    CHECK(run({"train", "--train", ws / "train.txt"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({}).code == 2);
}

TEST_CASE("eval writes metric CSVs", "[cli]") {
    Workspace ws;
    REQUIRE(run(quick_train(ws, ws / "model.txt")).code == 0);

    const Run r = run({"eval", "--model", ws / "model.txt", "--test", ws / "vali.txt", "--metrics", "ndcg,p,rbp",
                       "--rbp-alpha", "0.8"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "metric,k,value");
    int ndcg = 0, p = 0, rbp = 0;
    while (std::getline(lines, line)) {
        ndcg += line.starts_with("NDCG,");
        p += line.starts_with("P,");
        rbp += line.starts_with("RBP,");
    }
    CHECK(ndcg == 10);
    CHECK(p == 10);
    CHECK(rbp == 1);
    CHECK(r.out.find("NDCG,1,") != std::string::npos);
    CHECK(r.out.find("NDCG,10,") != std::string::npos);

    SECTION("file output is stable and has a manifest") {
        const std::vector<std::string> args{"eval", "--model", ws / "model.txt", "--test", ws / "vali.txt",
                                            "--out", ws / "a.csv"};
        REQUIRE(run(args).code == 0);
        const std::string first = slurp(ws / "a.csv");
        REQUIRE(run(args).code == 0);
        CHECK(slurp(ws / "a.csv") == first);
        CHECK(fs::exists(ws / "a.csv.manifest.json"));
    }
}

TEST_CASE("eval of a perfect model", "[cli]") {
    Workspace ws;
    // Feature equals relevance plus a tie-breaker.
    std::vector<Query> qs;
    for (int q = 0; q < 3; ++q) {
        Query query{std::to_string(q), {}};
        for (int j = 0; j < 12; ++j) {
            const int label = (j * 7 + q) % 4;
            query.documents.push_back({Vector::Constant(1, label + 0.01 * j), label, ""});
        }
        qs.push_back(query);
    }
    Workspace::write(ws.dir / "perfect.txt", qs);
    Model m;
    m.weights = Matrix::Ones(1, 1);
    m.sigma = 1e-3;
    save_model(ws / "perfect_model.txt", m);

    const Run r = run({"eval", "--model", ws / "perfect_model.txt", "--test", ws / "perfect.txt"});
    REQUIRE(r.code == 0);
    for (int k = 1; k <= 10; ++k) CHECK(r.out.find("NDCG," + std::to_string(k) + ",1.0\n") != std::string::npos);
}

TEST_CASE("eval errors", "[cli]") {
    Workspace ws;
    REQUIRE(run(quick_train(ws, ws / "model.txt")).code == 0);
    const Run empty = run({"eval", "--model", ws / "model.txt", "--test", ws / "empty.txt"});
    CHECK(empty.code == 2);
    CHECK(empty.err.find("no queries") != std::string::npos);
    CHECK(run({"eval", "--model", ws / "nope.txt", "--test", ws / "vali.txt"}).code == 2);
    CHECK(run({"eval", "--model", ws / "train.txt", "--test", ws / "vali.txt"}).code == 2);
    CHECK(run({"eval", "--model", ws / "model.txt", "--test", ws / "vali.txt", "--metrics", "map"}).code == 2);
}

TEST_CASE("rank output", "[cli]") {
    Workspace ws;
    // A sharp model on one-hot-ish scores puts Pi close to a permutation matrix.
    std::vector<Query> qs{{"q1", {}}};
    const std::vector<double> scores{0.2, 3.0, -1.0, 1.5};
    for (double s : scores) qs[0].documents.push_back({Vector::Constant(1, s), 0, ""});
    Workspace::write(ws.dir / "input.txt", qs);
    Model m;
    m.weights = Matrix::Ones(1, 1);
    m.sigma = 1e-3;
    save_model(ws / "m.txt", m);

    const Run r = run({"rank", "--model", ws / "m.txt", "--input", ws / "input.txt"});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::vector<int> docs;
    for (std::string line; std::getline(lines, line);) {
        std::istringstream f(line);
        std::string qid, rank, doc, score;
        std::getline(f, qid, '\t');
        std::getline(f, rank, '\t');
        std::getline(f, doc, '\t');
        std::getline(f, score, '\t');
        CHECK(qid == "q1");
        CHECK(std::stoi(rank) == static_cast<int>(docs.size()) + 1);
        CHECK(std::stod(score) <= 0.0);
        docs.push_back(std::stoi(doc));
    }
    CHECK(docs == std::vector<int>{1, 3, 0, 2});
    CHECK(run({"rank", "--model", ws / "m.txt", "--input", ws / "input.txt"}).out == r.out);

    CHECK(run({"rank", "--model", ws / "m.txt", "--input", ws / "input.txt", "--cap", "0"}).code == 2);
    CHECK(run({"rank", "--model", ws / "m.txt", "--input", ws / "empty.txt"}).code == 2);

    REQUIRE(run({"rank", "--model", ws / "m.txt", "--input", ws / "input.txt", "--out", ws / "r.tsv"}).code == 0);
    CHECK(slurp(ws / "r.tsv") == r.out);
    CHECK(fs::exists(ws / "r.tsv.manifest.json"));
}

TEST_CASE("check passes on the library implementation", "[cli]") {
    const Run r = run({"check", "--trials", "10"});
    INFO(r.out);
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("max_error=") != std::string::npos);

    CHECK(run({"check", "--trials", "10", "--sinkhorn-iters", "0"}).code == 0);
    CHECK(run({"check", "--trials", "0"}).code == 2);
}

TEST_CASE("check catches a faulty backward pass", "[cli]") {
    cli::CheckHooks broken;
    // Drops the row-sum correction of every normalization step.
    broken.sinkhorn_backward = [](const SinkhornTape& tape, const Matrix& g) {
        Matrix grad = g;
        for (std::size_t s = tape.stages.size() - 1; s >= 1; --s) {
            const Matrix& in = tape.stages[s - 1];
            if (s % 2 == 0) grad = grad.array().colwise() / in.rowwise().sum().array();
            else grad = grad.array().rowwise() / in.colwise().sum().array();
        }
        return grad;
    };
    const Run r = run({"check", "--trials", "5"}, broken);
    INFO(r.out);
    CHECK(r.code == 1);
    CHECK(r.out.find("FAIL sinkhorn-gradient") != std::string::npos);
}
