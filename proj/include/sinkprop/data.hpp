#pragma once

// LETOR / SVMrank line format, fold loading and bootstrap query resampling.
//
//   <label> qid:<id> <index>:<value> ... [# comment]

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sinkprop/format.hpp"
#include "sinkprop/objectives.hpp"
#include "sinkprop/types.hpp"

namespace sinkprop {

struct Document {
    Vector features;
    int relevance = 0;
    std::string doc_id;

    friend bool operator==(const Document& a, const Document& b) {
        return a.relevance == b.relevance && a.doc_id == b.doc_id &&
               a.features.size() == b.features.size() && a.features == b.features;
    }
};

struct Query {
    std::string qid;
    std::vector<Document> documents;

    Index size() const noexcept { return static_cast<Index>(documents.size()); }
    Index num_features() const { return documents.empty() ? 0 : documents.front().features.size(); }

    /// J x M
    Matrix feature_matrix() const {
        Matrix x(size(), num_features());
        for (Index j = 0; j < size(); ++j) x.row(j) = documents[j].features.transpose();
        return x;
    }

    RelevanceVector relevance() const {
        std::vector<int> labels;
        labels.reserve(documents.size());
        for (const Document& d : documents) labels.push_back(d.relevance);
        return RelevanceVector(std::move(labels));
    }

    friend bool operator==(const Query&, const Query&) = default;
};

struct DataSplit {
    std::vector<Query> train;
    std::vector<Query> validation;
    std::vector<Query> test;
};

namespace detail {

// "docid = X ..." or "doc=X" yields X; any other comment is kept verbatim.
inline std::string doc_id_from_comment(std::string_view comment) {
    comment = trim(comment);
    for (std::string_view key : {"docid", "doc"}) {
        if (comment.substr(0, key.size()) != key) continue;
        std::string_view rest = trim(comment.substr(key.size()));
        if (rest.empty() || rest.front() != '=') continue;
        rest = trim(rest.substr(1));
        return std::string(rest.substr(0, rest.find_first_of(" \t")));
    }
    return std::string(comment);
}

struct SparseDoc {
    std::vector<std::pair<Index, double>> entries;
    int relevance;
    std::string doc_id;
};

} // namespace detail

/// Zero-pads (never truncates) every document to `m` features.
inline void pad_features(std::vector<Query>& queries, Index m) {
    for (Query& q : queries) {
        for (Document& d : q.documents) {
            const Index old = d.features.size();
            if (old < m) {
                d.features.conservativeResize(m);
                d.features.tail(m - old).setZero();
            }
        }
    }
}

inline Index max_feature_dim(const std::vector<Query>& queries) {
    Index m = 0;
    for (const Query& q : queries) m = std::max(m, q.num_features());
    return m;
}

/// Documents are grouped by qid in order of first appearance and keep their
/// line order; M is the largest feature index seen.
inline std::vector<Query> parse_letor(std::istream& in) {
    std::vector<std::string> qids;
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::vector<detail::SparseDoc>> grouped;
    Index max_index = 0;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view body = line;
        std::string_view comment;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) {
            comment = body.substr(hash + 1);
            body = body.substr(0, hash);
        }
        body = trim(body);
        if (body.empty()) continue;

        std::vector<std::string_view> tokens;
        std::size_t pos = 0;
        while (pos < body.size()) {
            const auto start = body.find_first_not_of(" \t", pos);
            if (start == std::string_view::npos) break;
            const auto end = std::min(body.find_first_of(" \t", start), body.size());
            tokens.push_back(body.substr(start, end - start));
            pos = end;
        }

        detail::SparseDoc doc;
        if (!parse_int(tokens[0], doc.relevance) || doc.relevance < 0) {
            throw ParseError(line_no, "bad relevance label '" + std::string(tokens[0]) + "'");
        }
        if (tokens.size() < 2 || tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4) {
            throw ParseError(line_no, "expected qid:<id> after the label");
        }
        const std::string qid(tokens[1].substr(4));
        for (std::size_t t = 2; t < tokens.size(); ++t) {
            const auto colon = tokens[t].find(':');
            Index index = 0;
            double value = 0.0;
            if (colon == std::string_view::npos || !parse_int(tokens[t].substr(0, colon), index) ||
                index < 1 || !parse_double(tokens[t].substr(colon + 1), value) ||
                !std::isfinite(value)) {
                throw ParseError(line_no, "bad feature token '" + std::string(tokens[t]) + "'");
            }
            for (const auto& [seen, unused] : doc.entries) {
                if (seen == index) {
                    throw ParseError(line_no, "duplicate feature index " + std::to_string(index));
                }
            }
            doc.entries.emplace_back(index, value);
            max_index = std::max(max_index, index);
        }
        if (!comment.empty()) doc.doc_id = detail::doc_id_from_comment(comment);

        auto [it, inserted] = slot.try_emplace(qid, grouped.size());
        if (inserted) {
            qids.push_back(qid);
            grouped.emplace_back();
        }
        grouped[it->second].push_back(std::move(doc));
    }
    if (grouped.empty()) throw Error(ErrorCode::EmptyInput, "no queries");

    std::vector<Query> queries;
    queries.reserve(grouped.size());
    for (std::size_t q = 0; q < grouped.size(); ++q) {
        Query query{qids[q], {}};
        for (auto& sparse : grouped[q]) {
            Document d{Vector::Zero(max_index), sparse.relevance, std::move(sparse.doc_id)};
            for (const auto& [index, value] : sparse.entries) d.features(index - 1) = value;
            query.documents.push_back(std::move(d));
        }
        queries.push_back(std::move(query));
    }
    return queries;
}

inline std::vector<Query> load_letor(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return parse_letor(in);
}

/// Dense output; every feature is written so M survives a round trip.
inline void write_letor(std::ostream& out, const std::vector<Query>& queries) {
    for (const Query& q : queries) {
        for (const Document& d : q.documents) {
            out << d.relevance << " qid:" << q.qid;
            for (Index i = 0; i < d.features.size(); ++i) {
                out << ' ' << (i + 1) << ':' << format_shortest(d.features(i));
            }
            if (!d.doc_id.empty()) out << " # " << d.doc_id;
            out << '\n';
        }
    }
}

/// Reads `train.txt`, `vali.txt` and `test.txt` from a fold directory and
/// pads all three to a common feature dimension.
inline DataSplit load_fold(const std::filesystem::path& dir) {
    DataSplit split{load_letor(dir / "train.txt"), load_letor(dir / "vali.txt"),
                    load_letor(dir / "test.txt")};
    const Index m = std::max({max_feature_dim(split.train), max_feature_dim(split.validation),
                              max_feature_dim(split.test)});
    pad_features(split.train, m);
    pad_features(split.validation, m);
    pad_features(split.test, m);
    return split;
}

/// Rescales every feature to [0, 1] within each query; constant features map to 0.
inline void normalize_query_minmax(std::vector<Query>& queries) {
    for (Query& q : queries) {
        if (q.documents.empty()) continue;
        Vector lo = q.documents.front().features;
        Vector hi = lo;
        for (const Document& d : q.documents) {
            lo = lo.cwiseMin(d.features);
            hi = hi.cwiseMax(d.features);
        }
        const Vector range = hi - lo;
        for (Document& d : q.documents) {
            for (Index i = 0; i < range.size(); ++i) {
                d.features(i) = range(i) > 0.0 ? (d.features(i) - lo(i)) / range(i) : 0.0;
            }
        }
    }
}

inline constexpr int kDefaultResamplePerQuery = 20;
inline constexpr Index kDefaultMaxDocs = 200;

/// Bootstrap resampling into smaller derived queries. Each source query of
/// size J yields `per_query` replicas; a replica's size is
/// Poisson(min(J, max_docs)) clamped to [1, max_docs], and its documents are
/// drawn with replacement. Every replica has its own RNG stream seeded from
/// (seed, source index, replica index).
inline std::vector<Query> resample_queries(const std::vector<Query>& queries, int per_query,
                                           Index max_docs, std::uint64_t seed) {
    if (per_query < 1) throw Error(ErrorCode::InvalidArgument, "per_query must be >= 1");
    if (max_docs < 1) throw Error(ErrorCode::InvalidArgument, "max_docs must be >= 1");

    std::vector<Query> derived;
    derived.reserve(queries.size() * static_cast<std::size_t>(per_query));
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const Query& src = queries[q];
        if (src.documents.empty()) continue;
        const double mean = static_cast<double>(std::min(src.size(), max_docs));
        for (int r = 0; r < per_query; ++r) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(r)};
            std::mt19937_64 rng(seq);
            std::poisson_distribution<Index> size_dist(mean);
            const Index size = std::clamp<Index>(size_dist(rng), 1, max_docs);
            std::uniform_int_distribution<std::size_t> pick(0, src.documents.size() - 1);

            Query out{src.qid + "-r" + std::to_string(r), {}};
            out.documents.reserve(static_cast<std::size_t>(size));
            for (Index j = 0; j < size; ++j) out.documents.push_back(src.documents[pick(rng)]);
            derived.push_back(std::move(out));
        }
    }
    return derived;
}

} // namespace sinkprop
