#pragma once

// Text model format:
//
//   sinkprop-model v1 <parameterization> M=<m> D=<d> sigma=<s> iters=<i> epsilon=<e>
//   <W row 1: d floats>
//   ...
//   <W row m>
//
// Floats use the shortest representation that reads back exactly.

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sinkprop/format.hpp"
#include "sinkprop/train.hpp"

namespace sinkprop {

inline constexpr std::string_view kModelMagic = "sinkprop-model";
inline constexpr std::string_view kModelVersion = "v1";

inline void write_model(std::ostream& out, const Model& model) {
    model.validate();
    out << kModelMagic << ' ' << kModelVersion << ' ' << to_string(model.param)
        << " M=" << model.weights.rows() << " D=" << model.weights.cols()
        << " sigma=" << format_shortest(model.sigma) << " iters=" << model.sinkhorn_iters
        << " epsilon=" << format_shortest(model.epsilon) << '\n';
    for (Index i = 0; i < model.weights.rows(); ++i) {
        for (Index d = 0; d < model.weights.cols(); ++d) {
            if (d > 0) out << ' ';
            out << format_shortest(model.weights(i, d));
        }
        out << '\n';
    }
}

inline Model read_model(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError(line_no, "missing model header");

    std::istringstream header(line);
    std::string magic, version, param;
    header >> magic >> version >> param;
    if (magic != kModelMagic || version != kModelVersion) {
        throw ParseError(line_no, "not a " + std::string(kModelMagic) + " " +
                                      std::string(kModelVersion) + " file");
    }
    Model model;
    try {
        model.param = parse_param_kind(param);
    } catch (const Error& e) {
        throw ParseError(line_no, e.what());
    }

    Index m = -1, d = -1;
    bool have_sigma = false, have_iters = false, have_eps = false;
    std::string field;
    while (header >> field) {
        const auto eq = field.find('=');
        const std::string_view key = std::string_view(field).substr(0, eq);
        const std::string_view value =
            eq == std::string::npos ? std::string_view{} : std::string_view(field).substr(eq + 1);
        bool ok = false;
        if (key == "M") ok = parse_int(value, m);
        else if (key == "D") ok = parse_int(value, d);
        else if (key == "sigma") ok = have_sigma = parse_double(value, model.sigma);
        else if (key == "iters") ok = have_iters = parse_int(value, model.sinkhorn_iters);
        else if (key == "epsilon") ok = have_eps = parse_double(value, model.epsilon);
        if (!ok) throw ParseError(line_no, "bad header field '" + field + "'");
    }
    if (m < 0 || d < 0 || !have_sigma || !have_iters || !have_eps) {
        throw ParseError(line_no, "incomplete model header");
    }

    model.weights.resize(m, d);
    for (Index i = 0; i < m; ++i) {
        ++line_no;
        if (!std::getline(in, line)) throw ParseError(line_no, "missing weight row");
        std::istringstream row(line);
        std::string tok;
        Index col = 0;
        while (row >> tok) {
            double v = 0.0;
            if (col >= d || !parse_double(tok, v)) throw ParseError(line_no, "bad weight row");
            model.weights(i, col++) = v;
        }
        if (col != d) throw ParseError(line_no, "weight row has the wrong width");
    }
    try {
        model.validate();
    } catch (const Error& e) {
        throw ParseError(1, e.what());
    }
    return model;
}

inline void save_model(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    write_model(out, model);
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

inline Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return read_model(in);
}

} // namespace sinkprop
