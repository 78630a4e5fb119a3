// SPDX-License-Identifier: Apache-2.0
//
// Plain-text serialization: dataset CSV (IEEE round-trip formatting), chain
// CSV, landscape-curve CSV, and validated ingestion with optional per-channel
// normalization.

#ifndef SYSID_CSV_HPP
#define SYSID_CSV_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sysid/inference.hpp"
#include "sysid/objectives.hpp"
#include "sysid/types.hpp"

namespace sysid {

/// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string dataset_header(Eigen::Index du, Eigen::Index dy) {
    std::string h = "t";
    for (Eigen::Index i = 1; i <= du; ++i) h += ",u_" + std::to_string(i);
    for (Eigen::Index i = 1; i <= dy; ++i) h += ",y_" + std::to_string(i);
    return h;
}

/// CSV with header `t,u_1..u_du,y_1..y_dy`, one row per timestep. Masked
/// outputs serialize as empty fields.
inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
    data.validate();
    out << dataset_header(data.du(), data.dy()) << "\n";
    for (Eigen::Index k = 0; k < data.size(); ++k) {
        out << format_double(data.times[static_cast<size_t>(k)]);
        for (Eigen::Index i = 0; i < data.du(); ++i)
            out << "," << format_double(data.inputs[static_cast<size_t>(k)][i]);
        for (Eigen::Index i = 0; i < data.dy(); ++i) {
            out << ",";
            if (data.is_observed(k))
                out << format_double(data.outputs[static_cast<size_t>(k)][i]);
        }
        out << "\n";
    }
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot open for writing: " + path);
    write_dataset_csv(data, out);
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

inline double parse_double_field(const std::string& field, long row) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw IngestError("unparseable numeric field '" + field + "'", row);
    return v;
}

}  // namespace detail

/// Per-channel affine normalization (zero mean, unit standard deviation)
/// with enough state to invert predictions back to original units.
struct Normalization {
    VectorXd u_mean, u_std, y_mean, y_std;

    VectorXd denormalize_output(const VectorXd& y) const {
        return (y.array() * y_std.array() + y_mean.array()).matrix();
    }
    VectorXd normalize_output(const VectorXd& y) const {
        return ((y.array() - y_mean.array()) / y_std.array()).matrix();
    }
};

struct IngestOptions {
    bool normalize = false;
};

struct IngestResult {
    Dataset data;
    Normalization normalization;  // identity when normalize=false
};

/// Read a dataset CSV with the standard header. Rows must be rectangular and
/// numeric; NaN/inf values are rejected with the offending row index. Empty
/// output fields mark missing observations. With normalization enabled,
/// inputs and outputs are shifted/scaled per channel and the affine transform
/// is returned for inverse mapping.
inline IngestResult ingest_csv(std::istream& in, Eigen::Index du, Eigen::Index dy,
                               const IngestOptions& opts = {}) {
    IngestResult res;
    std::string line;
    if (!std::getline(in, line)) throw IngestError("empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != dataset_header(du, dy))
        throw IngestError("header mismatch: expected '" + dataset_header(du, dy) + "'");

    long row = 1;
    bool any_masked = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_csv_row(line);
        if (static_cast<Eigen::Index>(fields.size()) != 1 + du + dy)
            throw IngestError("ragged row", row);
        res.data.times.push_back(detail::parse_double_field(fields[0], row));
        VectorXd u(du), y(dy);
        for (Eigen::Index i = 0; i < du; ++i)
            u[i] = detail::parse_double_field(fields[static_cast<size_t>(1 + i)], row);
        bool masked = false;
        for (Eigen::Index i = 0; i < dy; ++i) {
            const std::string& f = fields[static_cast<size_t>(1 + du + i)];
            if (f.empty()) {
                masked = true;
                y[i] = 0.0;
            } else {
                y[i] = detail::parse_double_field(f, row);
            }
        }
        if (!u.allFinite() || (!masked && !y.allFinite()))
            throw IngestError("non-finite value", row);
        res.data.inputs.push_back(u);
        res.data.outputs.push_back(y);
        res.data.observed.push_back(masked ? 0 : 1);
        any_masked = any_masked || masked;
        ++row;
    }
    if (!any_masked) res.data.observed.clear();
    res.data.validate();

    const Eigen::Index n = res.data.size();
    res.normalization.u_mean = VectorXd::Zero(du);
    res.normalization.u_std = VectorXd::Ones(du);
    res.normalization.y_mean = VectorXd::Zero(dy);
    res.normalization.y_std = VectorXd::Ones(dy);
    if (opts.normalize) {
        auto moments = [n](const std::vector<VectorXd>& xs, VectorXd& mean, VectorXd& std) {
            if (xs.empty() || xs.front().size() == 0) return;
            mean = VectorXd::Zero(xs.front().size());
            for (const auto& x : xs) mean += x;
            mean /= static_cast<double>(n);
            VectorXd var = VectorXd::Zero(xs.front().size());
            for (const auto& x : xs) var += (x - mean).cwiseAbs2();
            var /= static_cast<double>(n);
            std = var.cwiseSqrt().cwiseMax(1e-300);
        };
        moments(res.data.inputs, res.normalization.u_mean, res.normalization.u_std);
        moments(res.data.outputs, res.normalization.y_mean, res.normalization.y_std);
        for (auto& u : res.data.inputs)
            u = ((u - res.normalization.u_mean).array() / res.normalization.u_std.array())
                    .matrix();
        for (auto& y : res.data.outputs)
            y = ((y - res.normalization.y_mean).array() / res.normalization.y_std.array())
                    .matrix();
    }
    return res;
}

inline IngestResult ingest_csv(const std::string& path, Eigen::Index du, Eigen::Index dy,
                               const IngestOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open: " + path);
    return ingest_csv(in, du, dy, opts);
}

/// Chain CSV: `iter,log_post,theta_1..theta_d`.
inline void write_chain_csv(const Chain& chain, std::ostream& out) {
    if (chain.samples.empty()) throw PreconditionError("write_chain_csv: empty chain");
    const Eigen::Index d = chain.samples.front().size();
    out << "iter,log_post";
    for (Eigen::Index i = 1; i <= d; ++i) out << ",theta_" << i;
    out << "\n";
    for (size_t s = 0; s < chain.samples.size(); ++s) {
        out << s << "," << format_double(chain.log_posts[s]);
        for (Eigen::Index i = 0; i < d; ++i)
            out << "," << format_double(chain.samples[s][i]);
        out << "\n";
    }
}

inline nlohmann::json chain_metadata(const Chain& chain, std::uint64_t seed) {
    nlohmann::json j;
    j["n_samples"] = chain.samples.size();
    j["burn_in"] = chain.burn_in;
    j["seed"] = seed;
    j["groups"] = chain.group_spec;
    std::vector<double> rates;
    for (size_t g = 0; g < chain.group_spec.size(); ++g)
        rates.push_back(chain.acceptance_rate(g));
    j["acceptance_rates"] = rates;
    return j;
}

/// Landscape CSV: `theta,value` (normalized values).
inline void write_curve_csv(const LandscapeCurve& curve, std::ostream& out) {
    out << "theta,value\n";
    for (size_t i = 0; i < curve.grid.size(); ++i)
        out << format_double(curve.grid[i]) << "," << format_double(curve.values[i]) << "\n";
}

}  // namespace sysid

#endif  // SYSID_CSV_HPP
