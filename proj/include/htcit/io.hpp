// File formats: headered CSV slices, the dataset JSON sidecar, and graph
// artifacts (ordering JSON, DAG JSON, DAG edge-list CSV).
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "htcit/graph.hpp"
#include "htcit/ordering.hpp"
#include "htcit/simgen.hpp"

namespace htcit {

namespace fs = std::filesystem;
using json = nlohmann::json;

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;  // rows x header.size()
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    s = s.substr(b, e - b + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            cur.push_back(c);
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("cannot format number");
    return std::string(buf, ptr);
}

inline std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open '" + p.string() + "' for reading");
    return in;
}

inline std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
    return out;
}

}  // namespace detail

/// Reads a headered numeric CSV ('.' decimal separator, ',' field separator).
/// Lines starting with '#' are comments.
inline CsvTable read_csv(const fs::path& path) {
    auto in = detail::open_in(path);
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::vector<double>> rows;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
        if (line.empty() || line[0] == '#') continue;
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            for (std::size_t c = 0; c < cells.size(); ++c)
                if (cells[c].empty())
                    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty header name in column " +
                                     std::to_string(c + 1));
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& s = cells[c];
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": column " + std::to_string(c + 1) +
                                 " ('" + t.header[c] + "'): non-numeric cell '" + s + "'");
            row[c] = v;
        }
        rows.push_back(std::move(row));
    }
    if (!have_header) throw ParseError(path.string() + ": missing header line");
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return t;
}

inline void write_csv(const fs::path& path, const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
    auto out = detail::open_out(path);
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << detail::format_double(values(r, c));
        out << '\n';
    }
}

/// Loads two slices and aligns the columns of the later slice to the header
/// order of the earlier one. Intervention flags default to false.
inline TwoSliceDataset load_two_slice_csv(const fs::path& path_tau, const fs::path& path_t) {
    const CsvTable a = read_csv(path_tau);
    const CsvTable b = read_csv(path_t);
    std::map<std::string, std::size_t> pos_b;
    for (std::size_t c = 0; c < b.header.size(); ++c)
        if (!pos_b.emplace(b.header[c], c).second)
            throw ParseError(path_t.string() + ": duplicate column '" + b.header[c] + "'");
    std::map<std::string, std::size_t> seen;
    for (std::size_t c = 0; c < a.header.size(); ++c)
        if (!seen.emplace(a.header[c], c).second)
            throw ParseError(path_tau.string() + ": duplicate column '" + a.header[c] + "'");
    if (a.header.size() != b.header.size())
        throw ParseError("column sets differ: '" + path_tau.string() + "' has " + std::to_string(a.header.size()) +
                         " columns, '" + path_t.string() + "' has " + std::to_string(b.header.size()));
    if (a.values.rows() != b.values.rows())
        throw ParseError("row counts differ: '" + path_tau.string() + "' has " + std::to_string(a.values.rows()) +
                         " rows, '" + path_t.string() + "' has " + std::to_string(b.values.rows()));
    TwoSliceDataset ds;
    ds.labels = a.header;
    ds.x_tau = a.values;
    ds.x_t.resize(b.values.rows(), b.values.cols());
    for (std::size_t c = 0; c < a.header.size(); ++c) {
        auto it = pos_b.find(a.header[c]);
        if (it == pos_b.end())
            throw ParseError("column '" + a.header[c] + "' of '" + path_tau.string() + "' is missing from '" +
                             path_t.string() + "'");
        ds.x_t.col(static_cast<Eigen::Index>(c)) = b.values.col(static_cast<Eigen::Index>(it->second));
    }
    ds.intervened.assign(ds.d(), false);
    return ds;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const ScmConfig& c) {
    return json{{"d", c.d},
                {"e", c.e},
                {"link", to_string(c.link)},
                {"noise", to_string(c.noise)},
                {"slices", {c.tau, c.t}},
                {"intervention_fraction", c.intervention_fraction},
                {"n", c.n},
                {"seed", c.seed}};
}

inline ScmConfig scm_from_json(const json& j, ScmConfig c = {}) {
    if (j.contains("d")) c.d = j.at("d").get<std::size_t>();
    if (j.contains("e")) c.e = j.at("e").get<std::size_t>();
    if (j.contains("link")) c.link = parse_link(j.at("link").get<std::string>());
    if (j.contains("noise")) c.noise = parse_noise(j.at("noise").get<std::string>());
    if (j.contains("slices")) {
        const auto& s = j.at("slices");
        if (!s.is_array() || s.size() != 2) throw ParseError("scm.slices must be a two-element array");
        c.tau = s[0].get<std::size_t>();
        c.t = s[1].get<std::size_t>();
    }
    if (j.contains("intervention_fraction")) c.intervention_fraction = j.at("intervention_fraction").get<double>();
    if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline json to_json(const Dag& g) {
    return json{{"labels", g.labels()}, {"adjacency", g.adjacency().to_nested()}};
}

inline Dag dag_from_json(const json& j) {
    const auto adj = BinaryMatrix::from_nested(j.at("adjacency").get<std::vector<std::vector<int>>>());
    std::vector<std::string> labels;
    if (j.contains("labels")) labels = j.at("labels").get<std::vector<std::string>>();
    return Dag(adj, labels);
}

inline json to_json(const LayeredOrdering& lo) {
    return json{{"layers", lo.layers}, {"layer_of", lo.layer_of}};
}

inline json p_matrix_json(const PValueMatrix& pm) {
    std::vector<std::vector<double>> rows(pm.size(), std::vector<double>(pm.size()));
    for (std::size_t i = 0; i < pm.size(); ++i)
        for (std::size_t j = 0; j < pm.size(); ++j) rows[i][j] = pm.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return rows;
}

inline json to_json(const OrderingGraph& og) {
    return json{{"alpha", og.derived_from.alpha},
                {"adjacency", og.a_tp.to_nested()},
                {"p_values", p_matrix_json(og.derived_from)}};
}

/// Ordering artifact: the repaired ordering graph, its layers, and the
/// conditioning plan that produced it.
inline json ordering_artifact(const OrderingResult& r, const std::vector<std::string>& labels) {
    json plan = json::array();
    for (std::size_t i = 0; i < r.plan.size(); ++i)
        plan.push_back({{"node", i},
                        {"mode", r.plan.mode[i] == TestMode::CIT ? "CIT" : "IT"},
                        {"cond_set", r.plan.cond_set[i]}});
    return json{{"format", "htcit-ordering/1"},
                {"labels", labels},
                {"ordering", to_json(r.graph)},
                {"layers", to_json(r.layers)},
                {"initial_edges", r.initial.a_tp.count()},
                {"plan", plan}};
}

inline void write_json(const fs::path& path, const json& j) {
    auto out = detail::open_out(path);
    out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
    auto in = detail::open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& ex) {
        throw ParseError(path.string() + ": invalid JSON: " + ex.what());
    }
}

/// Edge list with header `src,dst`, endpoints given by label.
inline void write_edge_csv(const fs::path& path, const Dag& g) {
    auto out = detail::open_out(path);
    out << "src,dst\n";
    for (auto [i, j] : g.edges()) out << g.labels()[i] << ',' << g.labels()[j] << '\n';
}

// ---------------------------------------------------------------------------
// Dataset bundle: x_tau.csv, x_t.csv and dataset.json

inline constexpr const char* kSidecarName = "dataset.json";

inline void save_dataset(const fs::path& dir, const TwoSliceDataset& ds, const std::optional<ScmConfig>& cfg = {}) {
    ds.validate();
    const auto labels = ds.labels.empty() ? Dag::default_labels(ds.d()) : ds.labels;
    write_csv(dir / "x_tau.csv", labels, ds.x_tau);
    write_csv(dir / "x_t.csv", labels, ds.x_t);
    json j{{"format", "htcit-dataset/1"},
           {"x_tau", "x_tau.csv"},
           {"x_t", "x_t.csv"},
           {"labels", labels},
           {"n", ds.n()},
           {"intervened", ds.intervened},
           {"truth", ds.truth ? json(ds.truth->adjacency().to_nested()) : json(nullptr)},
           {"config", cfg ? to_json(*cfg) : json(nullptr)}};
    write_json(dir / kSidecarName, j);
}

/// Loads a dataset from its JSON sidecar; CSV paths resolve relative to it.
inline TwoSliceDataset load_dataset(const fs::path& sidecar) {
    const json j = read_json(sidecar);
    const fs::path base = sidecar.parent_path();
    try {
        TwoSliceDataset ds = load_two_slice_csv(base / j.at("x_tau").get<std::string>(), base / j.at("x_t").get<std::string>());
        if (j.contains("intervened") && !j.at("intervened").is_null()) {
            auto flags = j.at("intervened").get<std::vector<bool>>();
            if (flags.size() != ds.d()) throw ParseError(sidecar.string() + ": intervened has the wrong length");
            // Flags follow the sidecar's label order.
            auto labels = j.contains("labels") ? j.at("labels").get<std::vector<std::string>>() : ds.labels;
            for (std::size_t c = 0; c < ds.d(); ++c) {
                auto it = std::find(labels.begin(), labels.end(), ds.labels[c]);
                if (it == labels.end()) throw ParseError(sidecar.string() + ": label '" + ds.labels[c] + "' not in sidecar");
                ds.intervened[c] = flags[static_cast<std::size_t>(it - labels.begin())];
            }
        }
        if (j.contains("truth") && !j.at("truth").is_null()) {
            auto labels = j.contains("labels") ? j.at("labels").get<std::vector<std::string>>() : ds.labels;
            const BinaryMatrix adj = BinaryMatrix::from_nested(j.at("truth").get<std::vector<std::vector<int>>>());
            if (adj.size() != ds.d()) throw ParseError(sidecar.string() + ": truth has the wrong size");
            std::vector<std::size_t> pos(ds.d());
            for (std::size_t c = 0; c < ds.d(); ++c) {
                auto it = std::find(labels.begin(), labels.end(), ds.labels[c]);
                if (it == labels.end()) throw ParseError(sidecar.string() + ": label '" + ds.labels[c] + "' not in sidecar");
                pos[c] = static_cast<std::size_t>(it - labels.begin());
            }
            BinaryMatrix aligned(ds.d());
            for (std::size_t a = 0; a < ds.d(); ++a)
                for (std::size_t b = 0; b < ds.d(); ++b) aligned.set(a, b, adj(pos[a], pos[b]));
            ds.truth = Dag(aligned, ds.labels);
        }
        return ds;
    } catch (const json::exception& ex) {
        throw ParseError(sidecar.string() + ": " + ex.what());
    }
}

}  // namespace htcit
