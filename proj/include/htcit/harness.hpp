// End-to-end pipeline and the replicated benchmark runner.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "htcit/io.hpp"
#include "htcit/metrics.hpp"
#include "htcit/ordering.hpp"
#include "htcit/prune.hpp"
#include "htcit/rng.hpp"
#include "htcit/simgen.hpp"

namespace htcit {

// ---------------------------------------------------------------------------
// Pipeline

struct DiscoveryResult {
    OrderingResult ordering;
    PruneOutcome pruned;
    std::size_t test_warnings = 0;
    const Dag& dag() const { return pruned.dag; }
};

/// Ordering discovery followed by pruning, on one two-slice dataset.
inline DiscoveryResult discover(const TwoSliceDataset& data, const KernelConfig& kcfg, double alpha,
                                const OrderingOptions& opts, const PruneConfig& pcfg) {
    data.validate();
    if (opts.method == Method::HTIT && !data.any_intervened() && data.d() > 1)
        throw std::invalid_argument("method htit requires intervened variables");
    DiscoveryResult r;
    KernelOracle oracle(data, kcfg);
    r.ordering = discover_ordering(oracle, data.intervened, alpha, opts);
    r.test_warnings = oracle.warnings();
    r.pruned = prune_detailed(data, r.ordering.graph, pcfg);
    return r;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
    ScmConfig scm;
    OrderingOptions ordering;
    KernelConfig kernel;
    double alpha = 0.01;
    PruneConfig prune;
    std::size_t replications = 10;
    std::uint64_t master_seed = 0;
    std::string output_dir;
    std::size_t workers = 0;  // 0: HTCIT_WORKERS, else hardware concurrency
    bool write_artifacts = true;

    void validate() const {
        scm.validate();
        kernel.validate();
        prune.validate();
        validate_alpha(alpha);
        if (replications < 1) throw std::invalid_argument("replications must be >= 1");
        if (ordering.method == Method::HTIT && !(scm.intervention_fraction > 0.0))
            throw std::invalid_argument("method htit requires intervention_fraction > 0");
    }
};

inline json to_json(const KernelConfig& k) {
    json j{{"bandwidth", k.bandwidth_rule == BandwidthRule::MedianHeuristic ? json("median") : json(k.fixed_bandwidth)},
           {"ridge", k.ridge},
           {"ridge_per_sample", k.ridge_per_sample},
           {"null", k.null_method == NullMethod::GammaApprox ? "gamma" : "permutation"},
           {"permutations", k.permutations},
           {"subsample_cap", k.subsample_cap ? json(*k.subsample_cap) : json(nullptr)},
           {"lowrank_tol", k.lowrank_tol},
           {"max_rank", k.max_rank}};
    return j;
}

inline KernelConfig kernel_from_json(const json& j, KernelConfig k = {}) {
    if (j.contains("bandwidth")) {
        const auto& b = j.at("bandwidth");
        if (b.is_string()) {
            if (b.get<std::string>() != "median") throw ParseError("kernel.bandwidth must be \"median\" or a number");
            k.bandwidth_rule = BandwidthRule::MedianHeuristic;
        } else {
            k.bandwidth_rule = BandwidthRule::Fixed;
            k.fixed_bandwidth = b.get<double>();
        }
    }
    if (j.contains("ridge")) k.ridge = j.at("ridge").get<double>();
    if (j.contains("ridge_per_sample")) k.ridge_per_sample = j.at("ridge_per_sample").get<bool>();
    if (j.contains("null")) {
        const auto s = j.at("null").get<std::string>();
        if (s == "gamma") k.null_method = NullMethod::GammaApprox;
        else if (s == "permutation") k.null_method = NullMethod::Permutation;
        else throw ParseError("kernel.null must be \"gamma\" or \"permutation\"");
    }
    if (j.contains("permutations")) k.permutations = j.at("permutations").get<std::size_t>();
    if (j.contains("subsample_cap")) {
        const auto& c = j.at("subsample_cap");
        k.subsample_cap = c.is_null() ? std::nullopt : std::optional<std::size_t>(c.get<std::size_t>());
    }
    if (j.contains("lowrank_tol")) k.lowrank_tol = j.at("lowrank_tol").get<double>();
    if (j.contains("max_rank")) k.max_rank = j.at("max_rank").get<std::size_t>();
    return k;
}

inline json to_json(const PruneConfig& p) {
    return json{{"beta", p.beta},
                {"basis", to_string(p.basis)},
                {"knots", p.knots},
                {"degree", p.degree},
                {"min_samples", p.min_samples},
                {"include_lag", p.include_lag}};
}

inline PruneConfig prune_from_json(const json& j, PruneConfig p = {}) {
    if (j.contains("beta")) p.beta = j.at("beta").get<double>();
    if (j.contains("basis")) p.basis = parse_basis(j.at("basis").get<std::string>());
    if (j.contains("knots")) p.knots = j.at("knots").get<std::size_t>();
    if (j.contains("degree")) p.degree = j.at("degree").get<std::size_t>();
    if (j.contains("min_samples")) p.min_samples = j.at("min_samples").get<std::size_t>();
    if (j.contains("include_lag")) p.include_lag = j.at("include_lag").get<bool>();
    return p;
}

inline json to_json(const ExperimentConfig& c) {
    return json{{"scm", to_json(c.scm)},
                {"method", to_string(c.ordering.method)},
                {"conditioning", to_string(c.ordering.rule)},
                {"alpha", c.alpha},
                {"kernel", to_json(c.kernel)},
                {"prune", to_json(c.prune)},
                {"replications", c.replications},
                {"master_seed", c.master_seed},
                {"output_dir", c.output_dir}};
}

/// Unknown keys are rejected so that typos do not silently fall back to defaults.
inline ExperimentConfig experiment_from_json(const json& j, ExperimentConfig c = {}) {
    if (!j.is_object()) throw ParseError("experiment config must be a JSON object");
    static const std::vector<std::string> known{"scm",    "method",       "conditioning", "alpha",      "kernel",
                                                "prune",  "replications", "master_seed",  "output_dir", "workers"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ParseError("unknown experiment config key '" + key + "'");
    try {
        if (j.contains("scm")) c.scm = scm_from_json(j.at("scm"), c.scm);
        if (j.contains("method")) c.ordering.method = parse_method(j.at("method").get<std::string>());
        if (j.contains("conditioning")) c.ordering.rule = parse_conditioning_rule(j.at("conditioning").get<std::string>());
        if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
        if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"), c.kernel);
        if (j.contains("prune")) c.prune = prune_from_json(j.at("prune"), c.prune);
        if (j.contains("replications")) c.replications = j.at("replications").get<std::size_t>();
        if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("workers")) c.workers = j.at("workers").get<std::size_t>();
    } catch (const json::exception& ex) {
        throw ParseError(std::string("experiment config: ") + ex.what());
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
    return experiment_from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Replications

struct ReplicationSeeds {
    std::uint64_t rep, dag, sim, kernel;
};

inline ReplicationSeeds replication_seeds(std::uint64_t master, std::size_t rep) {
    const std::uint64_t r = derive_seed(master, rep);
    return {r, derive_seed(r, 1), derive_seed(r, 2), derive_seed(r, 3)};
}

struct MetricsRow {
    std::size_t rep = 0;
    std::size_t shd = 0;
    std::size_t sid = 0;
    double f1 = 0.0;
    double dis = 0.0;
    std::size_t n_prune = 0;
    std::size_t ordering_edges = 0;  // edges of the repaired ordering graph
    std::size_t repairs = 0;         // edges deleted by layer adjustment
    std::string status = "ok";
    double runtime_s = 0.0;

    bool ok() const { return status == "ok"; }
};

struct ReplicationResult {
    MetricsRow row;
    std::optional<Dag> truth;
    std::optional<DiscoveryResult> discovery;
};

inline std::string rep_dir_name(std::size_t rep) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "rep-%03zu", rep);
    return buf;
}

/// Simulates, discovers, and scores one replication. Errors are caught and
/// recorded in the row status.
inline ReplicationResult run_replication(const ExperimentConfig& cfg, std::size_t rep) {
    ReplicationResult out;
    out.row.rep = rep;
    const auto start = std::chrono::steady_clock::now();
    try {
        const ReplicationSeeds seeds = replication_seeds(cfg.master_seed, rep);
        ScmConfig scm = cfg.scm;
        scm.seed = seeds.sim;
        const Dag truth = sample_dag(scm.d, scm.e, seeds.dag);
        const TwoSliceDataset data = simulate(scm, truth);
        KernelConfig kcfg = cfg.kernel;
        kcfg.seed = seeds.kernel;
        DiscoveryResult res = discover(data, kcfg, cfg.alpha, cfg.ordering, cfg.prune);
        const Dag& est = res.dag();
        out.row.shd = shd(est, truth);
        out.row.sid = sid(est, truth);
        out.row.f1 = f1(est, truth);
        out.row.dis = dis(est, truth);
        out.row.n_prune = n_prune(res.ordering.graph.a_tp, est.adjacency());
        out.row.ordering_edges = res.ordering.graph.a_tp.count();
        out.row.repairs = res.ordering.initial.a_tp.count() - res.ordering.graph.a_tp.count();
        if (cfg.write_artifacts && !cfg.output_dir.empty()) {
            const fs::path dir = fs::path(cfg.output_dir) / rep_dir_name(rep);
            save_dataset(dir, data, scm);
            write_json(dir / "ordering.json", ordering_artifact(res.ordering, data.labels));
            write_json(dir / "dag.json", to_json(est));
            write_edge_csv(dir / "dag.csv", est);
        }
        out.truth = truth;
        out.discovery = std::move(res);
    } catch (const std::exception& ex) {
        out.row.status = std::string("error: ") + ex.what();
    }
    out.row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Summary {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();  // population standard deviation
};

inline Summary summarize(const std::vector<double>& v) {
    Summary s;
    if (v.empty()) return s;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    s.mean = m;
    s.std = std::sqrt(ss / static_cast<double>(v.size()));
    return s;
}

struct EvalReport {
    std::string name;
    std::vector<MetricsRow> rows;

    std::size_t failed() const {
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const MetricsRow& r) { return !r.ok(); }));
    }
    template <class F>
    Summary over_ok(F field) const {
        std::vector<double> v;
        for (const auto& r : rows)
            if (r.ok()) v.push_back(static_cast<double>(field(r)));
        return summarize(v);
    }
    Summary shd() const { return over_ok([](const MetricsRow& r) { return r.shd; }); }
    Summary sid() const { return over_ok([](const MetricsRow& r) { return r.sid; }); }
    Summary f1() const { return over_ok([](const MetricsRow& r) { return r.f1; }); }
    Summary dis() const { return over_ok([](const MetricsRow& r) { return r.dis; }); }
    Summary n_prune() const { return over_ok([](const MetricsRow& r) { return r.n_prune; }); }
    Summary ordering_edges() const { return over_ok([](const MetricsRow& r) { return r.ordering_edges; }); }
    Summary runtime() const { return over_ok([](const MetricsRow& r) { return r.runtime_s; }); }
};

inline json to_json(const Summary& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

inline json to_json(const EvalReport& r) {
    return json{{"name", r.name},
                {"replications", r.rows.size()},
                {"failed", r.failed()},
                {"shd", to_json(r.shd())},
                {"sid", to_json(r.sid())},
                {"f1", to_json(r.f1())},
                {"dis", to_json(r.dis())},
                {"n_prune", to_json(r.n_prune())},
                {"ordering_edges", to_json(r.ordering_edges())},
                {"runtime_s", to_json(r.runtime())}};
}

inline constexpr const char* kMetricsTag = "# htcit-metrics v1";
inline constexpr const char* kRuntimeTag = "# htcit-runtime v1";

namespace detail {
inline std::string csv_quote(const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += "\"\"";
        else if (c == '\n' || c == '\r') q += ' ';
        else q += c;
    }
    return q + "\"";
}
inline std::string fixed(double v, int digits) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}
}  // namespace detail

/// Wall-clock time is kept out of this file so that reruns are byte-identical.
inline void write_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
    auto out = detail::open_out(path);
    out << kMetricsTag << '\n' << "rep,shd,sid,f1,dis,n_prune,ordering_edges,repairs,status\n";
    for (const auto& r : rows)
        out << r.rep << ',' << r.shd << ',' << r.sid << ',' << detail::fixed(r.f1, 6) << ',' << detail::fixed(r.dis, 6)
            << ',' << r.n_prune << ',' << r.ordering_edges << ',' << r.repairs << ',' << detail::csv_quote(r.status)
            << '\n';
}

inline void write_runtime_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
    auto out = detail::open_out(path);
    out << kRuntimeTag << '\n' << "rep,runtime_s\n";
    for (const auto& r : rows) out << r.rep << ',' << detail::fixed(r.runtime_s, 3) << '\n';
}

namespace detail {
inline std::vector<std::string> split_quoted(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cur += '"';
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace detail

/// Reads metrics.csv from a run directory, plus runtime.csv when present.
inline EvalReport read_run(const fs::path& dir) {
    const fs::path mpath = dir / "metrics.csv";
    auto in = detail::open_in(mpath);
    EvalReport rep;
    rep.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    std::string line;
    if (!std::getline(in, line) || line != kMetricsTag)
        throw ParseError(mpath.string() + ": missing '" + std::string(kMetricsTag) + "' header");
    if (!std::getline(in, line) || line.rfind("rep,shd,sid,f1,dis,n_prune", 0) != 0)
        throw ParseError(mpath.string() + ": unexpected column header");
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = detail::split_quoted(line);
        if (f.size() != 9) throw ParseError(mpath.string() + ":" + std::to_string(lineno) + ": expected 9 fields");
        try {
            MetricsRow r;
            r.rep = std::stoull(f[0]);
            r.shd = std::stoull(f[1]);
            r.sid = std::stoull(f[2]);
            r.f1 = std::stod(f[3]);
            r.dis = std::stod(f[4]);
            r.n_prune = std::stoull(f[5]);
            r.ordering_edges = std::stoull(f[6]);
            r.repairs = std::stoull(f[7]);
            r.status = f[8];
            rep.rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ParseError(mpath.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    const fs::path rpath = dir / "runtime.csv";
    if (fs::exists(rpath)) {
        auto rin = detail::open_in(rpath);
        std::getline(rin, line);
        std::getline(rin, line);
        while (std::getline(rin, line)) {
            const auto f = detail::split_quoted(line);
            if (f.size() != 2) continue;
            const std::size_t r = std::stoull(f[0]);
            for (auto& row : rep.rows)
                if (row.rep == r) row.runtime_s = std::stod(f[1]);
        }
    }
    return rep;
}

/// All replications of several runs as one report.
inline EvalReport pool_runs(const std::vector<EvalReport>& runs, std::string name = "pooled") {
    EvalReport all;
    all.name = std::move(name);
    for (const auto& r : runs) all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
    return all;
}

/// Runs plus a pooled row when there is more than one run.
inline std::vector<EvalReport> with_pooled(std::vector<EvalReport> runs) {
    if (runs.size() > 1) runs.push_back(pool_runs(runs));
    return runs;
}

/// Mean and standard deviation per run, as CSV.
inline std::string report_csv(const std::vector<EvalReport>& runs) {
    std::ostringstream os;
    os << "run,reps,failed,shd_mean,shd_std,sid_mean,sid_std,f1_mean,f1_std,dis_mean,dis_std,"
          "n_prune_mean,n_prune_std,runtime_mean,runtime_std\n";
    for (const auto& r : runs) {
        os << detail::csv_quote(r.name) << ',' << r.rows.size() << ',' << r.failed();
        for (const Summary& s : {r.shd(), r.sid(), r.f1(), r.dis(), r.n_prune(), r.runtime()})
            os << ',' << detail::fixed(s.mean, 4) << ',' << detail::fixed(s.std, 4);
        os << '\n';
    }
    return os.str();
}

/// The same table with aligned "mean ± std" cells.
inline std::string report_text(const std::vector<EvalReport>& runs) {
    const std::vector<std::string> head{"Run", "Reps", "SHD", "SID", "F1", "Dis.", "#Prune", "Time (s)"};
    std::vector<std::vector<std::string>> rows{head};
    auto cell = [](const Summary& s, int digits) { return detail::fixed(s.mean, digits) + " ± " + detail::fixed(s.std, digits); };
    for (const auto& r : runs) {
        std::string reps = std::to_string(r.rows.size() - r.failed());
        if (r.failed()) reps += " (" + std::to_string(r.failed()) + " failed)";
        rows.push_back({r.name, reps, cell(r.shd(), 2), cell(r.sid(), 2), cell(r.f1(), 3), cell(r.dis(), 2),
                        cell(r.n_prune(), 2), cell(r.runtime(), 2)});
    }
    // Width in code points; "±" is two bytes.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char c : s)
            if ((c & 0xC0) != 0x80) ++w;
        return w;
    };
    std::vector<std::size_t> w(head.size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) w[c] = std::max(w[c], width(row[c]));
    std::ostringstream os;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            os << row[c];
            if (c + 1 < row.size()) os << std::string(w[c] - width(row[c]) + 2, ' ');
        }
        os << '\n';
    }
    return os.str();
}

inline std::size_t resolve_workers(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("HTCIT_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs every replication over a worker pool. Rows come back in replication
/// order regardless of scheduling. Writes config.json, metrics.csv,
/// runtime.csv and report.json when an output directory is set.
inline EvalReport run_experiment(const ExperimentConfig& cfg,
                                 const std::function<void(const MetricsRow&)>& on_done = {}) {
    cfg.validate();
    EvalReport report;
    report.name = cfg.output_dir.empty() ? "experiment" : fs::path(cfg.output_dir).filename().string();
    report.rows.resize(cfg.replications);
    const std::size_t workers = std::min(resolve_workers(cfg.workers), cfg.replications);
    std::atomic<std::size_t> next{0};
    std::mutex done_mutex;
    auto work = [&] {
        for (std::size_t r = next++; r < cfg.replications; r = next++) {
            MetricsRow row = run_replication(cfg, r).row;
            report.rows[r] = row;
            if (on_done) {
                std::lock_guard lock(done_mutex);
                on_done(row);
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (!cfg.output_dir.empty()) {
        const fs::path dir(cfg.output_dir);
        write_json(dir / "config.json", to_json(cfg));
        write_metrics_csv(dir / "metrics.csv", report.rows);
        write_runtime_csv(dir / "runtime.csv", report.rows);
        write_json(dir / "report.json", to_json(report));
    }
    return report;
}

}  // namespace htcit
