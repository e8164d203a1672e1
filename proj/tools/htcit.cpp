// htcit command-line tool: simulate, discover, bench, report.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "htcit/htcit.hpp"

namespace fs = std::filesystem;
using namespace htcit;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<std::string> out;
    std::optional<std::string> method;
    std::optional<std::string> conditioning;
    std::optional<std::size_t> nodes;
    std::optional<std::size_t> edges;
    std::optional<std::string> link;
    std::optional<std::string> noise;
    std::vector<std::size_t> slices;
    std::optional<double> intervene_frac;
    std::optional<std::size_t> n;
    std::optional<std::size_t> workers;

    void add_scm(CLI::App* app) {
        app->add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "Master seed");
        app->add_option("--nodes", nodes, "Number of variables d");
        app->add_option("--edges", edges, "Number of DAG edges e");
        app->add_option("--link", link, "Link function: sin, sigmoid, poly");
        app->add_option("--noise", noise, "Noise family: gaussian, laplace, uniform");
        app->add_option("--slices", slices, "Earlier and later slice indices, e.g. --slices 1 2")->expected(2);
        app->add_option("--intervene-frac", intervene_frac, "Fraction of variables intervened at the earlier slice");
        app->add_option("--n", n, "Samples per slice");
        app->add_option("--out", out, "Output directory");
    }
    void add_method(CLI::App* app) {
        app->add_option("--alpha", alpha, "Significance level of the ordering tests");
        app->add_option("--beta", beta, "Significance level of the pruning tests");
        app->add_option("--method", method, "htcit or htit");
        app->add_option("--conditioning", conditioning, "Conditioning rule: closure or direct");
    }

    ExperimentConfig apply() const {
        ExperimentConfig c = config.empty() ? ExperimentConfig{} : load_experiment_config(config);
        if (seed) c.master_seed = *seed;
        if (reps) c.replications = *reps;
        if (alpha) c.alpha = *alpha;
        if (beta) c.prune.beta = *beta;
        if (out) c.output_dir = *out;
        if (method) c.ordering.method = parse_method(*method);
        if (conditioning) c.ordering.rule = parse_conditioning_rule(*conditioning);
        if (nodes) c.scm.d = *nodes;
        if (edges) c.scm.e = *edges;
        if (link) c.scm.link = parse_link(*link);
        if (noise) c.scm.noise = parse_noise(*noise);
        if (slices.size() == 2) {
            c.scm.tau = slices[0];
            c.scm.t = slices[1];
        }
        if (intervene_frac) c.scm.intervention_fraction = *intervene_frac;
        if (n) c.scm.n = *n;
        if (workers) c.workers = *workers;
        return c;
    }
};

int cmd_simulate(const Overrides& o) {
    ExperimentConfig c = o.apply();
    c.scm.validate();
    if (c.output_dir.empty()) throw std::invalid_argument("simulate: --out is required");
    ScmConfig scm = c.scm;
    const ReplicationSeeds seeds = replication_seeds(c.master_seed, 0);
    scm.seed = seeds.sim;
    const Dag truth = sample_dag(scm.d, scm.e, seeds.dag);
    const TwoSliceDataset data = simulate(scm, truth);
    const fs::path dir(c.output_dir);
    save_dataset(dir, data, scm);
    write_json(dir / "truth.json", to_json(truth));
    write_edge_csv(dir / "truth.csv", truth);
    std::cout << "wrote " << (dir / kSidecarName).string() << " (d=" << data.d() << ", n=" << data.n()
              << ", edges=" << truth.num_edges() << ")\n";
    return 0;
}

struct DiscoverArgs {
    std::string tau, t, sidecar;
    std::vector<std::string> intervened;
};

int cmd_discover(const Overrides& o, const DiscoverArgs& a) {
    const ExperimentConfig c = o.apply();
    TwoSliceDataset data;
    if (!a.sidecar.empty()) {
        if (!fs::exists(a.sidecar)) throw std::runtime_error("no such file: '" + a.sidecar + "'");
        data = load_dataset(a.sidecar);
    } else {
        if (a.tau.empty() || a.t.empty()) throw std::invalid_argument("discover: give --sidecar, or both --tau and --t");
        for (const auto& p : {a.tau, a.t})
            if (!fs::exists(p)) throw std::runtime_error("no such file: '" + p + "'");
        data = load_two_slice_csv(a.tau, a.t);
    }
    for (const auto& label : a.intervened) {
        auto it = std::find(data.labels.begin(), data.labels.end(), label);
        if (it == data.labels.end()) throw std::invalid_argument("--intervened: unknown variable '" + label + "'");
        data.intervened[static_cast<std::size_t>(it - data.labels.begin())] = true;
    }
    const fs::path dir = c.output_dir.empty() ? fs::path("htcit-out") : fs::path(c.output_dir);
    KernelConfig kcfg = c.kernel;
    kcfg.seed = c.master_seed;
    const DiscoveryResult res = discover(data, kcfg, c.alpha, c.ordering, c.prune);
    write_json(dir / "ordering.json", ordering_artifact(res.ordering, data.labels));
    write_json(dir / "dag.json", to_json(res.dag()));
    write_edge_csv(dir / "dag.csv", res.dag());
    std::cout << "ordering edges: " << res.ordering.graph.a_tp.count() << ", layers: " << res.ordering.layers.layers.size()
              << ", final edges: " << res.dag().num_edges() << "\n";
    for (auto [i, j] : res.dag().edges()) std::cout << "  " << data.labels[i] << " -> " << data.labels[j] << "\n";
    if (data.truth) {
        MetricsRow row;
        row.shd = shd(res.dag(), *data.truth);
        row.sid = sid(res.dag(), *data.truth);
        row.f1 = f1(res.dag(), *data.truth);
        row.dis = dis(res.dag(), *data.truth);
        row.n_prune = n_prune(res.ordering.graph.a_tp, res.dag().adjacency());
        row.ordering_edges = res.ordering.graph.a_tp.count();
        row.repairs = res.ordering.initial.a_tp.count() - row.ordering_edges;
        write_metrics_csv(dir / "metrics.csv", {row});
        std::cout << "shd=" << row.shd << " sid=" << row.sid << " f1=" << row.f1 << " dis=" << row.dis
                  << " n_prune=" << row.n_prune << "\n";
    }
    std::cout << "artifacts in " << dir.string() << "\n";
    return 0;
}

int cmd_bench(const Overrides& o) {
    const ExperimentConfig c = o.apply();
    const EvalReport r = run_experiment(c, [](const MetricsRow& m) {
        std::cerr << "rep " << m.rep << ": " << (m.ok() ? "shd=" + std::to_string(m.shd) : m.status) << " ("
                  << m.runtime_s << " s)\n";
    });
    std::cout << report_text({r});
    if (r.failed()) {
        std::cerr << r.failed() << " replication(s) failed\n";
        return 1;
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& csv_out) {
    std::vector<EvalReport> runs;
    for (const auto& d : dirs) runs.push_back(read_run(d));
    runs = with_pooled(std::move(runs));
    std::cout << report_text(runs);
    const std::string csv = report_csv(runs);
    if (!csv_out.empty()) {
        auto out = htcit::detail::open_out(csv_out);
        out << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal discovery from two time slices"};
    app.require_subcommand(1);

    Overrides sim_o, disc_o, bench_o;
    DiscoverArgs disc_a;
    std::vector<std::string> report_dirs;
    std::string report_csv_path;

    auto* sim = app.add_subcommand("simulate", "Simulate a ground-truthed two-slice dataset");
    sim_o.add_scm(sim);

    auto* disc = app.add_subcommand("discover", "Learn a DAG from a two-slice dataset");
    disc->add_option("--sidecar", disc_a.sidecar, "Dataset JSON sidecar (written by simulate)");
    disc->add_option("--tau", disc_a.tau, "CSV of the earlier slice");
    disc->add_option("--t", disc_a.t, "CSV of the later slice");
    disc->add_option("--intervened", disc_a.intervened, "Variables intervened at the earlier slice");
    disc->add_option("--config", disc_o.config, "JSON experiment config (method settings)")->check(CLI::ExistingFile);
    disc->add_option("--seed", disc_o.seed, "Seed for subsampling and permutations");
    disc->add_option("--out", disc_o.out, "Output directory");
    disc_o.add_method(disc);

    auto* bench = app.add_subcommand("bench", "Run a replicated benchmark");
    bench_o.add_scm(bench);
    bench_o.add_method(bench);
    bench->add_option("--reps", bench_o.reps, "Replications");
    bench->add_option("--workers", bench_o.workers, "Worker threads (default: HTCIT_WORKERS or all cores)");

    auto* rep = app.add_subcommand("report", "Summarize benchmark run directories");
    rep->add_option("dirs", report_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
    rep->add_option("--csv", report_csv_path, "Also write the table as CSV");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) return cmd_simulate(sim_o);
        if (*disc) return cmd_discover(disc_o, disc_a);
        if (*bench) return cmd_bench(bench_o);
        if (*rep) return cmd_report(report_dirs, report_csv_path);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
