#include "fedsim/harness.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "fedsim/analysis.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/parallel.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace fedsim {

namespace {

constexpr std::size_t kCoherenceRoundCap = 5000;  // O(T^2) pass; skip huge runs
constexpr std::size_t kStalenessHistBuckets = 10;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

std::string join_selected(const std::vector<std::uint32_t>& selected) {
    std::string out;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(selected[i]);
    }
    return out;
}

std::string records_csv(const std::vector<RoundRecord>& records,
                        const std::vector<double>& coherence) {
    std::string csv = "t,f_w,grad_norm_sq,delta_w_norm,coherence,selected";
    for (std::size_t b = 0; b < kStalenessHistBuckets; ++b)
        csv += ",tau_" + std::to_string(b);
    csv += ",tau_overflow\n";
    for (std::size_t t = 0; t < records.size(); ++t) {
        const RoundRecord& r = records[t];
        csv += std::to_string(r.t);
        csv += ',';
        csv += g17(r.f_w);
        csv += ',';
        csv += g17(r.grad_norm_sq);
        csv += ',';
        csv += g17(norm(r.delta_w));
        csv += ',';
        csv += t < coherence.size() ? g17(coherence[t]) : std::string("nan");
        csv += ',';
        csv += join_selected(r.selected);
        std::size_t buckets[kStalenessHistBuckets + 1] = {};
        for (std::uint64_t tau : r.staleness)
            ++buckets[tau < kStalenessHistBuckets ? tau : kStalenessHistBuckets];
        for (std::size_t b = 0; b <= kStalenessHistBuckets; ++b)
            csv += ',' + std::to_string(buckets[b]);
        csv += '\n';
    }
    return csv;
}

std::vector<double> maybe_coherence(const RunConfig& cfg,
                                    const std::vector<RoundRecord>& records) {
    if (!cfg.telemetry || records.size() > kCoherenceRoundCap) return {};
    std::vector<ParamVector> grads;
    grads.reserve(records.size());
    for (const RoundRecord& r : records) grads.push_back(r.true_grad);
    try {
        return coherence_series(grads).mu;
    } catch (const NumericError&) {
        return {};  // every round under the norm guard
    }
}

std::size_t rounds_to_threshold(const std::vector<RoundRecord>& records,
                                double threshold) {
    for (const RoundRecord& r : records)
        if (r.grad_norm_sq <= threshold) return r.t;
    return records.size();  // censored at T
}

struct ModeOutput {
    ordered_json summary;
    std::vector<std::pair<std::string, std::string>> csv_files;  // name -> content
    bool passed = false;
    bool diverged = false;  // partial outputs are still written before rethrow
    std::size_t diverged_round = 0;
};

ModeOutput run_train_mode(const ExperimentSpec& spec, std::size_t threads) {
    GeneratedData gen = generate_dataset(
        spec.run.model, spec.run.num_clients, spec.run.n_per_client, spec.run.dim,
        spec.run.partition, spec.run.noise_std, spec.run.seed);

    std::vector<TrainResult> runs(spec.seeds);
    parallel_for(spec.seeds, threads, [&](std::size_t s) {
        runs[s] = run_training(spec.run, gen.data, replicate_seed(spec.run.seed, s));
    });

    ModeOutput out;
    ordered_json per_seed = ordered_json::array();
    std::vector<std::vector<RoundRecord>> all_records;
    double mean_rounds = 0.0;
    bool diverged = false;
    std::size_t diverged_round = 0;
    for (std::size_t s = 0; s < runs.size(); ++s) {
        const TrainResult& run = runs[s];
        std::vector<double> coh = maybe_coherence(spec.run, run.records);
        out.csv_files.emplace_back("records_seed" + std::to_string(s) + ".csv",
                                   records_csv(run.records, coh));
        ordered_json entry;
        entry["seed_index"] = s;
        entry["diverged"] = run.diverged;
        if (run.diverged) {
            entry["diverged_round"] = run.diverged_round;
            diverged = true;
            diverged_round = run.diverged_round;
        }
        if (!run.records.empty()) {
            entry["final_f"] = run.records.back().f_w;
            entry["final_grad_norm_sq"] = run.records.back().grad_norm_sq;
            entry["min_grad_norm_sq"] = min_grad_norm(run.records);
            entry["rounds_to_threshold"] =
                rounds_to_threshold(run.records, spec.grad_threshold);
            mean_rounds += static_cast<double>(
                rounds_to_threshold(run.records, spec.grad_threshold));
        }
        per_seed.push_back(entry);
        all_records.push_back(run.records);
    }

    out.summary["beta"] = spec.run.beta();
    out.summary["eta_used"] = runs[0].eta_used;
    out.summary["smoothness"] = runs[0].smoothness;
    out.summary["seeds"] = spec.seeds;
    out.summary["grad_threshold"] = spec.grad_threshold;
    out.summary["mean_rounds_to_threshold"] =
        mean_rounds / static_cast<double>(spec.seeds);
    bool all_nonempty = true;
    for (const auto& r : all_records) all_nonempty &= !r.empty();
    if (all_nonempty && spec.run.rounds > 0)
        out.summary["min_avg_grad_norm_sq"] = min_avg_grad_norm(all_records);
    out.summary["clamped_draws"] = runs[0].clamped_draws;
    out.summary["runs"] = per_seed;
    out.passed = !diverged;
    out.diverged = diverged;
    out.diverged_round = diverged_round;
    if (diverged) {
        out.summary["diverged_round"] = diverged_round;
        out.summary["error"] = "divergence";
    }
    return out;
}

ModeOutput run_staleness_mode(const ExperimentSpec& spec, std::size_t threads) {
    RunConfig cfg = spec.run;
    cfg.staleness = StalenessMode::emergent;
    cfg.telemetry = false;

    GeneratedData gen = generate_dataset(cfg.model, cfg.num_clients, cfg.n_per_client,
                                         cfg.dim, cfg.partition, cfg.noise_std, cfg.seed);
    std::vector<std::vector<std::uint64_t>> pooled(spec.seeds);
    parallel_for(spec.seeds, threads, [&](std::size_t s) {
        TrainResult run = run_training(cfg, gen.data, replicate_seed(cfg.seed, s));
        if (run.diverged) throw DivergenceError(run.diverged_round, "staleness run");
        auto& samples = pooled[s];
        samples.reserve(run.records.size() * cfg.num_clients);
        for (const RoundRecord& r : run.records)
            samples.insert(samples.end(), r.staleness.begin(), r.staleness.end());
    });
    std::vector<std::uint64_t> samples;
    for (const auto& part : pooled)
        samples.insert(samples.end(), part.begin(), part.end());

    const double beta = cfg.beta();
    const double tv = staleness_tv_distance(samples, beta, spec.tv_truncate);

    std::string csv = "l,empirical_pmf,theoretical_pmf\n";
    std::vector<double> counts(spec.tv_truncate + 1, 0.0);
    for (std::uint64_t s : samples)
        if (s <= spec.tv_truncate) counts[s] += 1.0;
    for (std::uint64_t l = 0; l <= spec.tv_truncate; ++l) {
        csv += std::to_string(l) + ',' +
               g17(counts[l] / static_cast<double>(samples.size())) + ',' +
               g17(geometric_pmf(beta, l)) + '\n';
    }

    ModeOutput out;
    out.csv_files.emplace_back("staleness_hist.csv", std::move(csv));
    out.summary["beta"] = beta;
    out.summary["samples"] = samples.size();
    out.summary["tv_truncate"] = spec.tv_truncate;
    out.summary["tv_distance"] = tv;
    out.summary["tv_threshold"] = spec.tv_threshold;
    out.summary["pass"] = tv < spec.tv_threshold;
    out.passed = tv < spec.tv_threshold;
    return out;
}

ModeOutput run_lemma1_mode(const ExperimentSpec& spec, std::size_t) {
    GeneratedData gen = generate_dataset(
        spec.run.model, spec.run.num_clients, spec.run.n_per_client, spec.run.dim,
        spec.run.partition, spec.run.noise_std, spec.run.seed);
    MomentumReport report =
        verify_lemma1(spec.run, gen.data, spec.replicates, spec.t_max);

    std::string csv = "t,coord,residual,std_error\n";
    for (std::size_t t = 1; t <= spec.t_max; ++t) {
        for (std::size_t j = 0; j < report.dim; ++j) {
            csv += std::to_string(t) + ',' + std::to_string(j) + ',' +
                   g17(report.residual[t - 1][j]) + ',' +
                   g17(report.std_error[t - 1][j]) + '\n';
        }
    }

    ModeOutput out;
    out.csv_files.emplace_back("lemma1_residuals.csv", std::move(csv));
    out.summary["beta"] = report.beta;
    out.summary["eta"] = report.eta;
    out.summary["replicates"] = report.replicates;
    out.summary["t_max"] = spec.t_max;
    out.summary["max_abs_residual"] = report.max_abs_residual;
    out.summary["max_sigma_ratio"] = report.max_sigma_ratio;
    out.summary["insufficient_replicates"] = report.insufficient_replicates;
    out.summary["pass"] = report.pass;
    out.passed = report.pass;
    return out;
}

ModeOutput run_theorem_mode(const ExperimentSpec& spec, std::size_t threads) {
    GeneratedData gen = generate_dataset(
        spec.run.model, spec.run.num_clients, spec.run.n_per_client, spec.run.dim,
        spec.run.partition, spec.run.noise_std, spec.run.seed);

    TheoremCheckConfig check;
    check.base = spec.run;
    check.base.staleness = StalenessMode::emergent;
    check.grid_n = spec.grid_n;
    check.grid_t = spec.grid_t;
    check.seeds = spec.seeds;
    check.threads = threads;
    std::vector<BoundReport> reports = check_theorem(check, gen.data);

    std::string csv =
        "N,T,beta,L,f0,fstar,sigma2,mu,mu_raw,bound,"
        "measured_min_grad_norm_sq,validity,hypothesis_violated,satisfied,checked\n";
    ordered_json cells = ordered_json::array();
    bool passed = true;
    for (const BoundReport& r : reports) {
        csv += std::to_string(r.per_round) + ',' + std::to_string(r.rounds) + ',' +
               g17(r.beta) + ',' + g17(r.smoothness) + ',' + g17(r.f0) + ',' +
               g17(r.fstar) + ',' + g17(r.sigma2) + ',' + g17(r.mu) + ',' +
               g17(r.mu_raw) + ',' + g17(r.bound) + ',' +
               g17(r.measured_min_grad_norm_sq) + ',' +
               (r.validity ? "1" : "0") + ',' + (r.hypothesis_violated ? "1" : "0") +
               ',' + (r.satisfied ? "1" : "0") + ',' + (r.checked ? "1" : "0") + '\n';
        ordered_json cell;
        cell["N"] = r.per_round;
        cell["T"] = r.rounds;
        cell["beta"] = r.beta;
        cell["L"] = r.smoothness;
        cell["f0"] = r.f0;
        cell["fstar"] = r.fstar;
        cell["sigma2"] = r.sigma2;
        cell["sigma2_std_error"] = r.sigma2_std_error;
        cell["mu"] = r.mu;
        cell["mu_raw"] = r.mu_raw;
        cell["bound"] = r.bound;
        cell["measured_min_grad_norm_sq"] = r.measured_min_grad_norm_sq;
        cell["validity"] = r.validity;
        cell["hypothesis_violated"] = r.hypothesis_violated;
        cell["satisfied"] = r.satisfied;
        cell["checked"] = r.checked;
        cells.push_back(cell);
        if (r.checked && !r.satisfied) passed = false;
    }

    ModeOutput out;
    out.csv_files.emplace_back("theorem_cells.csv", std::move(csv));
    out.summary["seeds"] = spec.seeds;
    out.summary["cells"] = cells;
    out.summary["pass"] = passed;
    out.passed = passed;
    return out;
}

ModeOutput dispatch_mode(const ExperimentSpec& spec, std::size_t threads) {
    switch (spec.mode) {
        case ExperimentMode::train:
            return run_train_mode(spec, threads);
        case ExperimentMode::staleness:
            return run_staleness_mode(spec, threads);
        case ExperimentMode::lemma1:
            return run_lemma1_mode(spec, threads);
        case ExperimentMode::theorem:
            return run_theorem_mode(spec, threads);
        case ExperimentMode::sweep:
            throw ConfigError("sweep mode is driven by sweep_experiment");
    }
    throw ConfigError("unknown mode");
}

}  // namespace

ResultManifest run_experiment(const ExperimentSpec& spec, const HarnessOptions& opts) {
    if (spec.mode == ExperimentMode::sweep) {
        SweepResult sw = sweep_experiment(spec, opts);
        ResultManifest manifest;
        manifest.spec_hash = spec_hash(spec);
        manifest.summary_path = sw.table_path;
        manifest.passed = sw.all_passed;
        return manifest;
    }

    spec.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const fs::path dir = fs::path(opts.out_dir) / spec.name;
    fs::create_directories(dir);

    ResultManifest manifest;
    manifest.spec_hash = spec_hash(spec);

    ModeOutput out;
    bool diverged = false;
    std::size_t diverged_round = 0;
    std::string error_text;
    try {
        out = dispatch_mode(spec, std::max<std::size_t>(1, opts.threads));
    } catch (const DivergenceError& e) {
        diverged = true;
        diverged_round = e.round;
        error_text = e.what();
    }
    if (out.diverged) {  // train mode records partial results before failing
        diverged = true;
        diverged_round = out.diverged_round;
        error_text = "training diverged at round " + std::to_string(diverged_round);
    }

    out.summary["schema_version"] = kSummarySchemaVersion;
    out.summary["version"] = kVersion;
    out.summary["name"] = spec.name;
    out.summary["spec_hash"] = manifest.spec_hash;
    ordered_json csv_list = ordered_json::array();
    for (const auto& [name, content] : out.csv_files) {
        const fs::path p = dir / name;
        write_text(p, content);
        manifest.csv_paths.push_back(p.string());
        csv_list.push_back(name);
    }
    out.summary["csv_files"] = csv_list;

    const fs::path summary_path = dir / "summary.json";
    write_text(summary_path, out.summary.dump(2) + "\n");
    manifest.summary_path = summary_path.string();
    manifest.passed = out.passed && !diverged;
    manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();

    if (diverged) {
        write_text(dir / ".partial", error_text + "\n");
        throw DivergenceError(diverged_round, error_text);
    }
    if (!opts.quiet) {
        std::cerr << spec.name << ": " << (manifest.passed ? "pass" : "FAIL")
                  << " (" << manifest.summary_path << ")\n";
    }
    return manifest;
}

SweepResult sweep_experiment(const ExperimentSpec& spec, const HarnessOptions& opts) {
    spec.validate();
    const fs::path dir = fs::path(opts.out_dir) / spec.name;
    fs::create_directories(dir);

    auto axis = [](const std::vector<std::size_t>& grid, std::size_t fallback) {
        return grid.empty() ? std::vector<std::size_t>{fallback} : grid;
    };
    const std::vector<std::size_t> ns = axis(spec.grid_n, spec.run.per_round);
    const std::vector<std::size_t> ts = axis(spec.grid_t, spec.run.rounds);
    const std::vector<std::size_t> hs = axis(spec.grid_h, spec.run.local_steps);
    const std::vector<std::uint64_t> sds =
        spec.grid_seed.empty() ? std::vector<std::uint64_t>{spec.run.seed}
                               : spec.grid_seed;

    SweepResult result;
    result.all_passed = true;
    std::string table =
        "N,T,H,seed,beta,eta,mean_rounds_to_threshold,min_avg_grad_norm_sq,status\n";

    for (std::size_t N : ns) {
        for (std::size_t T : ts) {
            for (std::size_t H : hs) {
                for (std::uint64_t sd : sds) {
                    ExperimentSpec cell = spec;
                    cell.mode = ExperimentMode::train;
                    cell.run.per_round = N;
                    cell.run.rounds = T;
                    cell.run.local_steps = H;
                    cell.run.seed = sd;
                    cell.grid_n.clear();
                    cell.grid_t.clear();
                    cell.grid_h.clear();
                    cell.grid_seed.clear();
                    cell.name = "cell_N" + std::to_string(N) + "_T" +
                                std::to_string(T) + "_H" + std::to_string(H) +
                                "_s" + std::to_string(sd);
                    HarnessOptions cell_opts = opts;
                    cell_opts.out_dir = dir.string();  // nest cells under the sweep
                    std::string row = std::to_string(N) + ',' + std::to_string(T) +
                                      ',' + std::to_string(H) + ',' +
                                      std::to_string(sd) + ',' +
                                      g17(1.0 - static_cast<double>(N) /
                                                    static_cast<double>(
                                                        spec.run.num_clients));
                    try {
                        ResultManifest m = run_experiment(cell, cell_opts);
                        // re-read the cell summary for the joined table
                        std::ifstream in(m.summary_path);
                        ordered_json s = ordered_json::parse(in);
                        row += ',' + g17(s["eta_used"].get<double>());
                        row += ',' + g17(s["mean_rounds_to_threshold"].get<double>());
                        row += ',';
                        row += s.contains("min_avg_grad_norm_sq")
                                   ? g17(s["min_avg_grad_norm_sq"].get<double>())
                                   : std::string("nan");
                        row += m.passed ? ",ok" : ",failed";
                        result.all_passed &= m.passed;
                        result.cells.push_back(std::move(m));
                    } catch (const std::exception& e) {
                        row += ",nan,nan,nan,error";
                        result.all_passed = false;
                        write_text(dir / cell.name / ".partial",
                                   std::string(e.what()) + "\n");
                    }
                    table += row + '\n';
                }
            }
        }
    }

    const fs::path table_path = dir / "sweep_table.csv";
    write_text(table_path, table);
    result.table_path = table_path.string();

    ordered_json summary;
    summary["schema_version"] = kSummarySchemaVersion;
    summary["version"] = kVersion;
    summary["name"] = spec.name;
    summary["spec_hash"] = spec_hash(spec);
    summary["cells"] = result.cells.size();
    summary["pass"] = result.all_passed;
    summary["table"] = "sweep_table.csv";
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return result;
}

}  // namespace fedsim
