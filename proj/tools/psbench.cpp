// SPDX-License-Identifier: Apache-2.0
//
// psbench: benchmark and verification harness for prob-sparse self-attention.
//
//   psbench bench   sweep sequence lengths, dense vs prob-sparse, CSV + report
//   psbench verify  run the oracle/property suite, per-property pass/fail

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "probsparse/bench.hpp"
#include "probsparse/verify.hpp"

namespace {

std::vector<std::size_t> parse_seq_lens(const std::string& csv) {
    std::vector<std::size_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        out.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    if (out.empty()) {
        throw CLI::ValidationError("--seq-lens", "needs at least one length");
    }
    return out;
}

int run_bench_command(const std::string& mode, const std::string& scope,
                      const std::string& seq_lens, probsparse::bench::BenchConfig cfg,
                      const std::string& out_path, const std::string& report_path) {
    using probsparse::bench::Mode;
    using probsparse::bench::Scope;

    if (mode == "dense") {
        cfg.modes = {Mode::Dense};
    } else if (mode == "probsparse") {
        cfg.modes = {Mode::ProbSparse};
    } else {
        cfg.modes = {Mode::Dense, Mode::ProbSparse};
    }
    cfg.scope = scope == "encoder" ? Scope::Encoder : Scope::Attention;
    cfg.seq_lens = parse_seq_lens(seq_lens);

    std::cerr << "running " << cfg.modes.size() << " mode(s) x " << cfg.seq_lens.size()
              << " length(s) x " << cfg.trials << " trial(s), scope=" << scope << "\n";
    std::vector<probsparse::bench::BenchRecord> records = probsparse::bench::run_bench(cfg);

    std::ofstream csv(out_path);
    if (!csv) {
        std::cerr << "error: cannot open " << out_path << " for writing\n";
        return 1;
    }
    probsparse::bench::write_csv(csv, records);
    if (!csv.good()) {
        std::cerr << "error: write failed for " << out_path << "\n";
        return 1;
    }

    std::ofstream report(report_path);
    if (!report) {
        std::cerr << "error: cannot open " << report_path << " for writing\n";
        return 1;
    }
    probsparse::bench::write_report(report, records, cfg);
    if (!report.good()) {
        std::cerr << "error: write failed for " << report_path << "\n";
        return 1;
    }

    probsparse::bench::write_report(std::cout, records, cfg);
    std::cerr << "wrote " << records.size() << " records to " << out_path << ", report to "
              << report_path << "\n";
    return 0;
}

int run_verify_command(std::uint64_t seed, std::size_t instances) {
    std::vector<probsparse::verify::PropertyResult> results =
        probsparse::verify::run_suite(seed, instances);
    std::size_t width = 0;
    for (const auto& r : results) {
        width = std::max(width, r.name.size());
    }
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-*s  %s  (%zu instance%s)\n", static_cast<int>(width), r.name.c_str(),
                    r.pass ? "PASS" : "FAIL", r.instances, r.instances == 1 ? "" : "s");
        if (!r.pass) {
            all_pass = false;
            std::printf("    %s\n", r.detail.c_str());
        }
    }
    std::printf("%zu/%zu properties passed\n",
                static_cast<std::size_t>(std::count_if(results.begin(), results.end(),
                                                       [](const auto& r) { return r.pass; })),
                results.size());
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prob-sparse self-attention benchmark harness"};
    app.require_subcommand(1);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "sweep dense vs prob-sparse attention");
    std::string mode = "both";
    std::string scope = "attention";
    std::string seq_lens = "512,1024,2048,4096";
    std::string out_path = "bench.csv";
    std::string report_path = "bench_report.md";
    probsparse::bench::BenchConfig cfg;
    bench_cmd->add_option("--mode", mode, "dense | probsparse | both")
        ->check(CLI::IsMember({"dense", "probsparse", "both"}));
    bench_cmd->add_option("--scope", scope, "attention | encoder")
        ->check(CLI::IsMember({"attention", "encoder"}));
    bench_cmd->add_option("--seq-lens", seq_lens, "comma-separated sequence lengths");
    bench_cmd->add_option("--d-model", cfg.d_model, "model dimension (default 256)");
    bench_cmd->add_option("--heads", cfg.heads, "attention heads (default 4)");
    bench_cmd->add_option("--layers", cfg.layers, "encoder layers (default 16)");
    bench_cmd->add_option("--r-sparse", cfg.sparsity.r_sparse, "sparse rate (default 0.5)");
    bench_cmd->add_option("--r-sample", cfg.sparsity.r_sample, "sampling rate (default 1)");
    bench_cmd->add_option("--n-share", cfg.sparsity.share_every,
                          "share measurement every N layers (default 4)");
    bench_cmd->add_option("--trials", cfg.trials, "recorded trials per point (default 5)");
    bench_cmd->add_option("--seed", cfg.seed, "base RNG seed (default 0)");
    bench_cmd->add_option("--out", out_path, "CSV output path");
    bench_cmd->add_option("--report", report_path, "markdown report path");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle/property suite");
    std::uint64_t verify_seed = 0;
    std::size_t instances = 1000;
    verify_cmd->add_option("--seed", verify_seed, "base RNG seed (default 0)");
    verify_cmd->add_option("--instances", instances, "instances per property (default 1000)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // usage error
    }

    try {
        if (bench_cmd->parsed()) {
            return run_bench_command(mode, scope, seq_lens, cfg, out_path, report_path);
        }
        return run_verify_command(verify_seed, instances);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
