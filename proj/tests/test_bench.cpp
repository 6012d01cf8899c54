// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "probsparse/bench.hpp"

using namespace probsparse;
using namespace probsparse::bench;

namespace {

BenchConfig tiny_config() {
    BenchConfig cfg;
    cfg.seq_lens = {32, 48};
    cfg.d_model = 16;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.trials = 3;
    cfg.warmup = 0;
    cfg.seed = 12345;
    return cfg;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        lines.push_back(line);
    }
    return lines;
}

// blank out column 5 (wall_time_ns)
std::string mask_wall_time(const std::string& line) {
    std::string out;
    int col = 0;
    for (char ch : line) {
        if (ch == ',') {
            ++col;
            out += ch;
        } else if (col != 4) {
            out += ch;
        }
    }
    return out;
}

} // namespace

TEST_CASE("bench produces modes x lengths x trials records") {
    BenchConfig cfg = tiny_config();
    auto records = run_bench(cfg);
    CHECK(records.size() == 2 * 2 * 3);

    std::ostringstream csv;
    write_csv(csv, records);
    auto lines = split_lines(csv.str());
    REQUIRE(lines.size() == 1 + records.size());
    CHECK(lines[0] == "mode,scope,seq_len,trial,wall_time_ns,transient_bytes,"
                      "r_sparse,r_sample,n_share,seed");
    // plain decimal values, no quoting
    CHECK(lines[1].find('"') == std::string::npos);
    CHECK(lines[1].rfind("dense,attention,32,0,", 0) == 0);
    CHECK(lines[1].find("0.5,1,4,12345") != std::string::npos);
}

TEST_CASE("bench CSV is byte-identical across runs except wall_time") {
    BenchConfig cfg = tiny_config();
    std::ostringstream a, b;
    write_csv(a, run_bench(cfg));
    write_csv(b, run_bench(cfg));
    auto la = split_lines(a.str());
    auto lb = split_lines(b.str());
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(mask_wall_time(la[i]) == mask_wall_time(lb[i]));
    }
}

TEST_CASE("prob-sparse attention module charges fewer transient bytes") {
    BenchConfig cfg = tiny_config();
    cfg.seq_lens = {512};
    cfg.d_model = 64;
    cfg.heads = 2;
    cfg.trials = 1;
    auto records = run_bench(cfg);
    REQUIRE(records.size() == 2);
    const auto& dense = records[0].mode == Mode::Dense ? records[0] : records[1];
    const auto& sparse = records[0].mode == Mode::Dense ? records[1] : records[0];
    CHECK(dense.transient_bytes > 0);
    CHECK(sparse.transient_bytes < dense.transient_bytes);
}

TEST_CASE("summary computes ratios only when both modes are present") {
    BenchConfig cfg = tiny_config();
    auto rows = summarize(run_bench(cfg));
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        CHECK(row.has_dense);
        CHECK(row.has_sparse);
        CHECK(row.speedup_ratio > 0.0);
        CHECK(row.dense_bytes > row.sparse_bytes);
    }

    cfg.modes = {Mode::Dense};
    auto dense_rows = summarize(run_bench(cfg));
    for (const auto& row : dense_rows) {
        CHECK(row.has_dense);
        CHECK_FALSE(row.has_sparse);
        CHECK(row.speedup_ratio == 0.0);
    }
}

TEST_CASE("markdown report carries the table and the reference band") {
    BenchConfig cfg = tiny_config();
    auto records = run_bench(cfg);
    std::ostringstream md;
    write_report(md, records, cfg);
    std::string text = md.str();
    CHECK(text.find("| seq_len | dense median (ms) | sparse median (ms) | speedup % | "
                    "memory reduction % |") != std::string::npos);
    CHECK(text.find("attention scope") != std::string::npos);
    CHECK(text.find("8% to 45%") != std::string::npos);
    CHECK(text.find("15% to 45%") != std::string::npos);
}

TEST_CASE("encoder scope runs and counts records") {
    BenchConfig cfg = tiny_config();
    cfg.scope = Scope::Encoder;
    cfg.seq_lens = {16};
    cfg.trials = 1;
    cfg.layers = 2;
    auto records = run_bench(cfg);
    REQUIRE(records.size() == 2);
    for (const auto& r : records) {
        CHECK(r.wall_time_ns > 0);
        CHECK(r.transient_bytes > 0);
    }
}
