// End-to-end checks of the command-line surface: exit codes, artifact
// determinism, and the documented output values.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "support/corpus.hpp"
#include "vgen/video_io.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(VGEN_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), {});
}

std::string fresh_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("token-count prints the documented values") {
    auto r = run_cli("token-count --frames 129 --size 768 --spec hunyuan");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "76032\n");
    CHECK(run_cli("token-count --frames 129 --size 768 --spec dcae --causal 1").out == "19008\n");
    CHECK(run_cli("token-count --frames 1 --size 256 --spec hunyuan").out == "256\n");
}

TEST_CASE("cost prints the stage table with truncated 0.1k labels") {
    auto r = run_cli("cost --stages paper");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("$107520 ($107.5k)") != std::string::npos);
    CHECK(r.out.find("$18432 ($18.4k)") != std::string::npos);
    CHECK(r.out.find("$73728 ($73.7k)") != std::string::npos);
    CHECK(r.out.find("total: $199680 ($199.6k)") != std::string::npos);
}

TEST_CASE("exit codes: unknown subcommand, bad config, missing input, numeric failure") {
    CHECK(run_cli("frobnicate").exit_code == 64);
    CHECK(run_cli("token-count --frames 129 --size 768 --spec nosuch").exit_code == 65);
    CHECK(run_cli("cost --config /nonexistent/path.json").exit_code == 66);
    // malformed config
    auto dir = fresh_dir("vgen_cli_badcfg");
    std::ofstream(fs::path(dir) / "bad.json") << "{not json";
    CHECK(run_cli("cost --config " + dir + "/bad.json").exit_code == 65);
    // impossible tolerance turns the grad check into a numeric failure
    CHECK(run_cli("grad-check --op matmul --tol 1e-30").exit_code == 70);
    // off-grid frame count for a non-causal spec is a config error
    CHECK(run_cli("token-count --frames 130 --size 768 --spec dcae").exit_code == 65);
}

TEST_CASE("per-subcommand help lists the consumed flags") {
    auto r = run_cli("token-count --help");
    CHECK(r.exit_code == 0);
    for (const char* flag : {"--frames", "--size", "--width", "--height", "--spec", "--causal"})
        CHECK(r.out.find(flag) != std::string::npos);
    auto rf = run_cli("filter --help");
    for (const char* flag : {"--corpus", "--metadata", "--tier"})
        CHECK(rf.out.find(flag) != std::string::npos);
}

TEST_CASE("filter artifacts are byte-identical across reruns") {
    auto corpus = vgen::testsupport::make_synthetic_corpus(fresh_dir("vgen_cli_corpus"), 31337);

    // write the corpus filter thresholds as a CLI config
    nlohmann::json tiers = nlohmann::json::array();
    for (const auto& t : corpus.config.tiers)
        tiers.push_back({{"aesthetic_min", t.aesthetic_min}, {"motion_lo", t.motion_lo},
                         {"motion_hi", t.motion_hi}, {"blur_var_min", t.blur_var_min},
                         {"ocr_max", t.ocr_max}, {"jitter_max", t.jitter_max}});
    nlohmann::json cfg{{"filter",
                        {{"scene_threshold", corpus.config.scene_threshold},
                         {"preprocess", {{"max_long_side", corpus.config.preprocess.max_long_side}}},
                         {"tiers", tiers}}}};
    auto cfg_dir = fresh_dir("vgen_cli_cfg");
    std::ofstream(fs::path(cfg_dir) / "cfg.json") << cfg.dump();

    auto out1 = fresh_dir("vgen_cli_filter1");
    auto out2 = fresh_dir("vgen_cli_filter2");
    std::string base = "filter --corpus " + corpus.dir + " --metadata " + corpus.metadata_path +
                       " --tier 2 --config " + cfg_dir + "/cfg.json --seed 7 --out ";
    auto r1 = run_cli(base + out1);
    auto r2 = run_cli(base + out2);
    CHECK(r1.exit_code == 0);
    CHECK(r1.out == r2.out);
    for (const char* f : {"records.jsonl", "rejected.jsonl", "tier_0.txt", "tier_1.txt", "tier_2.txt"})
        CHECK(slurp(fs::path(out1) / f) == slurp(fs::path(out2) / f));

    // the strict tier keeps exactly the clean ids
    std::string tier2 = slurp(fs::path(out1) / "tier_2.txt");
    for (const auto& id : corpus.clean_ids) CHECK(tier2.find(id + "\n") != std::string::npos);
    for (const auto& id : corpus.score_defect_ids) CHECK(tier2.find(id) == std::string::npos);

    // stats over the records file
    auto stats_out = fresh_dir("vgen_cli_stats");
    auto rs = run_cli("stats --records " + out1 + "/records.jsonl --out " + stats_out);
    CHECK(rs.exit_code == 0);
    CHECK(fs::exists(fs::path(stats_out) / "report.json"));
}

TEST_CASE("sampling artifacts are byte-identical under a fixed seed") {
    auto out1 = fresh_dir("vgen_cli_s1");
    auto out2 = fresh_dir("vgen_cli_s2");
    auto r1 = run_cli("sample --seed 11 --steps 4 --caption \"tiny clip\" --out " + out1);
    auto r2 = run_cli("sample --seed 11 --steps 4 --caption \"tiny clip\" --out " + out2);
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(fs::path(out1) / "sample.rvc") == slurp(fs::path(out2) / "sample.rvc"));

    // a different seed produces a different clip
    auto out3 = fresh_dir("vgen_cli_s3");
    run_cli("sample --seed 12 --steps 4 --caption \"tiny clip\" --out " + out3);
    CHECK(slurp(fs::path(out1) / "sample.rvc") != slurp(fs::path(out3) / "sample.rvc"));
}

TEST_CASE("OS2_SEED env var is the seed fallback") {
    auto out1 = fresh_dir("vgen_cli_env1");
    auto out2 = fresh_dir("vgen_cli_env2");
    auto out3 = fresh_dir("vgen_cli_env3");
    auto r1 = run_cli("sample --seed 77 --steps 3 --out " + out1);
    CHECK(r1.exit_code == 0);
    auto renv = run_cli("sample --steps 3 --out " + out2 + " < /dev/null; true");
    (void)renv;
    RunResult r2;
    {
        std::string cmd = std::string("OS2_SEED=77 ") + VGEN_CLI_PATH + " sample --steps 3 --out " +
                          out2 + " 2>&1";
        FILE* p = popen(cmd.c_str(), "r");
        REQUIRE(p != nullptr);
        std::array<char, 4096> buf{};
        size_t n;
        while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r2.out.append(buf.data(), n);
        r2.exit_code = WEXITSTATUS(pclose(p));
    }
    CHECK(r2.exit_code == 0);
    CHECK(slurp(fs::path(out1) / "sample.rvc") == slurp(fs::path(out2) / "sample.rvc"));
    // flag wins over env
    RunResult r3;
    {
        std::string cmd = std::string("OS2_SEED=99 ") + VGEN_CLI_PATH + " sample --seed 77 --steps 3 --out " +
                          out3 + " 2>&1";
        FILE* p = popen(cmd.c_str(), "r");
        REQUIRE(p != nullptr);
        r3.exit_code = WEXITSTATUS(pclose(p));
    }
    CHECK(slurp(fs::path(out1) / "sample.rvc") == slurp(fs::path(out3) / "sample.rvc"));
}

TEST_CASE("train then sample from the saved manifest") {
    auto train_out = fresh_dir("vgen_cli_train");
    auto r = run_cli("train-toy --seed 21 --steps 2 --batch 2 --out " + train_out);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(fs::path(train_out) / "weights" / "model" / "index.json"));
    CHECK(fs::exists(fs::path(train_out) / "loss.jsonl"));

    auto sm = fresh_dir("vgen_cli_trained_sample");
    auto rs = run_cli("sample --seed 5 --steps 3 --weights " + train_out + "/weights --out " + sm);
    CHECK(rs.exit_code == 0);

    // i2v conditioning on the generated clip
    auto i2v = fresh_dir("vgen_cli_i2v");
    auto ri = run_cli("i2v-sample --seed 5 --steps 3 --weights " + train_out +
                      "/weights --image " + sm + "/sample.rvc --out " + i2v);
    CHECK(ri.exit_code == 0);
    CHECK(fs::exists(fs::path(i2v) / "sample.rvc"));

    // corrupted manifest is rejected
    {
        auto idx = fs::path(train_out) / "weights" / "model" / "index.json";
        auto txt = slurp(idx);
        auto pos = txt.find("\"checksum\": \"");
        REQUIRE(pos != std::string::npos);
        txt[pos + 13] = txt[pos + 13] == 'f' ? '0' : 'f';
        std::ofstream(idx) << txt;
    }
    auto bad = run_cli("sample --seed 5 --steps 3 --weights " + train_out + "/weights --out " + sm);
    CHECK(bad.exit_code == 65);
}

TEST_CASE("scale-search trace decisions are recorded per injection") {
    auto cfg_dir = fresh_dir("vgen_cli_scale_cfg");
    nlohmann::json cfg{{"scaling",
                        {{"injection_steps", {1, 3}},
                         {"variations", 3},
                         {"lookahead_depth", 2},
                         {"weights", {{"motion_smoothness", 1.0}}}}}};
    std::ofstream(fs::path(cfg_dir) / "cfg.json") << cfg.dump();
    auto out = fresh_dir("vgen_cli_scale");
    auto r = run_cli("scale-search --seed 9 --steps 6 --config " + cfg_dir + "/cfg.json --out " + out);
    CHECK(r.exit_code == 0);
    auto trace = slurp(fs::path(out) / "trace.jsonl");
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 2);
    CHECK(fs::exists(fs::path(out) / "sample.rvc"));
    // closed-form evaluation count: (6 + 2*2*2) * 3
    CHECK(r.out.find("model evaluations (closed form): 42") != std::string::npos);
}

TEST_CASE("bucket-plan and batch-search artifacts") {
    auto dir = fresh_dir("vgen_cli_bp");
    std::ofstream(fs::path(dir) / "samples.jsonl")
        << R"({"id":"a","frames":20,"height":256,"width":256})" << "\n"
        << R"({"id":"b","frames":1,"height":1024,"width":1024})" << "\n"
        << R"({"id":"c","frames":500,"height":256,"width":256})" << "\n";
    auto r = run_cli("bucket-plan --samples " + dir + "/samples.jsonl --stage 12 --out " + dir);
    CHECK(r.exit_code == 0);
    auto plan = slurp(fs::path(dir) / "bucket_plan.jsonl");
    CHECK(plan.find("\"token_cap\":2304") != std::string::npos);
    CHECK(plan.find("\"token_cap\":4096") != std::string::npos);
    CHECK(plan.find("\"reject\":true") != std::string::npos);

    auto rb = run_cli("batch-search --tokens 8448,2304 --out " + dir);
    CHECK(rb.exit_code == 0);
    CHECK(fs::exists(fs::path(dir) / "batch_sizes.json"));
}
