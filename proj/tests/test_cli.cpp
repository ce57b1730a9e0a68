#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "chembfn/checkpoint.hpp"
#include "chembfn/tokenizer.hpp"
#include "commands.hpp"
#include "test_helpers.hpp"

namespace fs = std::filesystem;
using chembfn::cli::run;
using nlohmann::json;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Scratch {
    fs::path root;
    Scratch() {
        root = fs::temp_directory_path() / ("chembfn_cli_" + std::to_string(chembfn::Rng(std::random_device{}()).next_u64()));
        fs::create_directories(root);
    }
    ~Scratch() { fs::remove_all(root); }
    std::string operator/(const std::string& name) const { return (root / name).string(); }
};

// A tiny network so that CLI round trips run in well under a second.
const std::vector<std::string> kTiny = {"--set", "network.layers=1", "--set", "network.heads=2", "--set",
                                        "network.hidden=16", "--set", "network.ffn=32", "--set",
                                        "training.batch_size=8", "--set", "training.warmup_steps=2"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
    args.insert(args.end(), kTiny.begin(), kTiny.end());
    return args;
}

json error_json(const Result& r) {
    std::istringstream lines(r.err);
    std::string first;
    std::getline(lines, first);
    return json::parse(first);
}

}  // namespace

TEST_CASE("tokenize prints ids, including bracket atoms") {
    const Result r = call({"tokenize", "--smiles", "[C@@H]", "--smiles", "CCO"});
    REQUIRE(r.code == 0);
    const auto& v = chembfn::build_vocabulary();
    std::ostringstream expected;
    for (const std::string s : {"[C@@H]", "CCO"}) {
        expected << s << '\t';
        const auto seq = chembfn::tokenize(s, v);
        for (std::size_t d = 0; d < seq.size(); ++d) expected << (d ? " " : "") << seq.ids[d];
        expected << '\n';
    }
    CHECK(r.out == expected.str());
    CHECK(r.out.rfind("[C@@H]\t1 5 32 16 16 49 6 2\n", 0) == 0);
}

TEST_CASE("errors are single-line JSON with distinct exit codes") {
    Scratch dir;
    {
        const Result r = call({"tokenize", "--smiles", "CC!O"});
        CHECK(r.code == chembfn::cli::kData);
        const json j = error_json(r);
        CHECK(j["error"] == "data");
        CHECK(j["line"] == 1);
    }
    {
        const Result r = call({"frobnicate"});
        CHECK(r.code == chembfn::cli::kUsage);
        CHECK(error_json(r)["error"] == "usage");
    }
    {
        const Result r = call({"train", "--data", chembfn::testing::data_path("toy_32.smi"), "--out", dir / "t", "--set",
                               "training.momentum=0.9"});
        CHECK(r.code == chembfn::cli::kConfig);
        CHECK(error_json(r)["error"] == "config");
    }
    {
        std::ofstream(dir / "junk.bin") << "junk";
        const Result r = call({"sample", "--checkpoint", dir / "junk.bin", "--out", dir / "s"});
        CHECK(r.code == chembfn::cli::kCheckpoint);
        CHECK(error_json(r)["error"] == "checkpoint");
    }
    {
        std::ofstream(dir / "long.smi") << "CCO\nCC\nCCCCCCCCCCCCCCCCCCCCCCCC\n";
        const Result r = call({"train", "--data", dir / "long.smi", "--out", dir / "g", "--padding", "global",
                               "--max-len", "12", "--epochs", "1"});
        CHECK(r.code == chembfn::cli::kData);
        const json j = error_json(r);
        CHECK(j["line"] == 3);
        CHECK(j["file"] == dir / "long.smi");
        CHECK(r.err.find('\n') == r.err.size() - 1);
    }
}

TEST_CASE("train writes a run record and resume replays the uninterrupted run") {
    Scratch dir;
    const std::string data = chembfn::testing::data_path("toy_32.smi");
    REQUIRE(call(with_tiny({"train", "--data", data, "--out", dir / "full", "--epochs", "4", "--seed", "3"})).code == 0);
    REQUIRE(call(with_tiny({"train", "--data", data, "--out", dir / "half", "--epochs", "2", "--seed", "3"})).code == 0);
    REQUIRE(call(with_tiny({"train", "--data", data, "--out", dir / "rest", "--epochs", "4", "--seed", "3", "--resume",
                            dir / "half/checkpoint.bin"}))
                .code == 0);

    const auto full = chembfn::load_denoiser(dir / "full/checkpoint.bin");
    const auto resumed = chembfn::load_denoiser(dir / "rest/checkpoint.bin");
    CHECK(resumed.progress.step == full.progress.step);
    CHECK(resumed.progress.epoch == 4);
    for (std::size_t i = 0; i < full.params.size(); ++i)
        CHECK(resumed.params.value(i).storage() == full.params.value(i).storage());

    const std::string full_log = slurp(dir / "full/loss_log.csv");
    const std::string tail = slurp(dir / "rest/loss_log.csv");
    const std::string body = tail.substr(tail.find('\n') + 1);
    CHECK(full_log.size() > body.size());
    CHECK(full_log.compare(full_log.size() - body.size(), body.size(), body) == 0);

    const json rec = json::parse(slurp(dir / "full/run.json"));
    CHECK(rec["command"] == "train");
    CHECK(rec["seed"] == 3);
    CHECK(rec["vocab_hash"] == chembfn::build_vocabulary().hash());
    CHECK(rec.contains("git_describe"));
    CHECK(fs::exists(dir / "full/config.ini"));
}

TEST_CASE("sampling is reproducible per seed and honours a scaffold") {
    Scratch dir;
    const std::string data = chembfn::testing::data_path("toy_32.smi");
    REQUIRE(call(with_tiny({"train", "--data", data, "--out", dir / "m", "--epochs", "2"})).code == 0);
    const std::string ck = dir / "m/checkpoint.bin";
    auto sample = [&](const std::string& out, const std::string& seed, std::vector<std::string> extra = {}) {
        std::vector<std::string> args = {"sample", "--checkpoint", ck, "--out", out, "--n", "6", "--steps", "5",
                                         "--seed", seed, "--data", data};
        args.insert(args.end(), extra.begin(), extra.end());
        const Result r = call(args);
        REQUIRE(r.code == 0);
        return slurp(fs::path(out) / "samples.smi");
    };
    const std::string a = sample(dir / "a", "11");
    CHECK(a == sample(dir / "b", "11"));
    CHECK(a != sample(dir / "c", "12"));
    CHECK(slurp(dir / "a/summary.csv").rfind("n,validity,uniqueness,novelty\n", 0) == 0);

    const std::string scaffolded = sample(dir / "s", "11", {"--scaffold", "c1ccccc1"});
    std::istringstream lines(scaffolded);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        ++n;
        CHECK(line.rfind("c1ccccc1", 0) == 0);
    }
    CHECK(n == 6);

    const Result too_long = call({"sample", "--checkpoint", ck, "--out", dir / "x", "--seq-len", "4", "--scaffold",
                                  "c1ccccc1"});
    CHECK(too_long.code == chembfn::cli::kUsage);
}

TEST_CASE("analyze-schedule writes schedule endpoints and an R^2 table") {
    Scratch dir;
    const Result r = call({"analyze-schedule", "--k", "246", "--points", "11", "--samples", "200", "--out", dir / "a"});
    REQUIRE(r.code == 0);
    std::ifstream table(dir / "a/r2_table.csv");
    std::string header;
    std::getline(table, header);
    CHECK(header == "kind,beta1,slope,intercept,r_squared,alpha_at_1,alpha_at_1_over_beta1");
    int rows = 0;
    for (std::string line; std::getline(table, line);) ++rows;
    CHECK(rows == 2);
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("schedule_", 0) != 0) continue;
        std::ifstream curve(entry.path());
        std::string line, first, last;
        std::getline(curve, line);
        std::getline(curve, first);
        while (std::getline(curve, line)) last = line;
        CHECK(first.rfind("0,0,", 0) == 0);
        const double beta_at_1 = std::stod(last.substr(last.find(',') + 1));
        CHECK(beta_at_1 == doctest::Approx(chembfn::beta_one_max(246)).epsilon(1e-5));
    }
}
