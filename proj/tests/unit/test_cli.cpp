#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvr/cli.hpp"
#include "cvr/file_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "cvrnet");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = cvr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path workdir() {
    const auto dir = fs::temp_directory_path() / "cvr_test_cli";
    fs::create_directories(dir);
    return dir;
}

std::string p(const fs::path& path) { return path.string(); }

fs::path write_json(const std::string& name, const json& j) {
    const auto path = workdir() / name;
    std::ofstream(path) << j.dump(2);
    return path;
}

json read_json(const fs::path& path) { return json::parse(cvr::read_file(path)); }

json small_generator(std::uint64_t seed, std::size_t n_cases, std::size_t d_f) {
    return {{"seed", seed}, {"n_cases", n_cases}, {"d_f", d_f}, {"d_sig", d_f}, {"test_fraction", 0.25}};
}

json small_train() {
    return {{"epochs", 2}, {"n_blocks", 1}, {"d_k", 8}, {"d_emb", 16}, {"seed", 3}};
}

} // namespace

TEST_CASE("help and bad usage") {
    CHECK(run({"--help"}).code == 0);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"train"}).code == 2);
}

TEST_CASE("generate is byte-identical across runs and writes a manifest") {
    const auto cfg = write_json("gen.json", small_generator(5, 8, 8));
    const auto a = workdir() / "a.jsonl";
    const auto b = workdir() / "b.jsonl";
    REQUIRE(run({"generate", "--config", p(cfg), "--out", p(a)}).code == 0);
    REQUIRE(run({"generate", "--config", p(cfg), "--out", p(b)}).code == 0);
    CHECK(cvr::read_file(a) == cvr::read_file(b));

    const json m = read_json(p(a) + ".manifest.json");
    CHECK(m["command"] == "generate");
    CHECK(m["exit_code"] == 0);
    CHECK(m["seed"] == 5);
    CHECK(m.contains("version"));
    CHECK(m.contains("config"));
    CHECK(m.contains("duration_seconds"));

    const auto c = workdir() / "c.jsonl";
    REQUIRE(run({"generate", "--config", p(cfg), "--seed", "6", "--out", p(c)}).code == 0);
    CHECK(cvr::read_file(a) != cvr::read_file(c));
}

TEST_CASE("generate splits into train and test files") {
    const auto cfg = write_json("gen_split.json", small_generator(5, 8, 8));
    const auto tr = workdir() / "split_train.jsonl";
    const auto te = workdir() / "split_test.jsonl";
    REQUIRE(run({"generate", "--config", p(cfg), "--out", p(tr), "--test-out", p(te)}).code == 0);
    auto lines = [](const fs::path& f) {
        std::istringstream in(cvr::read_file(f));
        std::string l;
        int n = 0;
        while (std::getline(in, l)) ++n;
        return n;
    };
    CHECK(lines(tr) == 6);
    CHECK(lines(te) == 2);
}

TEST_CASE("configuration errors exit with code 2 and name the field") {
    json cfg = small_generator(5, 8, 8);
    cfg.erase("seed");
    const auto no_seed = write_json("no_seed.json", cfg);
    const auto out = workdir() / "no_seed.jsonl";
    const Result r = run({"generate", "--config", p(no_seed), "--out", p(out)});
    CHECK(r.code == 2);
    CHECK(r.err.find("seed") != std::string::npos);
    const json m = read_json(p(out) + ".manifest.json");
    CHECK(m["exit_code"] == 2);
    CHECK(m.contains("error"));
    CHECK_FALSE(fs::exists(out));

    const auto not_object = workdir() / "array.json";
    std::ofstream(not_object) << "[1, 2]";
    CHECK(run({"generate", "--config", p(not_object), "--out", p(out)}).code == 2);

    const auto broken = workdir() / "broken.json";
    std::ofstream(broken) << "{";
    CHECK(run({"generate", "--config", p(broken), "--out", p(out)}).code == 2);
}

TEST_CASE("missing inputs exit with code 1") {
    const auto out = workdir() / "x.json";
    CHECK(run({"generate", "--config", p(workdir() / "nope.json"), "--out", p(out)}).code == 1);
    CHECK(run({"train", "--data", p(workdir() / "nope.jsonl"), "--out", p(out)}).code == 1);
}

TEST_CASE("train, eval and the dimension guard") {
    const auto gen = write_json("gen_te.json", small_generator(9, 6, 8));
    const auto data = workdir() / "te.jsonl";
    REQUIRE(run({"generate", "--config", p(gen), "--out", p(data)}).code == 0);
    const auto tcfg = write_json("train.json", small_train());
    const auto model = workdir() / "model.json";
    const Result t = run({"train", "--config", p(tcfg), "--data", p(data), "--out", p(model), "--quiet"});
    REQUIRE(t.code == 0);
    CHECK(fs::exists(model));
    CHECK(read_json(p(model) + ".manifest.json")["results"].contains("final_loss"));

    CHECK(run({"train", "--config", p(tcfg), "--data", p(data), "--out", p(model), "--epochs", "0"}).code == 2);

    const auto metrics = workdir() / "metrics.json";
    const auto froc = workdir() / "froc.csv";
    const Result e = run({"eval", "--checkpoint", p(model), "--data", p(data), "--out", p(metrics),
                          "--froc-csv", p(froc)});
    REQUIRE(e.code == 0);
    const json m = read_json(metrics);
    for (const char* key : {"precision", "recall", "f1", "fpi", "froc"}) CHECK(m.contains(key));
    CHECK(cvr::read_file(froc).rfind("fpi,tpr,threshold", 0) == 0);

    const auto strict = workdir() / "metrics_strict.json";
    REQUIRE(run({"eval", "--checkpoint", p(model), "--data", p(data), "--out", p(strict),
                 "--score-threshold", "1.0"})
                .code == 0);
    const json s = read_json(strict);
    CHECK(s["tp"] == 0);
    CHECK(s["fp"] == 0);
    CHECK(s["precision"] == 0.0);
    CHECK(s["recall"] == 0.0);

    const auto wide = write_json("gen_wide.json", small_generator(9, 2, 12));
    const auto wide_data = workdir() / "wide.jsonl";
    REQUIRE(run({"generate", "--config", p(wide), "--out", p(wide_data)}).code == 0);
    const Result mismatch = run({"eval", "--checkpoint", p(model), "--data", p(wide_data), "--out",
                                 p(workdir() / "mismatch.json")});
    CHECK(mismatch.code == 2);
    CHECK(mismatch.err.find("8") != std::string::npos);
    CHECK(mismatch.err.find("12") != std::string::npos);
}

TEST_CASE("gradcheck passes, and fails on a corrupted gradient") {
    const auto report = workdir() / "gc.json";
    const Result ok = run({"gradcheck", "--seed", "1", "--count", "2", "--out", p(report)});
    CHECK(ok.code == 0);
    const json j = read_json(report);
    CHECK(j["pass"] == true);
    CHECK(j["runs"].size() == 2);

    const auto bad = workdir() / "gc_bad.json";
    CHECK(run({"gradcheck", "--seed", "1", "--corrupt", "--out", p(bad)}).code == 1);
    CHECK(read_json(p(bad) + ".manifest.json")["exit_code"] == 1);
}

TEST_CASE("ablate writes one row per run plus means") {
    const auto gen = write_json("gen_ab.json", small_generator(4, 8, 8));
    const auto tr = workdir() / "ab_train.jsonl";
    const auto te = workdir() / "ab_test.jsonl";
    REQUIRE(run({"generate", "--config", p(gen), "--out", p(tr), "--test-out", p(te)}).code == 0);
    const auto tcfg = write_json("train_ab.json", small_train());
    const auto csv = workdir() / "ablation.csv";
    const Result r = run({"ablate", "--config", p(tcfg), "--train", p(tr), "--test", p(te), "--n-list", "0,1",
                          "--seeds", "1,2", "--out", p(csv)});
    REQUIRE(r.code == 0);
    std::istringstream in(cvr::read_file(csv));
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("kind,n_blocks,seed", 0) == 0);
    int runs = 0;
    int means = 0;
    while (std::getline(in, line)) {
        if (line.rfind("run,", 0) == 0) ++runs;
        if (line.rfind("mean,", 0) == 0) ++means;
    }
    CHECK(runs == 4);
    CHECK(means == 2);
}
