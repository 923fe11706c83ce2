#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tandem/checkpoint.hpp"
#include "tandem/cli.hpp"
#include "tandem/manifest.hpp"

using namespace tandem;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "tandemseg");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("tandem_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
        return path(name);
    }

    std::string phantom_spec() const {
        return write("spec.json", R"({"dims":[6,32,32],"spacing":[2,1,1],"liver_semi_axes_mm":[5,10,11],
            "lesion_count":[1,1],"lesion_radius_mm":[3,4],"seed":5})");
    }

    std::string train_config() const {
        return write("train.json", R"({"stage1":{"epochs":1,"batch_size":4,"learning_rate":0.001,"resolution":"half"},
            "stage2":{"epochs":1,"batch_size":4,"learning_rate":0.0001,"resolution":"full"},
            "context":{"epochs":1,"batch_size":4,"learning_rate":0.001,"resolution":"full"},
            "validation_fraction":0.34,"seed":2,
            "architecture":{"depth":2,"initial_filters":4,"filters":[4,6],"block_kinds":["A","B"],"seed":1}})");
    }

    fs::path dir;
};

std::map<std::string, std::string> directory_bytes(const fs::path& d) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(d))
        if (e.path().filename() != "manifest.json") out[e.path().filename().string()] = read_file_bytes(e.path().string());
    return out;
}

}  // namespace

TEST_F(Cli, GenPhantomIsDeterministicAndWritesManifest) {
    const std::string spec = phantom_spec();
    ASSERT_EQ(cli({"gen-phantom", "--spec", spec, "--out", path("a"), "--count", "4"}).code, 0);
    ASSERT_EQ(cli({"gen-phantom", "--spec", spec, "--out", path("b"), "--count", "4"}).code, 0);
    const auto a = directory_bytes(path("a"));
    EXPECT_EQ(a.size(), 8u);
    EXPECT_EQ(a, directory_bytes(path("b")));
    const json ma = json::parse(read_file_bytes(path("a/manifest.json")));
    const json mb = json::parse(read_file_bytes(path("b/manifest.json")));
    EXPECT_EQ(ma["command"], "gen-phantom");
    EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
    EXPECT_EQ(ma["version"], kVersion);
    EXPECT_EQ(ma["outputs"].size(), 8u);
    EXPECT_EQ(ma["seed"], 5);
}

TEST_F(Cli, EvaluateIdenticalDirectoriesIsPerfect) {
    ASSERT_EQ(cli({"gen-phantom", "--spec", phantom_spec(), "--out", path("gt"), "--count", "2"}).code, 0);
    for (const auto& e : fs::directory_iterator(path("gt")))
        if (e.path().string().ends_with("_image.segv")) fs::remove(e.path());
    const CliRun r = cli({"evaluate", "--pred", path("gt"), "--gt", path("gt"), "--out", path("ev"), "--jobs", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(read_file_bytes(path("ev/report.json")));
    EXPECT_EQ(j["summary"]["Dice per case"], 1.0);
    EXPECT_EQ(j["summary"]["Liver Dice per case"], 1.0);
    ASSERT_EQ(j["summary"]["detection"].size(), 2u);
    for (const auto& d : j["summary"]["detection"]) {
        EXPECT_EQ(d["Precision"], 1.0);
        EXPECT_EQ(d["Recall"], 1.0);
    }
    EXPECT_TRUE(fs::exists(path("ev/cases.csv")));
    EXPECT_TRUE(fs::exists(path("ev/summary.csv")));
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(cli({}).code, kExitUsage);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(cli({"gen-phantom", "--spec", phantom_spec(), "--out", path("x"), "--bogus"}).code, kExitUsage);
    EXPECT_EQ(cli({"gen-phantom", "--spec", path("missing.json"), "--out", path("x")}).code, kExitUsage);
    EXPECT_EQ(cli({"gen-phantom", "--spec", write("bad.json", "{not json"), "--out", path("x")}).code, kExitValidation);
    EXPECT_EQ(cli({"gen-phantom", "--spec", write("neg.json", R"({"lesion_radius_mm": [-1, 2]})"), "--out", path("x")}).code,
              kExitValidation);
    EXPECT_EQ(cli({"train-context", "--base", path("none.ckpt"), "--config", train_config(), "--data", path("d"), "--out",
                   path("o")}).code,
              kExitUsage);
    EXPECT_EQ(cli({"evaluate", "--pred", path("nope"), "--gt", path("nope"), "--out", path("o")}).code, kExitUsage);
    EXPECT_EQ(cli({"--version"}).code, kExitOk);
}

TEST_F(Cli, SelftestAndGradcheckPass) {
    const CliRun s = cli({"selftest", "--out", path("st")});
    EXPECT_EQ(s.code, 0) << s.out;
    EXPECT_EQ(s.out.find("FAIL"), std::string::npos) << s.out;
    const CliRun g = cli({"gradcheck", "--out", path("gc")});
    EXPECT_EQ(g.code, 0) << g.out;
    const auto pos = g.out.find("max relative error ");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_LT(std::stod(g.out.substr(pos + 19)), 1e-5);
    EXPECT_TRUE(fs::exists(path("gc/manifest.json")));
}

TEST_F(Cli, PipelineRunsEndToEndAndJobsDoNotChangeOutputs) {
    ASSERT_EQ(cli({"gen-phantom", "--spec", phantom_spec(), "--out", path("data"), "--count", "3"}).code, 0);
    const auto data_before = directory_bytes(path("data"));
    const std::string cfg = train_config();
    CliRun r = cli({"train", "--config", cfg, "--data", path("data"), "--out", path("model")});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"best.ckpt", "last.ckpt", "loss.csv", "split.json", "manifest.json"})
        EXPECT_TRUE(fs::exists(path(std::string("model/") + f))) << f;
    r = cli({"train-context", "--base", path("model/best.ckpt"), "--config", cfg, "--data", path("data"), "--out",
             path("ctx")});
    ASSERT_EQ(r.code, 0) << r.err;

    r = cli({"predict", "--checkpoint", path("model/best.ckpt"), "--context", path("ctx/best.ckpt"), "--input",
             path("data"), "--out", path("p1"), "--jobs", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli({"predict", "--checkpoint", path("model/best.ckpt"), "--context", path("ctx/best.ckpt"), "--input",
             path("data"), "--out", path("p3"), "--jobs", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(directory_bytes(path("p1")), directory_bytes(path("p3")));
    EXPECT_EQ(directory_bytes(path("p1")).size(), 6u);

    r = cli({"postprocess", "--pred", path("p1"), "--out", path("labels")});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli({"evaluate", "--pred", path("labels"), "--gt", path("data"), "--out", path("ev")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("ev/report.json")));
    EXPECT_EQ(directory_bytes(path("data")), data_before);

    // Same inputs and seed reproduce the training outputs.
    r = cli({"train", "--config", cfg, "--data", path("data"), "--out", path("model2")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(directory_bytes(path("model")), directory_bytes(path("model2")));
}

TEST(Manifest, HashIgnoresKeyOrderAndWhitespace) {
    RunManifest a, b;
    a.config_json = R"({"b": 1, "a": [1, 2]})";
    b.config_json = "{\"a\":[1,2],\n \"b\":1}";
    EXPECT_EQ(a.config_hash(), b.config_hash());
    EXPECT_EQ(a.config_hash().size(), 16u);
    b.config_json = R"({"a":[2,1],"b":1})";
    EXPECT_NE(a.config_hash(), b.config_hash());
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}
