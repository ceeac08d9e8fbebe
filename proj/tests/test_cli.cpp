#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = FOCUSPAR_CLI_PATH;

struct Run {
    int code;
    std::string err;
};

Run run(const std::string& args, const fs::path& dir) {
    const auto err = dir / "stderr.txt";
    const std::string cmd = kCli + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, focuspar::slurp(err)};
}

const std::string kTiny =
    "model.dim=16 model.text_dim=16 model.vision_layers=1 model.text_layers=1 model.global_tokens=2 "
    "model.local_tokens=2 model.subsets=2 model.prompts=2 train.epochs=1 train.batch_size=8";

}  // namespace

TEST(Cli, HelpAndUnknownFlag) {
    const auto dir = testutil::scratch_dir("cli_help");
    EXPECT_EQ(run("--help", dir).code, 0);
    EXPECT_EQ(run("train --help", dir).code, 0);
    const auto help = focuspar::slurp(dir / "stdout.txt");
    for (const char* flag : {"--config", "--out", "--seed", "--freeze-text", "--calibrate-threshold", "--mix-sees-mix"})
        EXPECT_NE(help.find(flag), std::string::npos) << flag;
    const auto bad = run("train --no-such-flag", dir);
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("error=usage"), std::string::npos);
    EXPECT_EQ(run("", dir).code, 1);
}

TEST(Cli, Pipeline) {
    const auto dir = testutil::scratch_dir("cli_pipe");
    const auto data = dir / "data", model = dir / "model";
    std::ofstream(dir / "gen.json") << R"({"num_samples": 40, "holdout": 1})";
    ASSERT_EQ(run("gen-data --config " + (dir / "gen.json").string() + " --out " + data.string(), dir).code, 0);
    EXPECT_TRUE(fs::exists(data / "manifest.jsonl"));
    EXPECT_TRUE(fs::exists(data / "images" / "000000.ppm"));
    EXPECT_EQ(run("gen-data --out " + (dir / "x").string() + " bogus=1", dir).code, 1);

    const auto tr = run("train --data " + data.string() + " --out " + model.string() + " --seed 3 " + kTiny, dir);
    ASSERT_EQ(tr.code, 0) << tr.err;
    EXPECT_NE(tr.err.find("seed 3"), std::string::npos);
    for (const char* f : {"checkpoint.bin", "config.json", "vocab.txt", "losses.csv", "metrics.csv"})
        EXPECT_TRUE(fs::exists(model / f)) << f;
    EXPECT_EQ(focuspar::slurp(model / "losses.csv").substr(0, 34), "step,L_sim,L_racl,L_v2t,L_t2v,L_to");

    std::ofstream(dir / "holdout.json") << R"({"holdout": 1})";
    const auto ckpt = (model / "checkpoint.bin").string();
    const auto ev = run("eval --ckpt " + ckpt + " --split test --open-domain " + (dir / "holdout.json").string() +
                            " --out " + (dir / "eval").string(),
                        dir);
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto csv = focuspar::slurp(dir / "stdout.txt");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "split,mA,acc,prec,recall,f1,r@1,r@2");
    EXPECT_EQ(csv.substr(csv.find('\n') + 1, 5), "test,");

    EXPECT_EQ(run("retrieve --ckpt " + ckpt + " --k 1,2,18 --out " + (dir / "ret").string(), dir).code, 0);
    EXPECT_NE(focuspar::slurp(dir / "stdout.txt").find("18,1.000000"), std::string::npos);
    EXPECT_EQ(run("dump-attn --ckpt " + ckpt + " --out " + (dir / "attn").string(), dir).code, 0);
    EXPECT_TRUE(fs::exists(dir / "attn" / "attn.csv"));

    // config hash mismatch unless forced
    EXPECT_EQ(run("eval --ckpt " + ckpt + " model.prompts=3 --out " + (dir / "e2").string(), dir).code, 1);
    EXPECT_EQ(run("eval --ckpt " + ckpt + " --split nowhere --out " + (dir / "e3").string(), dir).code, 1);

    const auto gc = run("gradcheck --ckpt " + ckpt + " --tol 1e-3 --batch 2 --out " + (dir / "gc").string(), dir);
    EXPECT_EQ(gc.code, 0) << gc.err;
    const auto bad = run("gradcheck --ckpt " + ckpt + " --tol 1e-3 --corrupt-grad --out " + (dir / "gc2").string(), dir);
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("error=numerical"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsValidationError) {
    const auto dir = testutil::scratch_dir("cli_cfg");
    std::ofstream(dir / "cfg.json") << R"({"train": {"epochz": 2}})";
    const auto r = run("train --config " + (dir / "cfg.json").string(), dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error=validation"), std::string::npos);
    EXPECT_NE(r.err.find("train.epochz"), std::string::npos);
}
