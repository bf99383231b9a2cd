// End-to-end exercise of the command-line surface: generate data, pretrain,
// finetune, evaluate, sweep and summarize through the real binary.

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecgcl/sweep.hpp"

namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* env = std::getenv("ECGCL_BIN");
    REQUIRE(env != nullptr);
    return env;
}

int run(const std::string& args, const fs::path& capture) {
    const std::string cmd = binary() + " " + args + " > " + capture.string() + " 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kConfig = R"(
[data]
source = synthetic
count = 40
classes = 2
leads = 2
length = 32
seed = 5
path = DATASET

[model]
encoder = A
stem_channels = 3
block_channels = 3,4,4,4
block_kernels = 3,3,3,3
pool_strides = 2,2,2
projection_sizes = 8,8,8,6
classifier_sizes = 8,8,6,5

[train]
pretrain_epochs = 1
pretrain_batch = 8
finetune_epochs = 2
finetune_batch = 8

[augmentation]
kind = gaussian_noise
sigma = 0.15

[sweep]
kinds = vertical_flip
encoders = A
label_fractions = 9
seeds = 1
)";

}  // namespace

TEST_CASE("cli pipeline: synth-data, pretrain, finetune, evaluate, sweep, summarize") {
    fs::path dir = fs::temp_directory_path() / "ecgcl_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const fs::path dataset = dir / "data.ecgds";
    const fs::path config = dir / "exp.cfg";
    {
        std::string text = kConfig;
        const std::string token = "DATASET";
        text.replace(text.find(token), token.size(), dataset.string());
        std::ofstream out(config);
        out << text;
    }
    const fs::path log = dir / "out.txt";

    // generation must come first: the config points at the dataset path
    REQUIRE(run("synth-data --config " + config.string() + " --out " + dataset.string(), log) == 0);
    REQUIRE(fs::exists(dataset));

    const fs::path enc = dir / "encoder.ckpt";
    REQUIRE(run("pretrain --config " + config.string() + " --out " + enc.string() + " --seed 1",
                log) == 0);
    REQUIRE(fs::exists(enc));
    REQUIRE(slurp(log).find("final loss") != std::string::npos);

    const fs::path clf = dir / "classifier.ckpt";
    REQUIRE(run("finetune --config " + config.string() + " --encoder " + enc.string() +
                    " --out " + clf.string() + " --fraction 9 --seed 1",
                log) == 0);
    REQUIRE(fs::exists(clf));

    REQUIRE(run("evaluate --config " + config.string() + " --encoder " + enc.string() +
                    " --classifier " + clf.string(),
                log) == 0);
    REQUIRE(slurp(log).find("weighted_accuracy") != std::string::npos);

    // evaluate also works with an untrained head
    REQUIRE(run("evaluate --config " + config.string() + " --encoder " + enc.string(), log) == 0);

    const fs::path sweep_dir = dir / "sweep";
    REQUIRE(run("sweep --config " + config.string() + " --out " + sweep_dir.string() +
                    " --deterministic",
                log) == 0);
    REQUIRE(fs::exists(sweep_dir / "results.csv"));

    REQUIRE(run("summarize " + sweep_dir.string(), log) == 0);
    const std::string summary = slurp(log);
    REQUIRE(summary.find("vertical_flip") != std::string::npos);
    REQUIRE(summary.find("reference") != std::string::npos);

    fs::remove_all(dir);
}

TEST_CASE("cli reports one-line diagnostics with nonzero exit codes") {
    fs::path dir = fs::temp_directory_path() / "ecgcl_cli_err";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path log = dir / "out.txt";

    REQUIRE(run("pretrain --config /nonexistent.cfg --out " + (dir / "x.ckpt").string(), log) !=
            0);
    REQUIRE(slurp(log).find("error:") != std::string::npos);

    REQUIRE(run("summarize " + (dir / "missing").string(), log) != 0);

    // unknown flag
    REQUIRE(run("sweep --config x --out y --bogus-flag", log) != 0);

    fs::remove_all(dir);
}
