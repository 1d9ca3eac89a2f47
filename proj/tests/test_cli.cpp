#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "hofar/checkpoint.hpp"
#include "hofar/training.hpp"

// End-to-end checks of the command-line binary: artifacts, determinism, and
// the exit-code contract. HOFAR_BIN is injected by the build.

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(HOFAR_BIN) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in, "missing file ", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

const char* kSmokeConfig =
    "# smoke config: two scales, tiny model\n"
    "K = 2\n"
    "a = 2\n"
    "n = 4\n"
    "c = 2\n"
    "width = 8\n"
    "m = 1\n"
    "head_depth = 1\n"
    "num_classes = 2\n"
    "steps = 2\n"
    "batch = 1\n"
    "seed = 77\n";

}  // namespace

TEST_CASE("train and sample produce deterministic artifacts") {
    spit("cli_smoke.cfg", kSmokeConfig);
    CHECK_EQ(run("train --config cli_smoke.cfg --out cli_out"), 0);
    std::string ckpt1 = slurp("cli_out/model.ckpt");
    std::string csv1 = slurp("cli_out/loss.csv");

    // loss CSV: header + one row per step
    std::istringstream lines(csv1);
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK_EQ(line, "step,scale_0,scale_1,total");
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK_EQ(rows, 2);

    // retraining reproduces both artifacts byte for byte
    CHECK_EQ(run("train --config cli_smoke.cfg --out cli_out2"), 0);
    CHECK(ckpt1 == slurp("cli_out2/model.ckpt"));
    CHECK(csv1 == slurp("cli_out2/loss.csv"));

    CHECK_EQ(run("sample --ckpt cli_out/model.ckpt --class 1 --seed 5 --steps 4 "
                 "--out cli_out/s1"),
             0);
    std::string ppm = slurp("cli_out/s1.ppm");
    std::string raw = slurp("cli_out/s1.bin");
    CHECK_EQ(ppm.substr(0, 11), std::string("P6\n4 4\n255\n"));
    CHECK_EQ(ppm.size(), 11 + 4 * 4 * 3);
    CHECK_EQ(raw.size(), 4 * 4 * 2 * 4);  // n*n*c little-endian f32

    CHECK_EQ(run("sample --ckpt cli_out/model.ckpt --class 1 --seed 5 --steps 4 "
                 "--out cli_out/s2"),
             0);
    CHECK(ppm == slurp("cli_out/s2.ppm"));
    CHECK(raw == slurp("cli_out/s2.bin"));

    // a different seed changes the bytes
    CHECK_EQ(run("sample --ckpt cli_out/model.ckpt --class 1 --seed 6 --steps 4 "
                 "--out cli_out/s3"),
             0);
    CHECK(raw != slurp("cli_out/s3.bin"));

    // first-order integration is also accepted
    CHECK_EQ(run("sample --ckpt cli_out/model.ckpt --class 0 --seed 5 --steps 4 "
                 "--order first --out cli_out/s4"),
             0);
}

TEST_CASE("zero-step training emits the init checkpoint and a bare csv") {
    spit("cli_zero.cfg", std::string(kSmokeConfig) + "steps = 0\n");
    CHECK_EQ(run("train --config cli_zero.cfg --out cli_zero_out"), 0);
    CHECK_EQ(slurp("cli_zero_out/loss.csv"), "step,scale_0,scale_1,total\n");

    hofar::Model back = hofar::load_checkpoint("cli_zero_out/model.ckpt");
    hofar::Rng rng(back.cfg.seed);
    hofar::Model fresh = hofar::make_model(back.cfg, rng);
    std::vector<hofar::ParamHandle> hb = hofar::param_handles(back);
    std::vector<hofar::ParamHandle> hf = hofar::param_handles(fresh);
    REQUIRE_EQ(hb.size(), hf.size());
    for (size_t i = 0; i < hb.size(); ++i)
        for (size_t k = 0; k < hb[i].data->size(); ++k)
            CHECK_EQ((*hb[i].data)[k],
                     static_cast<double>(static_cast<float>((*hf[i].data)[k])));
}

TEST_CASE("exit codes separate config, io, and corruption failures") {
    spit("cli_bad.cfg", "bogus = 1\n");
    CHECK_EQ(run("train --config cli_bad.cfg --out cli_bad_out"), 2);

    spit("cli_bad2.cfg", "lr = 0\n");
    CHECK_EQ(run("train --config cli_bad2.cfg --out cli_bad_out"), 2);

    CHECK_EQ(run("train --config does_not_exist.cfg --out cli_bad_out"), 3);

    spit("cli_garbage.ckpt", "this is not a checkpoint");
    CHECK_EQ(run("sample --ckpt cli_garbage.ckpt --out cli_g"), 4);

    CHECK_EQ(run("sample --ckpt missing.ckpt --out cli_g"), 3);

    // class id outside the table is a generic failure
    spit("cli_one.cfg", std::string(kSmokeConfig) + "steps = 0\n");
    CHECK_EQ(run("train --config cli_one.cfg --out cli_one_out"), 0);
    CHECK_EQ(run("sample --ckpt cli_one_out/model.ckpt --class 9 --out cli_g"), 1);
    CHECK_EQ(run("sample --ckpt cli_one_out/model.ckpt --order third --out cli_g"), 2);
}
