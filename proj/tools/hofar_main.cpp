#include <CLI11.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "hofar/bench.hpp"
#include "hofar/checkpoint.hpp"
#include "hofar/gradcheck.hpp"
#include "hofar/inference.hpp"
#include "hofar/training.hpp"

namespace {

// exit codes: 0 ok, 1 generic/gradcheck failure, 2 malformed config,
// 3 I/O failure, 4 corrupt checkpoint
constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitCorrupt = 4;

void write_raw_latent(const std::string& path, const hofar::Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io: cannot open '" + path + "' for writing");
    for (double v : *t.data) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        out.write(b, 4);
    }
    if (!out) throw std::runtime_error("io: write failed for '" + path + "'");
}

void write_ppm(const std::string& path, const hofar::Tensor& t) {
    double lo = (*t.data)[0], hi = (*t.data)[0];
    for (double v : *t.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io: cannot open '" + path + "' for writing");
    out << "P6\n" << t.w << " " << t.h << "\n255\n";
    for (int i = 0; i < t.h; ++i)
        for (int j = 0; j < t.w; ++j)
            for (int k = 0; k < 3; ++k) {
                int ch = std::min(k, t.c - 1);
                double v = span > 0.0 ? (t.at(i, j, ch) - lo) / span : 0.0;
                out.put(static_cast<char>(std::lround(v * 255.0)));
            }
    if (!out) throw std::runtime_error("io: write failed for '" + path + "'");
}

int cmd_train(const std::string& cfg_path, const std::string& out_dir) {
    hofar::TrainConfig cfg = hofar::load_config_file(cfg_path);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("io: cannot create directory '" + out_dir + "'");

    hofar::TrainResult res = hofar::train(cfg);
    const std::string ckpt = out_dir + "/model.ckpt";
    const std::string csv = out_dir + "/loss.csv";
    hofar::save_checkpoint(ckpt, res.model);
    hofar::write_loss_csv(csv, res.records, cfg.K);

    if (res.records.empty()) {
        std::printf("trained 0 steps (checkpoint equals the seed init)\n");
    } else {
        std::printf("trained %d steps, loss %.6g -> %.6g\n", cfg.steps,
                    res.records.front().total, res.records.back().total);
    }
    std::printf("wrote %s and %s\n", ckpt.c_str(), csv.c_str());
    return 0;
}

int cmd_sample(const std::string& ckpt, const hofar::SampleConfig& sc,
               const std::string& prefix) {
    hofar::Model model = hofar::load_checkpoint(ckpt);
    hofar::Tensor out = hofar::generate(model, sc);
    write_ppm(prefix + ".ppm", out);
    write_raw_latent(prefix + ".bin", out);
    std::printf("sampled class %d (%dx%dx%d) -> %s.ppm, %s.bin\n", sc.class_id, out.h,
                out.w, out.c, prefix.c_str(), prefix.c_str());
    return 0;
}

int cmd_bench(const std::string& out_path) {
    hofar::BenchReport report = hofar::run_bench();
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("io: cannot open '" + out_path + "' for writing");
    out << hofar::bench_csv(report);
    if (!out) throw std::runtime_error("io: write failed for '" + out_path + "'");
    for (const hofar::BenchRow& r : report.rows)
        if (r.kind.rfind("slope_", 0) == 0 || r.kind.rfind("ratio_", 0) == 0)
            std::printf("%-22s n=%-3d d=%-3d %.3f\n", r.kind.c_str(), r.n, r.d, r.value);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_gradcheck() {
    bool all_pass = true;
    for (const hofar::GradCheckResult& r : hofar::run_all_gradchecks()) {
        std::printf("%-28s worst %.3e  tol %.0e  %s\n", r.name.c_str(), r.worst_rel_err,
                    r.tolerance, r.pass ? "pass" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    std::printf("gradcheck: %s\n", all_pass ? "all checks passed" : "FAILURES detected");
    return all_pass ? 0 : kExitGeneric;
}

int classify(const std::exception& e) {
    const std::string msg = e.what();
    if (msg.rfind("config:", 0) == 0) return kExitConfig;
    if (msg.rfind("io:", 0) == 0) return kExitIo;
    return kExitGeneric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-scale flow generator: train, sample, bench, gradcheck"};
    app.require_subcommand(1);

    std::string cfg_path, train_out = ".";
    CLI::App* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", cfg_path, "key = value config file")->required();
    train->add_option("--out", train_out, "directory for model.ckpt and loss.csv");

    std::string ckpt_path, sample_prefix = "sample", order_name = "second";
    hofar::SampleConfig sc;
    CLI::App* sample = app.add_subcommand("sample", "generate from a checkpoint");
    sample->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    sample->add_option("--class", sc.class_id, "class id");
    sample->add_option("--seed", sc.seed, "sampling seed");
    sample->add_option("--steps", sc.flow_steps, "flow integration steps");
    sample->add_option("--cfg", sc.cfg_scale, "guidance strength (1 disables)");
    sample->add_option("--order", order_name, "integration order: first or second");
    sample->add_option("--out", sample_prefix, "output prefix for .ppm and .bin");

    std::string bench_out = "bench.csv";
    CLI::App* bench = app.add_subcommand("bench", "run the complexity benchmark");
    bench->add_option("--out", bench_out, "CSV output path");

    app.add_subcommand("gradcheck", "finite-difference check of all gradients");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(cfg_path, train_out);
        if (sample->parsed()) {
            if (order_name == "first") sc.order = hofar::HeadOrder::first;
            else if (order_name == "second") sc.order = hofar::HeadOrder::second;
            else throw std::runtime_error("config: --order must be first or second");
            return cmd_sample(ckpt_path, sc, sample_prefix);
        }
        if (bench->parsed()) return cmd_bench(bench_out);
        return cmd_gradcheck();
    } catch (const hofar::CorruptCheckpoint& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCorrupt;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify(e);
    }
}
