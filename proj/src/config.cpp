#include "hofar/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hofar {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

int parse_int(const std::string& key, const std::string& v) {
    size_t pos = 0;
    long long out;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad integer for " + key + ": '" + v + "'");
    }
    if (pos != v.size()) throw std::runtime_error("config: bad integer for " + key + ": '" + v + "'");
    return static_cast<int>(out);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    size_t pos = 0;
    unsigned long long out;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad unsigned integer for " + key + ": '" + v + "'");
    }
    if (pos != v.size() || v.find('-') != std::string::npos)
        throw std::runtime_error("config: bad unsigned integer for " + key + ": '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad number for " + key + ": '" + v + "'");
    }
    if (pos != v.size()) throw std::runtime_error("config: bad number for " + key + ": '" + v + "'");
    return out;
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) + " is not key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw std::runtime_error("config: line " + std::to_string(lineno) + " has empty key or value");

        if (key == "K") cfg.K = parse_int(key, val);
        else if (key == "a") cfg.a = parse_int(key, val);
        else if (key == "n") cfg.n = parse_int(key, val);
        else if (key == "c") cfg.c = parse_int(key, val);
        else if (key == "width") cfg.width = parse_int(key, val);
        else if (key == "m") cfg.m = parse_int(key, val);
        else if (key == "head_depth") cfg.head_depth = parse_int(key, val);
        else if (key == "schedule") {
            if (val == "vp") cfg.schedule = ScheduleKind::vp;
            else if (val == "linear") cfg.schedule = ScheduleKind::linear;
            else throw std::runtime_error("config: schedule must be vp or linear, got '" + val + "'");
        }
        else if (key == "a_vp") cfg.a_vp = parse_double(key, val);
        else if (key == "b_vp") cfg.b_vp = parse_double(key, val);
        else if (key == "lr") cfg.lr = parse_double(key, val);
        else if (key == "beta1") cfg.beta1 = parse_double(key, val);
        else if (key == "beta2") cfg.beta2 = parse_double(key, val);
        else if (key == "weight_decay") cfg.weight_decay = parse_double(key, val);
        else if (key == "steps") cfg.steps = parse_int(key, val);
        else if (key == "batch") cfg.batch = parse_int(key, val);
        else if (key == "seed") cfg.seed = parse_u64(key, val);
        else if (key == "num_classes") cfg.num_classes = parse_int(key, val);
        else if (key == "cfg_dropout") cfg.cfg_dropout = parse_double(key, val);
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    validate_config(cfg);
    return cfg;
}

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io: cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.K < 1) throw std::runtime_error("config: K must be >= 1");
    if (cfg.a < 2) throw std::runtime_error("config: a must be >= 2");
    if (cfg.n < 1) throw std::runtime_error("config: n must be >= 1");
    long long f = 1;
    for (int i = 0; i < cfg.K - 1; ++i) {
        f *= cfg.a;
        if (f > cfg.n) break;
    }
    if (f > cfg.n || cfg.n % f != 0)
        throw std::runtime_error("config: n must be divisible by a^(K-1)");
    if (cfg.c < 1) throw std::runtime_error("config: c must be >= 1");
    if (cfg.width < 1) throw std::runtime_error("config: width must be >= 1");
    if (cfg.m < 1) throw std::runtime_error("config: m must be >= 1");
    if (cfg.head_depth < 0) throw std::runtime_error("config: head_depth must be >= 0");
    if (!(cfg.a_vp > 0.0)) throw std::runtime_error("config: a_vp must be > 0");
    if (!(cfg.b_vp > 0.0)) throw std::runtime_error("config: b_vp must be > 0");
    if (!(cfg.lr > 0.0)) throw std::runtime_error("config: lr must be > 0");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) throw std::runtime_error("config: beta1 must be in [0,1)");
    if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) throw std::runtime_error("config: beta2 must be in [0,1)");
    if (!(cfg.weight_decay >= 0.0)) throw std::runtime_error("config: weight_decay must be >= 0");
    if (cfg.steps < 0) throw std::runtime_error("config: steps must be >= 0");
    if (cfg.batch < 1) throw std::runtime_error("config: batch must be >= 1");
    if (cfg.num_classes < 1) throw std::runtime_error("config: num_classes must be >= 1");
    if (!(cfg.cfg_dropout >= 0.0 && cfg.cfg_dropout <= 1.0))
        throw std::runtime_error("config: cfg_dropout must be in [0,1]");
}

std::string config_to_text(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "K = " << cfg.K << "\n";
    out << "a = " << cfg.a << "\n";
    out << "n = " << cfg.n << "\n";
    out << "c = " << cfg.c << "\n";
    out << "width = " << cfg.width << "\n";
    out << "m = " << cfg.m << "\n";
    out << "head_depth = " << cfg.head_depth << "\n";
    out << "schedule = " << (cfg.schedule == ScheduleKind::vp ? "vp" : "linear") << "\n";
    out << "a_vp = " << fmt_double(cfg.a_vp) << "\n";
    out << "b_vp = " << fmt_double(cfg.b_vp) << "\n";
    out << "lr = " << fmt_double(cfg.lr) << "\n";
    out << "beta1 = " << fmt_double(cfg.beta1) << "\n";
    out << "beta2 = " << fmt_double(cfg.beta2) << "\n";
    out << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n";
    out << "steps = " << cfg.steps << "\n";
    out << "batch = " << cfg.batch << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "num_classes = " << cfg.num_classes << "\n";
    out << "cfg_dropout = " << fmt_double(cfg.cfg_dropout) << "\n";
    return out.str();
}

Schedule make_schedule(const TrainConfig& cfg) {
    if (cfg.schedule == ScheduleKind::vp) {
        Schedule s = Schedule::vp();
        s.a = cfg.a_vp;
        s.b = cfg.b_vp;
        return s;
    }
    return Schedule::linear();
}

}  // namespace hofar
