#include "hofar/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

namespace hofar {

namespace {

constexpr char kMagic[4] = {'H', 'O', 'F', 'R'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw CorruptCheckpoint("checkpoint: truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16() {
        std::uint16_t v = u8();
        return static_cast<std::uint16_t>(v | (static_cast<std::uint16_t>(u8()) << 8));
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string encode(Model& model) {
    std::vector<ParamHandle> params = param_handles(model);
    std::string out;
    out.append(kMagic, 4);
    put_u16(out, kVersion);

    std::string echo = config_to_text(model.cfg);
    put_u32(out, static_cast<std::uint32_t>(echo.size()));
    out += echo;

    put_u32(out, static_cast<std::uint32_t>(params.size()));
    std::uint64_t offset = 0;
    for (const ParamHandle& p : params) {
        put_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out += p.name;
        out.push_back(static_cast<char>(p.dims.size()));
        for (int d : p.dims) put_u32(out, static_cast<std::uint32_t>(d));
        put_u64(out, offset);
        offset += 4 * static_cast<std::uint64_t>(p.data->size());
    }
    put_u64(out, offset);  // payload byte size
    for (const ParamHandle& p : params)
        for (double v : *p.data) put_f32(out, static_cast<float>(v));
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model) {
    std::string bytes = encode(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io: cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("io: write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io: cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    Reader r{buf};

    if (r.bytes(4) != std::string(kMagic, 4))
        throw CorruptCheckpoint("checkpoint: bad magic");
    if (r.u16() != kVersion) throw CorruptCheckpoint("checkpoint: unsupported version");

    std::uint32_t echo_len = r.u32();
    std::string echo = r.bytes(echo_len);
    TrainConfig cfg;
    try {
        cfg = parse_config_text(echo);
    } catch (const std::exception& e) {
        throw CorruptCheckpoint(std::string("checkpoint: bad config echo: ") + e.what());
    }

    Rng rng(cfg.seed);
    Model model = make_model(cfg, rng);
    std::vector<ParamHandle> params = param_handles(model);

    std::uint32_t count = r.u32();
    if (count != params.size())
        throw CorruptCheckpoint("checkpoint: parameter count does not match the config");
    std::vector<std::uint64_t> offsets(count);
    std::uint64_t expect = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t name_len = r.u16();
        std::string name = r.bytes(name_len);
        if (name != params[i].name)
            throw CorruptCheckpoint("checkpoint: manifest name mismatch at '" + name + "'");
        std::uint8_t rank = r.u8();
        if (rank != params[i].dims.size())
            throw CorruptCheckpoint("checkpoint: manifest rank mismatch at '" + name + "'");
        for (std::uint8_t d = 0; d < rank; ++d)
            if (r.u32() != static_cast<std::uint32_t>(params[i].dims[d]))
                throw CorruptCheckpoint("checkpoint: manifest shape mismatch at '" + name + "'");
        offsets[i] = r.u64();
        if (offsets[i] != expect)
            throw CorruptCheckpoint("checkpoint: offsets are not tightly increasing");
        expect += 4 * static_cast<std::uint64_t>(params[i].data->size());
    }
    std::uint64_t payload = r.u64();
    if (payload != expect) throw CorruptCheckpoint("checkpoint: payload size mismatch");

    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<double>& data = *params[i].data;
        for (double& v : data) v = static_cast<double>(r.f32());
    }
    if (r.pos != buf.size()) throw CorruptCheckpoint("checkpoint: trailing bytes");
    return model;
}

}  // namespace hofar
