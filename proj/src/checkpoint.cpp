#include "kprompt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "kprompt/errors.hpp"

namespace kprompt {

namespace {

constexpr char kMagic[4] = {'K', 'P', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(value));
    if (!in) throw DataError("truncated checkpoint: " + path);
    return value;
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
    auto len = read_pod<std::uint32_t>(in, path);
    if (len > 1u << 20) throw DataError("corrupt checkpoint (name too long): " + path);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw DataError("truncated checkpoint: " + path);
    return s;
}

void write_tensors(std::ofstream& out, const std::map<std::string, Matrix>& tensors) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        write_string(out, name);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols));
        for (double x : m.a) write_pod<float>(out, static_cast<float>(x));
    }
}

std::map<std::string, Matrix> read_tensors(std::ifstream& in, const std::string& path) {
    std::map<std::string, Matrix> tensors;
    auto count = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_string(in, path);
        auto rows = read_pod<std::uint32_t>(in, path);
        auto cols = read_pod<std::uint32_t>(in, path);
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        for (double& x : m.a) x = static_cast<double>(read_pod<float>(in, path));
        tensors.emplace(std::move(name), std::move(m));
    }
    return tensors;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainProgress& progress, const AdamW* optimizer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path);

    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kFormatVersion);

    const ModelConfig& cfg = params.config();
    write_pod<std::int32_t>(out, cfg.hidden);
    write_pod<std::int32_t>(out, cfg.layers);
    write_pod<std::int32_t>(out, cfg.heads);
    write_pod<std::int32_t>(out, cfg.ffn_mult);
    write_pod<std::int32_t>(out, cfg.max_position);
    write_pod<std::int32_t>(out, cfg.vocab_size);
    write_pod<double>(out, cfg.dropout);

    write_pod<std::uint32_t>(out, progress.epochs_done);
    write_pod<std::uint64_t>(out, progress.global_step);
    write_pod<std::uint64_t>(out, progress.seed);

    write_tensors(out, params.tensors());

    write_pod<std::uint8_t>(out, optimizer ? 1 : 0);
    if (optimizer) {
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(optimizer->steps_taken()));
        write_tensors(out, optimizer->first_moment());
        write_tensors(out, optimizer->second_moment());
    }
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path);

    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a checkpoint file: " + path);
    auto version = read_pod<std::uint32_t>(in, path);
    if (version != kFormatVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    ModelConfig cfg;
    cfg.hidden = read_pod<std::int32_t>(in, path);
    cfg.layers = read_pod<std::int32_t>(in, path);
    cfg.heads = read_pod<std::int32_t>(in, path);
    cfg.ffn_mult = read_pod<std::int32_t>(in, path);
    cfg.max_position = read_pod<std::int32_t>(in, path);
    cfg.vocab_size = read_pod<std::int32_t>(in, path);
    cfg.dropout = read_pod<double>(in, path);

    Checkpoint ck;
    ck.progress.epochs_done = read_pod<std::uint32_t>(in, path);
    ck.progress.global_step = read_pod<std::uint64_t>(in, path);
    ck.progress.seed = read_pod<std::uint64_t>(in, path);

    ck.params = ModelParams::from_tensors(cfg, read_tensors(in, path));

    auto has_optim = read_pod<std::uint8_t>(in, path);
    if (has_optim) {
        ck.has_optimizer = true;
        ck.optim_step = static_cast<int>(read_pod<std::uint64_t>(in, path));
        ck.first_moment = read_tensors(in, path);
        ck.second_moment = read_tensors(in, path);
    }
    return ck;
}

}  // namespace kprompt
