#include <cstring>
#include <fstream>

#include "coir/errors.hpp"
#include "coir/model.hpp"

namespace coir {

namespace {

constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw IngestionError("cannot write checkpoint: " + path);
    }
    void bytes(const void* p, std::size_t n) {
        out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        bytes(b, 2);
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void str16(const std::string& s) {
        if (s.size() > 0xffff) throw ContractError("checkpoint: string too long");
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void floats(const std::vector<float>& v) { bytes(v.data(), v.size() * sizeof(float)); }
};

struct Reader {
    std::ifstream in;
    std::size_t offset = 0;
    explicit Reader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw IngestionError("cannot open checkpoint: " + path);
    }
    void bytes(void* p, std::size_t n) {
        in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw FormatError("checkpoint truncated", offset + static_cast<std::size_t>(in.gcount()));
        offset += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() {
        unsigned char b[2];
        bytes(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::string str16() {
        const std::uint16_t n = u16();
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
};

} // namespace

void save_checkpoint(const std::string& path, const Parameters& params) {
    Writer w(path);
    w.bytes("CASE", 4);
    w.u32(kVersion);
    const ModelConfig& c = params.config;
    w.u32(static_cast<std::uint32_t>(c.image_size));
    w.u32(static_cast<std::uint32_t>(c.patch_size));
    w.u32(static_cast<std::uint32_t>(c.channels));
    w.u32(static_cast<std::uint32_t>(c.d));
    w.u32(static_cast<std::uint32_t>(c.n_heads));
    w.u32(static_cast<std::uint32_t>(c.vit_layers));
    w.u32(static_cast<std::uint32_t>(c.shift_layers));
    w.u32(static_cast<std::uint32_t>(c.d_e));
    w.u32(static_cast<std::uint32_t>(c.vocab_size));
    w.u32(static_cast<std::uint32_t>(c.max_text_len));
    w.u64(params.init_seed);
    const auto& vocab = params.tokenizer.tokens();
    w.u32(static_cast<std::uint32_t>(vocab.size()));
    for (const auto& t : vocab) w.str16(t);
    w.u32(static_cast<std::uint32_t>(params.named.size()));
    for (const auto& [name, tensor] : params.named) {
        w.str16(name);
        w.u8(static_cast<std::uint8_t>(tensor.shape.size()));
        for (int dim : tensor.shape) w.u32(static_cast<std::uint32_t>(dim));
        w.floats(tensor.data);
    }
    if (!w.out) throw IngestionError("write failure on checkpoint: " + path);
}

Parameters load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "CASE", 4) != 0)
        throw FormatError("bad checkpoint magic in " + path, 0);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);

    Parameters params;
    ModelConfig& c = params.config;
    c.image_size = static_cast<int>(r.u32());
    c.patch_size = static_cast<int>(r.u32());
    c.channels = static_cast<int>(r.u32());
    c.d = static_cast<int>(r.u32());
    c.n_heads = static_cast<int>(r.u32());
    c.vit_layers = static_cast<int>(r.u32());
    c.shift_layers = static_cast<int>(r.u32());
    c.d_e = static_cast<int>(r.u32());
    c.vocab_size = static_cast<int>(r.u32());
    c.max_text_len = static_cast<int>(r.u32());
    params.init_seed = r.u64();
    c.validate();

    const std::uint32_t vocab_count = r.u32();
    std::vector<std::string> vocab;
    vocab.reserve(vocab_count);
    for (std::uint32_t i = 0; i < vocab_count; ++i) vocab.push_back(r.str16());
    params.tokenizer = Tokenizer::from_vocab(vocab);
    if (params.tokenizer.vocab_size() != c.vocab_size)
        throw FormatError("checkpoint vocab size disagrees with config", r.offset);

    const std::uint32_t param_count = r.u32();
    for (std::uint32_t i = 0; i < param_count; ++i) {
        std::string name = r.str16();
        const int ndims = r.u8();
        std::vector<int> shape;
        std::size_t n = 1;
        for (int d = 0; d < ndims; ++d) {
            shape.push_back(static_cast<int>(r.u32()));
            n *= static_cast<std::size_t>(shape.back());
        }
        std::vector<float> data(n);
        r.bytes(data.data(), n * sizeof(float));
        params.named.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return params;
}

} // namespace coir
