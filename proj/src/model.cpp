#include "coir/model.hpp"

#include <cmath>

#include "coir/rng.hpp"

namespace coir {

void ModelConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        throw ContractError("model config: image_size must be a positive multiple of patch_size");
    if (d <= 0 || n_heads <= 0 || d % n_heads != 0)
        throw ContractError("model config: d must be a positive multiple of n_heads");
    if (vit_layers < 1 || shift_layers < 1)
        throw ContractError("model config: need at least one layer per encoder");
    if (d_e < 1 || max_text_len < 2 || channels < 1)
        throw ContractError("model config: bad d_e / max_text_len / channels");
}

Tensor& Parameters::at(const std::string& name) {
    for (auto& [n, t] : named)
        if (n == name) return t;
    throw LookupError("parameters: unknown name " + name);
}

const Tensor& Parameters::at(const std::string& name) const {
    for (const auto& [n, t] : named)
        if (n == name) return t;
    throw LookupError("parameters: unknown name " + name);
}

bool Parameters::all_finite() const {
    for (const auto& [n, t] : named)
        for (float v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

namespace {

Tensor xavier_uniform(int fan_in, int fan_out, SplitMix64 rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    Tensor t = Tensor::zeros({fan_in, fan_out});
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

Tensor uniform_table(std::vector<int> shape, float scale, SplitMix64 rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

struct Builder {
    Parameters& params;
    std::uint64_t seed;
    std::uint64_t index = 0;

    SplitMix64 stream() { return SplitMix64::derive(seed, index++); }

    void matrix(const std::string& name, int fan_in, int fan_out) {
        params.named.emplace_back(name, xavier_uniform(fan_in, fan_out, stream()));
    }
    void table(const std::string& name, std::vector<int> shape, float scale = 0.1f) {
        params.named.emplace_back(name, uniform_table(std::move(shape), scale, stream()));
    }
    void zeros(const std::string& name, std::vector<int> shape) {
        ++index;
        params.named.emplace_back(name, Tensor::zeros(std::move(shape)));
    }
    void ones(const std::string& name, std::vector<int> shape) {
        ++index;
        params.named.emplace_back(name, Tensor::full(std::move(shape), 1.0f));
    }

    void attn_block(const std::string& prefix, int d) {
        matrix(prefix + ".wq", d, d);
        zeros(prefix + ".bq", {d});
        matrix(prefix + ".wk", d, d);
        zeros(prefix + ".bk", {d});
        matrix(prefix + ".wv", d, d);
        zeros(prefix + ".bv", {d});
        matrix(prefix + ".wo", d, d);
        zeros(prefix + ".bo", {d});
    }
    void ln(const std::string& prefix, int d) {
        ones(prefix + ".g", {d});
        zeros(prefix + ".b", {d});
    }
    void ffn(const std::string& prefix, int d) {
        matrix(prefix + ".w1", d, 4 * d);
        zeros(prefix + ".b1", {4 * d});
        matrix(prefix + ".w2", 4 * d, d);
        zeros(prefix + ".b2", {d});
    }
};

} // namespace

Parameters init_parameters(const ModelConfig& config, const Tokenizer& tokenizer,
                           std::uint64_t seed) {
    ModelConfig cfg = config;
    cfg.vocab_size = tokenizer.vocab_size();
    cfg.validate();

    Parameters params;
    params.config = cfg;
    params.tokenizer = tokenizer;
    params.init_seed = seed;

    Builder b{params, seed};
    b.table("tok.embed", {cfg.vocab_size, cfg.d});
    b.table("tok.pos", {cfg.max_text_len, cfg.d});
    b.matrix("vit.patch.w", cfg.patch_dim(), cfg.d);
    b.zeros("vit.patch.b", {cfg.d});
    b.table("vit.cls", {1, cfg.d});
    b.table("vit.pos", {cfg.n_patches(), cfg.d});
    for (int l = 0; l < cfg.vit_layers; ++l) {
        const std::string L = "vit.L" + std::to_string(l);
        b.ln(L + ".ln1", cfg.d);
        b.attn_block(L + ".attn", cfg.d);
        b.ln(L + ".ln2", cfg.d);
        b.ffn(L + ".ffn", cfg.d);
    }
    b.ln("vit.ln_f", cfg.d);
    for (int l = 0; l < cfg.shift_layers; ++l) {
        const std::string L = "shift.L" + std::to_string(l);
        b.ln(L + ".ln1", cfg.d);
        b.attn_block(L + ".attn", cfg.d);
        b.ln(L + ".lnx", cfg.d);
        b.attn_block(L + ".xattn", cfg.d);
        b.ln(L + ".ln2", cfg.d);
        b.ffn(L + ".ffn", cfg.d);
    }
    b.ln("shift.ln_f", cfg.d);
    b.matrix("proj.image", cfg.d, cfg.d_e);
    b.matrix("proj.text", cfg.d, cfg.d_e);
    return params;
}

QueryMode parse_query_mode(const std::string& name) {
    if (name == "standard") return QueryMode::Standard;
    if (name == "reverse") return QueryMode::Reverse;
    if (name == "text_only") return QueryMode::TextOnly;
    if (name == "image_only") return QueryMode::ImageOnly;
    throw ContractError("unknown query mode: " + name);
}

std::string query_mode_name(QueryMode mode) {
    switch (mode) {
        case QueryMode::Standard: return "standard";
        case QueryMode::Reverse: return "reverse";
        case QueryMode::TextOnly: return "text_only";
        case QueryMode::ImageOnly: return "image_only";
    }
    throw ContractError("unknown query mode value");
}

std::vector<int> query_token_ids(const Tokenizer& tok, const std::string& text, QueryMode mode,
                                 int max_len) {
    if (mode == QueryMode::ImageOnly) return {Tokenizer::kCls, Tokenizer::kSep};
    std::vector<int> ids = tok.encode(text, max_len);
    if (mode == QueryMode::Reverse) ids = tok.with_reverse_marker(std::move(ids), max_len);
    return ids;
}

std::vector<float> CaseModel::forward_query(const Image& image, const std::string& text,
                                            QueryMode mode) const {
    Tape tape;
    TapeParams<float> tp = push_params(tape, params_, false);
    ValueId e = forward_query_t(tape, tp, params_.config, params_.tokenizer, image, text, mode);
    return tape.val(e).data;
}

std::vector<float> CaseModel::encode_target(const Image& image) const {
    Tape tape;
    TapeParams<float> tp = push_params(tape, params_, false);
    ValueId e = encode_target_t(tape, tp, params_.config, image);
    return tape.val(e).data;
}

std::vector<float> CaseModel::encode_image_tokens(const Image& image) const {
    Tape tape;
    TapeParams<float> tp = push_params(tape, params_, false);
    ValueId tokens = encode_image_t(tape, tp, params_.config, image);
    return tape.val(tokens).data;
}

} // namespace coir
