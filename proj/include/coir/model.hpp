#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "coir/image.hpp"
#include "coir/tensor.hpp"
#include "coir/tokenizer.hpp"

namespace coir {

// Shape hyperparameters of the toy CASE model. The paper-scale analogue
// uses BLIP widths and a 256-d embedding space; the toy defaults keep every
// mechanism intact at desk scale.
struct ModelConfig {
    int image_size = 32;
    int patch_size = 8;
    int channels = 3;
    int d = 32;        // hidden width, divisible by n_heads
    int n_heads = 4;
    int vit_layers = 2;
    int shift_layers = 2;
    int d_e = 32;      // shared embedding dim (paper value: 256)
    int vocab_size = 5;
    int max_text_len = 32;

    int n_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
    int n_visual_tokens() const { return n_patches() + 1; } // +1 visual CLS
    int patch_dim() const { return patch_size * patch_size * channels; }

    void validate() const;
};

// All learnable weights, name-addressed in a fixed construction order.
// Initialization metadata (seed, scale scheme) is kept so a checkpoint
// records where the weights came from.
struct Parameters {
    ModelConfig config;
    Tokenizer tokenizer;
    std::vector<std::pair<std::string, Tensor>> named;
    std::uint64_t init_seed = 0;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool all_finite() const;
};

// Builds randomly initialized parameters: Xavier-uniform matrices,
// uniform(-0.1, 0.1) embedding tables, zero biases, unit layer-norm gains.
// Every tensor draws from its own splitmix64 stream derived from
// (seed, construction index), so the layout never perturbs the values.
Parameters init_parameters(const ModelConfig& config, const Tokenizer& tokenizer,
                           std::uint64_t seed);

enum class QueryMode { Standard, Reverse, TextOnly, ImageOnly };

QueryMode parse_query_mode(const std::string& name);
std::string query_mode_name(QueryMode mode);

// Token ids for a composed query under the given mode:
//   ImageOnly -> [CLS][SEP] only; Reverse -> [REV] right after [CLS].
std::vector<int> query_token_ids(const Tokenizer& tok, const std::string& text,
                                 QueryMode mode, int max_len);

// Parameter leaves pushed onto a tape, addressable by name.
template <typename S>
struct TapeParams {
    std::unordered_map<std::string, ValueId> ids;

    ValueId at(const std::string& name) const {
        auto it = ids.find(name);
        if (it == ids.end()) throw LookupError("tape params: unknown name " + name);
        return it->second;
    }
};

template <typename S>
TapeParams<S> push_params(TapeT<S>& tape, const Parameters& params, bool requires_grad) {
    TapeParams<S> tp;
    for (const auto& [name, tensor] : params.named)
        tp.ids[name] = tape.push_leaf(tensor.template cast<S>(), requires_grad);
    return tp;
}

// Row-major patch grid flattened to [n_patches x patch_dim]; patches are
// scanned top-to-bottom, left-to-right, pixels within a patch row-major,
// channel-minor.
template <typename S>
TensorT<S> patchify(const Image& img, const ModelConfig& cfg) {
    if (img.height != cfg.image_size || img.width != cfg.image_size || img.channels != cfg.channels)
        throw DimensionError("patchify: image " + std::to_string(img.height) + "x" +
                             std::to_string(img.width) + "x" + std::to_string(img.channels) +
                             " does not match config " + std::to_string(cfg.image_size) + "x" +
                             std::to_string(cfg.image_size) + "x" + std::to_string(cfg.channels));
    const int p = cfg.patch_size;
    const int grid = cfg.image_size / p;
    TensorT<S> out = TensorT<S>::zeros({cfg.n_patches(), cfg.patch_dim()});
    std::size_t row = 0;
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            std::size_t col = 0;
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x)
                    for (int c = 0; c < cfg.channels; ++c)
                        out.data[row * cfg.patch_dim() + col++] =
                            static_cast<S>(img.at(gy * p + y, gx * p + x, c));
            ++row;
        }
    }
    return out;
}

namespace detail {

template <typename S>
ValueId linear(TapeT<S>& tape, ValueId x, ValueId w, ValueId b) {
    return tape.add_rowvec(tape.matmul(x, w), b);
}

// Multi-head attention sublayer: project, attend, project back.
template <typename S>
ValueId mha(TapeT<S>& tape, const TapeParams<S>& tp, const std::string& prefix, ValueId q_in,
            ValueId kv_in, int n_heads) {
    ValueId q = linear(tape, q_in, tp.at(prefix + ".wq"), tp.at(prefix + ".bq"));
    ValueId k = linear(tape, kv_in, tp.at(prefix + ".wk"), tp.at(prefix + ".bk"));
    ValueId v = linear(tape, kv_in, tp.at(prefix + ".wv"), tp.at(prefix + ".bv"));
    ValueId fused = attention(tape, q, k, v, n_heads);
    return linear(tape, fused, tp.at(prefix + ".wo"), tp.at(prefix + ".bo"));
}

template <typename S>
ValueId layer_norm_named(TapeT<S>& tape, const TapeParams<S>& tp, const std::string& prefix,
                         ValueId x) {
    return tape.layer_norm(x, tp.at(prefix + ".g"), tp.at(prefix + ".b"), S(1e-5));
}

template <typename S>
ValueId ffn(TapeT<S>& tape, const TapeParams<S>& tp, const std::string& prefix, ValueId x) {
    ValueId h = tape.gelu(linear(tape, x, tp.at(prefix + ".w1"), tp.at(prefix + ".b1")));
    return linear(tape, h, tp.at(prefix + ".w2"), tp.at(prefix + ".b2"));
}

} // namespace detail

// Patch tokens after linear embedding + positions, with the visual CLS
// prepended — the pre-attention state entering ViT block 0.
template <typename S>
ValueId vit_pre_attention_tokens(TapeT<S>& tape, const TapeParams<S>& tp, const ModelConfig& cfg,
                                 const Image& img) {
    ValueId patches = tape.push(patchify<S>(img, cfg));
    ValueId tokens = detail::linear(tape, patches, tp.at("vit.patch.w"), tp.at("vit.patch.b"));
    tokens = tape.add(tokens, tp.at("vit.pos"));
    return tape.concat_rows({tp.at("vit.cls"), tokens});
}

// ViT-lite encoder: pre-layer-norm blocks over the visual token sequence,
// CLS at index 0; a final layer norm closes the stack.
template <typename S>
ValueId encode_image_t(TapeT<S>& tape, const TapeParams<S>& tp, const ModelConfig& cfg,
                       const Image& img) {
    ValueId x = vit_pre_attention_tokens(tape, tp, cfg, img);
    for (int l = 0; l < cfg.vit_layers; ++l) {
        const std::string L = "vit.L" + std::to_string(l);
        ValueId sa = detail::mha(tape, tp, L + ".attn",
                                 detail::layer_norm_named(tape, tp, L + ".ln1", x),
                                 detail::layer_norm_named(tape, tp, L + ".ln1", x), cfg.n_heads);
        x = tape.add(x, sa);
        ValueId ff = detail::ffn(tape, tp, L + ".ffn",
                                 detail::layer_norm_named(tape, tp, L + ".ln2", x));
        x = tape.add(x, ff);
    }
    return detail::layer_norm_named(tape, tp, "vit.ln_f", x);
}

// Optional handles into the query forward pass (explainability hooks).
struct ForwardTrace {
    ValueId token_embeddings = -1; // embedding_lookup output rows
    std::vector<int> token_ids;
};

// Shift encoder forward: self-attention, then cross-attention to the
// visual tokens after every self-attention sublayer, then feed-forward;
// CLS state is projected and normalized into the shared space.
template <typename S>
ValueId forward_query_t(TapeT<S>& tape, const TapeParams<S>& tp, const ModelConfig& cfg,
                        const Tokenizer& tok, const Image& image, const std::string& text,
                        QueryMode mode, ForwardTrace* trace = nullptr) {
    Image zeros;
    const Image* img = &image;
    if (mode == QueryMode::TextOnly) {
        zeros = Image::zeros(cfg.image_size, cfg.image_size, cfg.channels);
        img = &zeros;
    }
    ValueId vis = encode_image_t(tape, tp, cfg, *img);

    std::vector<int> ids = query_token_ids(tok, text, mode, cfg.max_text_len);
    ValueId emb = tape.embedding_lookup(tp.at("tok.embed"), ids);
    if (trace) {
        trace->token_embeddings = emb;
        trace->token_ids = ids;
    }
    ValueId pos = tape.slice_rows(tp.at("tok.pos"), 0, static_cast<int>(ids.size()));
    ValueId x = tape.add(emb, pos);
    for (int l = 0; l < cfg.shift_layers; ++l) {
        const std::string L = "shift.L" + std::to_string(l);
        ValueId sa = detail::mha(tape, tp, L + ".attn",
                                 detail::layer_norm_named(tape, tp, L + ".ln1", x),
                                 detail::layer_norm_named(tape, tp, L + ".ln1", x), cfg.n_heads);
        x = tape.add(x, sa);
        ValueId xa = detail::mha(tape, tp, L + ".xattn",
                                 detail::layer_norm_named(tape, tp, L + ".lnx", x), vis,
                                 cfg.n_heads);
        x = tape.add(x, xa);
        ValueId ff = detail::ffn(tape, tp, L + ".ffn",
                                 detail::layer_norm_named(tape, tp, L + ".ln2", x));
        x = tape.add(x, ff);
    }
    x = detail::layer_norm_named(tape, tp, "shift.ln_f", x);
    ValueId cls = tape.slice_rows(x, 0, 1);
    return tape.l2_normalize(tape.matmul(cls, tp.at("proj.text")));
}

// Target-side encoding: visual CLS through the image projection.
template <typename S>
ValueId encode_target_t(TapeT<S>& tape, const TapeParams<S>& tp, const ModelConfig& cfg,
                        const Image& img) {
    ValueId vis = encode_image_t(tape, tp, cfg, img);
    ValueId cls = tape.slice_rows(vis, 0, 1);
    return tape.l2_normalize(tape.matmul(cls, tp.at("proj.image")));
}

// Convenience wrapper for inference: owns Parameters, runs single forward
// passes on throwaway tapes. Parameters are immutable here; training owns
// its Parameters exclusively.
class CaseModel {
public:
    explicit CaseModel(Parameters params) : params_(std::move(params)) {}

    const Parameters& params() const { return params_; }
    Parameters& mutable_params() { return params_; }
    const ModelConfig& config() const { return params_.config; }
    const Tokenizer& tokenizer() const { return params_.tokenizer; }

    std::vector<float> forward_query(const Image& image, const std::string& text,
                                     QueryMode mode = QueryMode::Standard) const;
    std::vector<float> encode_target(const Image& image) const;
    std::vector<float> encode_image_tokens(const Image& image) const; // flattened n_v x d

private:
    Parameters params_;
};

// Checkpoint format: magic "CASE", u32 version, config record (u32 fields,
// u64 init seed, vocabulary), then named parameter blocks (u16 name length
// + UTF-8 name, u8 ndims, u32 dims, float32 LE payload). Round trips are
// byte-exact.
void save_checkpoint(const std::string& path, const Parameters& params);
Parameters load_checkpoint(const std::string& path);

} // namespace coir
