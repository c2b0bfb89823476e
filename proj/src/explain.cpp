#include "coir/explain.hpp"

#include <cmath>

#include <json.hpp>

#include "coir/errors.hpp"

namespace coir {

using nlohmann::json;

namespace {

double cosine_to(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
    return dot; // embeddings arrive unit-norm
}

} // namespace

HeatGrid mask_heatmap(const CaseModel& model, const Image& query_image,
                      const std::string& query_text, const std::vector<float>& target_embedding,
                      int window, int stride, QueryMode mode) {
    const int h = query_image.height, w = query_image.width;
    if (window > h || window > w)
        throw ContractError("mask_heatmap: window " + std::to_string(window) +
                            " exceeds image size " + std::to_string(h));
    if (stride < 1) throw ContractError("mask_heatmap: stride must be >= 1");
    if (target_embedding.size() != static_cast<std::size_t>(model.config().d_e))
        throw ContractError("mask_heatmap: target embedding dim mismatch");

    HeatGrid grid;
    grid.window = window;
    grid.stride = stride;
    grid.rows = (h - window) / stride + 1;
    grid.cols = (w - window) / stride + 1;
    grid.values.resize(static_cast<std::size_t>(grid.rows) * grid.cols);

    const std::vector<float> base = model.forward_query(query_image, query_text, mode);
    const double base_cos = cosine_to(base, target_embedding);

    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            Image masked = query_image;
            for (int y = r * stride; y < r * stride + window; ++y)
                for (int x = c * stride; x < c * stride + window; ++x)
                    for (int ch = 0; ch < masked.channels; ++ch) masked.at(y, x, ch) = 0.0f;
            const std::vector<float> emb = model.forward_query(masked, query_text, mode);
            grid.values[static_cast<std::size_t>(r) * grid.cols + c] =
                base_cos - cosine_to(emb, target_embedding);
        }
    }
    return grid;
}

std::string HeatGrid::to_json() const {
    json j;
    j["window"] = window;
    j["stride"] = stride;
    j["rows"] = rows;
    j["cols"] = cols;
    json vals = json::array();
    for (int r = 0; r < rows; ++r) {
        json row = json::array();
        for (int c = 0; c < cols; ++c) row.push_back(at(r, c));
        vals.push_back(row);
    }
    j["heat"] = vals;
    return j.dump(2);
}

Image heatmap_overlay(const Image& img, const HeatGrid& grid) {
    // 5-stop ramp, linearly interpolated
    static const float ramp[5][3] = {{0.0f, 0.0f, 1.0f},
                                     {0.0f, 1.0f, 1.0f},
                                     {0.0f, 1.0f, 0.0f},
                                     {1.0f, 1.0f, 0.0f},
                                     {1.0f, 0.0f, 0.0f}};
    double lo = grid.values.empty() ? 0.0 : grid.values[0];
    double hi = lo;
    for (double v : grid.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;

    Image out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            // nearest grid cell whose window covers this pixel
            int r = std::min(grid.rows - 1, std::max(0, (y - grid.window / 2) / grid.stride));
            int c = std::min(grid.cols - 1, std::max(0, (x - grid.window / 2) / grid.stride));
            double t = span > 0.0 ? (grid.at(r, c) - lo) / span : 0.0;
            const double pos = t * 4.0;
            const int seg = std::min(3, static_cast<int>(pos));
            const double frac = pos - seg;
            for (int ch = 0; ch < std::min(3, img.channels); ++ch) {
                const float heat_col =
                    static_cast<float>(ramp[seg][ch] * (1.0 - frac) + ramp[seg + 1][ch] * frac);
                out.at(y, x, ch) = 0.5f * img.at(y, x, ch) + 0.5f * heat_col;
            }
        }
    }
    return out;
}

std::vector<TokenSaliency> token_saliency(const CaseModel& model, const Image& image,
                                          const std::string& text,
                                          const std::vector<float>& target_embedding,
                                          QueryMode mode) {
    if (text.empty()) throw ContractError("token_saliency: empty text");
    const Parameters& params = model.params();
    if (target_embedding.size() != static_cast<std::size_t>(params.config.d_e))
        throw ContractError("token_saliency: target embedding dim mismatch");

    Tape tape;
    // only the token embedding table needs gradients: saliency reads the
    // lookup's output rows
    TapeParams<float> tp;
    for (const auto& [name, tensor] : params.named)
        tp.ids[name] = tape.push_leaf(tensor, name == "tok.embed");

    ForwardTrace trace;
    ValueId query = forward_query_t(tape, tp, params.config, params.tokenizer, image, text, mode,
                                    &trace);
    ValueId target = tape.push(Tensor({1, params.config.d_e},
                                      std::vector<float>(target_embedding.begin(),
                                                         target_embedding.end())));
    tape.backward(tape.dot(query, target));

    const auto& grad = tape.grad(trace.token_embeddings);
    const int d = params.config.d;
    std::vector<TokenSaliency> scores;
    for (std::size_t i = 0; i < trace.token_ids.size(); ++i) {
        TokenSaliency s;
        s.token_id = trace.token_ids[i];
        s.token = params.tokenizer.token_of(s.token_id);
        s.is_special = s.token_id <= Tokenizer::kUnk;
        double acc = 0.0;
        if (!grad.empty())
            for (int j = 0; j < d; ++j) {
                const double g = grad[i * static_cast<std::size_t>(d) + j];
                acc += g * g;
            }
        s.score = std::sqrt(acc);
        scores.push_back(std::move(s));
    }
    return scores;
}

std::string saliency_to_json(const std::vector<TokenSaliency>& scores) {
    json arr = json::array();
    for (const auto& s : scores) {
        json j;
        j["token"] = s.token;
        j["token_id"] = s.token_id;
        j["is_special"] = s.is_special;
        j["score"] = s.score;
        arr.push_back(j);
    }
    return arr.dump(2);
}

} // namespace coir
