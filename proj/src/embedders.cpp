#include "coir/embedders.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "coir/errors.hpp"
#include "coir/tokenizer.hpp"

namespace coir {

using nlohmann::json;

BowTextEmbedder BowTextEmbedder::build(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts)
        for (auto& w : Tokenizer::split_words(t)) words.insert(w);
    if (words.empty()) throw ContractError("bow embedder: empty vocabulary");
    BowTextEmbedder e;
    for (const auto& w : words) {
        e.index_[w] = static_cast<int>(e.vocab_.size());
        e.vocab_.push_back(w);
    }
    return e;
}

std::vector<float> BowTextEmbedder::embed(const std::string& text) const {
    std::vector<float> v(vocab_.size(), 0.0f);
    for (const auto& w : Tokenizer::split_words(text)) {
        auto it = index_.find(w);
        if (it != index_.end()) v[static_cast<std::size_t>(it->second)] += 1.0f;
    }
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    if (!(norm > 0.0))
        throw DegenerateVectorError("bow embedder: no in-vocabulary word in '" + text + "'");
    for (auto& x : v) x = static_cast<float>(x / norm);
    return v;
}

std::vector<float> MeanPoolImageEmbedder::embed(const Image& img) const {
    if (grid_ < 1 || img.height % grid_ != 0 || img.width % grid_ != 0)
        throw ContractError("mean-pool embedder: image size must be divisible by grid " +
                            std::to_string(grid_));
    const int by = img.height / grid_, bx = img.width / grid_;
    std::vector<float> out(static_cast<std::size_t>(grid_) * grid_ * img.channels, 0.0f);
    for (int gy = 0; gy < grid_; ++gy)
        for (int gx = 0; gx < grid_; ++gx)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int y = 0; y < by; ++y)
                    for (int x = 0; x < bx; ++x) acc += img.at(gy * by + y, gx * bx + x, c);
                out[(static_cast<std::size_t>(gy) * grid_ + gx) * img.channels + c] =
                    static_cast<float>(acc / (by * bx));
            }
    return out;
}

std::map<std::string, std::string> load_captions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open captions file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IngestionError(path + ": bad json: " + e.what());
    }
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : j.items()) out[key] = value.get<std::string>();
    return out;
}

void save_captions(const std::string& path, const std::map<std::string, std::string>& captions) {
    json j = json::object();
    for (const auto& [id, caption] : captions) j[id] = caption;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write captions file: " + path);
    out << j.dump(2) << "\n";
}

} // namespace coir
