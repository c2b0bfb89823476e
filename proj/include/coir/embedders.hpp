#pragma once

#include <map>
#include <string>
#include <vector>

#include "coir/image.hpp"

namespace coir {

// Bundled uni-modal filter embedders for the redundancy analysis. They
// stand in for the off-the-shelf retriever: any externally produced
// embeddings can be supplied instead through the CEMB format.

// Term-frequency vector over a fixed vocabulary, l2-normalized.
class BowTextEmbedder {
public:
    static BowTextEmbedder build(const std::vector<std::string>& texts);

    std::vector<float> embed(const std::string& text) const; // throws on zero overlap
    int dim() const { return static_cast<int>(vocab_.size()); }
    const std::vector<std::string>& vocab() const { return vocab_; }

private:
    std::vector<std::string> vocab_;
    std::map<std::string, int> index_;
};

// Block mean-pooled pixels: the image reduced to grid x grid x channels by
// averaging, flattened.
class MeanPoolImageEmbedder {
public:
    explicit MeanPoolImageEmbedder(int grid = 8) : grid_(grid) {}

    std::vector<float> embed(const Image& img) const;
    int grid() const { return grid_; }

private:
    int grid_;
};

// Captions file: JSON object {image_id: caption}.
std::map<std::string, std::string> load_captions(const std::string& path);
void save_captions(const std::string& path, const std::map<std::string, std::string>& captions);

} // namespace coir
