#pragma once

#include <string>
#include <vector>

#include "coir/model.hpp"

namespace coir {

// Occlusion heat grid. Cell (r, c) covers the window at (r*stride,
// c*stride); its value is the DROP in cosine similarity to the target when
// that window is blacked out, so larger means more important.
struct HeatGrid {
    int window = 0;
    int stride = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    std::string to_json() const;
};

// Slides a black window (mask value 0) over the query image and measures
// cos(query, target) - cos(masked query, target) per position.
HeatGrid mask_heatmap(const CaseModel& model, const Image& query_image,
                      const std::string& query_text, const std::vector<float>& target_embedding,
                      int window, int stride, QueryMode mode = QueryMode::Standard);

// Alpha-blended ramp over the query image. The 5-stop colormap
// (blue, cyan, green, yellow, red) is interpolated linearly over the
// min-max-normalized grid; blend factor 0.5.
Image heatmap_overlay(const Image& img, const HeatGrid& grid);

// Input-gradient token saliency: the L2 norm of d cos(query, target) /
// d(embedded token row i). Special tokens are reported but flagged.
// The target is taken as given (unit-norm for model embeddings); an
// all-zero target yields all-zero scores.
struct TokenSaliency {
    std::string token;
    int token_id = 0;
    bool is_special = false;
    double score = 0.0;
};

std::vector<TokenSaliency> token_saliency(const CaseModel& model, const Image& image,
                                          const std::string& text,
                                          const std::vector<float>& target_embedding,
                                          QueryMode mode = QueryMode::Standard);

std::string saliency_to_json(const std::vector<TokenSaliency>& scores);

} // namespace coir
