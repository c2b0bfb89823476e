#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "coir/datasets.hpp"
#include "coir/image.hpp"

namespace coir {

// Deterministic synthetic CoIR generator: 2x2 grids of colored shapes with
// templated transition texts. Compositional mode shares each transition
// text across a group of G queries with different layouts (so text alone
// resolves the target with probability <= 1/G); redundant mode uses the
// target's full scene caption as the transition text.
struct ToyConfig {
    int image_size = 32;
    int grid = 2; // 2x2 cells
    int group_size = 4;
    enum class Mode { Compositional, Redundant } mode = Mode::Compositional;
    int train_triplets = 2000;
    int val_triplets = 240;
    int corpus_train = 0; // 0 = exactly the images the triplets need
    int corpus_val = 0;
    int near_miss_per_triplet = 2; // redundant mode: 1-cell image decoys
    std::uint64_t seed = 7;
    std::string image_format = "ppm"; // "ppm" | "f32t"

    void validate() const;
};

extern const std::array<const char*, 4> kToyShapes;  // square disc cross frame
extern const std::array<const char*, 6> kToyColors;  // red green blue yellow magenta cyan

// A cell either is empty or holds one shape with one color. Filled cells of
// a scene carry pairwise distinct shapes, so "the {shape}" is unambiguous.
struct ToyCell {
    int shape = -1;
    int color = -1;
    bool filled() const { return shape >= 0; }
};

struct ToyScene {
    std::array<ToyCell, 4> cells;
    std::string key() const;
};

Image render_scene(const ToyScene& scene, const ToyConfig& cfg);
std::string scene_caption(const ToyScene& scene);

struct ToyOutput {
    std::string out_dir;
    std::string train_triplets_path;
    std::string val_triplets_path;
    std::string manifest_path;
    std::string captions_path;
};

// Emits images/ (ppm or f32t), manifest.json, triplets_train.jsonl,
// triplets_val.jsonl, captions.json and gen_config.json under out_dir.
// Identical config (seed included) reproduces every byte.
ToyOutput gen_toy(const ToyConfig& cfg, const std::string& out_dir);

} // namespace coir
