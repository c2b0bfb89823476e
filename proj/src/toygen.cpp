#include "coir/toygen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "coir/embedders.hpp"
#include "coir/errors.hpp"
#include "coir/rng.hpp"

namespace coir {

namespace fs = std::filesystem;

const std::array<const char*, 4> kToyShapes = {"square", "disc", "cross", "frame"};
const std::array<const char*, 6> kToyColors = {"red", "green", "blue", "yellow", "magenta", "cyan"};

namespace {

constexpr unsigned char kBackground = 18;
// one RGB triple per color, in kToyColors order
constexpr unsigned char kRgb[6][3] = {{220, 50, 50},  {60, 200, 80},  {60, 90, 220},
                                      {230, 220, 60}, {200, 60, 200}, {60, 200, 200}};
const std::array<const char*, 4> kCellNames = {"top left", "top right", "bottom left",
                                               "bottom right"};

bool shape_hit(int shape, int x, int y, int cell) {
    // cell-local predicates; tuned for a 16px cell, scaled for others
    const double s = cell / 16.0;
    const double lo = 3 * s, hi = 13 * s; // [lo, hi)
    switch (shape) {
        case 0: // square
            return x >= lo && x < hi && y >= lo && y < hi;
        case 1: { // disc
            const double cx = cell / 2.0 - 0.5, cy = cell / 2.0 - 0.5, r = 5.5 * s;
            const double dx = x - cx, dy = y - cy;
            return dx * dx + dy * dy <= r * r;
        }
        case 2: { // cross
            const double blo = 6 * s, bhi = 10 * s;
            const bool vert = x >= blo && x < bhi && y >= lo && y < hi;
            const bool horiz = y >= blo && y < bhi && x >= lo && x < hi;
            return vert || horiz;
        }
        case 3: { // frame
            const double t = 2 * s;
            const bool outer = x >= lo && x < hi && y >= lo && y < hi;
            const bool inner = x >= lo + t && x < hi - t && y >= lo + t && y < hi - t;
            return outer && !inner;
        }
        default:
            return false;
    }
}

} // namespace

void ToyConfig::validate() const {
    if (grid != 2) throw ContractError("toy config: only a 2x2 grid is supported");
    if (image_size % grid != 0 || image_size / grid < 12)
        throw ContractError("toy config: image_size must be a multiple of grid with cells >= 12px");
    if (group_size < 2) throw ContractError("toy config: group size must be >= 2");
    if (train_triplets < 1 || val_triplets < 0)
        throw ContractError("toy config: counts must be positive");
    if (mode == Mode::Compositional &&
        (train_triplets % group_size != 0 || val_triplets % group_size != 0))
        throw ContractError("toy config: triplet counts must be divisible by the group size");
    if (image_format != "ppm" && image_format != "f32t")
        throw ContractError("toy config: image_format must be ppm or f32t");
}

std::string ToyScene::key() const {
    std::string k;
    for (const auto& c : cells) {
        k += std::to_string(c.shape) + ":" + std::to_string(c.color) + ";";
    }
    return k;
}

Image render_scene(const ToyScene& scene, const ToyConfig& cfg) {
    Image img = Image::zeros(cfg.image_size, cfg.image_size, 3);
    const int cell = cfg.image_size / cfg.grid;
    for (int y = 0; y < cfg.image_size; ++y) {
        for (int x = 0; x < cfg.image_size; ++x) {
            const int ci = (y / cell) * cfg.grid + (x / cell);
            const ToyCell& c = scene.cells[static_cast<std::size_t>(ci)];
            unsigned char rgb[3] = {kBackground, kBackground, kBackground};
            if (c.filled() && shape_hit(c.shape, x % cell, y % cell, cell)) {
                rgb[0] = kRgb[c.color][0];
                rgb[1] = kRgb[c.color][1];
                rgb[2] = kRgb[c.color][2];
            }
            for (int ch = 0; ch < 3; ++ch)
                img.at(y, x, ch) = static_cast<float>(rgb[ch]) / 255.0f;
        }
    }
    return img;
}

std::string scene_caption(const ToyScene& scene) {
    std::string caption;
    for (std::size_t i = 0; i < scene.cells.size(); ++i) {
        const ToyCell& c = scene.cells[i];
        if (!c.filled()) continue;
        if (!caption.empty()) caption += " and ";
        caption += std::string("a ") + kToyColors[static_cast<std::size_t>(c.color)] + " " +
                   kToyShapes[static_cast<std::size_t>(c.shape)] + " at the " + kCellNames[i];
    }
    return caption.empty() ? "an empty scene" : caption;
}

namespace {

// change color | replace shape | remove shape | add shape
struct Edit {
    int kind = 0;
    int shape = 0;
    int color = 0;  // change: new color; add: color drawn per triplet
    int shape2 = 0; // replace only

    std::string text() const {
        switch (kind) {
            case 0:
                return std::string("change the color of the ") + kToyShapes[static_cast<std::size_t>(shape)] +
                       " to " + kToyColors[static_cast<std::size_t>(color)];
            case 1:
                return std::string("replace the ") + kToyShapes[static_cast<std::size_t>(shape)] + " with a " +
                       kToyShapes[static_cast<std::size_t>(shape2)];
            case 2:
                return std::string("remove the ") + kToyShapes[static_cast<std::size_t>(shape)];
            case 3:
                return std::string("add a ") + kToyShapes[static_cast<std::size_t>(shape)] +
                       " in the empty cell";
            default:
                throw GenerationError("toy: bad edit kind");
        }
    }
};

int find_cell_with_shape(const ToyScene& s, int shape) {
    for (std::size_t i = 0; i < s.cells.size(); ++i)
        if (s.cells[i].filled() && s.cells[i].shape == shape) return static_cast<int>(i);
    return -1;
}

int count_empty(const ToyScene& s) {
    int n = 0;
    for (const auto& c : s.cells)
        if (!c.filled()) ++n;
    return n;
}

bool has_shape(const ToyScene& s, int shape) { return find_cell_with_shape(s, shape) >= 0; }

bool applicable(const ToyScene& s, const Edit& e) {
    switch (e.kind) {
        case 0: {
            const int ci = find_cell_with_shape(s, e.shape);
            return ci >= 0 && s.cells[static_cast<std::size_t>(ci)].color != e.color;
        }
        case 1:
            return has_shape(s, e.shape) && !has_shape(s, e.shape2);
        case 2:
            return has_shape(s, e.shape);
        case 3:
            // "the empty cell" needs exactly one empty cell
            return !has_shape(s, e.shape) && count_empty(s) == 1;
        default:
            return false;
    }
}

// Applies the edit; `add_color` supplies the color of an added shape (the
// template text does not name one).
ToyScene apply_edit(const ToyScene& s, const Edit& e, int add_color) {
    ToyScene out = s;
    switch (e.kind) {
        case 0:
            out.cells[static_cast<std::size_t>(find_cell_with_shape(s, e.shape))].color = e.color;
            return out;
        case 1:
            out.cells[static_cast<std::size_t>(find_cell_with_shape(s, e.shape))].shape = e.shape2;
            return out;
        case 2:
            out.cells[static_cast<std::size_t>(find_cell_with_shape(s, e.shape))] = ToyCell{};
            return out;
        case 3:
            for (auto& c : out.cells)
                if (!c.filled()) {
                    c.shape = e.shape;
                    c.color = add_color;
                    return out;
                }
            throw GenerationError("toy: add edit on full scene");
        default:
            throw GenerationError("toy: bad edit kind");
    }
}

ToyScene random_scene(SplitMix64& rng, int filled) {
    ToyScene s;
    std::vector<int> cells = {0, 1, 2, 3};
    rng.shuffle(cells);
    std::vector<int> shapes = {0, 1, 2, 3};
    rng.shuffle(shapes);
    for (int i = 0; i < filled; ++i) {
        s.cells[static_cast<std::size_t>(cells[static_cast<std::size_t>(i)])] =
            ToyCell{shapes[static_cast<std::size_t>(i)], static_cast<int>(rng.index(kToyColors.size()))};
    }
    return s;
}

Edit random_edit(SplitMix64& rng) {
    Edit e;
    e.kind = static_cast<int>(rng.index(4));
    e.shape = static_cast<int>(rng.index(kToyShapes.size()));
    e.color = static_cast<int>(rng.index(kToyColors.size()));
    e.shape2 = static_cast<int>(rng.index(kToyShapes.size()));
    if (e.kind == 1 && e.shape2 == e.shape) e.shape2 = (e.shape2 + 1) % static_cast<int>(kToyShapes.size());
    return e;
}

// A decoy that differs from the query in the same cell the edit touched,
// but not the way the target does.
ToyScene near_miss(const ToyScene& query, const Edit& e, const ToyScene& target, SplitMix64& rng) {
    ToyScene out = query;
    const int ci = (e.kind == 3)
                       ? [&] {
                             for (std::size_t i = 0; i < query.cells.size(); ++i)
                                 if (!query.cells[i].filled()) return static_cast<int>(i);
                             return -1;
                         }()
                       : find_cell_with_shape(query, e.shape);
    if (ci < 0) return out;
    ToyCell& cell = out.cells[static_cast<std::size_t>(ci)];
    const ToyCell& target_cell = target.cells[static_cast<std::size_t>(ci)];
    for (int attempt = 0; attempt < 16; ++attempt) {
        ToyCell cand;
        cand.shape = e.kind == 3 ? static_cast<int>(rng.index(kToyShapes.size()))
                                 : (query.cells[static_cast<std::size_t>(ci)].filled()
                                        ? query.cells[static_cast<std::size_t>(ci)].shape
                                        : static_cast<int>(rng.index(kToyShapes.size())));
        cand.color = static_cast<int>(rng.index(kToyColors.size()));
        ToyScene probe = out;
        probe.cells[static_cast<std::size_t>(ci)] = cand;
        // keep shapes distinct within the scene
        int seen = 0;
        for (const auto& c : probe.cells)
            if (c.filled() && c.shape == cand.shape) ++seen;
        if (seen > 1) continue;
        if (target_cell.filled() && cand.shape == target_cell.shape && cand.color == target_cell.color)
            continue;
        cell = cand;
        return out;
    }
    return out;
}

struct SplitData {
    std::vector<Triplet> triplets;
    std::vector<ToyScene> scenes;             // corpus scenes in insertion order
    std::vector<std::string> scene_ids;
    std::map<std::string, std::string> key_to_id;
};

class SplitBuilder {
public:
    SplitBuilder(const ToyConfig& cfg, SplitMix64 rng, const std::string& id_prefix,
                 const std::string& qid_prefix)
        : cfg_(cfg), rng_(rng), id_prefix_(id_prefix), qid_prefix_(qid_prefix) {}

    SplitData build(int n_triplets, int corpus_target) {
        if (cfg_.mode == ToyConfig::Mode::Compositional)
            build_compositional(n_triplets);
        else
            build_redundant(n_triplets);
        pad_corpus(corpus_target);
        return std::move(data_);
    }

private:
    std::string intern_scene(const ToyScene& s) {
        auto it = data_.key_to_id.find(s.key());
        if (it != data_.key_to_id.end()) return it->second;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%05zu", id_prefix_.c_str(), data_.scenes.size());
        std::string id(buf);
        data_.scenes.push_back(s);
        data_.scene_ids.push_back(id);
        data_.key_to_id[s.key()] = id;
        return id;
    }

    bool key_used(const ToyScene& s) const { return data_.key_to_id.count(s.key()) > 0; }

    std::string next_qid() {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%06zu", qid_prefix_.c_str(), data_.triplets.size());
        return buf;
    }

    void build_compositional(int n_triplets) {
        const int groups = n_triplets / cfg_.group_size;
        std::set<std::string> used_texts;
        std::vector<std::vector<std::string>> group_targets;
        for (int g = 0; g < groups; ++g) {
            Edit edit;
            bool found = false;
            for (int attempt = 0; attempt < 400 && !found; ++attempt) {
                edit = random_edit(rng_);
                if (!used_texts.count(edit.text())) found = true;
            }
            // the template space is finite; reuse texts once it is exhausted
            used_texts.insert(edit.text());

            std::vector<std::pair<ToyScene, ToyScene>> pairs;
            for (int attempt = 0; attempt < 4000 && static_cast<int>(pairs.size()) < cfg_.group_size;
                 ++attempt) {
                const int filled = edit.kind == 3 ? 3 : 2 + static_cast<int>(rng_.index(2));
                ToyScene query = random_scene(rng_, filled);
                if (!applicable(query, edit)) continue;
                const int add_color = static_cast<int>(rng_.index(kToyColors.size()));
                ToyScene target = apply_edit(query, edit, add_color);
                if (key_used(query) || key_used(target) || query.key() == target.key()) continue;
                bool clash = false;
                for (const auto& [q2, t2] : pairs)
                    if (q2.key() == query.key() || q2.key() == target.key() ||
                        t2.key() == query.key() || t2.key() == target.key())
                        clash = true;
                if (clash) continue;
                pairs.emplace_back(query, target);
            }
            if (static_cast<int>(pairs.size()) < cfg_.group_size)
                throw GenerationError("toy: could not assemble group " + std::to_string(g) +
                                      " for text '" + edit.text() + "'");
            std::vector<std::string> targets;
            for (const auto& [query, target] : pairs) {
                Triplet t;
                t.qid = next_qid();
                t.query_image = intern_scene(query);
                t.target_image = intern_scene(target);
                t.query_text = edit.text();
                t.caption = scene_caption(target);
                data_.triplets.push_back(std::move(t));
                targets.push_back(data_.triplets.back().target_image);
            }
            group_targets.push_back(std::move(targets));
        }
        attach_subsets(group_targets);
    }

    void attach_subsets(const std::vector<std::vector<std::string>>& group_targets) {
        // subset = candidates compatible with the shared text (the group's
        // targets), topped up from the next group
        std::size_t total_targets = 0;
        for (const auto& g : group_targets) total_targets += g.size();
        if (total_targets < 6 || group_targets.size() < 2) return;
        std::size_t idx = 0;
        for (std::size_t g = 0; g < group_targets.size(); ++g) {
            for (std::size_t m = 0; m < group_targets[g].size(); ++m, ++idx) {
                // own target first so truncation can never drop it
                std::vector<std::string> subset = {group_targets[g][m]};
                auto take = [&](const std::vector<std::string>& pool) {
                    for (const auto& cand : pool) {
                        if (subset.size() >= 6) return;
                        if (std::find(subset.begin(), subset.end(), cand) == subset.end())
                            subset.push_back(cand);
                    }
                };
                take(group_targets[g]);
                for (std::size_t step = 1; step < group_targets.size() && subset.size() < 6; ++step)
                    take(group_targets[(g + step) % group_targets.size()]);
                if (subset.size() == 6) data_.triplets[idx].subset = subset;
            }
        }
    }

    void build_redundant(int n_triplets) {
        for (int i = 0; i < n_triplets; ++i) {
            bool done = false;
            for (int attempt = 0; attempt < 4000 && !done; ++attempt) {
                Edit edit = random_edit(rng_);
                const int filled = edit.kind == 3 ? 3 : 2 + static_cast<int>(rng_.index(2));
                ToyScene query = random_scene(rng_, filled);
                if (!applicable(query, edit)) continue;
                const int add_color = static_cast<int>(rng_.index(kToyColors.size()));
                ToyScene target = apply_edit(query, edit, add_color);
                if (key_used(query) || key_used(target) || query.key() == target.key()) continue;
                Triplet t;
                t.qid = next_qid();
                t.query_image = intern_scene(query);
                t.target_image = intern_scene(target);
                t.query_text = scene_caption(target); // the text fully describes the target
                t.caption = t.query_text;
                data_.triplets.push_back(std::move(t));
                for (int d = 0; d < cfg_.near_miss_per_triplet; ++d) {
                    ToyScene decoy = near_miss(query, edit, target, rng_);
                    if (!key_used(decoy)) intern_scene(decoy);
                }
                done = true;
            }
            if (!done) throw GenerationError("toy: could not sample triplet " + std::to_string(i));
        }
    }

    void pad_corpus(int corpus_target) {
        if (corpus_target == 0) return;
        if (static_cast<int>(data_.scenes.size()) > corpus_target)
            throw GenerationError("toy: triplets need " + std::to_string(data_.scenes.size()) +
                                  " images but corpus budget is " + std::to_string(corpus_target));
        while (static_cast<int>(data_.scenes.size()) < corpus_target) {
            const int filled = 2 + static_cast<int>(rng_.index(2));
            ToyScene s = random_scene(rng_, filled);
            if (!key_used(s)) intern_scene(s);
        }
    }

    const ToyConfig& cfg_;
    SplitMix64 rng_;
    std::string id_prefix_;
    std::string qid_prefix_;
    SplitData data_;
};

} // namespace

ToyOutput gen_toy(const ToyConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(fs::path(out_dir) / "images");

    SplitBuilder train_builder(cfg, SplitMix64::derive(cfg.seed, 1), "tr", "t");
    SplitData train = train_builder.build(cfg.train_triplets, cfg.corpus_train);
    SplitBuilder val_builder(cfg, SplitMix64::derive(cfg.seed, 2), "va", "v");
    SplitData val = val_builder.build(cfg.val_triplets, cfg.corpus_val);

    CorpusManifest manifest;
    manifest.base_dir = out_dir;
    std::map<std::string, std::string> captions;
    auto emit_split = [&](const SplitData& split, const std::string& tag) {
        for (std::size_t i = 0; i < split.scenes.size(); ++i) {
            const std::string& id = split.scene_ids[i];
            const std::string rel = "images/" + id + "." + cfg.image_format;
            write_image((fs::path(out_dir) / rel).string(), cfg.image_format,
                        render_scene(split.scenes[i], cfg));
            manifest.entries.push_back({id, rel, cfg.image_format, tag});
            captions[id] = scene_caption(split.scenes[i]);
        }
    };
    emit_split(train, "train");
    emit_split(val, "val");

    ToyOutput out;
    out.out_dir = out_dir;
    out.train_triplets_path = (fs::path(out_dir) / "triplets_train.jsonl").string();
    out.val_triplets_path = (fs::path(out_dir) / "triplets_val.jsonl").string();
    out.manifest_path = (fs::path(out_dir) / "manifest.json").string();
    out.captions_path = (fs::path(out_dir) / "captions.json").string();
    save_triplets(out.train_triplets_path, train.triplets);
    save_triplets(out.val_triplets_path, val.triplets);
    save_manifest(out.manifest_path, manifest);
    save_captions(out.captions_path, captions);

    nlohmann::json j;
    j["image_size"] = cfg.image_size;
    j["grid"] = cfg.grid;
    j["group_size"] = cfg.group_size;
    j["mode"] = cfg.mode == ToyConfig::Mode::Compositional ? "compositional" : "redundant";
    j["train_triplets"] = cfg.train_triplets;
    j["val_triplets"] = cfg.val_triplets;
    j["corpus_train"] = cfg.corpus_train;
    j["corpus_val"] = cfg.corpus_val;
    j["near_miss_per_triplet"] = cfg.near_miss_per_triplet;
    j["seed"] = cfg.seed;
    j["image_format"] = cfg.image_format;
    std::ofstream cfg_out(fs::path(out_dir) / "gen_config.json");
    cfg_out << j.dump(2) << "\n";

    return out;
}

} // namespace coir
