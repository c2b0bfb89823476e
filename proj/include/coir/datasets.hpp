#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coir/image.hpp"

namespace coir {

// One CoIR sample: query image + transition text -> target image.
// `subset`, when present, is the 6-candidate fine-grained retrieval group.
struct Triplet {
    std::string qid;
    std::string query_image;
    std::string query_text;
    std::string target_image;
    std::vector<std::string> subset; // empty or exactly 6 unique ids incl. target
    std::string category;            // optional
    std::string caption;             // optional

    void validate() const;
};

struct ManifestEntry {
    std::string id;
    std::string path;   // relative to the manifest file
    std::string format; // "ppm" | "f32t"
    std::string split;  // "train" | "val"
};

struct CorpusManifest {
    std::string base_dir;
    std::vector<ManifestEntry> entries;

    const ManifestEntry& at(const std::string& id) const;
    bool contains(const std::string& id) const;
    std::vector<std::string> ids_for_split(const std::string& split) const;

private:
    friend CorpusManifest load_manifest(const std::string& path);
    friend void index_manifest(CorpusManifest& m);
    std::map<std::string, std::size_t> by_id_;
};

// Triplet JSON Lines:
//   {"qid","query_image","query_text","target_image","subset"?,"category"?,"caption"?}
std::vector<Triplet> load_triplets(const std::string& path);
void save_triplets(const std::string& path, const std::vector<Triplet>& triplets);

// Manifest JSON: {"images":[{"id","path","format","split"}]}
CorpusManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const CorpusManifest& manifest);

// Lazy id -> image loader over a manifest, with an in-memory cache.
class ImageStore {
public:
    explicit ImageStore(CorpusManifest manifest) : manifest_(std::move(manifest)) {}

    const Image& image(const std::string& id) const;
    const CorpusManifest& manifest() const { return manifest_; }

private:
    CorpusManifest manifest_;
    mutable std::map<std::string, Image> cache_;
};

// Train/val split by image id: no image appears in both splits. Triplets
// whose two images land in different splits are dropped; a triplet goes to
// val only when both its images are val.
struct SplitResult {
    std::vector<Triplet> train;
    std::vector<Triplet> val;
    std::set<std::string> val_images;
    int dropped = 0;
};

SplitResult split_by_image(const std::vector<Triplet>& triplets,
                           const std::vector<std::string>& image_ids, double val_fraction,
                           std::uint64_t seed);

} // namespace coir
