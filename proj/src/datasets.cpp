#include "coir/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "coir/errors.hpp"
#include "coir/rng.hpp"

namespace coir {

namespace fs = std::filesystem;
using nlohmann::json;

void Triplet::validate() const {
    if (qid.empty()) throw IngestionError("triplet: empty qid");
    if (query_image.empty() || target_image.empty() || query_text.empty())
        throw IngestionError("triplet " + qid + ": empty field");
    if (query_image == target_image)
        throw IngestionError("triplet " + qid + ": query and target share the same image " +
                             query_image);
    if (!subset.empty()) {
        if (subset.size() != 6)
            throw IngestionError("triplet " + qid + ": subset must have exactly 6 ids, got " +
                                 std::to_string(subset.size()));
        std::set<std::string> uniq(subset.begin(), subset.end());
        if (uniq.size() != 6)
            throw IngestionError("triplet " + qid + ": subset ids not unique");
        if (!uniq.count(target_image))
            throw IngestionError("triplet " + qid + ": subset does not contain the target image");
    }
}

std::vector<Triplet> load_triplets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open triplets file: " + path);
    std::vector<Triplet> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestionError(path + ":" + std::to_string(line_no) + ": bad json: " + e.what());
        }
        Triplet t;
        try {
            t.qid = j.at("qid").get<std::string>();
            t.query_image = j.at("query_image").get<std::string>();
            t.query_text = j.at("query_text").get<std::string>();
            t.target_image = j.at("target_image").get<std::string>();
            if (j.contains("subset")) t.subset = j.at("subset").get<std::vector<std::string>>();
            if (j.contains("category")) t.category = j.at("category").get<std::string>();
            if (j.contains("caption")) t.caption = j.at("caption").get<std::string>();
        } catch (const json::exception& e) {
            throw IngestionError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            t.validate();
        } catch (const IngestionError& e) {
            throw IngestionError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

void save_triplets(const std::string& path, const std::vector<Triplet>& triplets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write triplets file: " + path);
    for (const auto& t : triplets) {
        json j;
        j["qid"] = t.qid;
        j["query_image"] = t.query_image;
        j["query_text"] = t.query_text;
        j["target_image"] = t.target_image;
        if (!t.subset.empty()) j["subset"] = t.subset;
        if (!t.category.empty()) j["category"] = t.category;
        if (!t.caption.empty()) j["caption"] = t.caption;
        out << j.dump() << "\n";
    }
}

const ManifestEntry& CorpusManifest::at(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw LookupError("manifest: unknown image id " + id);
    return entries[it->second];
}

bool CorpusManifest::contains(const std::string& id) const { return by_id_.count(id) > 0; }

std::vector<std::string> CorpusManifest::ids_for_split(const std::string& split) const {
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (split.empty() || e.split == split) out.push_back(e.id);
    return out;
}

void index_manifest(CorpusManifest& m) {
    m.by_id_.clear();
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        if (e.id.empty()) throw IngestionError("manifest: empty image id at entry " + std::to_string(i));
        if (!m.by_id_.emplace(e.id, i).second)
            throw IngestionError("manifest: duplicate image id " + e.id);
        if (e.split != "train" && e.split != "val")
            throw IngestionError("manifest: image " + e.id + " has bad split tag '" + e.split + "'");
        if (e.format != "ppm" && e.format != "f32t")
            throw IngestionError("manifest: image " + e.id + " has bad format tag '" + e.format + "'");
    }
}

CorpusManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IngestionError(path + ": bad json: " + e.what());
    }
    CorpusManifest m;
    m.base_dir = fs::path(path).parent_path().string();
    try {
        for (const auto& rec : j.at("images")) {
            ManifestEntry e;
            e.id = rec.at("id").get<std::string>();
            e.path = rec.at("path").get<std::string>();
            e.format = rec.at("format").get<std::string>();
            e.split = rec.at("split").get<std::string>();
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw IngestionError(path + ": " + e.what());
    }
    index_manifest(m);
    for (const auto& e : m.entries) {
        fs::path p = fs::path(m.base_dir) / e.path;
        if (!fs::exists(p))
            throw IngestionError("manifest: image file missing for id " + e.id + ": " + p.string());
    }
    return m;
}

void save_manifest(const std::string& path, const CorpusManifest& manifest) {
    json images = json::array();
    for (const auto& e : manifest.entries) {
        json rec;
        rec["id"] = e.id;
        rec["path"] = e.path;
        rec["format"] = e.format;
        rec["split"] = e.split;
        images.push_back(rec);
    }
    json j;
    j["images"] = images;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

const Image& ImageStore::image(const std::string& id) const {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    const ManifestEntry& e = manifest_.at(id);
    fs::path p = fs::path(manifest_.base_dir) / e.path;
    Image img = read_image(p.string(), e.format);
    return cache_.emplace(id, std::move(img)).first->second;
}

SplitResult split_by_image(const std::vector<Triplet>& triplets,
                           const std::vector<std::string>& image_ids, double val_fraction,
                           std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ContractError("split_by_image: val_fraction must be in (0,1)");
    std::vector<std::string> ids = image_ids;
    SplitMix64 rng = SplitMix64::derive(seed, 0xA11C);
    rng.shuffle(ids);
    const std::size_t n_val = static_cast<std::size_t>(
        std::floor(val_fraction * static_cast<double>(ids.size())));
    SplitResult result;
    for (std::size_t i = 0; i < n_val; ++i) result.val_images.insert(ids[i]);
    for (const auto& t : triplets) {
        const bool qv = result.val_images.count(t.query_image) > 0;
        const bool tv = result.val_images.count(t.target_image) > 0;
        if (qv && tv)
            result.val.push_back(t);
        else if (!qv && !tv)
            result.train.push_back(t);
        else
            result.dropped += 1;
    }
    return result;
}

} // namespace coir
