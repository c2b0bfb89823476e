#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coir/errors.hpp"

namespace coir {

struct SearchHit {
    std::string id;
    float score; // cosine similarity in [-1, 1]
};

struct SearchResult {
    std::vector<SearchHit> hits; // scores non-increasing; ties by insertion order
};

// Raw id-addressed embedding matrix, the CEMB interchange payload.
struct EmbeddingMatrix {
    int dim = 0;
    std::vector<std::string> ids;
    std::vector<float> data; // count x dim row-major

    std::size_t count() const { return ids.size(); }
    const float* row(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
};

// CEMB binary format: magic "CEMB", u32 version (=1) LE, u32 dim LE,
// u64 count LE, count*dim float32 LE row-major, then the id table
// (per id: u16 LE byte length + UTF-8 bytes). Also the interchange format
// for embeddings produced outside this repo.
EmbeddingMatrix read_cemb(const std::string& path);
void write_cemb(const std::string& path, const EmbeddingMatrix& m);

// Exact cosine top-K search over unit-norm rows. Rows are l2-normalized at
// insert; with normalized rows the dot product equals the cosine. Scores
// accumulate in float64 for rank stability. Immutable after build;
// concurrent searches are safe.
class EmbeddingIndex {
public:
    static EmbeddingIndex build(const std::vector<std::pair<std::string, std::vector<float>>>& entries);

    // Builds from a raw matrix: rows already unit-norm within 1e-3 are taken
    // verbatim (so CEMB round trips stay byte-identical); anything else is
    // normalized (external raw embeddings).
    static EmbeddingIndex from_matrix(EmbeddingMatrix m);

    int dim() const { return matrix_.dim; }
    std::size_t count() const { return matrix_.ids.size(); }
    const std::vector<std::string>& ids() const { return matrix_.ids; }
    const EmbeddingMatrix& matrix() const { return matrix_; }
    std::vector<float> row_copy(const std::string& id) const;
    bool contains(const std::string& id) const { return by_id_.count(id) > 0; }

    // Exactly min(K, count) hits, identical to a full argsort with the
    // documented tie-break; maintained with a bounded heap, no full sort.
    SearchResult top_k(const std::vector<float>& query, int k) const;

    // 1-based rank of target_id for the query: 1 + strictly-closer rows
    // + equal-scoring rows with a smaller insertion index.
    int rank_of(const std::vector<float>& query, const std::string& target_id) const;

    void save(const std::string& path) const;
    static EmbeddingIndex load(const std::string& path);

private:
    EmbeddingMatrix matrix_;
    std::map<std::string, std::size_t> by_id_;

    void reindex();
    std::vector<double> scores(const std::vector<float>& query) const;
};

} // namespace coir
