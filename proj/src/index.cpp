#include "coir/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

#include "coir/errors.hpp"

namespace coir {

namespace {

double row_norm(const float* row, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += static_cast<double>(row[i]) * row[i];
    return std::sqrt(s);
}

} // namespace

EmbeddingMatrix read_cemb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open embedding file: " + path);
    std::size_t offset = 0;
    auto need = [&](void* p, std::size_t n, const char* what) {
        in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw FormatError(std::string("cemb: truncated ") + what,
                              offset + static_cast<std::size_t>(in.gcount()));
        offset += n;
    };
    char magic[4];
    need(magic, 4, "magic");
    if (std::memcmp(magic, "CEMB", 4) != 0) throw FormatError("cemb: bad magic in " + path, 0);
    unsigned char b4[4];
    need(b4, 4, "version");
    const std::uint32_t version = static_cast<std::uint32_t>(b4[0]) | (b4[1] << 8) | (b4[2] << 16) |
                                  (static_cast<std::uint32_t>(b4[3]) << 24);
    if (version != 1) throw FormatError("cemb: unsupported version " + std::to_string(version), 4);
    need(b4, 4, "dim");
    const std::uint32_t dim = static_cast<std::uint32_t>(b4[0]) | (b4[1] << 8) | (b4[2] << 16) |
                              (static_cast<std::uint32_t>(b4[3]) << 24);
    unsigned char b8[8];
    need(b8, 8, "count");
    std::uint64_t count = 0;
    for (int i = 0; i < 8; ++i) count |= static_cast<std::uint64_t>(b8[i]) << (8 * i);
    if (dim == 0) throw FormatError("cemb: zero dim", 8);

    EmbeddingMatrix m;
    m.dim = static_cast<int>(dim);
    m.data.resize(static_cast<std::size_t>(count) * dim);
    if (!m.data.empty()) need(m.data.data(), m.data.size() * sizeof(float), "matrix payload");
    m.ids.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        unsigned char b2[2];
        need(b2, 2, "id length");
        const std::size_t len = static_cast<std::size_t>(b2[0]) | (static_cast<std::size_t>(b2[1]) << 8);
        std::string id(len, '\0');
        if (len) need(id.data(), len, "id bytes");
        m.ids.push_back(std::move(id));
    }
    return m;
}

void write_cemb(const std::string& path, const EmbeddingMatrix& m) {
    if (m.data.size() != m.ids.size() * static_cast<std::size_t>(m.dim))
        throw ContractError("write_cemb: matrix size does not match ids x dim");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write embedding file: " + path);
    out.write("CEMB", 4);
    auto u32 = [&](std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    auto u64 = [&](std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    };
    u32(1);
    u32(static_cast<std::uint32_t>(m.dim));
    u64(static_cast<std::uint64_t>(m.ids.size()));
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    for (const auto& id : m.ids) {
        if (id.size() > 0xffff) throw ContractError("write_cemb: id too long: " + id);
        unsigned char b[2] = {static_cast<unsigned char>(id.size()),
                              static_cast<unsigned char>(id.size() >> 8)};
        out.write(reinterpret_cast<const char*>(b), 2);
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if (!out) throw IngestionError("write failure on embedding file: " + path);
}

void EmbeddingIndex::reindex() {
    by_id_.clear();
    for (std::size_t i = 0; i < matrix_.ids.size(); ++i) {
        if (!by_id_.emplace(matrix_.ids[i], i).second)
            throw BuildError("index: duplicate id " + matrix_.ids[i]);
    }
}

EmbeddingIndex EmbeddingIndex::build(
    const std::vector<std::pair<std::string, std::vector<float>>>& entries) {
    EmbeddingIndex index;
    if (entries.empty()) throw BuildError("index: no entries");
    index.matrix_.dim = static_cast<int>(entries.front().second.size());
    for (const auto& [id, vec] : entries) {
        if (static_cast<int>(vec.size()) != index.matrix_.dim)
            throw BuildError("index: entry " + id + " has dim " + std::to_string(vec.size()) +
                             ", expected " + std::to_string(index.matrix_.dim));
        const double norm = row_norm(vec.data(), index.matrix_.dim);
        if (!(norm > 1e-12)) throw BuildError("index: entry " + id + " is a zero vector");
        index.matrix_.ids.push_back(id);
        for (float v : vec) index.matrix_.data.push_back(static_cast<float>(v / norm));
    }
    index.reindex();
    return index;
}

EmbeddingIndex EmbeddingIndex::from_matrix(EmbeddingMatrix m) {
    EmbeddingIndex index;
    for (std::size_t i = 0; i < m.ids.size(); ++i) {
        float* row = m.data.data() + i * static_cast<std::size_t>(m.dim);
        const double norm = row_norm(row, m.dim);
        if (!(norm > 1e-12)) throw BuildError("index: entry " + m.ids[i] + " is a zero vector");
        if (std::abs(norm - 1.0) > 1e-3)
            for (int j = 0; j < m.dim; ++j) row[j] = static_cast<float>(row[j] / norm);
    }
    index.matrix_ = std::move(m);
    index.reindex();
    return index;
}

std::vector<float> EmbeddingIndex::row_copy(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw LookupError("index: unknown id " + id);
    const float* r = matrix_.row(it->second);
    return std::vector<float>(r, r + matrix_.dim);
}

std::vector<double> EmbeddingIndex::scores(const std::vector<float>& query) const {
    if (static_cast<int>(query.size()) != matrix_.dim)
        throw ContractError("search: query dim " + std::to_string(query.size()) +
                            " does not match index dim " + std::to_string(matrix_.dim));
    std::vector<double> out(count());
    const int dim = matrix_.dim;
    for (std::size_t i = 0; i < count(); ++i) {
        const float* row = matrix_.row(i);
        double acc = 0.0;
        for (int j = 0; j < dim; ++j) acc += static_cast<double>(row[j]) * query[j];
        out[i] = acc;
    }
    return out;
}

SearchResult EmbeddingIndex::top_k(const std::vector<float>& query, int k) const {
    if (k < 1) throw ContractError("top_k: K must be >= 1");
    const std::vector<double> s = scores(query);

    // Bounded heap of the current best K, with top() the worst incumbent.
    // An entry beats another when its score is higher, or equal with a
    // smaller insertion index.
    using Entry = std::pair<double, std::size_t>;
    auto better = [](const Entry& a, const Entry& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), count());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (heap.size() < kk) {
            heap.emplace(s[i], i);
        } else if (s[i] > heap.top().first) {
            // an equal score never displaces: the incumbent has the smaller
            // insertion index and so ranks ahead
            heap.pop();
            heap.emplace(s[i], i);
        }
    }
    std::vector<Entry> ranked(heap.size());
    for (std::size_t i = ranked.size(); i-- > 0;) {
        ranked[i] = heap.top();
        heap.pop();
    }
    SearchResult result;
    result.hits.reserve(ranked.size());
    for (const auto& [score, idx] : ranked)
        result.hits.push_back({matrix_.ids[idx], static_cast<float>(score)});
    return result;
}

int EmbeddingIndex::rank_of(const std::vector<float>& query, const std::string& target_id) const {
    auto it = by_id_.find(target_id);
    if (it == by_id_.end()) throw LookupError("rank_of: unknown id " + target_id);
    const std::vector<double> s = scores(query);
    const std::size_t target = it->second;
    const double target_score = s[target];
    int rank = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] > target_score) ++rank;
        else if (s[i] == target_score && i < target) ++rank;
    }
    return rank;
}

void EmbeddingIndex::save(const std::string& path) const { write_cemb(path, matrix_); }

EmbeddingIndex EmbeddingIndex::load(const std::string& path) {
    return from_matrix(read_cemb(path));
}

} // namespace coir
