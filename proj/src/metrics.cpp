#include "coir/metrics.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coir/errors.hpp"

namespace coir {

using nlohmann::json;

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ContractError("cosine: dim mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateVectorError("cosine: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

double recall_at_k(const std::vector<int>& ranks, int k) {
    if (ranks.empty()) throw ContractError("recall_at_k: empty rank list");
    if (k < 1) throw ContractError("recall_at_k: K must be >= 1");
    std::size_t hits = 0;
    for (int r : ranks) {
        if (r < 1) throw ContractError("recall_at_k: ranks are 1-based");
        if (r <= k) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

int subset_rank(const std::vector<float>& query, const std::vector<SubsetCandidate>& subset,
                const std::string& target_id) {
    if (subset.size() != 6) throw ContractError("subset_rank: need exactly 6 candidates");
    int target_pos = -1;
    for (std::size_t i = 0; i < subset.size(); ++i)
        if (subset[i].id == target_id) target_pos = static_cast<int>(i);
    if (target_pos < 0) throw ContractError("subset_rank: target " + target_id + " not in subset");
    std::vector<double> s(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) s[i] = cosine(query, subset[i].embedding);
    int rank = 1;
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (static_cast<int>(i) == target_pos) continue;
        if (s[i] > s[static_cast<std::size_t>(target_pos)]) ++rank;
        else if (s[i] == s[static_cast<std::size_t>(target_pos)] && static_cast<int>(i) < target_pos) ++rank;
    }
    return rank;
}

bool subset_recall_at_k(const std::vector<float>& query, const std::vector<SubsetCandidate>& subset,
                        const std::string& target_id, int k) {
    if (k < 1 || k > 6) throw ContractError("subset_recall_at_k: K must be in [1,6]");
    return subset_rank(query, subset, target_id) <= k;
}

std::map<std::string, int> rank_queries(const std::vector<EvalQuery>& queries,
                                        const EmbeddingIndex& corpus) {
    std::vector<std::string> missing;
    for (const auto& q : queries)
        if (!corpus.contains(q.target_id)) missing.push_back(q.target_id);
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
        if (missing.size() > 10) list += ", ...";
        throw IngestionError("evaluate: " + std::to_string(missing.size()) +
                             " query targets missing from corpus: " + list);
    }
    std::map<std::string, int> ranks;
    for (const auto& q : queries) ranks[q.qid] = corpus.rank_of(q.embedding, q.target_id);
    return ranks;
}

EvalReport evaluate(const std::vector<EvalQuery>& queries, const EmbeddingIndex& corpus,
                    const std::vector<int>& k_set, const std::vector<int>& subset_ks) {
    if (queries.empty()) throw ContractError("evaluate: no queries");
    EvalReport report;
    report.query_count = static_cast<int>(queries.size());
    report.corpus_size = corpus.count();
    report.k_set = k_set;

    const auto rank_by_qid = rank_queries(queries, corpus);
    std::vector<int> ranks;
    ranks.reserve(queries.size());
    std::map<std::string, std::vector<int>> category_ranks;
    for (const auto& q : queries) {
        const int r = rank_by_qid.at(q.qid);
        ranks.push_back(r);
        if (!q.category.empty()) category_ranks[q.category].push_back(r);
    }

    for (int k : k_set) report.recall[k] = recall_at_k(ranks, k);

    if (!category_ranks.empty()) {
        for (const auto& [cat, rs] : category_ranks)
            for (int k : k_set) report.per_category[cat][k] = recall_at_k(rs, k);
        for (int k : k_set) {
            double sum = 0.0;
            for (const auto& [cat, vals] : report.per_category) sum += vals.at(k);
            report.category_average[k] = sum / static_cast<double>(report.per_category.size());
        }
    }

    std::map<int, int> subset_hits;
    for (const auto& q : queries) {
        if (q.subset.empty()) continue;
        std::vector<SubsetCandidate> cands;
        for (const auto& id : q.subset) {
            if (!corpus.contains(id))
                throw IngestionError("evaluate: subset candidate " + id + " missing from corpus");
            cands.push_back({id, corpus.row_copy(id)});
        }
        const int r = subset_rank(q.embedding, cands, q.target_id);
        report.subset_query_count += 1;
        for (int k : subset_ks)
            if (r <= k) subset_hits[k] += 1;
    }
    if (report.subset_query_count > 0)
        for (int k : subset_ks)
            report.subset_recall[k] =
                100.0 * subset_hits[k] / static_cast<double>(report.subset_query_count);

    return report;
}

std::string EvalReport::to_json() const {
    json j;
    j["query_count"] = query_count;
    j["corpus_size"] = corpus_size;
    json rec;
    for (const auto& [k, v] : recall) rec[std::to_string(k)] = round2(v);
    j["recall"] = rec;
    if (!per_category.empty()) {
        json cats;
        for (const auto& [cat, vals] : per_category) {
            json c;
            for (const auto& [k, v] : vals) c[std::to_string(k)] = round2(v);
            cats[cat] = c;
        }
        j["per_category"] = cats;
        json avg;
        for (const auto& [k, v] : category_average) avg[std::to_string(k)] = round2(v);
        j["category_average"] = avg;
    }
    if (!subset_recall.empty()) {
        json sub;
        for (const auto& [k, v] : subset_recall) sub[std::to_string(k)] = round2(v);
        j["subset_recall"] = sub;
        j["subset_query_count"] = subset_query_count;
    }
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "scope,k,recall\n";
    out.setf(std::ios::fixed);
    out.precision(2);
    for (const auto& [k, v] : recall) out << "overall," << k << "," << v << "\n";
    for (const auto& [cat, vals] : per_category)
        for (const auto& [k, v] : vals) out << cat << "," << k << "," << v << "\n";
    for (const auto& [k, v] : category_average) out << "average," << k << "," << v << "\n";
    for (const auto& [k, v] : subset_recall) out << "subset," << k << "," << v << "\n";
    return out.str();
}

} // namespace coir
