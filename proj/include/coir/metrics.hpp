#pragma once

#include <map>
#include <string>
#include <vector>

#include "coir/index.hpp"

namespace coir {

// Recall@K as a percentage over 1-based ranks.
double recall_at_k(const std::vector<int>& ranks, int k);

// Rank of the target within a fixed candidate group (CIRR-style subset of
// six); hit iff rank <= K. Ties break by candidate position in the group.
struct SubsetCandidate {
    std::string id;
    std::vector<float> embedding;
};

bool subset_recall_at_k(const std::vector<float>& query, const std::vector<SubsetCandidate>& subset,
                        const std::string& target_id, int k);
int subset_rank(const std::vector<float>& query, const std::vector<SubsetCandidate>& subset,
                const std::string& target_id);

struct EvalQuery {
    std::string qid;
    std::vector<float> embedding;
    std::string target_id;
    std::string category;            // optional group key
    std::vector<std::string> subset; // optional 6-candidate group (ids in corpus)
};

struct EvalReport {
    int query_count = 0;
    std::size_t corpus_size = 0;
    std::vector<int> k_set;
    std::map<int, double> recall;                                // K -> %
    std::map<std::string, std::map<int, double>> per_category;   // category -> K -> %
    std::map<int, double> category_average;                      // unweighted mean over categories
    std::map<int, double> subset_recall;                         // K -> % (queries with subsets)
    int subset_query_count = 0;

    std::string to_json() const; // 2-decimal fixed values
    std::string to_csv() const;  // columns: scope,k,recall
};

// Ranks every query target in the corpus and aggregates Recall@K, the
// per-category breakdown with its unweighted "Average", and subset recall
// where subsets are present. Pure in its inputs.
EvalReport evaluate(const std::vector<EvalQuery>& queries, const EmbeddingIndex& corpus,
                    const std::vector<int>& k_set, const std::vector<int>& subset_ks = {1, 2, 3});

// Ranks only (shared by the redundancy analysis).
std::map<std::string, int> rank_queries(const std::vector<EvalQuery>& queries,
                                        const EmbeddingIndex& corpus);

} // namespace coir
