#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "coir/metrics.hpp"

namespace coir {

// Uni-modal Recall@K curve over a K grid.
struct RedundancyCurve {
    std::string label; // "text-only" | "image-only" | "reference" | free-form
    std::vector<std::pair<int, double>> points;

    std::string to_json() const;
    std::string to_csv() const;
};

// Recall@K for each K in k_grid (strictly increasing), computed from the
// given queries against the corpus.
RedundancyCurve unimodal_curve(const std::vector<EvalQuery>& queries, const EmbeddingIndex& corpus,
                               const std::vector<int>& k_grid, const std::string& label);

// V_n: the queries the filtering retriever does NOT solve within its top-n.
// V_0 is the full set; the subsets are nested.
struct PurifiedSubset {
    int n = 0;
    std::set<std::string> retained;
};

PurifiedSubset purify(const std::vector<std::string>& query_ids,
                      const std::map<std::string, int>& filter_ranks, int n);

struct SweepRow {
    int n = 0;
    std::size_t subset_size = 0;
    bool empty = false;        // flagged, not averaged
    double avg_recall = 0.0;   // mean over K of Recall@K on V_n
    std::map<int, double> recall;
};

struct SweepTable {
    std::vector<int> k_set;
    std::vector<SweepRow> rows;
    bool degenerate = false; // every V_n empty

    std::string to_json() const;
    std::string to_csv() const; // n,subset_size,avg_recall,recall@K...
};

// For each n in n_grid: restrict to V_n under filter_ranks and average the
// method's Recall@K over k_set. Both rank maps must cover every query.
SweepTable redundancy_sweep(const std::map<std::string, int>& method_ranks,
                            const std::map<std::string, int>& filter_ranks,
                            const std::vector<int>& n_grid,
                            const std::vector<int>& k_set = {1, 5, 10, 50});

} // namespace coir
