#include "coir/redundancy.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "coir/errors.hpp"

namespace coir {

using nlohmann::json;

RedundancyCurve unimodal_curve(const std::vector<EvalQuery>& queries, const EmbeddingIndex& corpus,
                               const std::vector<int>& k_grid, const std::string& label) {
    if (k_grid.empty()) throw ContractError("unimodal_curve: empty K grid");
    for (std::size_t i = 1; i < k_grid.size(); ++i)
        if (k_grid[i] <= k_grid[i - 1])
            throw ContractError("unimodal_curve: K grid must be strictly increasing");
    const auto rank_by_qid = rank_queries(queries, corpus);
    std::vector<int> ranks;
    ranks.reserve(queries.size());
    for (const auto& q : queries) ranks.push_back(rank_by_qid.at(q.qid));
    RedundancyCurve curve;
    curve.label = label;
    for (int k : k_grid) curve.points.emplace_back(k, recall_at_k(ranks, k));
    return curve;
}

PurifiedSubset purify(const std::vector<std::string>& query_ids,
                      const std::map<std::string, int>& filter_ranks, int n) {
    if (n < 0) throw ContractError("purify: n must be >= 0");
    PurifiedSubset subset;
    subset.n = n;
    for (const auto& qid : query_ids) {
        auto it = filter_ranks.find(qid);
        if (it == filter_ranks.end())
            throw ContractError("purify: query " + qid + " not covered by filter ranks");
        if (it->second > n) subset.retained.insert(qid);
    }
    return subset;
}

SweepTable redundancy_sweep(const std::map<std::string, int>& method_ranks,
                            const std::map<std::string, int>& filter_ranks,
                            const std::vector<int>& n_grid, const std::vector<int>& k_set) {
    if (method_ranks.empty()) throw ContractError("redundancy_sweep: no queries");
    std::vector<std::string> qids;
    qids.reserve(method_ranks.size());
    for (const auto& [qid, rank] : method_ranks) qids.push_back(qid);
    for (const auto& qid : qids)
        if (!filter_ranks.count(qid))
            throw ContractError("redundancy_sweep: query " + qid + " not covered by filter ranks");

    SweepTable table;
    table.k_set = k_set;
    bool any_nonempty = false;
    for (int n : n_grid) {
        const PurifiedSubset subset = purify(qids, filter_ranks, n);
        SweepRow row;
        row.n = n;
        row.subset_size = subset.retained.size();
        if (subset.retained.empty()) {
            row.empty = true;
        } else {
            any_nonempty = true;
            std::vector<int> ranks;
            ranks.reserve(subset.retained.size());
            for (const auto& qid : subset.retained) ranks.push_back(method_ranks.at(qid));
            double sum = 0.0;
            for (int k : k_set) {
                row.recall[k] = recall_at_k(ranks, k);
                sum += row.recall[k];
            }
            row.avg_recall = sum / static_cast<double>(k_set.size());
        }
        table.rows.push_back(std::move(row));
    }
    table.degenerate = !any_nonempty;
    return table;
}

namespace {
double round2(double v) { return std::round(v * 100.0) / 100.0; }
} // namespace

std::string RedundancyCurve::to_json() const {
    json j;
    j["label"] = label;
    json pts = json::array();
    for (const auto& [k, r] : points) {
        json p;
        p["k"] = k;
        p["recall"] = round2(r);
        pts.push_back(p);
    }
    j["points"] = pts;
    return j.dump(2);
}

std::string RedundancyCurve::to_csv() const {
    std::ostringstream out;
    out << "k,recall\n";
    out.setf(std::ios::fixed);
    out.precision(2);
    for (const auto& [k, r] : points) out << k << "," << r << "\n";
    return out.str();
}

std::string SweepTable::to_json() const {
    json j;
    j["degenerate"] = degenerate;
    json rows_json = json::array();
    for (const auto& row : rows) {
        json r;
        r["n"] = row.n;
        r["subset_size"] = row.subset_size;
        r["empty"] = row.empty;
        if (!row.empty) {
            r["avg_recall"] = round2(row.avg_recall);
            json rec;
            for (const auto& [k, v] : row.recall) rec[std::to_string(k)] = round2(v);
            r["recall"] = rec;
        }
        rows_json.push_back(r);
    }
    j["rows"] = rows_json;
    return j.dump(2);
}

std::string SweepTable::to_csv() const {
    std::ostringstream out;
    out << "n,subset_size,avg_recall";
    for (int k : k_set) out << ",recall@" << k;
    out << "\n";
    out.setf(std::ios::fixed);
    out.precision(2);
    for (const auto& row : rows) {
        out << row.n << "," << row.subset_size << ",";
        if (row.empty) {
            out << "empty";
            for (std::size_t i = 0; i < k_set.size(); ++i) out << ",";
        } else {
            out << row.avg_recall;
            for (int k : k_set) out << "," << row.recall.at(k);
        }
        out << "\n";
    }
    return out.str();
}

} // namespace coir
