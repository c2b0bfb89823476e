#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coir/embedders.hpp"
#include "coir/metrics.hpp"
#include "coir/redundancy.hpp"
#include "coir/rng.hpp"

using namespace coir;

namespace {

std::vector<float> unit_axis(int dim, int axis) {
    std::vector<float> v(static_cast<std::size_t>(dim), 0.0f);
    v[static_cast<std::size_t>(axis)] = 1.0f;
    return v;
}

EmbeddingIndex axes_index(int n) {
    std::vector<std::pair<std::string, std::vector<float>>> entries;
    for (int i = 0; i < n; ++i) entries.emplace_back("e" + std::to_string(i), unit_axis(n, i));
    return EmbeddingIndex::build(entries);
}

} // namespace

TEST_CASE("recall_at_k arithmetic") {
    CHECK(recall_at_k({1, 3, 7}, 5) == doctest::Approx(66.6667).epsilon(1e-4));
    CHECK(recall_at_k({1, 1, 1}, 1) == doctest::Approx(100.0));
    CHECK(recall_at_k({5, 9}, 100) == doctest::Approx(100.0));
    CHECK_THROWS_AS((void)recall_at_k({}, 5), ContractError);
    CHECK_THROWS_AS((void)recall_at_k({0}, 5), ContractError);
}

TEST_CASE("recall_at_k is non-decreasing in K") {
    SplitMix64 rng(3);
    std::vector<int> ranks;
    for (int i = 0; i < 300; ++i) ranks.push_back(1 + static_cast<int>(rng.index(500)));
    double prev = 0.0;
    for (int k : {1, 2, 5, 10, 50, 100, 500}) {
        const double r = recall_at_k(ranks, k);
        CHECK(r >= prev);
        prev = r;
    }
    CHECK(prev == doctest::Approx(100.0));
}

TEST_CASE("uniform random ranks over a 2297 corpus hit R@1 of about 100/2297") {
    // statistical check over 1e5 trials, 3 standard errors
    SplitMix64 rng(41);
    const int corpus = 2297;
    const int trials = 100000;
    std::vector<int> ranks;
    ranks.reserve(trials);
    for (int i = 0; i < trials; ++i) ranks.push_back(1 + static_cast<int>(rng.index(corpus)));
    const double expected = 100.0 / corpus; // 0.0435...
    const double p = 1.0 / corpus;
    const double se = 100.0 * std::sqrt(p * (1 - p) / trials);
    CHECK(std::abs(recall_at_k(ranks, 1) - expected) < 3 * se);
}

TEST_CASE("subset recall ranks within the 6 candidates only") {
    std::vector<SubsetCandidate> subset;
    for (int i = 0; i < 6; ++i) subset.push_back({"c" + std::to_string(i), unit_axis(6, i)});

    // target embedding equals the query: rank 1
    CHECK(subset_recall_at_k(unit_axis(6, 2), subset, "c2", 1));
    CHECK(subset_rank(unit_axis(6, 2), subset, "c2") == 1);

    // hand-ordered similarities
    std::vector<float> q = {0.9f, 0.8f, 0.7f, 0.1f, 0.05f, 0.01f};
    CHECK(subset_rank(q, subset, "c0") == 1);
    CHECK(subset_rank(q, subset, "c2") == 3);
    CHECK(subset_rank(q, subset, "c5") == 6);
    CHECK_FALSE(subset_recall_at_k(q, subset, "c2", 2));
    CHECK(subset_recall_at_k(q, subset, "c2", 3));

    // K = 6 always hits
    for (int i = 0; i < 6; ++i)
        CHECK(subset_recall_at_k(q, subset, "c" + std::to_string(i), 6));

    CHECK_THROWS_AS((void)subset_rank(q, subset, "missing"), ContractError);
    subset.pop_back();
    CHECK_THROWS_AS((void)subset_rank(q, subset, "c0"), ContractError);
}

TEST_CASE("random subset scoring hits the analytic 1/6, 2/6, 3/6 rates") {
    SplitMix64 rng(43);
    const int trials = 100000;
    int hits1 = 0, hits2 = 0, hits3 = 0;
    for (int t = 0; t < trials; ++t) {
        // random rank uniform in [1,6], as random scoring gives
        const int rank = 1 + static_cast<int>(rng.index(6));
        hits1 += rank <= 1;
        hits2 += rank <= 2;
        hits3 += rank <= 3;
    }
    auto within = [&](int hits, double p) {
        const double se = 100.0 * std::sqrt(p * (1 - p) / trials);
        return std::abs(100.0 * hits / trials - 100.0 * p) < 3 * se;
    };
    CHECK(within(hits1, 1.0 / 6));
    CHECK(within(hits2, 2.0 / 6));
    CHECK(within(hits3, 3.0 / 6));
}

TEST_CASE("evaluate: self-retrieval scores 100 everywhere") {
    EmbeddingIndex corpus = axes_index(8);
    std::vector<EvalQuery> queries;
    queries.push_back({"q0", unit_axis(8, 3), "e3", "", {}});
    EvalReport report = evaluate(queries, corpus, {1, 5});
    CHECK(report.recall.at(1) == doctest::Approx(100.0));
    CHECK(report.recall.at(5) == doctest::Approx(100.0));
    CHECK(report.query_count == 1);
    CHECK(report.corpus_size == 8);
}

TEST_CASE("evaluate: category average is the unweighted mean") {
    EmbeddingIndex corpus = axes_index(10);
    std::vector<EvalQuery> queries;
    // category a: 5 queries, 2 hit at rank 1 -> R@1 = 40
    for (int i = 0; i < 5; ++i) {
        EvalQuery q;
        q.qid = "a" + std::to_string(i);
        q.target_id = "e" + std::to_string(i);
        q.embedding = unit_axis(10, i < 2 ? i : 9 - i); // misses point elsewhere
        q.category = "alpha";
        queries.push_back(q);
    }
    // category b: 5 queries, 3 hit -> R@1 = 60
    for (int i = 0; i < 5; ++i) {
        EvalQuery q;
        q.qid = "b" + std::to_string(i);
        q.target_id = "e" + std::to_string(i);
        q.embedding = unit_axis(10, i < 3 ? i : 9 - i);
        q.category = "beta";
        queries.push_back(q);
    }
    EvalReport report = evaluate(queries, corpus, {1});
    CHECK(report.per_category.at("alpha").at(1) == doctest::Approx(40.0));
    CHECK(report.per_category.at("beta").at(1) == doctest::Approx(60.0));
    CHECK(report.category_average.at(1) == doctest::Approx(50.0));
    CHECK(report.to_json().find("category_average") != std::string::npos);
    CHECK(report.to_csv().find("average,1,50.00") != std::string::npos);
}

TEST_CASE("evaluate lists missing targets") {
    EmbeddingIndex corpus = axes_index(4);
    std::vector<EvalQuery> queries;
    queries.push_back({"q0", unit_axis(4, 0), "absent-1", "", {}});
    queries.push_back({"q1", unit_axis(4, 1), "absent-2", "", {}});
    CHECK_THROWS_WITH_AS((void)evaluate(queries, corpus, {1}), doctest::Contains("absent-1"),
                         IngestionError);
}

TEST_CASE("evaluate is pure: identical reruns give identical reports") {
    SplitMix64 rng(7);
    std::vector<std::pair<std::string, std::vector<float>>> entries;
    for (int i = 0; i < 64; ++i) {
        std::vector<float> v(16);
        for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
        entries.emplace_back("e" + std::to_string(i), v);
    }
    EmbeddingIndex corpus = EmbeddingIndex::build(entries);
    std::vector<EvalQuery> queries;
    for (int i = 0; i < 20; ++i) {
        EvalQuery q;
        q.qid = "q" + std::to_string(i);
        q.target_id = "e" + std::to_string(i);
        std::vector<float> v(16);
        for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
        q.embedding = v;
        queries.push_back(q);
    }
    CHECK(evaluate(queries, corpus, {1, 5, 10}).to_json() ==
          evaluate(queries, corpus, {1, 5, 10}).to_json());
}

TEST_CASE("unimodal curve: perfect embeddings give a constant 100 line") {
    EmbeddingIndex corpus = axes_index(6);
    std::vector<EvalQuery> queries;
    for (int i = 0; i < 6; ++i)
        queries.push_back({"q" + std::to_string(i), unit_axis(6, i), "e" + std::to_string(i), "", {}});
    RedundancyCurve curve = unimodal_curve(queries, corpus, {1, 2, 5}, "reference");
    for (const auto& [k, r] : curve.points) CHECK(r == doctest::Approx(100.0));
    CHECK(curve.label == "reference");
    CHECK_THROWS_AS((void)unimodal_curve(queries, corpus, {5, 2}, "x"), ContractError);
}

TEST_CASE("unimodal curve: random embeddings track the chance line") {
    SplitMix64 rng(11);
    const int n = 400;
    std::vector<std::pair<std::string, std::vector<float>>> entries;
    for (int i = 0; i < n; ++i) {
        std::vector<float> v(32);
        for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
        entries.emplace_back("e" + std::to_string(i), v);
    }
    EmbeddingIndex corpus = EmbeddingIndex::build(entries);
    std::vector<EvalQuery> queries;
    for (int i = 0; i < 1000; ++i) {
        EvalQuery q;
        q.qid = "q" + std::to_string(i);
        q.target_id = "e" + std::to_string(rng.index(n));
        std::vector<float> v(32);
        for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
        q.embedding = v;
        queries.push_back(q);
    }
    RedundancyCurve curve = unimodal_curve(queries, corpus, {40}, "random");
    // chance: 100*K/N = 10%, binomial se ~0.95 over 1000 queries
    CHECK(std::abs(curve.points[0].second - 10.0) < 3.0);
}

TEST_CASE("purify filters by rank and keeps nesting") {
    std::vector<std::string> qids = {"a", "b", "c"};
    std::map<std::string, int> ranks = {{"a", 1}, {"b", 7}, {"c", 51}};
    CHECK(purify(qids, ranks, 0).retained == std::set<std::string>{"a", "b", "c"});
    CHECK(purify(qids, ranks, 5).retained == std::set<std::string>{"b", "c"});
    CHECK(purify(qids, ranks, 50).retained == std::set<std::string>{"c"});
    CHECK(purify(qids, ranks, 60).retained.empty());
    CHECK_THROWS_AS((void)purify({"a", "zz"}, ranks, 1), ContractError);

    SplitMix64 rng(13);
    std::vector<std::string> many;
    std::map<std::string, int> many_ranks;
    for (int i = 0; i < 200; ++i) {
        many.push_back("q" + std::to_string(i));
        many_ranks[many.back()] = 1 + static_cast<int>(rng.index(100));
    }
    PurifiedSubset prev = purify(many, many_ranks, 0);
    CHECK(prev.retained.size() == 200);
    for (int n : {1, 5, 10, 50}) {
        PurifiedSubset cur = purify(many, many_ranks, n);
        for (const auto& qid : cur.retained) CHECK(prev.retained.count(qid) == 1);
        CHECK(cur.retained.size() <= prev.retained.size());
        prev = cur;
    }
}

TEST_CASE("self-filtering sweep is exactly zero for K <= n") {
    SplitMix64 rng(17);
    std::map<std::string, int> ranks;
    for (int i = 0; i < 300; ++i) ranks["q" + std::to_string(i)] = 1 + static_cast<int>(rng.index(80));
    SweepTable table = redundancy_sweep(ranks, ranks, {0, 1, 5, 10, 50}, {1, 5, 10, 50});
    for (const auto& row : table.rows) {
        if (row.empty) continue;
        for (const auto& [k, recall] : row.recall)
            if (k <= row.n) CHECK(recall == 0.0);
    }
}

TEST_CASE("sweep with method ranks all 1 stays at 100 on non-empty subsets") {
    std::map<std::string, int> method, filter;
    SplitMix64 rng(19);
    for (int i = 0; i < 100; ++i) {
        method["q" + std::to_string(i)] = 1;
        filter["q" + std::to_string(i)] = 1 + static_cast<int>(rng.index(60));
    }
    SweepTable table = redundancy_sweep(method, filter, {0, 1, 5, 10, 50});
    bool any = false;
    for (const auto& row : table.rows)
        if (!row.empty) {
            CHECK(row.avg_recall == doctest::Approx(100.0));
            any = true;
        }
    CHECK(any);
    CHECK_FALSE(table.degenerate);
    CHECK(table.to_csv().find("n,subset_size,avg_recall") != std::string::npos);
}

TEST_CASE("sweep flags empty subsets instead of averaging them") {
    std::map<std::string, int> method = {{"a", 1}, {"b", 2}};
    std::map<std::string, int> filter = {{"a", 1}, {"b", 1}};
    SweepTable table = redundancy_sweep(method, filter, {0, 1, 5});
    CHECK_FALSE(table.rows[0].empty);
    CHECK(table.rows[1].empty);
    CHECK(table.rows[2].empty);
    CHECK_FALSE(table.degenerate);

    SweepTable all_empty = redundancy_sweep(method, filter, {1, 5});
    CHECK(all_empty.degenerate);
}

TEST_CASE("bow text embedder builds tf vectors over a shared vocabulary") {
    BowTextEmbedder bow = BowTextEmbedder::build({"a red square", "a blue disc"});
    CHECK(bow.dim() == 5); // a, blue, disc, red, square
    auto v = bow.embed("red red square");
    double norm = 0;
    for (float x : v) norm += static_cast<double>(x) * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
    // "red" has twice the weight of "square"
    auto vocab = bow.vocab();
    std::size_t red = 0, square = 0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (vocab[i] == "red") red = i;
        if (vocab[i] == "square") square = i;
    }
    CHECK(v[red] == doctest::Approx(2.0f * v[square]).epsilon(1e-5));
    CHECK_THROWS_AS((void)bow.embed("zzz unknown words"), DegenerateVectorError);
}

TEST_CASE("mean-pool image embedder averages blocks") {
    Image img = Image::zeros(16, 16, 3);
    // left half bright red channel
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 8; ++x) img.at(y, x, 0) = 1.0f;
    MeanPoolImageEmbedder embedder(2);
    auto v = embedder.embed(img);
    REQUIRE(v.size() == 12);
    CHECK(v[0] == doctest::Approx(1.0f));  // top-left block, channel 0
    CHECK(v[3] == doctest::Approx(0.0f));  // top-right block, channel 0
    CHECK_THROWS_AS((void)MeanPoolImageEmbedder(5).embed(img), ContractError);
}
