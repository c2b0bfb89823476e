#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coir/datasets.hpp"
#include "coir/losses.hpp"
#include "coir/model.hpp"
#include "coir/optim.hpp"

namespace coir {

// One training sample: a composed query row and its positive target row.
struct SamplePlan {
    std::string qid;
    std::string query_image;
    std::string text;
    std::string target_image;
    bool reverse = false;
};

// Deterministic batch layout: all forward samples in input order, then all
// reverse samples in input order. A reverse sample swaps the two images and
// carries the [REV] marker, so its positive target is the original query
// image. With reverse queries enabled the sample count doubles exactly.
std::vector<SamplePlan> plan_batch(const std::vector<Triplet>& triplets, bool rq_enabled);

// Embedded batch (inference path): unit-norm query/target embedding rows,
// positive map, and per-row provenance.
struct Batch {
    int d_e = 0;
    std::vector<std::vector<float>> queries;
    std::vector<std::vector<float>> targets;
    std::vector<int> positives;   // query row -> target row
    std::vector<bool> is_reverse; // provenance flag per row

    int size() const { return static_cast<int>(queries.size()); }
};

Batch build_batch(const std::vector<Triplet>& triplets, const CaseModel& model,
                  const ImageStore& store, bool rq_enabled);

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    bool rq_enabled = true;
    QueryMode mode = QueryMode::Standard; // text_only / image_only train the ablation variants
    LossConfig loss;
    LrSchedule schedule;
    double weight_decay = 0.01;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct EpochReport {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    std::int64_t wall_ms = 0;
    std::uint64_t seed = 0;
    int samples = 0;

    std::string to_json() const;
};

// One pass over the dataset: splitmix64-shuffled order, fixed batch
// partition, per-batch forward/backward and one AdamW step. Deterministic
// given (params, dataset order, config) regardless of thread count:
// per-sample work happens on disjoint tapes and gradients are reduced
// serially in sample order.
EpochReport train_epoch(Parameters& params, OptimizerState& optimizer,
                        const std::vector<Triplet>& triplets, const ImageStore& store,
                        const TrainConfig& cfg, int epoch);

std::vector<EpochReport> train(Parameters& params, const std::vector<Triplet>& triplets,
                               const ImageStore& store, const TrainConfig& cfg);

} // namespace coir
