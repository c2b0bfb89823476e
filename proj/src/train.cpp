#include "coir/train.hpp"

#include <chrono>
#include <memory>
#include <thread>

#include <json.hpp>

#include "coir/rng.hpp"

namespace coir {

std::vector<SamplePlan> plan_batch(const std::vector<Triplet>& triplets, bool rq_enabled) {
    std::vector<SamplePlan> plans;
    plans.reserve(triplets.size() * (rq_enabled ? 2 : 1));
    for (const auto& t : triplets)
        plans.push_back({t.qid, t.query_image, t.query_text, t.target_image, false});
    if (rq_enabled)
        for (const auto& t : triplets)
            plans.push_back({t.qid, t.target_image, t.query_text, t.query_image, true});
    return plans;
}

Batch build_batch(const std::vector<Triplet>& triplets, const CaseModel& model,
                  const ImageStore& store, bool rq_enabled) {
    Batch batch;
    batch.d_e = model.config().d_e;
    for (const auto& plan : plan_batch(triplets, rq_enabled)) {
        const Image* query_img = nullptr;
        const Image* target_img = nullptr;
        try {
            query_img = &store.image(plan.query_image);
            target_img = &store.image(plan.target_image);
        } catch (const Error& e) {
            throw IngestionError("build_batch: triplet " + plan.qid + ": " + e.what());
        }
        const QueryMode mode = plan.reverse ? QueryMode::Reverse : QueryMode::Standard;
        batch.queries.push_back(model.forward_query(*query_img, plan.text, mode));
        batch.targets.push_back(model.encode_target(*target_img));
        batch.positives.push_back(batch.size() - 1);
        batch.is_reverse.push_back(plan.reverse);
    }
    return batch;
}

std::string EpochReport::to_json() const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["mean_loss"] = mean_loss;
    j["lr"] = lr;
    j["wall_ms"] = wall_ms;
    j["seed"] = seed;
    j["samples"] = samples;
    return j.dump();
}

namespace {

struct SampleWork {
    std::unique_ptr<Tape> tape;
    TapeParams<float> tp;
    ValueId q_emb = -1;
    ValueId t_emb = -1;
};

QueryMode sample_mode(const TrainConfig& cfg, bool reverse) {
    if (cfg.mode != QueryMode::Standard) return cfg.mode;
    return reverse ? QueryMode::Reverse : QueryMode::Standard;
}

// Forward + backward for one batch, then a single optimizer step.
double train_batch(Parameters& params, OptimizerState& optimizer,
                   const std::vector<SamplePlan>& plans, const ImageStore& store,
                   const TrainConfig& cfg, double lr) {
    const int B = static_cast<int>(plans.size());
    const int d_e = params.config.d_e;

    // Warm the image cache serially; worker threads then only read it.
    for (const auto& p : plans) {
        try {
            store.image(p.query_image);
            store.image(p.target_image);
        } catch (const Error& e) {
            throw IngestionError("train: triplet " + p.qid + ": " + e.what());
        }
    }

    std::vector<SampleWork> work(static_cast<std::size_t>(B));
    auto run_sample = [&](int i) {
        const SamplePlan& plan = plans[static_cast<std::size_t>(i)];
        SampleWork& w = work[static_cast<std::size_t>(i)];
        w.tape = std::make_unique<Tape>();
        w.tp = push_params(*w.tape, params, true);
        w.q_emb = forward_query_t(*w.tape, w.tp, params.config, params.tokenizer,
                                  store.image(plan.query_image), plan.text,
                                  sample_mode(cfg, plan.reverse));
        w.t_emb = encode_target_t(*w.tape, w.tp, params.config, store.image(plan.target_image));
    };

    const int threads = std::max(1, cfg.threads);
    if (threads == 1 || B < 2) {
        for (int i = 0; i < B; ++i) run_sample(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t]() {
                for (int i = t; i < B; i += threads) run_sample(i);
            });
        for (auto& th : pool) th.join();
    }

    // Loss tape over the collected embedding rows.
    Tape loss_tape;
    Tensor Q = Tensor::zeros({B, d_e});
    Tensor T = Tensor::zeros({B, d_e});
    for (int i = 0; i < B; ++i) {
        const auto& qv = work[static_cast<std::size_t>(i)].tape->val(work[static_cast<std::size_t>(i)].q_emb).data;
        const auto& tv = work[static_cast<std::size_t>(i)].tape->val(work[static_cast<std::size_t>(i)].t_emb).data;
        std::copy(qv.begin(), qv.end(), Q.data.begin() + static_cast<std::size_t>(i) * d_e);
        std::copy(tv.begin(), tv.end(), T.data.begin() + static_cast<std::size_t>(i) * d_e);
    }
    ValueId q_id = loss_tape.push_leaf(Q, true);
    ValueId t_id = loss_tape.push_leaf(T, true);
    ValueId sim = loss_tape.matmul(q_id, loss_tape.transpose(t_id));
    std::vector<int> positives(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) positives[static_cast<std::size_t>(i)] = i;
    ValueId loss = (cfg.loss.variant == LossVariant::Surrogate)
                       ? recall_surrogate_loss(loss_tape, sim, positives, cfg.loss)
                       : info_nce_loss(loss_tape, sim, positives, cfg.loss.temperature);
    const double loss_value = static_cast<double>(loss_tape.val(loss).data[0]);
    loss_tape.backward(loss);
    const auto& dq = loss_tape.grad(q_id);
    const auto& dt = loss_tape.grad(t_id);

    // Backprop each sample from its embedding gradients.
    auto run_backward = [&](int i) {
        SampleWork& w = work[static_cast<std::size_t>(i)];
        std::vector<float> dqi(dq.begin() + static_cast<std::size_t>(i) * d_e,
                               dq.begin() + static_cast<std::size_t>(i + 1) * d_e);
        std::vector<float> dti(dt.begin() + static_cast<std::size_t>(i) * d_e,
                               dt.begin() + static_cast<std::size_t>(i + 1) * d_e);
        w.tape->backward_from({{w.q_emb, std::move(dqi)}, {w.t_emb, std::move(dti)}});
    };
    if (threads == 1 || B < 2) {
        for (int i = 0; i < B; ++i) run_backward(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t]() {
                for (int i = t; i < B; i += threads) run_backward(i);
            });
        for (auto& th : pool) th.join();
    }

    // Reduce parameter gradients serially in sample order.
    for (auto& [name, tensor] : params.named) tensor.ensure_grad();
    for (int i = 0; i < B; ++i) {
        const SampleWork& w = work[static_cast<std::size_t>(i)];
        for (auto& [name, tensor] : params.named) {
            const auto& g = w.tape->grad(w.tp.at(name));
            if (g.empty()) continue;
            for (std::size_t k = 0; k < g.size(); ++k) tensor.grad[k] += g[k];
        }
    }

    adamw_step(optimizer, params, lr, cfg.weight_decay);
    zero_grads(params);
    return loss_value;
}

} // namespace

EpochReport train_epoch(Parameters& params, OptimizerState& optimizer,
                        const std::vector<Triplet>& triplets, const ImageStore& store,
                        const TrainConfig& cfg, int epoch) {
    if (triplets.empty()) throw ContractError("train_epoch: empty dataset");
    const auto start = std::chrono::steady_clock::now();

    std::vector<std::size_t> order(triplets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng = SplitMix64::derive(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
    rng.shuffle(order);

    const bool rq = cfg.rq_enabled && cfg.mode == QueryMode::Standard;
    double loss_sum = 0.0;
    int total_rows = 0;
    const double lr = lr_at_epoch(cfg.schedule, epoch);

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
        std::vector<Triplet> chunk;
        chunk.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) chunk.push_back(triplets[order[i]]);
        const auto plans = plan_batch(chunk, rq);
        if (plans.size() < 2) continue; // a single row has no negatives
        const double loss = train_batch(params, optimizer, plans, store, cfg, lr);
        loss_sum += loss * static_cast<double>(plans.size());
        total_rows += static_cast<int>(plans.size());
    }

    EpochReport report;
    report.epoch = epoch;
    report.mean_loss = total_rows ? loss_sum / total_rows : 0.0;
    report.lr = lr;
    report.seed = cfg.seed;
    report.samples = total_rows;
    report.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return report;
}

std::vector<EpochReport> train(Parameters& params, const std::vector<Triplet>& triplets,
                               const ImageStore& store, const TrainConfig& cfg) {
    if (triplets.empty()) throw ContractError("train: empty dataset");
    cfg.loss.validate();
    OptimizerState optimizer = OptimizerState::create(params);
    std::vector<EpochReport> reports;
    for (int e = 0; e < cfg.epochs; ++e)
        reports.push_back(train_epoch(params, optimizer, triplets, store, cfg, e));
    return reports;
}

} // namespace coir
