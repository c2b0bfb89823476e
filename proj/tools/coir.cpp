// coir — composed image retrieval laboratory command line.
//
// Subcommands: gen-toy, roam, sample, stats, train, embed, retrieve, eval,
// redundancy (curve|sweep), explain (heatmap|tokens).
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "coir/embedders.hpp"
#include "coir/explain.hpp"
#include "coir/index.hpp"
#include "coir/metrics.hpp"
#include "coir/redundancy.hpp"
#include "coir/roaming.hpp"
#include "coir/runconfig.hpp"
#include "coir/toygen.hpp"
#include "coir/train.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(4u, hw ? hw : 1u));
}

// Per-subcommand resolution: defaults <- config file <- provided flags.
// Logs version, seed (when present) and the config hash to stderr.
class Scope {
public:
    Scope(CLI::App* cmd, std::string name) : cmd_(cmd), name_(std::move(name)) {
        cmd_->add_option("--config", config_path_, "JSON config file (keys = flag names)");
    }

    template <typename T>
    void option(const std::string& flag, T& value, const std::string& help) {
        defaults_[key(flag)] = value;
        opts_.push_back(cmd_->add_option(flag, value, help));
    }
    void flag(const std::string& name, bool& value, const std::string& help) {
        defaults_[key(name)] = value;
        opts_.push_back(cmd_->add_flag(name, value, help));
    }

    // call after parsing: applies file config under the flags
    json resolve() {
        json flags = json::object();
        for (CLI::Option* opt : opts_)
            if (opt->count() > 0) flags[key(opt->get_name())] = flag_value(opt);
        json resolved = coir::resolve_config(defaults_, coir::load_config_file(config_path_), flags);
        std::string seed_note;
        if (resolved.contains("seed")) seed_note = " seed=" + resolved["seed"].dump();
        std::cerr << "coir " << coir::kVersion << " " << name_ << seed_note
                  << " config_hash=" << coir::config_hash(resolved) << " config=" << resolved.dump()
                  << "\n";
        return resolved;
    }

private:
    static std::string key(std::string flag) {
        while (!flag.empty() && flag.front() == '-') flag.erase(flag.begin());
        for (auto& c : flag)
            if (c == '-') c = '_';
        return flag;
    }
    // coerce a provided flag to the json type its default declares
    json flag_value(CLI::Option* opt) const {
        const json& def = defaults_.at(key(opt->get_name()));
        if (def.is_boolean()) return true; // flags only turn on
        const std::string raw = opt->results().back();
        if (def.is_string()) return raw;
        try {
            if (def.is_number_float()) return std::stod(raw);
            if (def.is_number_unsigned()) return static_cast<std::uint64_t>(std::stoull(raw));
            return static_cast<std::int64_t>(std::stoll(raw));
        } catch (const std::exception&) {
            throw ContractErrorForFlag(opt->get_name(), raw);
        }
    }

    static coir::ContractError ContractErrorForFlag(const std::string& flag,
                                                    const std::string& raw) {
        return coir::ContractError("bad numeric value for " + flag + ": '" + raw + "'");
    }

    CLI::App* cmd_;
    std::string name_;
    std::string config_path_;
    json defaults_ = json::object();
    std::vector<CLI::Option*> opts_;
};

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (out.empty()) throw coir::ContractError("empty integer list: '" + csv + "'");
    return out;
}

std::vector<float> parse_float_list(const std::string& csv) {
    std::vector<float> out;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stof(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

void write_text(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        if (!content.empty() && content.back() != '\n') std::cout << "\n";
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw coir::IngestionError("cannot write " + path);
    out << content;
}

coir::EmbeddingMatrix embeddings_for(const std::string& what, const json& cfg,
                                     const coir::CorpusManifest* manifest,
                                     const std::vector<coir::Triplet>& triplets) {
    const std::string embedder = cfg.at("embedder").get<std::string>();
    coir::EmbeddingMatrix m;
    auto add = [&](const std::string& id, const std::vector<float>& v) {
        if (m.ids.empty()) m.dim = static_cast<int>(v.size());
        m.ids.push_back(id);
        m.data.insert(m.data.end(), v.begin(), v.end());
    };

    std::vector<std::string> corpus_ids;
    if (manifest) {
        const std::string split = cfg.at("split").get<std::string>();
        corpus_ids = manifest->ids_for_split(split == "all" ? "" : split);
    }

    if (embedder == "case") {
        coir::CaseModel model(coir::load_checkpoint(cfg.at("model").get<std::string>()));
        coir::ImageStore store(*manifest);
        if (what == "corpus") {
            for (const auto& id : corpus_ids) add(id, model.encode_target(store.image(id)));
        } else {
            const coir::QueryMode mode = coir::parse_query_mode(cfg.at("mode").get<std::string>());
            for (const auto& t : triplets)
                add(t.qid, model.forward_query(store.image(t.query_image), t.query_text, mode));
        }
        return m;
    }
    if (embedder == "text_bow") {
        auto captions = coir::load_captions(cfg.at("captions").get<std::string>());
        std::vector<std::string> texts;
        for (const auto& [id, cap] : captions) texts.push_back(cap);
        for (const auto& t : triplets) texts.push_back(t.query_text);
        coir::BowTextEmbedder bow = coir::BowTextEmbedder::build(texts);
        if (what == "corpus") {
            for (const auto& id : corpus_ids) {
                auto it = captions.find(id);
                if (it == captions.end())
                    throw coir::IngestionError("no caption for corpus image " + id);
                add(id, bow.embed(it->second));
            }
        } else {
            for (const auto& t : triplets) add(t.qid, bow.embed(t.query_text));
        }
        return m;
    }
    if (embedder == "image_mean") {
        coir::MeanPoolImageEmbedder pool(cfg.at("grid").get<int>());
        coir::ImageStore store(*manifest);
        if (what == "corpus") {
            for (const auto& id : corpus_ids) add(id, pool.embed(store.image(id)));
        } else {
            for (const auto& t : triplets) add(t.qid, pool.embed(store.image(t.query_image)));
        }
        return m;
    }
    throw coir::ContractError("unknown embedder: " + embedder +
                              " (expected case | text_bow | image_mean)");
}

std::vector<coir::EvalQuery> assemble_queries(const coir::EmbeddingMatrix& q,
                                              const std::vector<coir::Triplet>& triplets) {
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < q.ids.size(); ++i) row_of[q.ids[i]] = i;
    std::vector<coir::EvalQuery> queries;
    for (const auto& t : triplets) {
        auto it = row_of.find(t.qid);
        if (it == row_of.end())
            throw coir::IngestionError("no query embedding for triplet " + t.qid);
        coir::EvalQuery eq;
        eq.qid = t.qid;
        eq.embedding.assign(q.row(it->second), q.row(it->second) + q.dim);
        eq.target_id = t.target_image;
        eq.category = t.category;
        eq.subset = t.subset;
        queries.push_back(std::move(eq));
    }
    return queries;
}

std::map<std::string, int> ranks_from(const coir::EmbeddingMatrix& queries,
                                      const coir::EmbeddingIndex& corpus,
                                      const std::vector<coir::Triplet>& triplets) {
    return coir::rank_queries(assemble_queries(queries, triplets), corpus);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coir: composed image retrieval laboratory"};
    app.require_subcommand(1);

    // ---- gen-toy -----------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("gen-toy", "generate the synthetic CoIR dataset");
    std::string gen_out;
    gen_cmd->add_option("--out", gen_out, "output directory")->required();
    Scope gen_scope(gen_cmd, "gen-toy");
    {
        static std::uint64_t seed = 7;
        static std::string mode = "compositional", fmt = "ppm";
        static int group = 4, train_triplets = 2000, val_triplets = 240;
        static int corpus_train = 0, corpus_val = 0, near_miss = 2, image_size = 32;
        gen_scope.option("--seed", seed, "generator seed");
        gen_scope.option("--mode", mode, "compositional | redundant");
        gen_scope.option("--group", group, "ambiguity group size G");
        gen_scope.option("--train-triplets", train_triplets, "training triplet count");
        gen_scope.option("--val-triplets", val_triplets, "validation triplet count");
        gen_scope.option("--corpus-train", corpus_train, "train corpus size (0 = as needed)");
        gen_scope.option("--corpus-val", corpus_val, "val corpus size (0 = as needed)");
        gen_scope.option("--near-miss", near_miss, "decoys per triplet (redundant mode)");
        gen_scope.option("--image-size", image_size, "square image size in pixels");
        gen_scope.option("--image-format", fmt, "ppm | f32t");
        gen_cmd->callback([&]() {
            json cfg = gen_scope.resolve();
            coir::ToyConfig tc;
            tc.seed = cfg["seed"].get<std::uint64_t>();
            tc.group_size = cfg["group"].get<int>();
            tc.mode = cfg["mode"].get<std::string>() == "redundant"
                          ? coir::ToyConfig::Mode::Redundant
                          : coir::ToyConfig::Mode::Compositional;
            if (cfg["mode"] != "redundant" && cfg["mode"] != "compositional")
                throw coir::ContractError("gen-toy: mode must be compositional or redundant");
            tc.train_triplets = cfg["train_triplets"].get<int>();
            tc.val_triplets = cfg["val_triplets"].get<int>();
            tc.corpus_train = cfg["corpus_train"].get<int>();
            tc.corpus_val = cfg["corpus_val"].get<int>();
            tc.near_miss_per_triplet = cfg["near_miss"].get<int>();
            tc.image_size = cfg["image_size"].get<int>();
            tc.image_format = cfg["image_format"].get<std::string>();
            coir::ToyOutput out = coir::gen_toy(tc, gen_out);
            std::cerr << "wrote " << out.train_triplets_path << ", " << out.val_triplets_path
                      << ", " << out.manifest_path << ", " << out.captions_path << "\n";
        });
    }

    // ---- roam --------------------------------------------------------------
    auto* roam_cmd = app.add_subcommand("roam", "convert VQA pairs into CoIR triplets");
    std::string roam_pairs, roam_out;
    roam_cmd->add_option("--pairs", roam_pairs, "VQA pairs JSON")->required();
    roam_cmd->add_option("--out", roam_out, "output triplets JSONL")->required();
    Scope roam_scope(roam_cmd, "roam");
    {
        static std::string client = "mock", mock_table, audit_path;
        static bool no_symmetry = false;
        static int min_len = 10, max_len = 200;
        roam_scope.option("--client", client, "mock | http (uses COMPLETION_ENDPOINT/KEY)");
        roam_scope.option("--mock-table", mock_table, "JSON lookup table for the mock client");
        roam_scope.option("--audit", audit_path, "audit log JSONL of prompts/completions");
        roam_scope.flag("--no-symmetry", no_symmetry, "emit only original->complement triplets");
        roam_scope.option("--min-len", min_len, "minimum text length (chars)");
        roam_scope.option("--max-len", max_len, "maximum text length (chars)");
        roam_cmd->callback([&]() {
            json cfg = roam_scope.resolve();
            coir::RoamConfig rc;
            rc.min_len = cfg["min_len"].get<int>();
            rc.max_len = cfg["max_len"].get<int>();
            rc.symmetry = !cfg["no_symmetry"].get<bool>();
            std::unique_ptr<coir::CompletionClient> completion;
            if (cfg["client"] == "http") {
                completion = std::make_unique<coir::HttpCompletionClient>(
                    coir::HttpCompletionClient::from_env());
            } else if (cfg["client"] == "mock") {
                const std::string table = cfg["mock_table"].get<std::string>();
                completion = std::make_unique<coir::MockCompletionClient>(
                    table.empty() ? coir::MockCompletionClient()
                                  : coir::MockCompletionClient::from_json_file(table));
            } else {
                throw coir::ContractError("roam: client must be mock or http");
            }
            auto pairs = coir::load_vqa_pairs(roam_pairs);
            coir::RoamResult result = coir::roam(pairs, *completion, rc);
            coir::save_triplets(roam_out, result.triplets);
            const std::string audit = cfg["audit"].get<std::string>();
            if (!audit.empty()) coir::write_audit_log(audit, result.audit);
            for (const auto& r : result.rejections) std::cerr << "dropped " << r << "\n";
            std::cerr << "kept " << result.triplets.size() << " triplets from " << pairs.size()
                      << " pairs (" << result.rejections.size() << " drops)\n";
        });
    }

    // ---- sample ------------------------------------------------------------
    auto* sample_cmd = app.add_subcommand("sample", "emit a manual-review sheet of triplets");
    std::string sample_triplets, sample_out;
    sample_cmd->add_option("--triplets", sample_triplets, "triplets JSONL")->required();
    sample_cmd->add_option("--out", sample_out, "review sheet CSV")->required();
    Scope sample_scope(sample_cmd, "sample");
    {
        static int n = 20;
        static std::uint64_t seed = 1;
        sample_scope.option("--n", n, "sample size");
        sample_scope.option("--seed", seed, "sampling seed");
        sample_cmd->callback([&]() {
            json cfg = sample_scope.resolve();
            coir::write_review_sheet(sample_out, coir::load_triplets(sample_triplets),
                                     cfg["n"].get<int>(), cfg["seed"].get<std::uint64_t>());
        });
    }

    // ---- stats -------------------------------------------------------------
    auto* stats_cmd = app.add_subcommand("stats", "dataset statistics report");
    std::string stats_triplets, stats_manifest, stats_out;
    stats_cmd->add_option("--triplets", stats_triplets, "triplets JSONL")->required();
    stats_cmd->add_option("--manifest", stats_manifest, "corpus manifest JSON");
    stats_cmd->add_option("--out", stats_out, "output path (default stdout)");
    Scope stats_scope(stats_cmd, "stats");
    stats_cmd->callback([&]() {
        (void)stats_scope.resolve();
        auto triplets = coir::load_triplets(stats_triplets);
        if (stats_manifest.empty()) {
            write_text(stats_out, coir::dataset_stats(triplets, nullptr).to_json());
        } else {
            coir::CorpusManifest manifest = coir::load_manifest(stats_manifest);
            write_text(stats_out, coir::dataset_stats(triplets, &manifest).to_json());
        }
    });

    // ---- train -------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train the toy CASE model");
    std::string train_triplets_path, train_manifest, train_out;
    train_cmd->add_option("--triplets", train_triplets_path, "training triplets JSONL")->required();
    train_cmd->add_option("--manifest", train_manifest, "corpus manifest JSON")->required();
    train_cmd->add_option("--out", train_out, "output checkpoint path")->required();
    Scope train_scope(train_cmd, "train");
    {
        static int epochs = 20, batch = 64, threads = default_threads();
        static int d = 32, heads = 4, vit_layers = 2, shift_layers = 2, d_e = 32;
        static int image_size = 32, patch = 8, max_text_len = 32;
        static double lr = 5e-5, lr_decay = 0.93, lr_floor = 1e-6, weight_decay = 0.01;
        static double tau1 = 0.05, tau2 = 0.25, temperature = 0.07;
        static std::string loss = "surrogate", mode = "standard", k_set = "1,5,10,50";
        static std::string report_path;
        static bool no_rq = false;
        static std::uint64_t seed = 1;
        train_scope.option("--epochs", epochs, "training epochs");
        train_scope.option("--batch", batch, "triplets per batch");
        train_scope.option("--lr", lr, "initial learning rate");
        train_scope.option("--lr-decay", lr_decay, "per-epoch exponential decay");
        train_scope.option("--lr-floor", lr_floor, "learning-rate floor");
        train_scope.option("--weight-decay", weight_decay, "decoupled weight decay");
        train_scope.option("--loss", loss, "surrogate | contrastive");
        train_scope.option("--k-set", k_set, "surrogate K set, comma separated");
        train_scope.option("--tau1", tau1, "surrogate rank sharpness");
        train_scope.option("--tau2", tau2, "surrogate threshold sharpness");
        train_scope.option("--temperature", temperature, "contrastive temperature");
        train_scope.flag("--no-rq", no_rq, "disable reverse queries");
        train_scope.option("--mode", mode, "standard | text_only | image_only");
        train_scope.option("--seed", seed, "training seed");
        train_scope.option("--threads", threads, "worker threads within a batch");
        train_scope.option("--report", report_path, "epoch report JSONL path");
        train_scope.option("--d", d, "hidden width");
        train_scope.option("--heads", heads, "attention heads");
        train_scope.option("--vit-layers", vit_layers, "image encoder depth");
        train_scope.option("--shift-layers", shift_layers, "shift encoder depth");
        train_scope.option("--d-e", d_e, "shared embedding dim");
        train_scope.option("--image-size", image_size, "input image size");
        train_scope.option("--patch", patch, "patch size");
        train_scope.option("--max-text-len", max_text_len, "token budget incl. specials");
        train_cmd->callback([&]() {
            json cfg = train_scope.resolve();
            auto triplets = coir::load_triplets(train_triplets_path);
            coir::ImageStore store(coir::load_manifest(train_manifest));

            std::vector<std::string> texts;
            for (const auto& t : triplets) texts.push_back(t.query_text);
            coir::Tokenizer tokenizer = coir::Tokenizer::build(texts);

            coir::ModelConfig mc;
            mc.image_size = cfg["image_size"].get<int>();
            mc.patch_size = cfg["patch"].get<int>();
            mc.d = cfg["d"].get<int>();
            mc.n_heads = cfg["heads"].get<int>();
            mc.vit_layers = cfg["vit_layers"].get<int>();
            mc.shift_layers = cfg["shift_layers"].get<int>();
            mc.d_e = cfg["d_e"].get<int>();
            mc.max_text_len = cfg["max_text_len"].get<int>();
            coir::Parameters params =
                coir::init_parameters(mc, tokenizer, cfg["seed"].get<std::uint64_t>());

            coir::TrainConfig tc;
            tc.epochs = cfg["epochs"].get<int>();
            tc.batch_size = cfg["batch"].get<int>();
            tc.rq_enabled = !cfg["no_rq"].get<bool>();
            tc.mode = coir::parse_query_mode(cfg["mode"].get<std::string>());
            tc.loss.k_set = parse_int_list(cfg["k_set"].get<std::string>());
            tc.loss.tau1 = cfg["tau1"].get<double>();
            tc.loss.tau2 = cfg["tau2"].get<double>();
            tc.loss.temperature = cfg["temperature"].get<double>();
            if (cfg["loss"] == "surrogate")
                tc.loss.variant = coir::LossVariant::Surrogate;
            else if (cfg["loss"] == "contrastive")
                tc.loss.variant = coir::LossVariant::Contrastive;
            else
                throw coir::ContractError("train: loss must be surrogate or contrastive");
            tc.schedule.lr0 = cfg["lr"].get<double>();
            tc.schedule.decay = cfg["lr_decay"].get<double>();
            tc.schedule.floor = cfg["lr_floor"].get<double>();
            tc.weight_decay = cfg["weight_decay"].get<double>();
            tc.seed = cfg["seed"].get<std::uint64_t>();
            tc.threads = cfg["threads"].get<int>();

            auto reports = coir::train(params, triplets, store, tc);
            coir::save_checkpoint(train_out, params);
            std::string lines;
            for (const auto& r : reports) {
                lines += r.to_json() + "\n";
                std::cerr << r.to_json() << "\n";
            }
            if (!cfg["report"].get<std::string>().empty())
                write_text(cfg["report"].get<std::string>(), lines);
        });
    }

    // ---- embed -------------------------------------------------------------
    auto* embed_cmd = app.add_subcommand("embed", "embed corpus images or composed queries to CEMB");
    std::string embed_out;
    embed_cmd->add_option("--out", embed_out, "output CEMB path")->required();
    Scope embed_scope(embed_cmd, "embed");
    {
        static std::string what = "corpus", embedder = "case", model_path, manifest_path;
        static std::string triplets_path, captions_path, split = "val", mode = "standard";
        static int grid = 8;
        embed_scope.option("--what", what, "corpus | queries");
        embed_scope.option("--embedder", embedder, "case | text_bow | image_mean");
        embed_scope.option("--model", model_path, "CASE checkpoint (embedder=case)");
        embed_scope.option("--manifest", manifest_path, "corpus manifest JSON");
        embed_scope.option("--triplets", triplets_path, "triplets JSONL (queries)");
        embed_scope.option("--captions", captions_path, "captions JSON (text_bow)");
        embed_scope.option("--split", split, "train | val | all");
        embed_scope.option("--mode", mode, "query mode for embedder=case");
        embed_scope.option("--grid", grid, "mean-pool grid (image_mean)");
        embed_cmd->callback([&]() {
            json cfg = embed_scope.resolve();
            std::optional<coir::CorpusManifest> manifest;
            if (!cfg["manifest"].get<std::string>().empty())
                manifest = coir::load_manifest(cfg["manifest"].get<std::string>());
            std::vector<coir::Triplet> triplets;
            if (!cfg["triplets"].get<std::string>().empty())
                triplets = coir::load_triplets(cfg["triplets"].get<std::string>());
            const std::string w = cfg["what"].get<std::string>();
            if (w != "corpus" && w != "queries")
                throw coir::ContractError("embed: --what must be corpus or queries");
            if (w == "queries" && triplets.empty())
                throw coir::ContractError("embed: --what queries needs --triplets");
            if (w == "corpus" && !manifest)
                throw coir::ContractError("embed: --what corpus needs --manifest");
            coir::EmbeddingMatrix m =
                embeddings_for(w, cfg, manifest ? &*manifest : nullptr, triplets);
            coir::write_cemb(embed_out, m);
            std::cerr << "wrote " << m.ids.size() << " x " << m.dim << " embeddings to "
                      << embed_out << "\n";
        });
    }

    // ---- retrieve ----------------------------------------------------------
    auto* retrieve_cmd = app.add_subcommand("retrieve", "top-K cosine search for one query");
    std::string retrieve_index;
    retrieve_cmd->add_option("--index", retrieve_index, "corpus CEMB")->required();
    Scope retrieve_scope(retrieve_cmd, "retrieve");
    {
        static std::string query_cemb, qid, vec, out_path;
        static int k = 10;
        retrieve_scope.option("--query", query_cemb, "query CEMB file");
        retrieve_scope.option("--qid", qid, "row id within --query");
        retrieve_scope.option("--vec", vec, "inline query vector, comma separated");
        retrieve_scope.option("--k", k, "results to return");
        retrieve_scope.option("--out", out_path, "output path (default stdout)");
        retrieve_cmd->callback([&]() {
            json cfg = retrieve_scope.resolve();
            coir::EmbeddingIndex index = coir::EmbeddingIndex::load(retrieve_index);
            std::vector<float> query;
            if (!cfg["vec"].get<std::string>().empty()) {
                query = parse_float_list(cfg["vec"].get<std::string>());
            } else if (!cfg["query"].get<std::string>().empty()) {
                coir::EmbeddingMatrix m = coir::read_cemb(cfg["query"].get<std::string>());
                const std::string want = cfg["qid"].get<std::string>();
                bool found = false;
                for (std::size_t i = 0; i < m.ids.size(); ++i)
                    if (m.ids[i] == want) {
                        query.assign(m.row(i), m.row(i) + m.dim);
                        found = true;
                    }
                if (!found) throw coir::LookupError("retrieve: qid " + want + " not in query file");
            } else {
                throw coir::ContractError("retrieve: need --vec or --query + --qid");
            }
            coir::SearchResult result = index.top_k(query, cfg["k"].get<int>());
            json hits = json::array();
            for (const auto& h : result.hits) hits.push_back({{"id", h.id}, {"score", h.score}});
            write_text(cfg["out"].get<std::string>(), hits.dump(2));
        });
    }

    // ---- eval --------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Recall@K evaluation report");
    std::string eval_queries, eval_index, eval_triplets;
    eval_cmd->add_option("--queries", eval_queries, "query CEMB (rows keyed by qid)")->required();
    eval_cmd->add_option("--index", eval_index, "corpus CEMB")->required();
    eval_cmd->add_option("--triplets", eval_triplets, "triplets JSONL with targets")->required();
    Scope eval_scope(eval_cmd, "eval");
    {
        static std::string k_set = "1,5,10,50", subset_k = "1,2,3", out_path, csv_path;
        eval_scope.option("--k", k_set, "Recall@K values, comma separated");
        eval_scope.option("--subset-k", subset_k, "subset Recall@K values");
        eval_scope.option("--out", out_path, "report JSON path (default stdout)");
        eval_scope.option("--csv", csv_path, "optional CSV path");
        eval_cmd->callback([&]() {
            json cfg = eval_scope.resolve();
            coir::EmbeddingIndex corpus = coir::EmbeddingIndex::load(eval_index);
            coir::EmbeddingMatrix queries = coir::read_cemb(eval_queries);
            auto triplets = coir::load_triplets(eval_triplets);
            coir::EvalReport report =
                coir::evaluate(assemble_queries(queries, triplets), corpus,
                               parse_int_list(cfg["k"].get<std::string>()),
                               parse_int_list(cfg["subset_k"].get<std::string>()));
            write_text(cfg["out"].get<std::string>(), report.to_json());
            if (!cfg["csv"].get<std::string>().empty())
                write_text(cfg["csv"].get<std::string>(), report.to_csv());
        });
    }

    // ---- redundancy --------------------------------------------------------
    auto* red_cmd = app.add_subcommand("redundancy", "modality redundancy analysis");
    red_cmd->require_subcommand(1);

    auto* curve_cmd = red_cmd->add_subcommand("curve", "uni-modal Recall@K curve");
    std::string curve_queries, curve_index, curve_triplets;
    curve_cmd->add_option("--queries", curve_queries, "query CEMB")->required();
    curve_cmd->add_option("--index", curve_index, "corpus CEMB")->required();
    curve_cmd->add_option("--triplets", curve_triplets, "triplets JSONL")->required();
    Scope curve_scope(curve_cmd, "redundancy curve");
    {
        static std::string k_grid = "1,2,5,10,20,50", label = "curve", out_path, csv_path;
        curve_scope.option("--k-grid", k_grid, "K grid, strictly increasing");
        curve_scope.option("--label", label, "curve label");
        curve_scope.option("--out", out_path, "JSON path (default stdout)");
        curve_scope.option("--csv", csv_path, "optional CSV path");
        curve_cmd->callback([&]() {
            json cfg = curve_scope.resolve();
            coir::EmbeddingIndex corpus = coir::EmbeddingIndex::load(curve_index);
            coir::EmbeddingMatrix queries = coir::read_cemb(curve_queries);
            auto triplets = coir::load_triplets(curve_triplets);
            coir::RedundancyCurve curve =
                coir::unimodal_curve(assemble_queries(queries, triplets), corpus,
                                     parse_int_list(cfg["k_grid"].get<std::string>()),
                                     cfg["label"].get<std::string>());
            write_text(cfg["out"].get<std::string>(), curve.to_json());
            if (!cfg["csv"].get<std::string>().empty())
                write_text(cfg["csv"].get<std::string>(), curve.to_csv());
        });
    }

    auto* sweep_cmd = red_cmd->add_subcommand("sweep", "purified-subset sweep");
    std::string sw_method_q, sw_method_i, sw_filter_q, sw_filter_i, sw_triplets;
    sweep_cmd->add_option("--method-queries", sw_method_q, "method query CEMB")->required();
    sweep_cmd->add_option("--method-index", sw_method_i, "method corpus CEMB")->required();
    sweep_cmd->add_option("--filter-queries", sw_filter_q, "filter query CEMB")->required();
    sweep_cmd->add_option("--filter-index", sw_filter_i, "filter corpus CEMB")->required();
    sweep_cmd->add_option("--triplets", sw_triplets, "triplets JSONL")->required();
    Scope sweep_scope(sweep_cmd, "redundancy sweep");
    {
        static std::string n_grid = "0,1,2,3,5,10,20,50", k_set = "1,5,10,50", out_path, csv_path;
        sweep_scope.option("--n", n_grid, "purification grid");
        sweep_scope.option("--k", k_set, "Recall@K set to average");
        sweep_scope.option("--out", out_path, "JSON path (default stdout)");
        sweep_scope.option("--csv", csv_path, "optional CSV path");
        sweep_cmd->callback([&]() {
            json cfg = sweep_scope.resolve();
            auto triplets = coir::load_triplets(sw_triplets);
            auto method_ranks = ranks_from(coir::read_cemb(sw_method_q),
                                           coir::EmbeddingIndex::load(sw_method_i), triplets);
            auto filter_ranks = ranks_from(coir::read_cemb(sw_filter_q),
                                           coir::EmbeddingIndex::load(sw_filter_i), triplets);
            coir::SweepTable table = coir::redundancy_sweep(
                method_ranks, filter_ranks, parse_int_list(cfg["n"].get<std::string>()),
                parse_int_list(cfg["k"].get<std::string>()));
            if (table.degenerate) std::cerr << "warning: every purified subset is empty\n";
            write_text(cfg["out"].get<std::string>(), table.to_json());
            if (!cfg["csv"].get<std::string>().empty())
                write_text(cfg["csv"].get<std::string>(), table.to_csv());
        });
    }

    // ---- explain -----------------------------------------------------------
    auto* explain_cmd = app.add_subcommand("explain", "post-hoc explanations");
    explain_cmd->require_subcommand(1);

    auto* heat_cmd = explain_cmd->add_subcommand("heatmap", "sliding-mask visual heatmap");
    std::string heat_model, heat_manifest, heat_triplets, heat_qid;
    heat_cmd->add_option("--model", heat_model, "CASE checkpoint")->required();
    heat_cmd->add_option("--manifest", heat_manifest, "corpus manifest")->required();
    heat_cmd->add_option("--triplets", heat_triplets, "triplets JSONL")->required();
    heat_cmd->add_option("--qid", heat_qid, "triplet to explain")->required();
    Scope heat_scope(heat_cmd, "explain heatmap");
    {
        static int window = 8, stride = 4;
        static std::string out_path, overlay_path, mode = "standard";
        heat_scope.option("--window", window, "mask window in pixels");
        heat_scope.option("--stride", stride, "mask stride in pixels");
        heat_scope.option("--mode", mode, "query mode");
        heat_scope.option("--out", out_path, "heat grid JSON (default stdout)");
        heat_scope.option("--overlay", overlay_path, "optional overlay PPM");
        heat_cmd->callback([&]() {
            json cfg = heat_scope.resolve();
            coir::CaseModel model(coir::load_checkpoint(heat_model));
            coir::ImageStore store(coir::load_manifest(heat_manifest));
            auto triplets = coir::load_triplets(heat_triplets);
            const coir::Triplet* triplet = nullptr;
            for (const auto& t : triplets)
                if (t.qid == heat_qid) triplet = &t;
            if (!triplet) throw coir::LookupError("explain: unknown qid " + heat_qid);
            const coir::Image& query = store.image(triplet->query_image);
            std::vector<float> target = model.encode_target(store.image(triplet->target_image));
            coir::HeatGrid grid = coir::mask_heatmap(
                model, query, triplet->query_text, target, cfg["window"].get<int>(),
                cfg["stride"].get<int>(), coir::parse_query_mode(cfg["mode"].get<std::string>()));
            write_text(cfg["out"].get<std::string>(), grid.to_json());
            if (!cfg["overlay"].get<std::string>().empty())
                coir::write_ppm(cfg["overlay"].get<std::string>(),
                                coir::heatmap_overlay(query, grid));
        });
    }

    auto* tok_cmd = explain_cmd->add_subcommand("tokens", "input-gradient token saliency");
    std::string tok_model, tok_manifest, tok_triplets, tok_qid;
    tok_cmd->add_option("--model", tok_model, "CASE checkpoint")->required();
    tok_cmd->add_option("--manifest", tok_manifest, "corpus manifest")->required();
    tok_cmd->add_option("--triplets", tok_triplets, "triplets JSONL")->required();
    tok_cmd->add_option("--qid", tok_qid, "triplet to explain")->required();
    Scope tok_scope(tok_cmd, "explain tokens");
    {
        static std::string out_path, mode = "standard";
        tok_scope.option("--mode", mode, "query mode");
        tok_scope.option("--out", out_path, "saliency JSON (default stdout)");
        tok_cmd->callback([&]() {
            json cfg = tok_scope.resolve();
            coir::CaseModel model(coir::load_checkpoint(tok_model));
            coir::ImageStore store(coir::load_manifest(tok_manifest));
            auto triplets = coir::load_triplets(tok_triplets);
            const coir::Triplet* triplet = nullptr;
            for (const auto& t : triplets)
                if (t.qid == tok_qid) triplet = &t;
            if (!triplet) throw coir::LookupError("explain: unknown qid " + tok_qid);
            std::vector<float> target = model.encode_target(store.image(triplet->target_image));
            auto scores = coir::token_saliency(
                model, store.image(triplet->query_image), triplet->query_text, target,
                coir::parse_query_mode(cfg["mode"].get<std::string>()));
            write_text(cfg["out"].get<std::string>(), coir::saliency_to_json(scores));
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2; --help exits 0
    } catch (const coir::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
