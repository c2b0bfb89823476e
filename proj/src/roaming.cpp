#include "coir/roaming.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

// keep the http client lean; no TLS in this build
#include <httplib.h>

#include "coir/errors.hpp"
#include "coir/rng.hpp"
#include "coir/tokenizer.hpp"

namespace coir {

using nlohmann::json;

void ComplementaryPair::validate() const {
    if (original.question.empty() || original.answer.empty() || complement.question.empty() ||
        complement.answer.empty())
        throw IngestionError("vqa pair: empty question or answer");
    if (original.image_id.empty() || complement.image_id.empty())
        throw IngestionError("vqa pair: empty image id");
    if (original.question != complement.question)
        throw IngestionError("vqa pair: question mismatch between original and complement");
    if (original.image_id == complement.image_id)
        throw IngestionError("vqa pair: original and complement share image id " +
                             original.image_id);
    if (original.answer == complement.answer)
        throw IngestionError("vqa pair: answers do not differ ('" + original.answer + "')");
}

std::vector<ComplementaryPair> load_vqa_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open vqa pairs file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IngestionError(path + ": bad json: " + e.what());
    }
    std::vector<ComplementaryPair> out;
    try {
        for (const auto& rec : j) {
            ComplementaryPair p;
            p.original.image_id = rec.at("image_id").get<std::string>();
            p.original.question = rec.at("question").get<std::string>();
            p.original.answer = rec.at("answer").get<std::string>();
            p.complement.image_id = rec.at("complement_image_id").get<std::string>();
            p.complement.question = p.original.question;
            p.complement.answer = rec.at("complement_answer").get<std::string>();
            out.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw IngestionError(path + ": " + e.what());
    }
    return out;
}

PromptTemplate default_prompt_template() {
    PromptTemplate t;
    t.examples = {
        {"Are there any humans visible in the photo?", "yes", "Add some people to the photo"},
        {"Is there a square on the doors?", "yes", "Find a door with a square on top of it"},
        {"What color is the man's tie?", "blue", "Change the color of the tie of the man to be blue"},
    };
    return t;
}

std::string build_prompt(const PromptTemplate& tmpl, const std::string& question,
                         const std::string& answer) {
    if (question.empty() || answer.empty())
        throw ContractError("build_prompt: empty question or answer");
    if (tmpl.examples.empty()) throw ContractError("build_prompt: template needs >= 1 example");
    std::string prompt = tmpl.header + "\n";
    for (const auto& ex : tmpl.examples)
        prompt += "\"" + ex.question + " " + ex.answer + "\" = \"" + ex.rephrased + "\"\n";
    prompt += "\"" + question + " " + answer + "\" =";
    return prompt;
}

namespace {

// Pending "<Q> <A>" key of the prompt's trailing line.
std::string pending_key(const std::string& prompt) {
    const std::size_t nl = prompt.rfind('\n');
    std::string last = nl == std::string::npos ? prompt : prompt.substr(nl + 1);
    const std::size_t open = last.find('"');
    const std::size_t close = last.rfind('"');
    if (open == std::string::npos || close <= open)
        throw ClientError("mock client: prompt has no pending line");
    return last.substr(open + 1, close - open - 1);
}

std::string trim_ws(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

MockCompletionClient MockCompletionClient::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open mock table: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IngestionError(path + ": bad json: " + e.what());
    }
    std::map<std::string, std::string> table;
    for (const auto& [key, value] : j.items()) table[key] = value.get<std::string>();
    return MockCompletionClient(std::move(table));
}

std::string MockCompletionClient::complete(const std::string& prompt) {
    const std::string key = pending_key(prompt);
    auto it = table_.find(key);
    if (it != table_.end()) return it->second;
    // fallback rewrite: "change <question words> to <answer>"
    const std::size_t qmark = key.rfind('?');
    std::string question = qmark == std::string::npos ? key : key.substr(0, qmark);
    std::string answer = qmark == std::string::npos ? "" : trim_ws(key.substr(qmark + 1));
    std::string lowered;
    for (char c : question) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return "change " + trim_ws(lowered) + " to " + answer;
}

HttpCompletionClient::HttpCompletionClient(std::string endpoint, std::string api_key,
                                           int max_tokens, double temperature)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), max_tokens_(max_tokens),
      temperature_(temperature) {
    if (endpoint_.empty()) throw ClientError("http completion client: empty endpoint");
}

HttpCompletionClient HttpCompletionClient::from_env() {
    const char* endpoint = std::getenv("COMPLETION_ENDPOINT");
    const char* key = std::getenv("COMPLETION_KEY");
    if (!endpoint)
        throw ClientError("COMPLETION_ENDPOINT is not set (required for the http client)");
    return HttpCompletionClient(endpoint, key ? key : "");
}

std::string HttpCompletionClient::complete(const std::string& prompt) {
    // split "http://host:port/path" into base and path
    std::string base = endpoint_, path = "/";
    const std::size_t scheme = endpoint_.find("://");
    const std::size_t slash = endpoint_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash != std::string::npos) {
        base = endpoint_.substr(0, slash);
        path = endpoint_.substr(slash);
    }
    json body;
    body["prompt"] = prompt;
    body["max_tokens"] = max_tokens_;
    body["temperature"] = temperature_;

    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(200 << (attempt - 1)));
        httplib::Client cli(base);
        cli.set_read_timeout(30, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = cli.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        try {
            json reply = json::parse(res->body);
            return reply.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw ClientError(std::string("completion response malformed: ") + e.what());
        }
    }
    throw ClientError("completion request failed after 3 attempts: " + last_error);
}

std::string rephrase(CompletionClient& client, const std::string& prompt,
                     const std::function<void(const std::string&)>& audit) {
    const std::string raw = client.complete(prompt);
    if (audit) audit(raw);
    std::string s = trim_ws(raw);
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\'')))
        s = trim_ws(s.substr(1, s.size() - 2));
    if (s.empty()) throw ClientError("empty completion");
    return s;
}

void RoamConfig::validate() const {
    if (min_len >= max_len) throw ContractError("roam config: min_len must be < max_len");
}

FilterDecision filter_text(const std::string& text, const RoamConfig& cfg) {
    if (static_cast<int>(text.size()) < cfg.min_len)
        return {false, "too short (" + std::to_string(text.size()) + " < " +
                           std::to_string(cfg.min_len) + " chars)"};
    if (static_cast<int>(text.size()) > cfg.max_len)
        return {false, "too long (" + std::to_string(text.size()) + " > " +
                           std::to_string(cfg.max_len) + " chars)"};
    for (const auto& bad : cfg.forbidden)
        if (text.find(bad) != std::string::npos) {
            std::string shown = bad == "\n" ? "\\n" : (bad == "\t" ? "\\t" : bad);
            return {false, "forbidden substring '" + shown + "'"};
        }
    return {true, ""};
}

RoamResult roam(const std::vector<ComplementaryPair>& pairs, CompletionClient& client,
                const RoamConfig& cfg, const PromptTemplate& tmpl) {
    cfg.validate();
    RoamResult result;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        char id_buf[24];
        std::snprintf(id_buf, sizeof(id_buf), "p%06zu", i);
        const std::string pair_id(id_buf);
        const ComplementaryPair& pair = pairs[i];
        try {
            pair.validate();
        } catch (const Error& e) {
            result.rejections.push_back(pair_id + ": invalid pair: " + e.what());
            continue;
        }

        auto convert = [&](const std::string& direction, const std::string& answer,
                           const std::string& query_img, const std::string& target_img) {
            const std::string prompt = build_prompt(tmpl, pair.original.question, answer);
            std::string text;
            try {
                text = rephrase(client, prompt, [&](const std::string& raw) {
                    result.audit.push_back({pair_id, direction, prompt, raw});
                });
            } catch (const Error& e) {
                result.rejections.push_back(pair_id + "-" + direction + ": client: " + e.what());
                return;
            }
            const FilterDecision decision = filter_text(text, cfg);
            if (!decision.keep) {
                result.rejections.push_back(pair_id + "-" + direction + ": filtered: " +
                                            decision.reason);
                return;
            }
            if (query_img == target_img) {
                result.rejections.push_back(pair_id + "-" + direction +
                                            ": query and target share image " + query_img);
                return;
            }
            Triplet t;
            t.qid = pair_id + "-" + direction;
            t.query_image = query_img;
            t.query_text = text;
            t.target_image = target_img;
            result.triplets.push_back(std::move(t));
        };

        // original -> complement, phrased from (Q, A_c)
        convert("fwd", pair.complement.answer, pair.original.image_id, pair.complement.image_id);
        // complement -> original, phrased from (Q, A)
        if (cfg.symmetry)
            convert("sym", pair.original.answer, pair.complement.image_id, pair.original.image_id);
    }
    return result;
}

void write_audit_log(const std::string& path, const std::vector<AuditRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write audit log: " + path);
    for (const auto& r : records) {
        json j;
        j["pair_id"] = r.pair_id;
        j["direction"] = r.direction;
        j["prompt"] = r.prompt;
        j["completion"] = r.completion;
        out << j.dump() << "\n";
    }
}

StatsReport dataset_stats(const std::vector<Triplet>& triplets, const CorpusManifest* manifest) {
    StatsReport report;
    report.triplets = triplets.size();
    if (manifest) {
        report.corpus_train = manifest->ids_for_split("train").size();
        report.corpus_val = manifest->ids_for_split("val").size();
    }
    std::set<std::string> vocab;
    std::size_t total_chars = 0, total_tokens = 0;
    for (const auto& t : triplets) {
        total_chars += t.query_text.size();
        const auto words = Tokenizer::split_words(t.query_text);
        total_tokens += words.size();
        vocab.insert(words.begin(), words.end());
    }
    report.unique_tokens = vocab.size();
    if (!triplets.empty()) {
        report.avg_text_length_chars =
            static_cast<double>(total_chars) / static_cast<double>(triplets.size());
        report.avg_text_length_tokens =
            static_cast<double>(total_tokens) / static_cast<double>(triplets.size());
    }
    return report;
}

std::string StatsReport::to_json() const {
    json j;
    j["triplets"] = triplets;
    j["corpus_train"] = corpus_train;
    j["corpus_val"] = corpus_val;
    j["unique_tokens"] = unique_tokens;
    j["avg_text_length_chars"] = std::round(avg_text_length_chars * 100.0) / 100.0;
    j["avg_text_length_tokens"] = std::round(avg_text_length_tokens * 100.0) / 100.0;
    return j.dump(2);
}

void write_review_sheet(const std::string& path, const std::vector<Triplet>& triplets, int n,
                        std::uint64_t seed) {
    if (triplets.empty()) throw ContractError("review sheet: no triplets");
    std::vector<std::size_t> order(triplets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng = SplitMix64::derive(seed, 0x5a3);
    rng.shuffle(order);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write review sheet: " + path);
    out << "qid,query_image,query_text,target_image,rating\n";
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(n), triplets.size());
    auto csv_escape = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q += c;
        }
        return q + "\"";
    };
    for (std::size_t i = 0; i < count; ++i) {
        const Triplet& t = triplets[order[i]];
        out << t.qid << "," << t.query_image << "," << csv_escape(t.query_text) << ","
            << t.target_image << ",\n";
    }
}

} // namespace coir
