#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "coir/datasets.hpp"

namespace coir {

struct VqaPair {
    std::string image_id;
    std::string question;
    std::string answer;
};

// Two VQA records over visually similar images that share the question but
// disagree on the answer; the raw material for one (or two) CoIR triplets.
struct ComplementaryPair {
    VqaPair original;
    VqaPair complement;

    void validate() const;
};

// Input: JSON array of
//   {image_id, question, answer, complement_image_id, complement_answer}
std::vector<ComplementaryPair> load_vqa_pairs(const std::string& path);

// Few-shot rephrasing prompt. Grammar, byte-exact:
//   <header>\n
//   "Q A" = "S"\n        (one line per example)
//   "Q A_c" =            (trailing line, completion pending)
struct PromptExample {
    std::string question;
    std::string answer;
    std::string rephrased;
};

struct PromptTemplate {
    std::string header = "Rephrase the following texts:";
    std::vector<PromptExample> examples;
};

// The three annotated examples shipped with the conversion task.
PromptTemplate default_prompt_template();

std::string build_prompt(const PromptTemplate& tmpl, const std::string& question,
                         const std::string& answer);

// Abstract text-completion backend.
class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic mock: looks up the pending "Q A" key of the prompt in a
// table; unknown keys fall back to the rewrite "change <question words> to
// <answer>".
class MockCompletionClient : public CompletionClient {
public:
    explicit MockCompletionClient(std::map<std::string, std::string> table = {})
        : table_(std::move(table)) {}
    static MockCompletionClient from_json_file(const std::string& path);

    std::string complete(const std::string& prompt) override;

private:
    std::map<std::string, std::string> table_;
};

// POSTs {"prompt","max_tokens","temperature"} to COMPLETION_ENDPOINT with
// bearer COMPLETION_KEY and reads {"text"}. Transient transport failures
// retry up to 3 times with 200ms doubling backoff.
class HttpCompletionClient : public CompletionClient {
public:
    HttpCompletionClient(std::string endpoint, std::string api_key, int max_tokens = 64,
                         double temperature = 0.0);
    static HttpCompletionClient from_env();

    std::string complete(const std::string& prompt) override;

private:
    std::string endpoint_;
    std::string api_key_;
    int max_tokens_;
    double temperature_;
};

// Runs the client and post-processes the completion: whitespace-trim, then
// one matching pair of surrounding quotes stripped, then trimmed again.
// The raw response is reported to `audit` before any trimming.
std::string rephrase(CompletionClient& client, const std::string& prompt,
                     const std::function<void(const std::string& raw)>& audit = nullptr);

struct RoamConfig {
    int min_len = 10;  // chars
    int max_len = 200; // chars
    std::vector<std::string> forbidden = {"\n", "\t", "=", "Q:"};
    bool symmetry = true;

    void validate() const;
};

struct FilterDecision {
    bool keep = false;
    std::string reason; // violated rule when rejected
};

FilterDecision filter_text(const std::string& text, const RoamConfig& cfg);

struct AuditRecord {
    std::string pair_id;
    std::string direction; // "fwd" | "sym"
    std::string prompt;
    std::string completion; // raw, pre-trim
};

struct RoamResult {
    std::vector<Triplet> triplets;
    std::vector<std::string> rejections; // one line per dropped conversion
    std::vector<AuditRecord> audit;
};

// The full pipeline: per pair, rephrase (Q, A_c) into the transition text
// for original -> complement; with symmetry also (Q, A) for the reverse
// direction. Drops conversions that fail the text filter or would pair an
// image with itself. Per-pair failures are logged and skipped; output order
// follows input order (forward then symmetric per pair).
RoamResult roam(const std::vector<ComplementaryPair>& pairs, CompletionClient& client,
                const RoamConfig& cfg, const PromptTemplate& tmpl = default_prompt_template());

void write_audit_log(const std::string& path, const std::vector<AuditRecord>& records);

// Table-1-style dataset statistics. Average text length is reported both
// in characters and in tokens since the reference table does not say which
// unit it uses.
struct StatsReport {
    std::size_t triplets = 0;
    std::size_t corpus_train = 0;
    std::size_t corpus_val = 0;
    std::size_t unique_tokens = 0;
    double avg_text_length_chars = 0.0;
    double avg_text_length_tokens = 0.0;

    std::string to_json() const;
};

StatsReport dataset_stats(const std::vector<Triplet>& triplets, const CorpusManifest* manifest);

// Review sheet for manual quality sampling: n deterministic random
// triplets as CSV with an empty rating column.
void write_review_sheet(const std::string& path, const std::vector<Triplet>& triplets, int n,
                        std::uint64_t seed);

} // namespace coir
