#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace coir {

// Whitespace+punctuation tokenizer over a corpus-built vocabulary.
// Special token ids are fixed at construction and never shift:
//   [PAD]=0 [CLS]=1 [SEP]=2 [REV]=3 [UNK]=4
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;
    static constexpr int kSep = 2;
    static constexpr int kRev = 3;
    static constexpr int kUnk = 4;

    Tokenizer();

    // Builds the vocabulary from the given texts: lowercase, split on
    // whitespace and punctuation, unique words sorted lexicographically
    // after the special tokens.
    static Tokenizer build(const std::vector<std::string>& texts);

    // Restores a tokenizer from an explicit token list (checkpoint load).
    // The first five entries must be the special tokens.
    static Tokenizer from_vocab(const std::vector<std::string>& tokens);

    // Lowercased word pieces, punctuation stripped. No specials.
    static std::vector<std::string> split_words(const std::string& text);

    // [CLS] w1 ... wn [SEP], truncated to max_len (the [SEP] survives
    // truncation; trailing words are dropped). Unknown words map to [UNK].
    std::vector<int> encode(const std::string& text, int max_len) const;

    // Inverse of encode for in-vocabulary sequences: word tokens joined by
    // single spaces, specials skipped.
    std::string decode(const std::vector<int>& ids) const;

    // Inserts [REV] immediately after [CLS]; re-truncates to max_len,
    // dropping the last word before [SEP] if necessary.
    std::vector<int> with_reverse_marker(std::vector<int> ids, int max_len) const;

    int id_of(const std::string& token) const; // kUnk if absent
    const std::string& token_of(int id) const;
    int vocab_size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

} // namespace coir
