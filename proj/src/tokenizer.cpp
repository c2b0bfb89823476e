#include "coir/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "coir/errors.hpp"

namespace coir {

namespace {
const std::vector<std::string> kSpecials = {"[PAD]", "[CLS]", "[SEP]", "[REV]", "[UNK]"};
}

Tokenizer::Tokenizer() {
    tokens_ = kSpecials;
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) ids_[tokens_[i]] = i;
}

std::vector<std::string> Tokenizer::split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            cur += static_cast<char>(std::tolower(ch));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts) {
    std::set<std::string> vocab;
    for (const auto& t : texts)
        for (auto& w : split_words(t)) vocab.insert(w);
    Tokenizer tok;
    for (const auto& w : vocab) {
        tok.ids_[w] = static_cast<int>(tok.tokens_.size());
        tok.tokens_.push_back(w);
    }
    return tok;
}

Tokenizer Tokenizer::from_vocab(const std::vector<std::string>& tokens) {
    if (tokens.size() < kSpecials.size())
        throw IngestionError("tokenizer vocab too short");
    for (std::size_t i = 0; i < kSpecials.size(); ++i)
        if (tokens[i] != kSpecials[i])
            throw IngestionError("tokenizer vocab: expected special " + kSpecials[i] +
                                 " at id " + std::to_string(i) + ", got " + tokens[i]);
    Tokenizer tok;
    tok.tokens_ = tokens;
    tok.ids_.clear();
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i) tok.ids_[tokens[i]] = i;
    return tok;
}

std::vector<int> Tokenizer::encode(const std::string& text, int max_len) const {
    std::vector<int> ids;
    ids.push_back(kCls);
    for (const auto& w : split_words(text)) ids.push_back(id_of(w));
    ids.push_back(kSep);
    if (static_cast<int>(ids.size()) > max_len) {
        ids.resize(static_cast<std::size_t>(max_len));
        ids.back() = kSep;
    }
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kCls || id == kSep || id == kRev) continue;
        if (!out.empty()) out += ' ';
        out += token_of(id);
    }
    return out;
}

std::vector<int> Tokenizer::with_reverse_marker(std::vector<int> ids, int max_len) const {
    if (ids.empty() || ids[0] != kCls)
        throw ContractError("with_reverse_marker: sequence must start with [CLS]");
    ids.insert(ids.begin() + 1, kRev);
    if (static_cast<int>(ids.size()) > max_len) {
        ids.resize(static_cast<std::size_t>(max_len));
        ids.back() = kSep;
    }
    return ids;
}

int Tokenizer::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::token_of(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size()))
        throw IndexError("tokenizer: id " + std::to_string(id) + " outside vocab of " +
                         std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

} // namespace coir
