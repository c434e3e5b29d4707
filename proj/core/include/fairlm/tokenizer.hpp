#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "fairlm/errors.hpp"

namespace fairlm {

// Word-level vocabulary with four reserved ids. Immutable after build;
// encode/decode are safe for concurrent use.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;

    // Lowercases and strips . , ! ? then splits on whitespace.
    static std::vector<std::string> normalize(const std::string& text);

    // Tokens with frequency >= min_freq, ordered by (-frequency, lexicographic),
    // ids starting at 4 after the reserved tokens.
    static Vocab build(const std::vector<std::string>& corpus, int min_freq = 1);

    std::size_t size() const { return id_to_token_.size(); }
    int token_id(const std::string& token) const;  // kUnk when absent
    const std::string& token(int id) const;
    bool contains(const std::string& token) const;

    // BOS + per-word ids (UNK for out-of-vocabulary) + EOS.
    std::vector<int> encode(const std::string& text) const;
    // Inverse of encode on in-vocabulary text; reserved tokens are dropped.
    std::string decode(const std::vector<int>& ids) const;

    void save(const std::string& path) const;  // line-delimited "token<TAB>id"
    static Vocab load(const std::string& path);

  private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

}  // namespace fairlm
