#include "fairlm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace fairlm {

namespace {
const char* kReserved[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_stripped(char c) { return c == '.' || c == ',' || c == '!' || c == '?'; }
}  // namespace

std::vector<std::string> Vocab::normalize(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char c : text) {
        if (is_stripped(c)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    std::vector<std::string> words;
    std::istringstream in(cleaned);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

Vocab Vocab::build(const std::vector<std::string>& corpus, int min_freq) {
    if (corpus.empty()) throw InputError("build_vocab: empty corpus");
    if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
    std::map<std::string, std::size_t> freq;  // ordered map keeps ties lexicographic
    for (const auto& sentence : corpus)
        for (const auto& w : normalize(sentence)) ++freq[w];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, f] : freq)
        if (f >= static_cast<std::size_t>(min_freq)) kept.emplace_back(tok, f);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    for (const char* r : kReserved) {
        v.token_to_id_[r] = static_cast<int>(v.id_to_token_.size());
        v.id_to_token_.emplace_back(r);
    }
    for (const auto& [tok, f] : kept) {
        v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
        v.id_to_token_.push_back(tok);
    }
    return v;
}

int Vocab::token_id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw IndexError("vocab: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> ids{kBos};
    for (const auto& w : normalize(text)) ids.push_back(token_id(w));
    ids.push_back(kEos);
    return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += token(id);
    }
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("vocab save: cannot open " + path);
    for (std::size_t i = 0; i < id_to_token_.size(); ++i)
        out << id_to_token_[i] << '\t' << i << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("vocab load: cannot open " + path);
    Vocab v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("vocab load: missing tab at line " + std::to_string(lineno));
        std::string tok = line.substr(0, tab);
        int id = std::stoi(line.substr(tab + 1));
        if (id != static_cast<int>(v.id_to_token_.size()))
            throw ParseError("vocab load: non-contiguous id at line " + std::to_string(lineno));
        v.token_to_id_[tok] = id;
        v.id_to_token_.push_back(tok);
    }
    if (v.id_to_token_.size() < 4) throw ParseError("vocab load: missing reserved tokens");
    return v;
}

}  // namespace fairlm
