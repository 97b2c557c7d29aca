#pragma once
// Character-level tokenizer with atomic special tokens. Ordinary tokens are
// single Unicode code points harvested from a corpus; the three control tokens
// and four markup delimiters occupy fixed ids 0..6 so checkpoints and datasets
// agree on them without negotiation.

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sst/errors.hpp"
#include "sst/markup.hpp"

namespace sst {

constexpr int kBosId = 0;
constexpr int kEosId = 1;
constexpr int kPadId = 2;
constexpr int kChainOpenId = 3;
constexpr int kChainCloseId = 4;
constexpr int kThinkOpenId = 5;
constexpr int kThinkCloseId = 6;

inline const std::array<std::string_view, 7>& special_tokens() {
    static const std::array<std::string_view, 7> kSpecials = {
        "<bos>", "<eos>", "<pad>", "<chain>", "</chain>", "<think>", "</think>"};
    return kSpecials;
}

inline size_t utf8_len(uint8_t lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1; // malformed byte treated as a single-byte token
}

struct TokenizedText {
    std::vector<int> ids;
    std::vector<uint8_t> chain_mask;                   // 1 = token lies inside a chain span
    std::vector<std::pair<size_t, size_t>> byte_range; // source bytes per token
};

class Vocab {
public:
    Vocab() = default;

    // unique code points from the corpus, sorted, after the fixed specials
    static Vocab build(const std::vector<std::string>& corpus) {
        expect(!corpus.empty(), Errc::empty_corpus, "build_vocab: no documents");
        std::set<std::string> chars;
        for (const auto& doc : corpus) {
            size_t i = 0;
            while (i < doc.size()) {
                size_t n = utf8_len(static_cast<uint8_t>(doc[i]));
                n = std::min(n, doc.size() - i);
                chars.insert(doc.substr(i, n));
                i += n;
            }
        }
        expect(!chars.empty(), Errc::empty_corpus, "build_vocab: corpus has no characters");
        Vocab v;
        for (auto sp : special_tokens()) v.push_token(std::string(sp));
        for (const auto& c : chars) v.push_token(c);
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }

    int id_of(std::string_view tok) const {
        auto it = index_.find(std::string(tok));
        expect(it != index_.end(), Errc::out_of_vocab, "unknown token '" + std::string(tok) + "'");
        return it->second;
    }

    bool contains(std::string_view tok) const { return index_.count(std::string(tok)) > 0; }

    // greedy scan: longest special first, else one code point
    std::vector<int> encode(std::string_view text) const {
        std::vector<int> ids;
        ids.reserve(text.size());
        size_t i = 0;
        while (i < text.size()) {
            size_t n = match_at(text, i);
            auto it = index_.find(std::string(text.substr(i, n)));
            expect(it != index_.end(), Errc::out_of_vocab,
                   "encode: '" + std::string(text.substr(i, n)) + "' at byte " + std::to_string(i));
            ids.push_back(it->second);
            i += n;
        }
        return ids;
    }

    // encode plus a per-token mask from chain spans (outer ranges: the
    // <chain>/</chain> delimiter tokens themselves count as chain tokens)
    TokenizedText encode_with_mask(std::string_view text, const std::vector<MarkupSpan>& spans) const {
        TokenizedText out;
        size_t i = 0;
        while (i < text.size()) {
            size_t n = match_at(text, i);
            auto it = index_.find(std::string(text.substr(i, n)));
            expect(it != index_.end(), Errc::out_of_vocab,
                   "encode: '" + std::string(text.substr(i, n)) + "' at byte " + std::to_string(i));
            uint8_t in_chain = 0;
            for (const auto& s : spans) {
                if (s.kind != SpanKind::chain) continue;
                if (i >= s.byte_start && i + n <= s.byte_end) {
                    in_chain = 1;
                    break;
                }
                expect(i + n <= s.byte_start || i >= s.byte_end, Errc::span_out_of_range,
                       "token straddles a chain span boundary");
            }
            out.ids.push_back(it->second);
            out.chain_mask.push_back(in_chain);
            out.byte_range.emplace_back(i, i + n);
            i += n;
        }
        return out;
    }

    TokenizedText encode_with_mask(const AnnotatedTrace& t) const {
        return encode_with_mask(t.text, t.spans);
    }

    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            expect(id >= 0 && id < size(), Errc::out_of_vocab, "decode: id " + std::to_string(id));
            out += tokens_[static_cast<size_t>(id)];
        }
        return out;
    }

    // one escaped token per line, line number = id
    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        expect(f.good(), Errc::io_failure, "vocab save: cannot open " + path);
        for (const auto& t : tokens_) f << escape(t) << "\n";
        expect(f.good(), Errc::io_failure, "vocab save: write failed for " + path);
    }

    static Vocab load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        expect(f.good(), Errc::io_failure, "vocab load: cannot open " + path);
        Vocab v;
        std::string line;
        while (std::getline(f, line)) v.push_token(unescape(line));
        expect(v.size() > static_cast<int>(special_tokens().size()), Errc::schema_mismatch,
               "vocab load: too few tokens in " + path);
        for (size_t i = 0; i < special_tokens().size(); ++i)
            expect(v.tokens_[i] == special_tokens()[i], Errc::schema_mismatch,
                   "vocab load: special token " + std::to_string(i) + " mismatch");
        return v;
    }

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    void push_token(std::string tok) {
        index_[tok] = static_cast<int>(tokens_.size());
        tokens_.push_back(std::move(tok));
    }

    size_t match_at(std::string_view text, size_t i) const {
        size_t best = 0;
        for (auto sp : special_tokens())
            if (text.substr(i).starts_with(sp)) best = std::max(best, sp.size());
        if (best > 0) return best;
        return std::min(utf8_len(static_cast<uint8_t>(text[i])), text.size() - i);
    }

    static std::string escape(std::string_view t) {
        std::string out;
        for (char c : t) {
            switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
            }
        }
        return out;
    }

    static std::string unescape(std::string_view t) {
        std::string out;
        for (size_t i = 0; i < t.size(); ++i) {
            if (t[i] != '\\') {
                out += t[i];
                continue;
            }
            expect(i + 1 < t.size(), Errc::schema_mismatch, "vocab load: dangling escape");
            switch (t[++i]) {
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 't': out += '\t'; break;
            default: fail(Errc::schema_mismatch, "vocab load: bad escape");
            }
        }
        return out;
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

} // namespace sst
