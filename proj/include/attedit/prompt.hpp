#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attedit/common.hpp"

namespace attedit {

// Token index range [begin, end) of one word within a prompt.
struct WordSpan {
    std::string word;
    int begin = 0;
    int end = 0;

    int length() const { return end - begin; }
};

struct TokenizedPrompt {
    std::string text;
    std::vector<int32_t> token_ids;
    std::vector<WordSpan> word_spans;

    int num_tokens() const { return static_cast<int>(token_ids.size()); }
    int num_words() const { return static_cast<int>(word_spans.size()); }

    void validate(int context_length = 0) const {
        if (context_length > 0 && num_tokens() > context_length) {
            throw ValidationError("prompt exceeds backend context length");
        }
        int prev_end = 0;
        for (const auto& s : word_spans) {
            if (s.begin < prev_end || s.end <= s.begin || s.end > num_tokens()) {
                throw ValidationError("word spans must be ordered and non-overlapping");
            }
            prev_end = s.end;
        }
    }
};

inline uint64_t prompt_hash(const TokenizedPrompt& p) {
    uint64_t h = fnv1a_str(p.text);
    h = fnv1a(p.token_ids.data(), p.token_ids.size() * sizeof(int32_t), h);
    return h;
}

namespace detail {

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-' || c == '_';
}

inline int32_t token_id_of(const std::string& tok) {
    // Fixed vocabulary hash: fold FNV-1a to a positive 31-bit id.
    return static_cast<int32_t>(fnv1a_str(tok) & 0x7fffffffu);
}

struct LexedToken {
    std::string str;
    bool is_word;
};

inline std::vector<LexedToken> lex(const std::string& text) {
    std::vector<LexedToken> tokens;
    size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            i++;
            continue;
        }
        if (is_word_char(c)) {
            size_t j = i;
            while (j < text.size() && is_word_char(text[j])) {
                j++;
            }
            tokens.push_back({text.substr(i, j - i), true});
            i = j;
        } else {
            tokens.push_back({std::string(1, c), false});
            i++;
        }
    }
    return tokens;
}

}  // namespace detail

// Deterministic whitespace+punctuation tokenizer. Words become single tokens
// with a hashed id and a word span; punctuation becomes standalone tokens
// without a span. Pretrained-encoder tokenizers plug in through the same
// TokenizedPrompt shape (multi-token spans included).
inline TokenizedPrompt tokenize(const std::string& text) {
    TokenizedPrompt p;
    p.text = text;
    for (const auto& tok : detail::lex(text)) {
        int idx = static_cast<int>(p.token_ids.size());
        p.token_ids.push_back(detail::token_id_of(tok.str));
        if (tok.is_word) {
            p.word_spans.push_back({tok.str, idx, idx + 1});
        }
    }
    if (p.token_ids.empty()) {
        throw ValidationError("tokenize: prompt has no tokens");
    }
    p.validate();
    return p;
}

// Ids are vocabulary hashes, so token strings are recovered by re-lexing the
// stored text and checking the id sequence still matches. Words are joined
// by single spaces, punctuation attaches to the preceding token.
inline std::string detokenize(const TokenizedPrompt& p) {
    auto tokens = detail::lex(p.text);
    if (tokens.size() != p.token_ids.size()) {
        throw ValidationError("detokenize: token ids do not match stored text");
    }
    std::string out;
    for (size_t t = 0; t < tokens.size(); t++) {
        if (p.token_ids[t] != detail::token_id_of(tokens[t].str)) {
            throw ValidationError("detokenize: token ids do not match stored text");
        }
        if (!out.empty() && tokens[t].is_word) {
            out += ' ';
        }
        out += tokens[t].str;
    }
    return out;
}

// One aligned replacement: a source-prompt span swapped for an edit-prompt span.
struct EditPair {
    WordSpan src;
    WordSpan edit;
};

// Aligned word replacements plus the attention-control switches. Spatial
// relaxation depends on cross-swapped features, so enable_spatial requires
// enable_cross.
struct EditSpec {
    std::vector<EditPair> pairs;
    bool enable_cross = true;
    bool enable_spatial = true;
    int src_tokens = 0;   // M of the source prompt
    int edit_tokens = 0;  // M of the edit prompt

    int num_edits() const { return static_cast<int>(pairs.size()); }

    void validate() const {
        if (enable_spatial && !enable_cross) {
            throw ValidationError("EditSpec: enable_spatial requires enable_cross");
        }
        if (enable_spatial && pairs.empty()) {
            throw ValidationError("EditSpec: spatial blending needs at least one edit pair");
        }
        for (const auto& pr : pairs) {
            if (pr.src.begin < 0 || pr.src.end <= pr.src.begin || pr.src.end > src_tokens ||
                pr.edit.begin < 0 || pr.edit.end <= pr.edit.begin || pr.edit.end > edit_tokens) {
                throw ValidationError("EditSpec: span out of range");
            }
            if (pr.src.length() != pr.edit.length() && !enable_cross) {
                throw ValidationError(
                    "EditSpec: unequal-length token spans require enable_cross");
            }
        }
        for (size_t i = 1; i < pairs.size(); i++) {
            if (pairs[i].src.begin < pairs[i - 1].src.end ||
                pairs[i].edit.begin < pairs[i - 1].edit.end) {
                throw ValidationError("EditSpec: spans must be ordered and disjoint");
            }
        }
    }
};

namespace detail {

inline const WordSpan* find_unique_word(const TokenizedPrompt& p, const std::string& word,
                                        const char* role) {
    const WordSpan* found = nullptr;
    for (const auto& s : p.word_spans) {
        if (s.word == word) {
            if (found != nullptr) {
                throw ValidationError("align_edit_words: word '" + word + "' occurs twice in " +
                                      role + " prompt");
            }
            found = &s;
        }
    }
    if (found == nullptr) {
        throw ValidationError("align_edit_words: word '" + word + "' not found in " + role +
                              " prompt");
    }
    return found;
}

}  // namespace detail

// Aligns (source word -> edit word) pairs between two prompts into token
// spans and checks that everything outside the edited spans matches
// position for position.
inline EditSpec align_edit_words(const TokenizedPrompt& src, const TokenizedPrompt& edit,
                                 const std::vector<std::pair<std::string, std::string>>& word_pairs,
                                 bool enable_cross = true, bool enable_spatial = true) {
    EditSpec spec;
    spec.enable_cross = enable_cross;
    spec.enable_spatial = enable_spatial;
    spec.src_tokens = src.num_tokens();
    spec.edit_tokens = edit.num_tokens();
    for (const auto& [sw, ew] : word_pairs) {
        EditPair pr;
        pr.src = *detail::find_unique_word(src, sw, "source");
        pr.edit = *detail::find_unique_word(edit, ew, "edit");
        spec.pairs.push_back(pr);
    }
    std::sort(spec.pairs.begin(), spec.pairs.end(),
              [](const EditPair& a, const EditPair& b) { return a.src.begin < b.src.begin; });
    for (size_t i = 1; i < spec.pairs.size(); i++) {
        if (spec.pairs[i].edit.begin < spec.pairs[i - 1].edit.end) {
            throw ValidationError("align_edit_words: edit spans cross their source order");
        }
    }

    // Walk both token sequences in lockstep, skipping the edited spans, and
    // require the remaining ids to agree pairwise.
    int i = 0, j = 0;
    size_t k = 0;
    while (i < src.num_tokens() || j < edit.num_tokens()) {
        if (k < spec.pairs.size() && i == spec.pairs[k].src.begin &&
            j == spec.pairs[k].edit.begin) {
            i = spec.pairs[k].src.end;
            j = spec.pairs[k].edit.end;
            k++;
            continue;
        }
        if (i >= src.num_tokens() || j >= edit.num_tokens() ||
            src.token_ids[static_cast<size_t>(i)] != edit.token_ids[static_cast<size_t>(j)]) {
            throw ValidationError(
                "align_edit_words: prompts differ outside the edited spans");
        }
        i++;
        j++;
    }
    if (k != spec.pairs.size()) {
        throw ValidationError("align_edit_words: edited spans do not align between prompts");
    }
    spec.validate();
    return spec;
}

}  // namespace attedit
