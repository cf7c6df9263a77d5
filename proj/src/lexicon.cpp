#include "relunlearn/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

namespace relunlearn {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

bool is_stopword(std::string_view token) {
    static const std::unordered_set<std::string_view> kStop = {
        "a", "an", "the", "of", "on", "in", "at", "to", "and", "with", "is", "are",
        "there", "this", "it", "its", "by", "for", "as", "from",
    };
    return kStop.contains(token);
}

const std::vector<ConceptEntry>& concept_table() {
    // Synonyms are stored in tokenized form. The first synonym of each concept
    // is the primary paraphrase ("kid eating a hamburger" ->
    // "youngster taking a bite of a meat patty").
    static const std::vector<ConceptEntry> kTable = {
        {"kid", {"youngster", "child", "little boy", "young girl", "toddler"}},
        {"eating", {"taking a bite of", "munching on", "devouring", "chewing on", "biting into"}},
        {"hamburger", {"meat patty", "burger", "cheeseburger", "beef sandwich", "double patty burger"}},
        {"adult", {"grown up", "older person", "parent"}},
        {"salad", {"bowl of greens", "green salad", "garden salad"}},
        {"holding", {"grasping", "carrying", "clutching"}},
        {"drinking", {"sipping", "gulping", "swallowing"}},
        {"wine", {"red wine", "glass of wine"}},
        {"coffee", {"espresso", "latte"}},
        {"people", {"friends", "coworkers", "group of people"}},
        {"eiffel tower", {"paris tower", "iron lattice tower"}},
        {"tourist", {"traveler", "visitor", "sightseer"}},
        {"photographing", {"taking a picture of", "snapping a photo of"}},
        {"dog", {"puppy", "hound"}},
        {"chasing", {"running after", "pursuing"}},
    };
    return kTable;
}

namespace {

struct LexiconIndex {
    std::unordered_map<std::string, std::string> phrase_to_concept;
    std::size_t max_len = 1;
};

const LexiconIndex& lexicon_index() {
    static const LexiconIndex kIndex = [] {
        LexiconIndex idx;
        auto add = [&](std::string_view phrase, std::string_view concept_name) {
            auto toks = tokenize(phrase);
            idx.max_len = std::max(idx.max_len, toks.size());
            std::string key;
            for (const auto& t : toks) {
                if (!key.empty()) key.push_back(' ');
                key += t;
            }
            idx.phrase_to_concept.emplace(key, std::string(concept_name));
        };
        for (const auto& entry : concept_table()) {
            add(entry.name, entry.name);
            for (auto syn : entry.synonyms) add(syn, entry.name);
        }
        return idx;
    }();
    return kIndex;
}

}  // namespace

const ConceptEntry* find_concept(std::string_view name) {
    const auto& table = concept_table();
    auto it = std::find_if(table.begin(), table.end(), [&](const ConceptEntry& e) { return e.name == name; });
    return it == table.end() ? nullptr : &*it;
}

std::vector<Segment> segment(std::span<const std::string> tokens) {
    const auto& idx = lexicon_index();
    std::vector<Segment> out;
    std::size_t i = 0;
    while (i < tokens.size()) {
        bool matched = false;
        for (std::size_t len = std::min(idx.max_len, tokens.size() - i); len >= 1; --len) {
            std::string key = tokens[i];
            for (std::size_t k = 1; k < len; ++k) key += " " + tokens[i + k];
            auto it = idx.phrase_to_concept.find(key);
            if (it != idx.phrase_to_concept.end()) {
                out.push_back({key, it->second, true, false});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) {
            out.push_back({tokens[i], tokens[i], false, is_stopword(tokens[i])});
            ++i;
        }
    }
    return out;
}

std::vector<Segment> segment(std::string_view text) {
    auto tokens = tokenize(text);
    return segment(std::span<const std::string>(tokens));
}

std::vector<std::string> concepts_of(std::string_view text) {
    std::vector<std::string> out;
    for (auto& s : segment(text)) {
        if (!s.stopword) out.push_back(std::move(s.concept_name));
    }
    return out;
}

std::string_view indefinite_article(std::string_view next_word) {
    if (next_word.empty()) return "a";
    switch (next_word.front()) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
        default: return "a";
    }
}

std::string join_segments(std::span<const Segment> segments) {
    std::vector<std::string> words;
    for (const auto& s : segments) {
        for (auto& t : tokenize(s.surface)) words.push_back(std::move(t));
    }
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string_view w = words[i];
        if ((w == "a" || w == "an") && i + 1 < words.size()) w = indefinite_article(words[i + 1]);
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

}  // namespace relunlearn
