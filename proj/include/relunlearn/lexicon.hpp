#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relunlearn {

// Lowercased alphanumeric tokens; everything else separates.
std::vector<std::string> tokenize(std::string_view text);

bool is_stopword(std::string_view token);

// A run of caption tokens. Lexicon matches carry the concept they realize;
// unmatched tokens are their own concept.
struct Segment {
    std::string surface;
    std::string concept_name;
    bool in_lexicon = false;
    bool stopword = false;
};

struct ConceptEntry {
    std::string_view name;
    std::vector<std::string_view> synonyms;  // ordered; synonyms[0] is the primary paraphrase
};

// The shipped synonym table.
const std::vector<ConceptEntry>& concept_table();

const ConceptEntry* find_concept(std::string_view name);

// Greedy longest-match segmentation against the synonym table.
std::vector<Segment> segment(std::span<const std::string> tokens);
std::vector<Segment> segment(std::string_view text);

// Concept names of the non-stopword segments of `text`, in order.
std::vector<std::string> concepts_of(std::string_view text);

// Joins segment surfaces and fixes "a"/"an" in front of the following word.
std::string join_segments(std::span<const Segment> segments);

std::string_view indefinite_article(std::string_view next_word);

}  // namespace relunlearn
