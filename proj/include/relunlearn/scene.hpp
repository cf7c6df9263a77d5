#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relunlearn {

// Symbolic stand-in for an image: what is in it, how it is rendered, and
// which noise draw the featurizer applies.
struct SceneDescriptor {
    std::vector<std::string> objects;
    std::optional<std::string> relation;
    std::vector<std::string> context_tags;
    std::string style_tag = "photo";
    std::uint64_t noise_seed = 0;

    bool operator==(const SceneDescriptor&) const = default;
};

struct StyleInfo {
    std::string_view tag;
    double strength;  // norm of the style offset relative to the unit scene latent
};

struct ContextInfo {
    std::string_view tag;
    std::string_view preposition;  // "on a" + tag
};

const std::vector<StyleInfo>& style_registry();
const std::vector<ContextInfo>& context_registry();

const StyleInfo* find_style(std::string_view tag);
const ContextInfo* find_context(std::string_view tag);

// "on a futuristic city street at night"
std::string context_phrase(const ContextInfo& ctx);

// Empty when the scene satisfies its invariants.
std::optional<std::string> scene_problem(const SceneDescriptor& scene);

}  // namespace relunlearn
