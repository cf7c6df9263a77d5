#include "relunlearn/scene.hpp"

#include <algorithm>

namespace relunlearn {

const std::vector<StyleInfo>& style_registry() {
    static const std::vector<StyleInfo> kStyles = {
        {"photo", 0.0},     {"sketch", 0.6},    {"watercolor", 0.8},
        {"cartoon", 0.8},   {"pixel-art", 0.9}, {"van-gogh", 1.0},
    };
    return kStyles;
}

const std::vector<ContextInfo>& context_registry() {
    static const std::vector<ContextInfo> kContexts = {
        {"park", "in a"},
        {"kitchen table", "at a"},
        {"school cafeteria", "in a"},
        {"sunny backyard", "in a"},
        {"beach", "at the"},
        {"crowded birthday party", "at a"},
        {"futuristic city street at night", "on a"},
    };
    return kContexts;
}

const StyleInfo* find_style(std::string_view tag) {
    const auto& r = style_registry();
    auto it = std::find_if(r.begin(), r.end(), [&](const StyleInfo& s) { return s.tag == tag; });
    return it == r.end() ? nullptr : &*it;
}

const ContextInfo* find_context(std::string_view tag) {
    const auto& r = context_registry();
    auto it = std::find_if(r.begin(), r.end(), [&](const ContextInfo& c) { return c.tag == tag; });
    return it == r.end() ? nullptr : &*it;
}

std::string context_phrase(const ContextInfo& ctx) {
    return std::string(ctx.preposition) + " " + std::string(ctx.tag);
}

std::optional<std::string> scene_problem(const SceneDescriptor& scene) {
    if (scene.objects.empty()) return "scene has no objects";
    for (const auto& o : scene.objects) {
        if (o.empty()) return "scene has an empty object label";
    }
    if (!find_style(scene.style_tag)) return "unregistered style tag '" + scene.style_tag + "'";
    return std::nullopt;
}

}  // namespace relunlearn
