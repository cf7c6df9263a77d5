#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "relunlearn/encoder.hpp"
#include "relunlearn/relation_graph.hpp"
#include "relunlearn/trainer.hpp"

namespace relunlearn::testing {

// Random valid spec over a small vocabulary: distinct labels, distinct
// relations. The forget tuple uses words the synonym table knows, so the
// corpus can always build adversarial paraphrases of it.
inline GraphSpec random_spec(std::mt19937_64& rng) {
    static const std::vector<std::string> lexical_objects = {"kid", "hamburger", "adult", "salad", "wine",
                                                             "coffee", "Eiffel Tower", "tourist", "dog"};
    static const std::vector<std::string> other_objects = {"ball", "chef", "knife", "teen", "bicycle",
                                                           "cat", "sofa", "guitar", "musician"};
    static const std::vector<std::string> lexical_relations = {"eating", "holding", "drinking", "chasing",
                                                               "photographing"};
    static const std::vector<std::string> other_relations = {"near", "riding", "sleeping on", "painting"};
    std::vector<std::string> lex = lexical_objects;
    std::shuffle(lex.begin(), lex.end(), rng);
    std::vector<std::string> rels = lexical_relations;
    std::shuffle(rels.begin(), rels.end(), rng);

    GraphSpec s;
    s.forget = {lex[0], rels[0], lex[1]};
    std::vector<std::string> pool(lex.begin() + 2, lex.end());
    pool.insert(pool.end(), other_objects.begin(), other_objects.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::string> other_rels(rels.begin() + 1, rels.end());
    other_rels.insert(other_rels.end(), other_relations.begin(), other_relations.end());
    std::shuffle(other_rels.begin(), other_rels.end(), rng);

    std::size_t next = 0;
    const int ns = static_cast<int>(rng() % 3);
    const int no = 1 + static_cast<int>(rng() % 2);
    for (int i = 0; i < ns; ++i) s.subject_neighbors.push_back(pool[next++]);
    for (int i = 0; i < no; ++i) s.object_neighbors.push_back(pool[next++]);
    s.alt_relation = other_rels[0];
    const int nn = static_cast<int>(rng() % 3);
    for (int i = 0; i < nn; ++i) {
        s.neutral_edges.push_back({pool[next], other_rels[1 + static_cast<std::size_t>(i)], pool[next + 1]});
        next += 2;
    }
    return s;
}

// Gaussian entries spread over nine orders of magnitude.
inline void fill_random(Eigen::MatrixXd& m, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng) * std::pow(10.0, static_cast<double>(rng() % 9) - 4);
}

inline EncoderConfig random_encoder_config(std::mt19937_64& rng) {
    EncoderConfig c;
    c.d_in = 2 + static_cast<int>(rng() % 40);
    c.d_out = 1 + static_cast<int>(rng() % 12);
    c.rank = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::min(c.d_in, c.d_out)));
    c.alpha_lora = 0.5 + static_cast<double>(rng() % 64);
    c.seed = rng();
    c.base_scale = 0.05 + static_cast<double>(rng() % 100) / 37.0;
    c.modality_gap = static_cast<double>(rng() % 100) / 100.0;
    c.image_noise = static_cast<double>(rng() % 100) / 70.0;
    c.lora_init_std = 1e-3 * static_cast<double>(1 + rng() % 50);
    return c;
}

// Trained-looking state: random adapters and, when asked, random optimizer moments.
inline EncoderState random_state(std::mt19937_64& rng, std::optional<OptimizerState>& optimizer, bool with_optimizer) {
    EncoderState s = make_encoder(random_encoder_config(rng));
    for (auto* m : {&s.lora_text.a, &s.lora_text.b, &s.lora_image.a, &s.lora_image.b}) fill_random(*m, rng);
    optimizer.reset();
    if (with_optimizer) {
        optimizer = OptimizerState::fresh(s);
        optimizer->step = rng();
        for (auto* m : {&optimizer->m.a_text, &optimizer->m.b_text, &optimizer->m.a_image, &optimizer->m.b_image,
                        &optimizer->v.a_text, &optimizer->v.b_text, &optimizer->v.a_image, &optimizer->v.b_image})
            fill_random(*m, rng);
    }
    return s;
}

}  // namespace relunlearn::testing
