#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relunlearn/corpus.hpp"
#include "relunlearn/encoder.hpp"
#include "relunlearn/relation_graph.hpp"
#include "relunlearn/trainer.hpp"
#include "relunlearn/unlearn_loss.hpp"

namespace relunlearn {

// Everything one experiment needs. Exactly one graph source is set.
//
// JSON form (every key optional; unknown keys are rejected):
//   {
//     "seed": 7,                       sets corpus, encoder and train seeds
//     "graph_spec": {"forget": {"subject", "relation", "object"},
//                    "subject_neighbors": [...], "object_neighbors": [...],
//                    "alt_relation": "...", "neutral_edges": [{...}]},
//     "graph_manifest": "path/to/graph.json",
//     "graph": {<inline graph manifest>},
//     "corpus_file": "path/to/corpus.json",
//     "corpus": {...}, "encoder": {...}, "weights": {...}, "train": {...},
//     "variants": ["baseline", "full", ...],
//     "out_dir": "runs/x", "threads": 1
//   }
struct RunConfig {
    std::optional<GraphSpec> graph_spec;
    std::optional<std::string> graph_manifest;
    std::optional<RelationGraph> graph;
    // When set, the corpus is read from this file instead of generated.
    std::optional<std::string> corpus_file;
    CorpusConfig corpus;
    EncoderConfig encoder;
    LossWeights weights = tuned_weights();
    TrainConfig train;
    std::vector<std::string> variants = {"baseline", "full", "minus-lc", "minus-ladv"};
    std::string out_dir;  // empty: chosen by the caller
    int threads = 1;
};

// Hamburger graph, tuned weights, library defaults elsewhere.
RunConfig default_run_config();

// Overlays `text` on default_run_config().
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

// Sets the corpus, encoder and train seeds together.
void set_seed(RunConfig& config, std::uint64_t seed);

// Throws unless exactly one graph source is set and every block validates.
// An inline graph or spec is checked here; a manifest path is not opened.
void validate_run_config(const RunConfig& config);

RelationGraph resolve_graph(const RunConfig& config);
Corpus resolve_corpus(const RunConfig& config, const RelationGraph& graph);

// Resolved manifest: the graph is inlined so the run can be repeated from this
// file alone. parse_run_config reads it back.
std::string emit_run_manifest(const RunConfig& config);

// Helpers shared with the CLI.
GraphSpec parse_graph_spec(std::string_view json_text);
std::string emit_graph_spec(const GraphSpec& spec);

}  // namespace relunlearn
