#ifndef FCG_SYNTH_HPP_
#define FCG_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fcg/graph.hpp"
#include "fcg/models.hpp"

namespace fcg {

// Desk-scale corpus generator. Benign and malware graphs share a common
// call-profile; malware additionally embeds dense call motifs on a "hot"
// block of sensitive APIs, which makes degree features separable while
// leaving a benign-usage block the attack has to match.
struct SynthConfig {
    std::size_t n_graphs = 200; // training corpus, half benign / half malware
    std::size_t n_seeds = 20;   // held-out malicious attack seeds
    std::size_t min_nodes = 60;
    std::size_t max_nodes = 120;
    int benign_motifs = 0; // malicious-pattern density per class
    int malware_motifs = 6;
    std::uint64_t seed = 1;

    // Sensitive API layout: [0, n_common) benign-profile block,
    // [n_sensitive - n_hot, n_sensitive) hot block, neutral in between.
    std::size_t n_sensitive = 30;
    std::size_t n_common = 10;
    std::size_t n_hot = 10;

    // Caller-count ranges per API occurrence.
    int common_callers_benign_min = 3;
    int common_callers_benign_max = 6;
    int common_callers_malware_min = 1;
    int common_callers_malware_max = 2;
    int hot_callers_min = 5;
    int hot_callers_max = 9;
    double neutral_probability = 0.15;
    double hot_benign_probability = 0.05;
    double extra_edge_factor = 0.5; // extra user->user edges per user node
};

struct SynthCorpus {
    std::vector<FunctionCallGraph> graphs;
    std::vector<ClassLabel> labels;
    std::vector<FunctionCallGraph> seeds; // all malware
    SensitiveApiIndex apis;
    std::vector<std::string> system_prefixes;
};

SynthCorpus synth_corpus(const SynthConfig& cfg);

// Writes graphs/, seeds/, labels.csv, apis.txt, system_prefixes.txt.
void write_corpus(const SynthCorpus& corpus, const std::string& dir);

struct LoadedCorpus {
    std::vector<FunctionCallGraph> graphs;
    std::vector<ClassLabel> labels;
    std::vector<std::string> graph_names;
    std::vector<FunctionCallGraph> seeds;
    std::vector<std::string> seed_names;
    SensitiveApiIndex apis;
};

LoadedCorpus load_corpus(const std::string& dir, bool load_seeds = true);

} // namespace fcg

#endif // FCG_SYNTH_HPP_
