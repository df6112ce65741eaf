#include "fcg/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fcg/errors.hpp"
#include "fcg/rng.hpp"

namespace fs = std::filesystem;

namespace fcg {

namespace {

std::string api_label(std::size_t i) {
    std::ostringstream os;
    os << "sys.api." << (i < 10 ? "0" : "") << i;
    return os.str();
}

struct ApiPlanEntry {
    std::size_t api = 0;
    int callers = 0;
};

FunctionCallGraph generate_graph(const SynthConfig& cfg, ClassLabel label, Rng& rng) {
    const std::size_t n_total =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.min_nodes),
                                                 static_cast<std::int64_t>(cfg.max_nodes)));

    // Plan which sensitive APIs appear, in priority order, before sizing
    // the user partition: hot motifs (when the class carries the pattern),
    // the common profile, then neutral sprinkles. Every class difference
    // is gated on the motif count so a zero-motif corpus carries no
    // signal at all.
    std::vector<ApiPlanEntry> plan;
    const std::size_t hot_start = cfg.n_sensitive - cfg.n_hot;
    const int motifs = label == ClassLabel::Malware ? cfg.malware_motifs : cfg.benign_motifs;
    std::vector<int> hot_callers(cfg.n_hot, 0);
    for (int m = 0; m < motifs; ++m) {
        const std::size_t slot = rng.uniform_index(cfg.n_hot);
        hot_callers[slot] += static_cast<int>(
            rng.uniform_int(cfg.hot_callers_min, cfg.hot_callers_max));
    }
    bool patterned = false;
    for (std::size_t h = 0; h < cfg.n_hot; ++h) {
        if (hot_callers[h] > 0) {
            plan.push_back({hot_start + h, hot_callers[h]});
            patterned = true;
        }
    }
    for (std::size_t b = 0; b < cfg.n_common; ++b) {
        if (!rng.bernoulli(0.95)) continue;
        const int callers =
            patterned ? static_cast<int>(rng.uniform_int(cfg.common_callers_malware_min,
                                                         cfg.common_callers_malware_max))
                      : static_cast<int>(rng.uniform_int(cfg.common_callers_benign_min,
                                                         cfg.common_callers_benign_max));
        plan.push_back({b, callers});
    }
    for (std::size_t nf = cfg.n_common; nf < hot_start; ++nf) {
        if (rng.bernoulli(cfg.neutral_probability)) plan.push_back({nf, 1});
    }
    if (!patterned) {
        for (std::size_t h = 0; h < cfg.n_hot; ++h) {
            if (rng.bernoulli(cfg.hot_benign_probability)) {
                plan.push_back({hot_start + h, 1});
            }
        }
    }

    // Keep at least half of the nodes user-kind.
    const std::size_t max_sys = std::max<std::size_t>(1, n_total / 2);
    if (plan.size() > max_sys) plan.resize(max_sys);
    const std::size_t n_users = std::max<std::size_t>(2, n_total - plan.size());

    FunctionCallGraph g;
    std::vector<NodeId> users;
    users.reserve(n_users);
    for (std::size_t i = 0; i < n_users; ++i) {
        NodeRecord rec;
        rec.id = g.peek_next_id();
        rec.kind = NodeKind::User;
        rec.label = "usr.fn." + std::to_string(i);
        users.push_back(rec.id);
        g.add_node(std::move(rec));
    }

    // Call-tree backbone plus forward extras; forward edges keep the user
    // partition acyclic, which keeps Katz well-behaved on any corpus.
    for (std::size_t i = 1; i < n_users; ++i) {
        g.add_edge(users[rng.uniform_index(i)], users[i]);
    }
    const std::size_t extras =
        static_cast<std::size_t>(cfg.extra_edge_factor * static_cast<double>(n_users));
    for (std::size_t e = 0; e < extras; ++e) {
        const std::size_t a = rng.uniform_index(n_users);
        const std::size_t b = rng.uniform_index(n_users);
        if (a >= b) continue;
        if (!g.has_edge(users[a], users[b])) g.add_edge(users[a], users[b]);
    }

    for (const ApiPlanEntry& entry : plan) {
        NodeRecord rec;
        rec.id = g.peek_next_id();
        rec.kind = NodeKind::System;
        rec.label = api_label(entry.api);
        const NodeId api_node = rec.id;
        g.add_node(std::move(rec));

        const std::size_t caller_count =
            std::min<std::size_t>(static_cast<std::size_t>(entry.callers), n_users);
        std::vector<NodeId> pool = users;
        rng.shuffle(pool);
        for (std::size_t c = 0; c < caller_count; ++c) {
            g.add_edge(pool[c], api_node);
        }
    }
    g.validate();
    return g;
}

} // namespace

SynthCorpus synth_corpus(const SynthConfig& cfg) {
    if (cfg.n_sensitive < cfg.n_common + cfg.n_hot) {
        throw ConfigError("n_sensitive must cover the common and hot blocks");
    }
    SynthCorpus corpus;
    std::vector<std::string> signatures;
    signatures.reserve(cfg.n_sensitive);
    for (std::size_t i = 0; i < cfg.n_sensitive; ++i) signatures.push_back(api_label(i));
    corpus.apis = SensitiveApiIndex(std::move(signatures));
    corpus.system_prefixes = {"sys."};

    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < cfg.n_graphs; ++i) {
        const ClassLabel label = i % 2 == 0 ? ClassLabel::Benign : ClassLabel::Malware;
        corpus.graphs.push_back(generate_graph(cfg, label, rng));
        corpus.labels.push_back(label);
    }
    for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
        corpus.seeds.push_back(generate_graph(cfg, ClassLabel::Malware, rng));
    }
    return corpus;
}

namespace {

std::string padded(std::size_t i) {
    std::ostringstream os;
    os << (i < 10 ? "000" : i < 100 ? "00" : i < 1000 ? "0" : "") << i;
    return os.str();
}

} // namespace

void write_corpus(const SynthCorpus& corpus, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "graphs");
    fs::create_directories(fs::path(dir) / "seeds");

    std::ofstream labels((fs::path(dir) / "labels.csv").string());
    labels << "file,label\n";
    for (std::size_t i = 0; i < corpus.graphs.size(); ++i) {
        const std::string name = "g_" + padded(i) + ".json";
        save_fcg_file(corpus.graphs[i], (fs::path(dir) / "graphs" / name).string(),
                      GraphFormat::JsonGraph);
        labels << "graphs/" << name << ','
               << (corpus.labels[i] == ClassLabel::Benign ? "benign" : "malware") << '\n';
    }
    for (std::size_t i = 0; i < corpus.seeds.size(); ++i) {
        const std::string name = "s_" + padded(i) + ".json";
        save_fcg_file(corpus.seeds[i], (fs::path(dir) / "seeds" / name).string(),
                      GraphFormat::JsonGraph);
    }

    std::ofstream apis((fs::path(dir) / "apis.txt").string());
    for (const std::string& sig : corpus.apis.signatures()) apis << sig << '\n';

    std::ofstream prefixes((fs::path(dir) / "system_prefixes.txt").string());
    for (const std::string& p : corpus.system_prefixes) prefixes << p << '\n';
}

LoadedCorpus load_corpus(const std::string& dir, bool load_seeds) {
    LoadedCorpus corpus;
    {
        std::ifstream apis((fs::path(dir) / "apis.txt").string());
        if (!apis) throw ParseError("cannot open " + dir + "/apis.txt");
        corpus.apis = SensitiveApiIndex::load(apis);
    }
    std::ifstream labels((fs::path(dir) / "labels.csv").string());
    if (!labels) throw ParseError("cannot open " + dir + "/labels.csv");
    std::string line;
    std::getline(labels, line); // header
    while (std::getline(labels, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("bad labels.csv line: " + line);
        const std::string file = line.substr(0, comma);
        const std::string label = line.substr(comma + 1);
        corpus.graphs.push_back(
            load_fcg_file((fs::path(dir) / file).string(), GraphFormat::JsonGraph));
        corpus.graph_names.push_back(file);
        if (label == "benign") {
            corpus.labels.push_back(ClassLabel::Benign);
        } else if (label == "malware") {
            corpus.labels.push_back(ClassLabel::Malware);
        } else {
            throw ParseError("unknown label \"" + label + "\" in labels.csv");
        }
    }
    if (load_seeds && fs::exists(fs::path(dir) / "seeds")) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(fs::path(dir) / "seeds")) {
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            corpus.seeds.push_back(load_fcg_file(f.string(), GraphFormat::JsonGraph));
            corpus.seed_names.push_back(f.filename().string());
        }
    }
    return corpus;
}

} // namespace fcg
