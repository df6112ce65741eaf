#include "fcg/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "fcg/errors.hpp"
#include "fcg/rng.hpp"

namespace fcg {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_dim(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got) {
        throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(expected) +
                                ", got " + std::to_string(got));
    }
}

void check_training_data(const std::vector<std::vector<double>>& data,
                         const std::vector<ClassLabel>& labels) {
    if (data.empty() || data.size() != labels.size()) {
        throw DegenerateData("need a non-empty, label-aligned training set");
    }
    const std::size_t dim = data.front().size();
    if (dim == 0) throw DegenerateData("zero-dimensional samples");
    for (const auto& row : data) {
        if (row.size() != dim) throw DegenerateData("inconsistent sample dimensions");
    }
    bool has_benign = false, has_malware = false;
    for (ClassLabel l : labels) {
        (l == ClassLabel::Benign ? has_benign : has_malware) = true;
    }
    if (!has_benign || !has_malware) {
        throw DegenerateData("training set must contain both classes");
    }
}

} // namespace

double mlp_predict(const MlpModel& m, std::span<const double> x) {
    check_dim(m.input_dim, x.size(), "mlp input");
    std::vector<double> activ(x.begin(), x.end());
    for (const auto& layer : m.layers) {
        std::vector<double> next(layer.out_dim, 0.0);
        for (std::size_t o = 0; o < layer.out_dim; ++o) {
            double z = layer.bias[o];
            const double* w = &layer.weights[o * layer.in_dim];
            for (std::size_t i = 0; i < layer.in_dim; ++i) {
                z += w[i] * activ[i];
            }
            next[o] = layer.activation == Activation::ReLU ? std::max(0.0, z) : sigmoid(z);
        }
        activ = std::move(next);
    }
    return activ.at(0);
}

namespace {

struct ForwardTrace {
    std::vector<std::vector<double>> activations; // per layer output, [0] = input
};

double mlp_forward_traced(const MlpModel& m, std::span<const double> x, ForwardTrace& trace) {
    trace.activations.clear();
    trace.activations.emplace_back(x.begin(), x.end());
    for (const auto& layer : m.layers) {
        const auto& prev = trace.activations.back();
        std::vector<double> next(layer.out_dim, 0.0);
        for (std::size_t o = 0; o < layer.out_dim; ++o) {
            double z = layer.bias[o];
            const double* w = &layer.weights[o * layer.in_dim];
            for (std::size_t i = 0; i < layer.in_dim; ++i) z += w[i] * prev[i];
            next[o] = layer.activation == Activation::ReLU ? std::max(0.0, z) : sigmoid(z);
        }
        trace.activations.push_back(std::move(next));
    }
    return trace.activations.back().at(0);
}

double mlp_full_loss(const MlpModel& m, const std::vector<std::vector<double>>& data,
                     const std::vector<ClassLabel>& labels) {
    constexpr double eps = 1e-12;
    double loss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double p = std::clamp(mlp_predict(m, data[i]), eps, 1.0 - eps);
        const double y = labels[i] == ClassLabel::Benign ? 1.0 : 0.0;
        loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return loss / static_cast<double>(data.size());
}

} // namespace

MlpModel mlp_train(const std::vector<std::vector<double>>& data,
                   const std::vector<ClassLabel>& labels, const MlpTrainConfig& config) {
    check_training_data(data, labels);
    const std::size_t dim = data.front().size();
    const std::size_t n = data.size();

    Rng rng(config.seed);
    MlpModel m;
    m.input_dim = dim;
    std::size_t in_dim = dim;
    for (std::size_t width : config.hidden) {
        MlpLayer layer;
        layer.in_dim = in_dim;
        layer.out_dim = width;
        layer.activation = Activation::ReLU;
        layer.weights.resize(in_dim * width);
        layer.bias.assign(width, 0.0);
        const double scale = std::sqrt(2.0 / static_cast<double>(in_dim));
        for (auto& w : layer.weights) w = rng.normal() * scale;
        m.layers.push_back(std::move(layer));
        in_dim = width;
    }
    MlpLayer out_layer;
    out_layer.in_dim = in_dim;
    out_layer.out_dim = 1;
    out_layer.activation = Activation::Sigmoid;
    out_layer.weights.resize(in_dim);
    out_layer.bias.assign(1, 0.0);
    const double out_scale = std::sqrt(1.0 / static_cast<double>(in_dim));
    for (auto& w : out_layer.weights) w = rng.normal() * out_scale;
    m.layers.push_back(std::move(out_layer));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    double lr = config.learning_rate;
    double prev_loss = mlp_full_loss(m, data, labels);
    const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

    std::vector<MlpLayer> grads;
    ForwardTrace trace;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<MlpLayer> snapshot = m.layers;
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            grads = m.layers;
            for (auto& layer : grads) {
                std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
                std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
            }
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t idx = order[s];
                const double p = mlp_forward_traced(m, data[idx], trace);
                const double y = labels[idx] == ClassLabel::Benign ? 1.0 : 0.0;
                // dL/dz for the sigmoid output under cross-entropy.
                std::vector<double> delta{p - y};
                for (std::size_t li = m.layers.size(); li-- > 0;) {
                    const auto& layer = m.layers[li];
                    const auto& input = trace.activations[li];
                    auto& grad = grads[li];
                    for (std::size_t o = 0; o < layer.out_dim; ++o) {
                        grad.bias[o] += delta[o];
                        double* gw = &grad.weights[o * layer.in_dim];
                        for (std::size_t i = 0; i < layer.in_dim; ++i) {
                            gw[i] += delta[o] * input[i];
                        }
                    }
                    if (li == 0) break;
                    const auto& below = m.layers[li - 1];
                    std::vector<double> next_delta(layer.in_dim, 0.0);
                    for (std::size_t i = 0; i < layer.in_dim; ++i) {
                        double acc = 0.0;
                        for (std::size_t o = 0; o < layer.out_dim; ++o) {
                            acc += layer.weights[o * layer.in_dim + i] * delta[o];
                        }
                        // ReLU gate on the producing layer's output.
                        if (below.activation == Activation::ReLU &&
                            trace.activations[li][i] <= 0.0) {
                            acc = 0.0;
                        }
                        next_delta[i] = acc;
                    }
                    delta = std::move(next_delta);
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t li = 0; li < m.layers.size(); ++li) {
                auto& layer = m.layers[li];
                const auto& grad = grads[li];
                for (std::size_t w = 0; w < layer.weights.size(); ++w) {
                    layer.weights[w] -= lr * grad.weights[w] * inv;
                }
                for (std::size_t b = 0; b < layer.bias.size(); ++b) {
                    layer.bias[b] -= lr * grad.bias[b] * inv;
                }
            }
        }
        const double loss = mlp_full_loss(m, data, labels);
        if (loss > prev_loss) {
            // Reject the epoch and halve the step; keeps the recorded
            // epoch losses non-increasing.
            m.layers = snapshot;
            lr *= 0.5;
            if (lr < 1e-10) break;
        } else {
            prev_loss = loss;
        }
    }

    std::vector<double> centroid(dim, 0.0);
    std::size_t benign_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != ClassLabel::Benign) continue;
        ++benign_count;
        for (std::size_t d = 0; d < dim; ++d) centroid[d] += data[i][d];
    }
    for (auto& c : centroid) c /= static_cast<double>(benign_count);
    m.benign_centroid = std::move(centroid);
    return m;
}

KnnModel knn_build(std::vector<std::vector<double>> rows, std::vector<ClassLabel> labels,
                   std::size_t k) {
    check_training_data(rows, labels);
    if (k == 0 || k > rows.size()) {
        throw DegenerateData("k must lie in [1, #rows]");
    }
    KnnModel m;
    m.k = k;
    m.dim = rows.front().size();
    m.rows = std::move(rows);
    m.labels = std::move(labels);
    return m;
}

namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

} // namespace

KnnDistances knn_distances(const KnnModel& m, std::span<const double> x) {
    check_dim(m.dim, x.size(), "knn input");
    KnnDistances out;
    std::vector<double> malware, benign;
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        const double d = euclidean(m.rows[i], x);
        (m.labels[i] == ClassLabel::Malware ? malware : benign).push_back(d);
    }
    std::sort(malware.begin(), malware.end());
    std::sort(benign.begin(), benign.end());
    malware.resize(std::min(m.k, malware.size()));
    benign.resize(std::min(m.k, benign.size()));
    out.malware = std::move(malware);
    out.benign = std::move(benign);
    return out;
}

ClassLabel knn_predict(const KnnModel& m, std::span<const double> x) {
    check_dim(m.dim, x.size(), "knn input");
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(m.rows.size());
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        order.emplace_back(euclidean(m.rows[i], x), i);
    }
    std::sort(order.begin(), order.end());
    std::size_t benign_votes = 0;
    for (std::size_t i = 0; i < m.k; ++i) {
        if (m.labels[order[i].second] == ClassLabel::Benign) ++benign_votes;
    }
    return 2 * benign_votes > m.k ? ClassLabel::Benign : ClassLabel::Malware;
}

namespace {

// Shared CART builder; RF passes bootstrap indices, AdaBoost passes
// reweighted full data. Splits follow "<= threshold goes left".
class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& data,
                const std::vector<ClassLabel>& labels, const std::vector<double>& weights,
                int max_depth, std::size_t features_per_split, Rng& rng)
        : data_(data), labels_(labels), weights_(weights), max_depth_(max_depth),
          features_per_split_(features_per_split), rng_(rng) {}

    DecisionTree build(std::vector<std::size_t> idx) {
        tree_.nodes.clear();
        build_node(std::move(idx), 0);
        return std::move(tree_);
    }

private:
    struct ClassWeights {
        double benign = 0.0;
        double malware = 0.0;
        double total() const { return benign + malware; }
        double gini() const {
            const double t = total();
            if (t <= 0.0) return 0.0;
            const double pb = benign / t, pm = malware / t;
            return 1.0 - pb * pb - pm * pm;
        }
    };

    ClassWeights tally(const std::vector<std::size_t>& idx) const {
        ClassWeights cw;
        for (std::size_t i : idx) {
            (labels_[i] == ClassLabel::Benign ? cw.benign : cw.malware) += weights_[i];
        }
        return cw;
    }

    int make_leaf(const ClassWeights& cw) {
        TreeNode leaf;
        leaf.leaf_class = cw.benign > cw.malware ? ClassLabel::Benign : ClassLabel::Malware;
        leaf.leaf_weight = cw.total();
        tree_.nodes.push_back(leaf);
        return static_cast<int>(tree_.nodes.size() - 1);
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t dim = data_.front().size();
        std::vector<std::size_t> feats(dim);
        std::iota(feats.begin(), feats.end(), std::size_t{0});
        if (features_per_split_ == 0 || features_per_split_ >= dim) return feats;
        for (std::size_t j = 0; j < features_per_split_; ++j) {
            const std::size_t pick = j + rng_.uniform_index(dim - j);
            std::swap(feats[j], feats[pick]);
        }
        feats.resize(features_per_split_);
        return feats;
    }

    int build_node(std::vector<std::size_t> idx, int depth) {
        const ClassWeights cw = tally(idx);
        if (depth >= max_depth_ || idx.size() < 2 || cw.benign == 0.0 || cw.malware == 0.0) {
            return make_leaf(cw);
        }

        const double parent_impurity = cw.gini();
        double best_score = parent_impurity - 1e-12;
        std::size_t best_feature = 0;
        double best_threshold = 0.0;
        bool found = false;

        for (std::size_t f : candidate_features()) {
            std::vector<std::pair<double, std::size_t>> sorted;
            sorted.reserve(idx.size());
            for (std::size_t i : idx) sorted.emplace_back(data_[i][f], i);
            std::sort(sorted.begin(), sorted.end());

            ClassWeights left, right = cw;
            for (std::size_t s = 0; s + 1 < sorted.size(); ++s) {
                const std::size_t i = sorted[s].second;
                const double w = weights_[i];
                if (labels_[i] == ClassLabel::Benign) {
                    left.benign += w;
                    right.benign -= w;
                } else {
                    left.malware += w;
                    right.malware -= w;
                }
                if (sorted[s].first == sorted[s + 1].first) continue;
                const double total = cw.total();
                const double score = (left.total() * left.gini() +
                                      right.total() * right.gini()) / total;
                if (score < best_score) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = 0.5 * (sorted[s].first + sorted[s + 1].first);
                    found = true;
                }
            }
        }
        if (!found) return make_leaf(cw);

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idx) {
            (data_[i][best_feature] <= best_threshold ? left_idx : right_idx).push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();

        TreeNode split;
        split.feature = static_cast<int>(best_feature);
        split.threshold = best_threshold;
        tree_.nodes.push_back(split);
        const int self = static_cast<int>(tree_.nodes.size() - 1);
        const int left_child = build_node(std::move(left_idx), depth + 1);
        const int right_child = build_node(std::move(right_idx), depth + 1);
        tree_.nodes[self].left = left_child;
        tree_.nodes[self].right = right_child;
        return self;
    }

    const std::vector<std::vector<double>>& data_;
    const std::vector<ClassLabel>& labels_;
    const std::vector<double>& weights_;
    int max_depth_;
    std::size_t features_per_split_;
    Rng& rng_;
    DecisionTree tree_;
};

} // namespace

ClassLabel tree_predict(const DecisionTree& t, std::span<const double> x) {
    int cur = 0;
    while (!t.nodes[cur].is_leaf()) {
        const TreeNode& n = t.nodes[cur];
        cur = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return t.nodes[cur].leaf_class;
}

ClassLabel ensemble_predict(const TreeEnsemble& e, std::span<const double> x) {
    check_dim(e.dim, x.size(), "ensemble input");
    double benign = 0.0, malware = 0.0;
    for (std::size_t t = 0; t < e.trees.size(); ++t) {
        const double w = e.tree_weights[t];
        (tree_predict(e.trees[t], x) == ClassLabel::Benign ? benign : malware) += w;
    }
    return benign > malware ? ClassLabel::Benign : ClassLabel::Malware;
}

TreeEnsemble forest_train(const std::vector<std::vector<double>>& data,
                          const std::vector<ClassLabel>& labels, const ForestConfig& config) {
    check_training_data(data, labels);
    const std::size_t n = data.size();
    const std::size_t dim = data.front().size();
    const std::size_t per_split =
        config.features_per_split > 0
            ? config.features_per_split
            : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim))));

    Rng rng(config.seed);
    std::vector<double> weights(n, 1.0);
    TreeEnsemble e;
    e.mode = EnsembleMode::RandomForest;
    e.dim = dim;
    for (int t = 0; t < config.n_trees; ++t) {
        std::vector<std::size_t> bootstrap(n);
        for (auto& i : bootstrap) i = rng.uniform_index(n);
        TreeBuilder builder(data, labels, weights, config.max_depth, per_split, rng);
        e.trees.push_back(builder.build(std::move(bootstrap)));
        e.tree_weights.push_back(1.0);
    }
    return e;
}

TreeEnsemble adaboost_train(const std::vector<std::vector<double>>& data,
                            const std::vector<ClassLabel>& labels, const AdaBoostConfig& config) {
    check_training_data(data, labels);
    const std::size_t n = data.size();
    Rng rng(config.seed);
    std::vector<double> weights(n, 1.0 / static_cast<double>(n));
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});

    TreeEnsemble e;
    e.mode = EnsembleMode::AdaBoost;
    e.dim = data.front().size();
    for (int stage = 0; stage < config.n_stages; ++stage) {
        TreeBuilder builder(data, labels, weights, config.stump_depth, 0, rng);
        DecisionTree tree = builder.build(all);

        double err = 0.0;
        std::vector<bool> miss(n);
        for (std::size_t i = 0; i < n; ++i) {
            miss[i] = tree_predict(tree, data[i]) != labels[i];
            if (miss[i]) err += weights[i];
        }
        if (err <= 0.0) {
            e.trees.push_back(std::move(tree));
            e.tree_weights.push_back(10.0); // perfect stage dominates the vote
            break;
        }
        if (err >= 0.5) {
            if (e.trees.empty()) {
                e.trees.push_back(std::move(tree));
                e.tree_weights.push_back(1.0);
            }
            break;
        }
        const double alpha = 0.5 * std::log((1.0 - err) / err);
        e.trees.push_back(std::move(tree));
        e.tree_weights.push_back(alpha);

        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            weights[i] *= std::exp(miss[i] ? alpha : -alpha);
            norm += weights[i];
        }
        for (auto& w : weights) w /= norm;
    }
    return e;
}

bool intervals_intersect(const Constraint& a, const Constraint& b) {
    double lo = a.lower;
    bool lo_closed = a.lower_closed;
    if (b.lower > lo || (b.lower == lo && !b.lower_closed)) {
        lo = b.lower;
        lo_closed = a.lower == b.lower ? (a.lower_closed && b.lower_closed) : b.lower_closed;
    }
    double hi = a.upper;
    bool hi_closed = a.upper_closed;
    if (b.upper < hi || (b.upper == hi && !b.upper_closed)) {
        hi = b.upper;
        hi_closed = a.upper == b.upper ? (a.upper_closed && b.upper_closed) : b.upper_closed;
    }
    if (lo < hi) return true;
    return lo == hi && lo_closed && hi_closed;
}

namespace {

using PathIntervals = std::map<std::size_t, Constraint>;

void collect_benign_paths(const DecisionTree& tree, int tree_id, int node, PathIntervals path,
                          std::vector<PathIntervals>& out) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.is_leaf()) {
        if (n.leaf_class == ClassLabel::Benign) {
            for (auto& [feature, c] : path) {
                (void)feature;
                c.leaf_id = node;
            }
            out.push_back(std::move(path));
        }
        return;
    }
    const std::size_t f = static_cast<std::size_t>(n.feature);

    auto tightened = [&](bool left_branch) -> std::optional<PathIntervals> {
        PathIntervals next = path;
        auto [it, inserted] = next.try_emplace(f);
        Constraint& c = it->second;
        if (inserted) {
            c.feature = f;
            c.tree_id = tree_id;
        }
        if (left_branch) {
            if (n.threshold < c.upper) {
                c.upper = n.threshold;
                c.upper_closed = true;
            }
        } else {
            if (n.threshold > c.lower || (n.threshold == c.lower && c.lower_closed)) {
                c.lower = n.threshold;
                c.lower_closed = false;
            }
        }
        const bool empty = c.lower > c.upper ||
                           (c.lower == c.upper && !(c.lower_closed && c.upper_closed));
        if (empty) return std::nullopt; // structurally unreachable branch
        return next;
    };

    if (auto next = tightened(true)) {
        collect_benign_paths(tree, tree_id, n.left, std::move(*next), out);
    }
    if (auto next = tightened(false)) {
        collect_benign_paths(tree, tree_id, n.right, std::move(*next), out);
    }
}

} // namespace

std::vector<Constraint> extract_benign_constraints(const TreeEnsemble& e,
                                                   bool eliminate_conflicts) {
    std::vector<std::vector<PathIntervals>> per_tree(e.trees.size());
    for (std::size_t t = 0; t < e.trees.size(); ++t) {
        if (e.trees[t].nodes.empty()) continue;
        collect_benign_paths(e.trees[t], static_cast<int>(t), 0, {}, per_tree[t]);
    }

    std::vector<Constraint> constraints;
    for (const auto& paths : per_tree) {
        for (const auto& path : paths) {
            for (const auto& [feature, c] : path) {
                (void)feature;
                constraints.push_back(c);
            }
        }
    }
    if (!eliminate_conflicts) return constraints;

    // Feature f is "pinned" by tree t when every benign path of t splits
    // on f; a constraint incompatible with all of those intervals can
    // never be satisfied together with tree t voting benign.
    auto pinned_intervals = [&](std::size_t tree, std::size_t feature)
        -> std::optional<std::vector<const Constraint*>> {
        const auto& paths = per_tree[tree];
        if (paths.empty()) return std::nullopt;
        std::vector<const Constraint*> intervals;
        for (const auto& path : paths) {
            auto it = path.find(feature);
            if (it == path.end()) return std::nullopt;
            intervals.push_back(&it->second);
        }
        return intervals;
    };

    std::vector<Constraint> kept;
    for (const Constraint& c : constraints) {
        bool conflicted = false;
        for (std::size_t t = 0; t < per_tree.size() && !conflicted; ++t) {
            if (static_cast<int>(t) == c.tree_id) continue;
            const auto intervals = pinned_intervals(t, c.feature);
            if (!intervals) continue;
            bool any_intersection = false;
            for (const Constraint* other : *intervals) {
                if (intervals_intersect(c, *other)) {
                    any_intersection = true;
                    break;
                }
            }
            if (!any_intersection) conflicted = true;
        }
        if (!conflicted) kept.push_back(c);
    }
    return kept;
}

std::size_t sat_count(const std::vector<Constraint>& constraints, std::span<const double> x) {
    std::size_t count = 0;
    for (const Constraint& c : constraints) {
        if (c.feature >= x.size()) {
            throw DimensionMismatch("constraint feature " + std::to_string(c.feature) +
                                    " out of range for dim " + std::to_string(x.size()));
        }
        if (c.contains(x[c.feature])) ++count;
    }
    return count;
}

namespace {

constexpr int kModelVersion = 1;

nlohmann::json mlp_to_json(const MlpModel& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) {
        layers.push_back({{"in", l.in_dim},
                          {"out", l.out_dim},
                          {"activation", l.activation == Activation::ReLU ? "relu" : "sigmoid"},
                          {"weights", l.weights},
                          {"bias", l.bias}});
    }
    return {{"input_dim", m.input_dim},
            {"layers", std::move(layers)},
            {"benign_centroid", m.benign_centroid}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
    MlpModel m;
    m.input_dim = j.at("input_dim").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
        MlpLayer l;
        l.in_dim = lj.at("in").get<std::size_t>();
        l.out_dim = lj.at("out").get<std::size_t>();
        const std::string act = lj.at("activation").get<std::string>();
        if (act == "relu") {
            l.activation = Activation::ReLU;
        } else if (act == "sigmoid") {
            l.activation = Activation::Sigmoid;
        } else {
            throw ParseError("unknown activation \"" + act + "\"");
        }
        l.weights = lj.at("weights").get<std::vector<double>>();
        l.bias = lj.at("bias").get<std::vector<double>>();
        if (l.weights.size() != l.in_dim * l.out_dim || l.bias.size() != l.out_dim) {
            throw ParseError("layer weight dimensions inconsistent");
        }
        m.layers.push_back(std::move(l));
    }
    m.benign_centroid = j.value("benign_centroid", std::vector<double>{});
    return m;
}

nlohmann::json ensemble_to_json(const TreeEnsemble& e) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : e.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            nodes.push_back({{"f", n.feature},
                             {"t", n.threshold},
                             {"l", n.left},
                             {"r", n.right},
                             {"c", n.leaf_class == ClassLabel::Benign ? 1 : 0},
                             {"w", n.leaf_weight}});
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    return {{"dim", e.dim}, {"trees", std::move(trees)}, {"weights", e.tree_weights}};
}

TreeEnsemble ensemble_from_json(const nlohmann::json& j, EnsembleMode mode) {
    TreeEnsemble e;
    e.mode = mode;
    e.dim = j.at("dim").get<std::size_t>();
    for (const auto& tj : j.at("trees")) {
        DecisionTree t;
        for (const auto& nj : tj.at("nodes")) {
            TreeNode n;
            n.feature = nj.at("f").get<int>();
            n.threshold = nj.at("t").get<double>();
            n.left = nj.at("l").get<int>();
            n.right = nj.at("r").get<int>();
            n.leaf_class = nj.at("c").get<int>() == 1 ? ClassLabel::Benign : ClassLabel::Malware;
            n.leaf_weight = nj.at("w").get<double>();
            t.nodes.push_back(n);
        }
        e.trees.push_back(std::move(t));
    }
    e.tree_weights = j.at("weights").get<std::vector<double>>();
    if (e.tree_weights.size() != e.trees.size()) {
        throw ParseError("tree/weight count mismatch");
    }
    return e;
}

std::vector<int> labels_to_ints(const std::vector<ClassLabel>& labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (ClassLabel l : labels) out.push_back(l == ClassLabel::Benign ? 1 : 0);
    return out;
}

std::vector<ClassLabel> ints_to_labels(const std::vector<int>& ints) {
    std::vector<ClassLabel> out;
    out.reserve(ints.size());
    for (int v : ints) out.push_back(v == 1 ? ClassLabel::Benign : ClassLabel::Malware);
    return out;
}

} // namespace

const char* Model::kind() const {
    if (std::holds_alternative<MlpModel>(impl)) return "mlp";
    if (std::holds_alternative<KnnModel>(impl)) return "knn";
    const auto& e = std::get<TreeEnsemble>(impl);
    return e.mode == EnsembleMode::RandomForest ? "random_forest" : "adaboost";
}

void model_save(const Model& m, std::ostream& out) {
    nlohmann::json doc;
    doc["kind"] = m.kind();
    doc["version"] = kModelVersion;
    doc["meta"] = m.meta;
    if (const auto* mlp = std::get_if<MlpModel>(&m.impl)) {
        doc["payload"] = mlp_to_json(*mlp);
    } else if (const auto* knn = std::get_if<KnnModel>(&m.impl)) {
        nlohmann::json payload{{"k", knn->k},
                               {"dim", knn->dim},
                               {"rows", knn->rows},
                               {"labels", labels_to_ints(knn->labels)}};
        if (knn->surrogate) payload["surrogate"] = mlp_to_json(*knn->surrogate);
        doc["payload"] = std::move(payload);
    } else {
        doc["payload"] = ensemble_to_json(std::get<TreeEnsemble>(m.impl));
    }
    out << doc.dump(2) << '\n';
}

Model model_load(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
    try {
        if (!doc.contains("version")) throw ParseError("missing version tag");
        const int version = doc.at("version").get<int>();
        if (version != kModelVersion) {
            throw VersionMismatch("model file version " + std::to_string(version) +
                                  ", expected " + std::to_string(kModelVersion));
        }
        Model m;
        m.meta = doc.value("meta", std::map<std::string, std::string>{});
        const std::string kind = doc.at("kind").get<std::string>();
        const auto& payload = doc.at("payload");
        if (kind == "mlp") {
            m.impl = mlp_from_json(payload);
        } else if (kind == "knn") {
            KnnModel knn;
            knn.k = payload.at("k").get<std::size_t>();
            knn.dim = payload.at("dim").get<std::size_t>();
            knn.rows = payload.at("rows").get<std::vector<std::vector<double>>>();
            knn.labels = ints_to_labels(payload.at("labels").get<std::vector<int>>());
            if (payload.contains("surrogate")) {
                knn.surrogate = mlp_from_json(payload.at("surrogate"));
            }
            m.impl = std::move(knn);
        } else if (kind == "random_forest") {
            m.impl = ensemble_from_json(payload, EnsembleMode::RandomForest);
        } else if (kind == "adaboost") {
            m.impl = ensemble_from_json(payload, EnsembleMode::AdaBoost);
        } else {
            throw ParseError("unknown model kind \"" + kind + "\"");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
}

void model_save_file(const Model& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    model_save(m, out);
}

Model model_load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return model_load(in);
}

bool verdict_is_benign(const Model& m, std::span<const double> x) {
    if (const auto* mlp = std::get_if<MlpModel>(&m.impl)) {
        return mlp_predict(*mlp, x) >= 0.5;
    }
    if (const auto* knn = std::get_if<KnnModel>(&m.impl)) {
        return knn_predict(*knn, x) == ClassLabel::Benign;
    }
    return ensemble_predict(std::get<TreeEnsemble>(m.impl), x) == ClassLabel::Benign;
}

} // namespace fcg
