#ifndef FCG_MODELS_HPP_
#define FCG_MODELS_HPP_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace fcg {

enum class ClassLabel : std::uint8_t { Malware = 0, Benign = 1 };

enum class Activation : std::uint8_t { ReLU, Sigmoid };

struct MlpLayer {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> weights; // row-major, out_dim x in_dim
    std::vector<double> bias;    // out_dim
    Activation activation = Activation::ReLU;

    friend bool operator==(const MlpLayer&, const MlpLayer&) = default;
};

// Feed-forward net with a single sigmoid output holding the benign-class
// probability.
struct MlpModel {
    std::size_t input_dim = 0;
    std::vector<MlpLayer> layers;
    std::vector<double> benign_centroid; // attribution baseline; may be empty

    friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

struct MlpTrainConfig {
    std::vector<std::size_t> hidden{64, 64};
    int epochs = 200;
    double learning_rate = 0.05;
    std::size_t batch_size = 16;
    std::uint64_t seed = 1;
};

double mlp_predict(const MlpModel& m, std::span<const double> x);

MlpModel mlp_train(const std::vector<std::vector<double>>& data,
                   const std::vector<ClassLabel>& labels, const MlpTrainConfig& config);

struct KnnModel {
    std::size_t k = 1;
    std::size_t dim = 0;
    std::vector<std::vector<double>> rows;
    std::vector<ClassLabel> labels;
    // Surrogate net supplying attributions when this model is the target.
    std::optional<MlpModel> surrogate;

    friend bool operator==(const KnnModel&, const KnnModel&) = default;
};

KnnModel knn_build(std::vector<std::vector<double>> rows, std::vector<ClassLabel> labels,
                   std::size_t k);

struct KnnDistances {
    std::vector<double> malware; // ascending, k nearest malware rows
    std::vector<double> benign;  // ascending, k nearest benign rows
};

KnnDistances knn_distances(const KnnModel& m, std::span<const double> x);
ClassLabel knn_predict(const KnnModel& m, std::span<const double> x);

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    ClassLabel leaf_class = ClassLabel::Malware;
    double leaf_weight = 0.0;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // index 0 is the root

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

enum class EnsembleMode : std::uint8_t { RandomForest, AdaBoost };

struct TreeEnsemble {
    EnsembleMode mode = EnsembleMode::RandomForest;
    std::size_t dim = 0;
    std::vector<DecisionTree> trees;
    std::vector<double> tree_weights; // uniform for RF, stage weights for AdaBoost

    friend bool operator==(const TreeEnsemble&, const TreeEnsemble&) = default;
};

struct ForestConfig {
    int n_trees = 40;
    int max_depth = 8;
    // Features examined per split; 0 selects ceil(sqrt(dim)).
    std::size_t features_per_split = 0;
    std::uint64_t seed = 1;
};

struct AdaBoostConfig {
    int n_stages = 40;
    int stump_depth = 1;
    std::uint64_t seed = 1;
};

ClassLabel tree_predict(const DecisionTree& t, std::span<const double> x);
ClassLabel ensemble_predict(const TreeEnsemble& e, std::span<const double> x);

TreeEnsemble forest_train(const std::vector<std::vector<double>>& data,
                          const std::vector<ClassLabel>& labels, const ForestConfig& config);
TreeEnsemble adaboost_train(const std::vector<std::vector<double>>& data,
                            const std::vector<ClassLabel>& labels, const AdaBoostConfig& config);

// Half-open/closed interval over one feature implied by a benign path.
struct Constraint {
    std::size_t feature = 0;
    double lower = -std::numeric_limits<double>::infinity();
    bool lower_closed = false;
    double upper = std::numeric_limits<double>::infinity();
    bool upper_closed = true;
    int tree_id = 0;
    int leaf_id = 0;

    bool contains(double v) const {
        if (lower_closed ? v < lower : v <= lower) return false;
        if (upper_closed ? v > upper : v >= upper) return false;
        return true;
    }
};

bool intervals_intersect(const Constraint& a, const Constraint& b);

// One constraint per feature per root-to-benign-leaf path, after interval
// intersection within the path; eliminate_conflicts then drops constraints
// incompatible with every benign-path interval of the same feature in some
// other tree that splits on that feature along all of its benign paths.
std::vector<Constraint> extract_benign_constraints(const TreeEnsemble& e,
                                                   bool eliminate_conflicts = true);

std::size_t sat_count(const std::vector<Constraint>& constraints, std::span<const double> x);

// Self-describing model wrapper serialized to a versioned JSON document.
struct Model {
    std::variant<MlpModel, KnnModel, TreeEnsemble> impl;
    std::map<std::string, std::string> meta; // scheme, corpus info, ...

    const char* kind() const;
};

void model_save(const Model& m, std::ostream& out);
Model model_load(std::istream& in);
void model_save_file(const Model& m, const std::string& path);
Model model_load_file(const std::string& path);

// Benign verdict for any model kind; MLP uses the 0.5 threshold.
bool verdict_is_benign(const Model& m, std::span<const double> x);

} // namespace fcg

#endif // FCG_MODELS_HPP_
