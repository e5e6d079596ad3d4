#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnkit/ml/matrix.hpp"
#include "json.hpp"

namespace attnkit::ml {

enum class ModelKind { LogisticRegression, RandomForest };
const char* to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
    ModelKind kind = ModelKind::RandomForest;
    std::size_t trees = 100;
    std::size_t max_depth = 50;
    std::string max_features = "sqrt";  // "sqrt", "all" or an integer
    bool bootstrap = true;
    double l2 = 1.0;
    std::size_t epochs = 500;
    double learning_rate = 0.1;
    bool class_weighting = false;  // weights inversely proportional to class frequency
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const ModelSpec& s);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // weighted class-1 fraction of the node
};

struct Tree {
    std::vector<TreeNode> nodes;
    double predict(std::span<const double> row) const;
};

class TrainedModel {
public:
    const ModelSpec& spec() const { return spec_; }
    std::size_t n_features() const { return n_features_; }
    const std::vector<Tree>& trees() const { return trees_; }
    const std::vector<double>& coefficients() const { return coef_; }
    double intercept() const { return intercept_; }

    // Class-1 probabilities: mean leaf fraction across trees, or the logistic sigmoid.
    std::vector<double> predict(const Matrix& x) const;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);

private:
    friend TrainedModel train(const Matrix&, const std::vector<int>&, const ModelSpec&);
    friend TrainedModel train_serial(const Matrix&, const std::vector<int>&, const ModelSpec&);

    ModelSpec spec_;
    std::size_t n_features_ = 0;
    std::vector<Tree> trees_;
    std::vector<double> coef_;
    double intercept_ = 0.0;
};

// Binary labels (0/1). Forest trees grow in parallel, each from its own derived
// seed, so the result does not depend on the thread count; train_serial is the
// single-threaded reference. Throws when only one class is present.
TrainedModel train(const Matrix& x, const std::vector<int>& y, const ModelSpec& spec);
TrainedModel train_serial(const Matrix& x, const std::vector<int>& y, const ModelSpec& spec);

}  // namespace attnkit::ml
