#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "padsim/datagen.hpp"
#include "padsim/rng.hpp"
#include "padsim/types.hpp"

namespace padsim::diagnosis {

// Predictors: the seven Z-scored markers, age, APOE4 carriage.
inline constexpr int kFeatureCount = kOutcomeCount + 2;
inline constexpr int kAgeFeature = kOutcomeCount;
inline constexpr int kApoe4Feature = kOutcomeCount + 1;
using Features = std::array<double, kFeatureCount>;

Features visit_features(const Eigen::Ref<const Eigen::RowVectorXd>& markers, double age, int apoe4);

// 1 - sum p_c^2. Throws DataError when every count is zero.
double gini_impurity(std::span<const double> class_counts);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // rows with x[feature] <= threshold
  int right = -1;
  Diagnosis leaf = Diagnosis::CN;

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<int> bootstrap;   // training-row indices drawn for this tree

  Diagnosis predict(std::span<const double> x) const;
};

struct TrainingSet {
  Eigen::MatrixXd features;  // rows x kFeatureCount (or any width >= 1)
  std::vector<Diagnosis> labels;
};

struct ForestOptions {
  int n_trees = 500;
  int mtry = 3;
  int min_node_size = 5;  // nodes with fewer rows become leaves
};

struct Forest {
  std::vector<DecisionTree> trees;
  int mtry = 3;
  int min_node_size = 5;
  int feature_count = kFeatureCount;
  // Per training row: {CN votes, MCI+ votes} from trees that did not see it.
  std::vector<std::array<int, 2>> oob_votes;
  std::vector<Diagnosis> training_labels;

  // Majority vote; an even split goes to CN.
  Diagnosis predict(std::span<const double> x) const;
  // Same answers as predict() row by row; walks each tree for all pending
  // rows at once.
  std::vector<Diagnosis> predict_batch(std::span<const Features> rows) const;
  int mci_votes(std::span<const double> x) const;
  // Misclassification rate over rows with at least one out-of-bag vote.
  double oob_error() const;
  // Packs the trees into one array with sibling nodes adjacent, which makes
  // prediction several times faster. Call again after editing `trees`.
  void compile();

 private:
  struct PackedNode {
    double threshold;
    int feature;  // -1 for a leaf
    int next;     // left child (right is next + 1), or the leaf class
  };
  std::vector<PackedNode> packed_;
  std::vector<int> roots_;
  int packed_vote(int tree, std::span<const double> x) const;
};

// Each tree: bootstrap sample of the rows, greedy Gini splits over `mtry`
// random features per node. Tree t draws from rng.child({t}), so the result
// does not depend on training order or threading.
Forest train_forest(const TrainingSet& data, const ForestOptions& options, const Stream& rng,
                    int threads = 1);

struct LabelerWeights {
  double cdrsb = 0.5;
  double logmem = 0.3;
  double faq = 0.2;
};

double labeler_score(const OutcomeVector& z, const LabelerWeights& w = {});
// MCI+ iff the weighted CDRSB/LogMem/FAQ score reaches `threshold`.
Diagnosis synthetic_labeler(const OutcomeVector& z, double threshold, const LabelerWeights& w = {});
Diagnosis synthetic_labeler(const Eigen::Ref<const Eigen::RowVectorXd>& z, double threshold,
                            const LabelerWeights& w = {});

struct ProgressionTime {
  double time = 0.0;
  bool event = false;
};

// First post-baseline MCI+ visit at or before follow_up_limit is the event;
// otherwise censored at the last such visit. The baseline entry is the
// enrollment diagnosis and never counts as an event. Throws DataError on an
// empty sequence.
ProgressionTime progression_time(std::span<const Diagnosis> sequence,
                                 const std::vector<double>& visit_grid, double follow_up_limit);

}  // namespace padsim::diagnosis
