#include "padsim/diagnosis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "padsim/error.hpp"
#include "padsim/parallel.hpp"

namespace padsim::diagnosis {

Features visit_features(const Eigen::Ref<const Eigen::RowVectorXd>& markers, double age, int apoe4) {
  Features f{};
  for (int k = 0; k < kOutcomeCount; ++k) f[k] = markers(k);
  f[kAgeFeature] = age;
  f[kApoe4Feature] = apoe4;
  return f;
}

double gini_impurity(std::span<const double> class_counts) {
  double total = 0.0;
  for (double c : class_counts) {
    if (c < 0.0) throw DataError("class counts must be nonnegative");
    total += c;
  }
  if (total <= 0.0) throw DataError("Gini impurity of an empty node is undefined");
  double sum_sq = 0.0;
  for (double c : class_counts) sum_sq += (c / total) * (c / total);
  return 1.0 - sum_sq;
}

namespace {

double binary_gini(double mci, double n) {
  const double p = mci / n;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& data, const ForestOptions& options, Stream& rng)
      : data_(data), options_(options), rng_(rng), features_(static_cast<int>(data.features.cols())) {}

  void build(DecisionTree& tree, std::vector<int> rows) {
    tree_ = &tree;
    tree.nodes.clear();
    grow(rows);
  }

 private:
  int grow(std::vector<int>& rows) {
    const int id = static_cast<int>(tree_->nodes.size());
    tree_->nodes.emplace_back();
    const double n = static_cast<double>(rows.size());
    double mci = 0.0;
    for (int r : rows) mci += data_.labels[r] == Diagnosis::MciPlus ? 1.0 : 0.0;
    const Diagnosis majority = mci > n - mci ? Diagnosis::MciPlus : Diagnosis::CN;
    if (mci == 0.0 || mci == n || static_cast<int>(rows.size()) < options_.min_node_size) {
      tree_->nodes[id].leaf = majority;
      return id;
    }

    const double parent = binary_gini(mci, n);
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;

    std::vector<int> candidates(static_cast<std::size_t>(features_));
    std::iota(candidates.begin(), candidates.end(), 0);
    const int tries = std::min(options_.mtry, features_);
    std::vector<std::pair<double, bool>> column(rows.size());
    for (int t = 0; t < tries; ++t) {
      const auto pick = t + static_cast<int>(rng_.below(static_cast<std::uint64_t>(features_ - t)));
      std::swap(candidates[t], candidates[pick]);
      const int f = candidates[t];
      for (std::size_t i = 0; i < rows.size(); ++i)
        column[i] = {data_.features(rows[i], f), data_.labels[rows[i]] == Diagnosis::MciPlus};
      std::sort(column.begin(), column.end());
      double left_n = 0.0;
      double left_mci = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_n += 1.0;
        left_mci += column[i].second ? 1.0 : 0.0;
        if (column[i].first == column[i + 1].first) continue;
        const double right_n = n - left_n;
        const double child = (left_n / n) * binary_gini(left_mci, left_n) +
                             (right_n / n) * binary_gini(mci - left_mci, right_n);
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (column[i].first + column[i + 1].first);
        }
      }
    }
    if (best_feature < 0) {
      tree_->nodes[id].leaf = majority;
      return id;
    }

    std::vector<int> left, right;
    for (int r : rows) (data_.features(r, best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(left);
    const int rr = grow(right);
    TreeNode& node = tree_->nodes[id];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = rr;
    node.leaf = majority;
    return id;
  }

  const TrainingSet& data_;
  const ForestOptions& options_;
  Stream& rng_;
  int features_;
  DecisionTree* tree_ = nullptr;
};

}  // namespace

Diagnosis DecisionTree::predict(std::span<const double> x) const {
  const TreeNode* node = &nodes[0];
  while (!node->is_leaf())
    node = &nodes[x[node->feature] <= node->threshold ? node->left : node->right];
  return node->leaf;
}

void Forest::compile() {
  packed_.clear();
  roots_.clear();
  for (const DecisionTree& t : trees) {
    if (t.nodes.empty()) throw TrainingError("cannot compile an empty tree");
    const int root = static_cast<int>(packed_.size());
    roots_.push_back(root);
    // Breadth-first, so both children of a node are written next to each other.
    std::vector<std::pair<int, int>> queue{{0, root}};
    packed_.push_back({});
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const auto [src, dst] = queue[q];
      const TreeNode& n = t.nodes[src];
      if (n.is_leaf()) {
        packed_[dst] = {0.0, -1, static_cast<int>(n.leaf)};
        continue;
      }
      const int left = static_cast<int>(packed_.size());
      packed_.push_back({});
      packed_.push_back({});
      packed_[dst] = {n.threshold, n.feature, left};
      queue.emplace_back(n.left, left);
      queue.emplace_back(n.right, left + 1);
    }
  }
}

int Forest::packed_vote(int tree, std::span<const double> x) const {
  const PackedNode* node = &packed_[roots_[tree]];
  while (node->feature >= 0)
    node = &packed_[node->next + (x[node->feature] <= node->threshold ? 0 : 1)];
  return node->next;
}

int Forest::mci_votes(std::span<const double> x) const {
  const int n = static_cast<int>(trees.size());
  const bool packed = static_cast<int>(roots_.size()) == n;
  int votes = 0;
  for (int t = 0; t < n; ++t)
    votes += (packed ? packed_vote(t, x) : static_cast<int>(trees[t].predict(x))) ? 1 : 0;
  return votes;
}

Diagnosis Forest::predict(std::span<const double> x) const {
  // Stop once the majority is decided; ties resolve to CN.
  const int n = static_cast<int>(trees.size());
  const bool packed = static_cast<int>(roots_.size()) == n;
  int mci = 0;
  int cn = 0;
  for (int t = 0; t < n; ++t) {
    const int vote = packed ? packed_vote(t, x) : static_cast<int>(trees[t].predict(x));
    (vote ? mci : cn)++;
    if (2 * mci > n) return Diagnosis::MciPlus;
    if (2 * cn >= n) return Diagnosis::CN;
  }
  return 2 * mci > n ? Diagnosis::MciPlus : Diagnosis::CN;
}

std::vector<Diagnosis> Forest::predict_batch(std::span<const Features> rows) const {
  const int n = static_cast<int>(trees.size());
  std::vector<Diagnosis> out(rows.size(), Diagnosis::CN);
  if (static_cast<int>(roots_.size()) != n) {
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = predict(rows[i]);
    return out;
  }
  std::vector<int> pending(rows.size());
  std::iota(pending.begin(), pending.end(), 0);
  std::vector<int> mci(rows.size(), 0);
  std::vector<int> cn(rows.size(), 0);
  for (int t = 0; t < n && !pending.empty(); ++t) {
    std::size_t keep = 0;
    for (int r : pending) {
      (packed_vote(t, rows[r]) ? mci[r] : cn[r])++;
      if (2 * mci[r] > n) {
        out[r] = Diagnosis::MciPlus;
      } else if (2 * cn[r] >= n) {
        out[r] = Diagnosis::CN;
      } else {
        pending[keep++] = r;
      }
    }
    pending.resize(keep);
  }
  return out;
}

double Forest::oob_error() const {
  int scored = 0;
  int wrong = 0;
  for (std::size_t i = 0; i < oob_votes.size(); ++i) {
    const auto& v = oob_votes[i];
    if (v[0] + v[1] == 0) continue;
    const Diagnosis pred = v[1] > v[0] ? Diagnosis::MciPlus : Diagnosis::CN;
    ++scored;
    if (pred != training_labels[i]) ++wrong;
  }
  return scored ? static_cast<double>(wrong) / scored : 0.0;
}

Forest train_forest(const TrainingSet& data, const ForestOptions& options, const Stream& rng,
                    int threads) {
  const int rows = static_cast<int>(data.features.rows());
  if (rows < 2 || static_cast<int>(data.labels.size()) != rows)
    throw TrainingError("forest training needs at least two labelled rows");
  const bool has_cn = std::find(data.labels.begin(), data.labels.end(), Diagnosis::CN) != data.labels.end();
  const bool has_mci =
      std::find(data.labels.begin(), data.labels.end(), Diagnosis::MciPlus) != data.labels.end();
  if (!has_cn || !has_mci) throw TrainingError("forest training set contains a single class");
  if (options.n_trees < 1) throw TrainingError("forest needs at least one tree");
  if (options.mtry < 1 || options.mtry > data.features.cols())
    throw TrainingError("mtry must lie in [1, feature count]");

  Forest forest;
  forest.mtry = options.mtry;
  forest.min_node_size = options.min_node_size;
  forest.feature_count = static_cast<int>(data.features.cols());
  forest.training_labels = data.labels;
  forest.trees.resize(static_cast<std::size_t>(options.n_trees));

  parallel_for(options.n_trees, threads, [&](int t) {
    Stream tree_rng = rng.child({static_cast<std::uint64_t>(t)});
    std::vector<int> sample(static_cast<std::size_t>(rows));
    for (int& r : sample) r = static_cast<int>(tree_rng.below(static_cast<std::uint64_t>(rows)));
    DecisionTree& tree = forest.trees[t];
    tree.bootstrap = sample;
    TreeBuilder(data, options, tree_rng).build(tree, std::move(sample));
  });

  forest.oob_votes.assign(static_cast<std::size_t>(rows), {0, 0});
  std::vector<char> in_bag(static_cast<std::size_t>(rows));
  std::vector<double> x(static_cast<std::size_t>(data.features.cols()));
  for (const DecisionTree& tree : forest.trees) {
    std::fill(in_bag.begin(), in_bag.end(), 0);
    for (int r : tree.bootstrap) in_bag[r] = 1;
    for (int r = 0; r < rows; ++r) {
      if (in_bag[r]) continue;
      for (std::size_t f = 0; f < x.size(); ++f) x[f] = data.features(r, static_cast<Eigen::Index>(f));
      forest.oob_votes[r][tree.predict(x) == Diagnosis::MciPlus ? 1 : 0]++;
    }
  }
  forest.compile();
  return forest;
}

double labeler_score(const OutcomeVector& z, const LabelerWeights& w) {
  return w.cdrsb * z[index(Outcome::Cdrsb)] + w.logmem * z[index(Outcome::LogMem)] +
         w.faq * z[index(Outcome::Faq)];
}

Diagnosis synthetic_labeler(const OutcomeVector& z, double threshold, const LabelerWeights& w) {
  return labeler_score(z, w) >= threshold ? Diagnosis::MciPlus : Diagnosis::CN;
}

Diagnosis synthetic_labeler(const Eigen::Ref<const Eigen::RowVectorXd>& z, double threshold,
                            const LabelerWeights& w) {
  OutcomeVector v{};
  for (int k = 0; k < kOutcomeCount; ++k) v[k] = z(k);
  return synthetic_labeler(v, threshold, w);
}

ProgressionTime progression_time(std::span<const Diagnosis> sequence,
                                 const std::vector<double>& visit_grid, double follow_up_limit) {
  if (sequence.empty()) throw DataError("diagnosis sequence is empty");
  if (sequence.size() > visit_grid.size()) throw DataError("diagnosis sequence longer than the visit grid");
  double last = visit_grid[0];
  for (std::size_t k = 1; k < sequence.size(); ++k) {
    if (visit_grid[k] > follow_up_limit + 1e-9) break;
    if (sequence[k] == Diagnosis::MciPlus) return {visit_grid[k], true};
    last = visit_grid[k];
  }
  return {last, false};
}

}  // namespace padsim::diagnosis
