#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dsloc/types.hpp"

namespace dsloc {

/// One local descriptor together with its provenance.
struct LocalDescriptor {
    std::vector<float> values;
    std::string parent_image;
    int feature_id = 0;
};

double descriptor_distance(const LocalDescriptor& a, const LocalDescriptor& b);

struct NeighborEntry {
    LocalDescriptor descriptor;
    double distance = 0.0;
};

/// Nearest neighbors of one query feature, ascending by distance; ties are
/// broken by (parent_image, feature_id).
struct NeighborList {
    int query_feature = 0;
    std::vector<NeighborEntry> neighbors;
};

struct SelectionConfig {
    double theta = 0.7;
    double beta = 0.7;
    int max_pool = 50;

    void validate() const;
};

struct IndexConfig {
    enum class Backend { Exact, KMeansTree };
    Backend backend = Backend::Exact;
    int branching = 16;
    int max_leaf_size = 32;
    int kmeans_iterations = 10;
    /// Number of stored descriptors examined per query in tree search.
    int checks = 256;
    /// Seeds the k-means center initialization; the tree is deterministic
    /// for a fixed dataset and seed.
    std::uint64_t seed = 1;
};

/// Nearest-neighbor index over reference local descriptors. The exact
/// backend is the ground truth; the hierarchical k-means tree trades a
/// little recall for sublinear search on larger sets.
class DescriptorIndex {
  public:
    static DescriptorIndex build(std::vector<LocalDescriptor> references,
                                 const IndexConfig& config = {});

    NeighborList knn(const LocalDescriptor& query, int m, int query_feature_id = 0) const;

    int dimension() const { return dim_; }
    int size() const { return static_cast<int>(references_.size()); }
    const IndexConfig& config() const { return config_; }

    void save(const std::string& path) const;
    static DescriptorIndex load(const std::string& path);

  private:
    struct TreeNode {
        std::vector<float> center;
        std::vector<std::unique_ptr<TreeNode>> children;
        std::vector<int> points;  // leaf only
    };

    DescriptorIndex() = default;
    void build_tree();
    std::unique_ptr<TreeNode> build_node(std::vector<int> ids, int depth, std::uint64_t& rng_state);
    std::vector<std::pair<double, int>> search_tree(const LocalDescriptor& query, int m) const;

    std::vector<LocalDescriptor> references_;
    IndexConfig config_;
    int dim_ = 0;
    std::unique_ptr<TreeNode> root_;
};

/// Dynamic nearest-neighbor selection: keep the first neighbor, then keep
/// appending the next one while consecutive distances stay similar
/// (d_m / d_{m+1} > theta). The loop never tests the ratio against the last
/// fetched neighbor, so at most |NN| - 1 entries are selected.
std::vector<NeighborEntry> dynamic_nn_select(const NeighborList& nn, double theta);

struct PruneDecision {
    bool keep = true;
    double ratio = 0.0;
    bool degenerate = false;  // fewer than 2 neighbors; kept by convention
};

/// Drops a query feature whose first and last fetched neighbors are at
/// nearly the same distance (ratio > beta): such features carry no
/// discriminative signal. A 0/0 ratio counts as 1, i.e. maximally indistinct.
PruneDecision prune_query_feature(const NeighborList& nn, double beta);

}  // namespace dsloc
