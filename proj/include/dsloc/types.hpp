#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsloc {

// Thrown when a caller violates a documented precondition.
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// Thrown when an input that was supposed to describe a cluster does not
// (e.g. a node set whose total weight is not positive).
struct NonClusterInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Symmetric nonnegative pairwise-similarity matrix with zero diagonal.
class AffinityMatrix {
  public:
    explicit AffinityMatrix(int n);

    /// Builds from dense rows; validates symmetry, zero diagonal and
    /// nonnegativity exactly.
    static AffinityMatrix from_rows(const std::vector<std::vector<double>>& rows);

    int size() const { return n_; }
    double operator()(int i, int j) const { return entries_[static_cast<size_t>(i) * n_ + j]; }

    /// Sets both (i,j) and (j,i). Rejects i == j with nonzero value and
    /// negative values.
    void set(int i, int j, double value);

    const std::vector<double>& data() const { return entries_; }

  private:
    int n_ = 0;
    std::vector<double> entries_;  // row-major n*n
};

/// Symmetric finite payoff matrix; the diagonal may be nonzero.
class PayoffMatrix {
  public:
    explicit PayoffMatrix(int n);
    static PayoffMatrix from_rows(const std::vector<std::vector<double>>& rows);
    static PayoffMatrix from_affinity(const AffinityMatrix& a);

    int size() const { return n_; }
    double operator()(int i, int j) const { return entries_[static_cast<size_t>(i) * n_ + j]; }
    void set(int i, int j, double value);
    /// Adds `delta` to entry (i,i).
    void add_diagonal(int i, double delta);

    const std::vector<double>& data() const { return entries_; }

    /// y = M x
    void multiply(std::span<const double> x, std::span<double> y) const;

  private:
    int n_ = 0;
    std::vector<double> entries_;
};

/// Ordered set of node indices in [0, n).
class NodeSet {
  public:
    NodeSet() = default;
    NodeSet(std::initializer_list<int> nodes);
    explicit NodeSet(std::vector<int> nodes);

    bool empty() const { return members_.size() == 0; }
    int size() const { return static_cast<int>(members_.size()); }
    bool contains(int node) const;
    const std::vector<int>& members() const { return members_; }

    NodeSet with(int node) const;
    NodeSet without(int node) const;

    /// Bitmask over node indices; requires all members < 64.
    std::uint64_t mask() const;
    static NodeSet from_mask(std::uint64_t mask);

    bool operator==(const NodeSet& other) const { return members_ == other.members_; }

  private:
    std::vector<int> members_;  // sorted, unique
};

/// Nonnegative vector summing to 1 (within 1e-9).
class SimplexVector {
  public:
    explicit SimplexVector(std::vector<double> values);

    static SimplexVector barycenter(int n);
    /// Indicator vector on one coordinate.
    static SimplexVector unit(int n, int index);

    int size() const { return static_cast<int>(values_.size()); }
    double operator[](int i) const { return values_[i]; }
    const std::vector<double>& values() const { return values_; }

  private:
    std::vector<double> values_;
};

/// Indices with x_i > cutoff.
NodeSet support(const SimplexVector& x, double cutoff = 1e-8);
NodeSet support(std::span<const double> x, double cutoff = 1e-8);

}  // namespace dsloc
